"""One-dimensional maps: sinks and sources, permanence under Lipschitz
perturbation, periodic orbits and delta-Lyapunov exponents."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (DegenerateC, DegenerateRegion, DomainError, NoConvergence, NotAsymptotic, NotFixed, OrbitEscape,
                     PreconditionFailed, ThresholdExceeded, ZeroConstant)
from .hyperbolic import sweep_fixed_points
from .lipcore.geometry import Box
from .lipcore.lipschitz import (DEFAULT_BUDGET, EPS, LipEstimate, SamplingBudget, estimate_lip,
                                estimate_reverse_lip, lip_distance_parts, sample_pairs)
from .lipcore.maps import Iterate, MapSpec

FIXED_TOL = 1e-9
CLASSES = ("sink", "source", "indifferent_or_unknown")


def _f1(m: MapSpec, x: float) -> float:
    return float(m.eval_points(np.array([[x]]))[0, 0])


def _ball(p: float, delta: float) -> Box:
    return Box(np.array([float(p)]), float(delta))


# ---------------------------------------------------------------- sinks and sources

@dataclass
class FixedPointReport:
    p: float
    delta: float
    lip: LipEstimate
    rev_lip: LipEstimate
    classification: str
    margin: float

    def to_json(self) -> dict:
        return {"p": self.p, "delta": self.delta, "lip": self.lip.to_json(), "rev_lip": self.rev_lip.to_json(),
                "classification": self.classification, "margin": self.margin,
                "sink_test": f"lip*margin = {self.lip.value * self.margin:.6g} < 1",
                "source_test": f"rev_lip/margin = {self.rev_lip.value / self.margin:.6g} > 1"}


def classify_fixed_point(f: MapSpec, p: float, delta: float, budget: SamplingBudget = DEFAULT_BUDGET,
                         margin: float = 1.05, tol: float = FIXED_TOL) -> FixedPointReport:
    """Sink if ``Lip * margin < 1`` on ``N_delta(p)``, source if ``rev / margin > 1``."""
    p = float(p)
    moved = abs(_f1(f, p) - p)
    if moved > tol:
        raise NotFixed(f"|f(p) - p| = {moved:.3g} exceeds {tol:g}")
    region = _ball(p, delta)
    lip = estimate_lip(f, region, budget)
    rev = estimate_reverse_lip(f, region, budget)
    if lip.value * margin < 1:
        cls = "sink"
    elif rev.value / margin > 1:
        cls = "source"
    else:
        cls = "indifferent_or_unknown"
    return FixedPointReport(p, float(delta), lip, rev, cls, margin)


# ---------------------------------------------------------------- gordura condition

@dataclass
class GorduraReport:
    C: float
    delta: float
    worst_ratio: float
    worst_pair: tuple
    passed: bool

    def to_json(self) -> dict:
        return {"C": self.C, "delta": self.delta, "worst_ratio": self.worst_ratio, "bound": 1 / 3,
                "worst_pair": list(self.worst_pair), "passed": self.passed}


def signed_constant(f: MapSpec, p: float, delta: float, budget: SamplingBudget = DEFAULT_BUDGET) -> float:
    """Local Lipschitz constant carrying the sign of the chord slope across ``N_delta(p)``."""
    lip = estimate_lip(f, _ball(p, delta), budget).value
    return math.copysign(lip, _f1(f, p + delta) - _f1(f, p - delta))


def check_gordura(f: MapSpec, p: float, delta: float, C: float | None = None,
                  budget: SamplingBudget = DEFAULT_BUDGET, nodes: int = 4001) -> GorduraReport:
    """Worst ``|(s - C) / (1 - C)|`` over chord slopes ``s`` in ``N_delta(p)``; passes at ``<= 1/3``."""
    p = float(p)
    if C is None:
        C = signed_constant(f, p, delta, budget)
    if abs(1 - C) < 1e-8:
        raise DegenerateC(f"C = {C!r} is too close to 1")
    region = _ball(p, delta)
    X, Y = sample_pairs(region, budget)
    grid = np.linspace(p - delta, p + delta, nodes)
    X = np.r_[X[:, 0], grid[:-1]]
    Y = np.r_[Y[:, 0], grid[1:]]
    fx = f.eval_points(X[:, None])[:, 0]
    fy = f.eval_points(Y[:, None])[:, 0]
    ratio = np.abs((fx - fy) / (X - Y) - C) / abs(1 - C)
    k = int(np.argmax(ratio))
    x, y, best = X[k], Y[k], float(ratio[k])
    floor = 1e-12 * delta
    for _ in range(budget.refine_depth):
        if abs(x - y) / 2 <= floor:
            break
        mid = 0.5 * (x + y)
        fm, fx1, fy1 = (_f1(f, t) for t in (mid, x, y))
        r1 = abs((fx1 - fm) / (x - mid) - C) / abs(1 - C)
        r2 = abs((fm - fy1) / (mid - y) - C) / abs(1 - C)
        cand, pair = (r1, (x, mid)) if r1 >= r2 else (r2, (mid, y))
        noise = 8 * EPS * max(abs(fx1), abs(fy1), 1.0) / (abs(x - y) / 2) / abs(1 - C)
        if cand - best <= noise:
            break
        best, (x, y) = cand, pair
    return GorduraReport(float(C), float(delta), best, (float(x), float(y)), best <= 1 / 3 + 1e-12)


# ---------------------------------------------------------------- permanence

@dataclass
class PermanenceCert:
    p: float
    q: float
    k: int
    delta: float
    path: str
    C: float
    epsilon: float
    epsilon_c0: float
    epsilon_lip: float
    thresholds: dict
    gordura: GorduraReport
    steps: list
    iterations: int
    displacement: float
    roots_in_ball: int
    classification: str
    q_report: FixedPointReport | None = None
    orbit: list = field(default_factory=list)
    orbit_constants: list = field(default_factory=list)
    constant_product: float | None = None

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "period": self.k, "delta": self.delta, "path": self.path,
                "C": self.C, "epsilon": self.epsilon, "epsilon_c0": self.epsilon_c0,
                "epsilon_lip": self.epsilon_lip, "thresholds": self.thresholds,
                "gordura": self.gordura.to_json(), "psi_steps": self.steps, "iterations": self.iterations,
                "fixed_point_residual": self.displacement, "roots_in_ball": self.roots_in_ball,
                "classification": self.classification,
                "q_report": self.q_report.to_json() if self.q_report else None,
                "orbit": self.orbit, "orbit_constants": self.orbit_constants,
                "constant_product": self.constant_product}


def _derivative_at(f: MapSpec, p: float, delta: float) -> float:
    if f.derivative is not None and not isinstance(f, Iterate):
        return float(np.asarray(f.derivative(np.array([p]))).ravel()[0])
    s = delta / 100
    return (_f1(f, p + s) - _f1(f, p - s)) / (2 * s)


def _thresholds(path: str, C: float, delta: float) -> dict:
    gap = abs(1 - C)
    if path == "differentiable":
        return {f"epsilon <= |1-L|*delta/3 = {gap * delta / 3:.6g}": gap * delta / 3,
                f"epsilon <= |1-L|/3 = {gap / 3:.6g}": gap / 3,
                f"epsilon < |1-L|/6 = {gap / 6:.6g}": gap / 6}
    return {f"epsilon < |1-C|*delta/3 = {gap * delta / 3:.6g}": gap * delta / 3,
            f"epsilon < |1-C|/3 = {gap / 3:.6g}": gap / 3,
            f"epsilon < |1-C|/2 = {gap / 2:.6g}": gap / 2}


def _permanence(F: MapSpec, G: MapSpec, p: float, delta: float, budget: SamplingBudget, tol: float,
                C: float | None, max_iter: int) -> tuple:
    p = float(p)
    moved = abs(_f1(F, p) - p)
    if moved > FIXED_TOL:
        raise NotFixed(f"|f(p) - p| = {moved:.3g} exceeds {FIXED_TOL:g}")
    if C is not None:
        path = "lipschitz"
    elif F.differentiable:
        path, C = "differentiable", _derivative_at(F, p, delta)
    else:
        path, C = "lipschitz", signed_constant(F, p, delta, budget)
    gord = check_gordura(F, p, delta, C, budget)
    if not gord.passed:
        raise PreconditionFailed(f"gordura condition fails on N_delta(p): worst ratio {gord.worst_ratio:.4g} > 1/3")
    dist = lip_distance_parts(F, G, _ball(p, delta), budget)
    eps = dist.value
    thr = _thresholds(path, C, delta)
    strict = path == "lipschitz"
    for text, bound in thr.items():
        ok = eps < bound if (strict or "<=" not in text) else eps <= bound
        if not ok and eps > 0:
            raise ThresholdExceeded(f"epsilon = {eps:.6g} violates {text}", inequality=text)

    def psi(z):
        return (_f1(G, p + z) - p - C * z) / (1 - C)

    z, steps = 0.0, []
    for it in range(1, max_iter + 1):
        w = psi(z)
        if abs(w) > delta * (1 + 1e-12):
            raise NoConvergence(f"psi left the closed ball: |z| = {abs(w):.3g} > delta")
        steps.append(abs(w - z))
        z = w
        if steps[-1] <= tol:
            break
    else:
        raise NoConvergence(f"psi iteration did not converge (last step {steps[-1]:.3g})")
    q = p + z
    roots = sweep_fixed_points(G, _ball(p, delta))
    return path, C, gord, dist, eps, thr, q, steps, it, abs(_f1(G, q) - q), len(roots)


def perturbed_fixed_point(f: MapSpec, g: MapSpec, p: float, delta: float,
                          budget: SamplingBudget = DEFAULT_BUDGET, tol: float = 1e-13,
                          C: float | None = None, max_iter: int = 500) -> PermanenceCert:
    """Unique fixed point ``q`` of ``g`` near the fixed point ``p`` of ``f``, via the psi-contraction."""
    path, C, gord, dist, eps, thr, q, steps, it, res, roots = _permanence(f, g, p, delta, budget, tol, C, max_iter)
    rep = classify_fixed_point(g, q, delta - abs(q - p), budget, tol=max(FIXED_TOL, 10 * res))
    return PermanenceCert(float(p), q, 1, float(delta), path, C, eps, dist.c0, dist.lip.value, thr, gord,
                          steps, it, res, roots, rep.classification, rep)


def orbit_constants(f: MapSpec, points, delta: float, budget: SamplingBudget = DEFAULT_BUDGET) -> np.ndarray:
    return local_constants(f, np.asarray(points, dtype=float), delta, budget)


def perturbed_periodic_point(f: MapSpec, g: MapSpec, p: float, k: int, delta: float,
                             budget: SamplingBudget = DEFAULT_BUDGET, tol: float = 1e-13,
                             C: float | None = None, refine: bool = True,
                             max_iter: int = 500) -> PermanenceCert:
    """Permanence of a ``k``-periodic point: the fixed-point machinery applied to ``f^k``, ``g^k``.

    With ``refine`` the given ``p`` (typically known to a few decimals) is
    first polished to a root of ``f^k(x) = x`` nearby.
    """
    if refine:
        p = float(locate_periodic_orbit(f, p, k)[0])
    Fk, Gk = Iterate(f, k), Iterate(g, k)
    path, C, gord, dist, eps, thr, q, steps, it, res, roots = _permanence(Fk, Gk, p, delta, budget, tol, C, max_iter)
    rep = classify_fixed_point(Gk, q, delta - abs(q - p), budget, tol=max(FIXED_TOL, 10 * res))
    orbit = [q]
    for _ in range(k - 1):
        orbit.append(_f1(g, orbit[-1]))
    consts = orbit_constants(g, orbit, delta, budget)
    prod = float(np.prod(consts))
    if prod < 1:
        cls = "periodic_sink" if k > 1 else "sink"
    elif float(np.prod(local_constants(g, np.array(orbit), delta, budget, reverse=True))) > 1:
        cls = "periodic_source" if k > 1 else "source"
    else:
        cls = "indifferent_or_unknown"
    return PermanenceCert(p, q, k, float(delta), path, C, eps, dist.c0, dist.lip.value, thr, gord, steps, it,
                          res, roots, cls, rep, orbit, consts.tolist(), prod)


def locate_periodic_orbit(f: MapSpec, guess: float, k: int, radius: float = 0.01, nodes: int = 401) -> np.ndarray:
    """Root of ``f^k(x) = x`` nearest to ``guess`` and its orbit ``x, f(x), ..., f^{k-1}(x)``."""
    Fk = Iterate(f, k)
    lo, hi = guess - radius, guess + radius
    if f.domain is not None:
        rect = f.domain.to_rect() if isinstance(f.domain, Box) else f.domain
        lo, hi = max(lo, float(rect.lo_a[0])), min(hi, float(rect.hi_a[0]))
    xs = np.linspace(lo, hi, nodes)
    d = Fk.eval_points(xs[:, None])[:, 0] - xs
    roots = [float(xs[i]) for i in np.flatnonzero(d == 0)]
    for i in np.flatnonzero(d[:-1] * d[1:] < 0):
        roots.append(brentq(lambda t: _f1(Fk, t) - t, xs[i], xs[i + 1], xtol=1e-15, maxiter=200))
    if not roots:
        raise NoConvergence(f"no {k}-periodic point within {radius} of {guess}")
    x = min(roots, key=lambda t: abs(t - guess))
    orbit = [x]
    for _ in range(k - 1):
        orbit.append(_f1(f, orbit[-1]))
    return np.array(orbit)


def constant_product_limit(f: MapSpec, orbit, deltas=(4e-4, 2e-4, 1e-4),
                           budget: SamplingBudget = DEFAULT_BUDGET) -> dict:
    """Product of local constants along ``orbit`` at each ``delta`` and its quadratic extrapolation to 0."""
    deltas = np.asarray(deltas, dtype=float)
    prods = np.array([float(np.prod(local_constants(f, np.asarray(orbit, dtype=float), d, budget)))
                      for d in deltas])
    deg = min(2, len(deltas) - 1)
    limit = float(np.polyval(np.polyfit(deltas, prods, deg), 0.0))
    return {"deltas": deltas.tolist(), "products": prods.tolist(), "limit": limit}


# ---------------------------------------------------------------- delta-Lyapunov

def local_constants(f: MapSpec, centers: np.ndarray, delta: float, budget: SamplingBudget = DEFAULT_BUDGET,
                    reverse: bool = False) -> np.ndarray:
    """``estimate_lip`` (or its reverse) on ``N_delta(x)`` for many centers at once.

    Every ball uses the same pair pattern and the same noise-aware
    bisection refinement as :func:`estimate_lip`, batched across centers.
    Centers are split over ``LIPDYN_THREADS`` workers; order is preserved.
    """
    centers = np.asarray(centers, dtype=float).ravel()
    if f.domain is not None:
        rect = f.domain.to_rect() if isinstance(f.domain, Box) else f.domain
        slack = 1e-12 * (1.0 + float(np.max(np.abs(np.r_[rect.lo_a, rect.hi_a]))))
        bad = (centers - delta < rect.lo_a[0] - slack) | (centers + delta > rect.hi_a[0] + slack)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise OrbitEscape(f"N_delta(x_{i + 1}) = N_{delta:g}({centers[i]!r}) leaves the domain")
    if delta < 64 * EPS * max(1.0, float(np.max(np.abs(centers)))):
        raise DegenerateRegion(f"delta = {delta:g} is below rounding scale at the orbit points")
    threads = thread_count()
    if threads > 1 and len(centers) >= 2 * threads:
        chunks = np.array_split(centers, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(lambda c: _local_constants(f, c, delta, budget, reverse), chunks)
        return np.concatenate(list(parts))
    return _local_constants(f, centers, delta, budget, reverse)


def thread_count() -> int:
    """Worker count from ``LIPDYN_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("LIPDYN_THREADS", "1")))
    except ValueError:
        return 1


def _local_constants(f: MapSpec, centers: np.ndarray, delta: float, budget: SamplingBudget,
                     reverse: bool) -> np.ndarray:
    Xp, Yp = sample_pairs(_ball(0.0, delta), budget)
    Xp, Yp = Xp[:, 0], Yp[:, 0]
    n, P = len(centers), len(Xp)
    X = centers[:, None] + Xp[None, :]
    Y = centers[:, None] + Yp[None, :]
    sign = -1.0 if reverse else 1.0

    def quot(A, B):
        fa = f.eval_points(A.reshape(-1, 1)).reshape(A.shape)
        fb = f.eval_points(B.reshape(-1, 1)).reshape(B.shape)
        sep = np.abs(A - B)
        ok = sep > 0
        safe = np.where(ok, sep, 1.0)
        q = np.where(ok, np.abs(fa - fb) / safe, 0.0 if sign > 0 else np.inf)
        noise = np.where(ok, 4 * EPS * np.maximum(np.maximum(np.abs(fa), np.abs(fb)), 1.0) / safe + 4 * EPS * q, np.inf)
        return q, noise

    q, _ = quot(X, Y)
    best = np.max(sign * q, axis=1) * sign
    if budget.refine_depth > 0:
        top = min(budget.refine_top, P)
        order = np.argsort(-sign * q, axis=1, kind="stable")[:, :top]
        x = np.take_along_axis(X, order, 1).ravel()
        y = np.take_along_axis(Y, order, 1).ravel()
        cur = np.take_along_axis(q, order, 1).ravel()
        active = np.ones(len(x), dtype=bool)
        floor = 1e-12 * delta
        for _ in range(budget.refine_depth):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            xa, ya = x[idx], y[idx]
            mid = 0.5 * (xa + ya)
            sep = 0.5 * np.abs(xa - ya)
            q1, n1 = quot(xa, mid)
            q2, n2 = quot(mid, ya)
            first = sign * q1 >= sign * q2
            cand = np.where(first, q1, q2)
            noise = np.where(first, n1, n2)
            ok = (sign * (cand - cur[idx]) > noise) & (sep > floor)
            upd = idx[ok]
            x[upd] = np.where(first[ok], xa[ok], mid[ok])
            y[upd] = np.where(first[ok], mid[ok], ya[ok])
            cur[upd] = cand[ok]
            active[idx[~ok]] = False
        refined = (sign * cur).reshape(n, top).max(axis=1) * sign
        best = np.where(sign * refined >= sign * best, refined, best)
    return best


@dataclass
class OrbitRecord:
    x1: float
    points: np.ndarray
    delta: float
    constants: np.ndarray
    log_sums: np.ndarray
    exponents: np.ndarray
    exponent: float
    number: float
    tail_estimate: float
    window_variance: float

    @property
    def n(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {"x1": self.x1, "n": self.n, "delta": self.delta, "h_delta": self.exponent,
                "L_delta": self.number, "tail_estimate": self.tail_estimate,
                "last_quarter_variance": self.window_variance,
                "bound_semantics": "finite-n truncation; constants are sampled lower bounds"}

    def to_csv(self) -> str:
        lines = ["i,x,C,log_sum,h_partial"]
        for i, (x, c, s, h) in enumerate(zip(self.points, self.constants, self.log_sums, self.exponents), 1):
            lines.append(f"{i},{x!r},{c!r},{s!r},{h!r}")
        return "\n".join(lines) + "\n"


def orbit(f: MapSpec, x1: float, n: int) -> np.ndarray:
    """``x_1, ..., x_n`` with ``x_{i+1} = f(x_i)`` exactly as evaluated."""
    pts = np.empty(n)
    x = float(x1)
    for i in range(n):
        pts[i] = x
        if i + 1 < n:
            try:
                x = _f1(f, x)
            except DomainError as exc:
                raise OrbitEscape(f"orbit left the domain after {i + 1} steps: {exc}") from exc
            if not math.isfinite(x):
                raise OrbitEscape(f"orbit diverged after {i + 1} steps")
    return pts


def record_from_constants(x1: float, pts: np.ndarray, delta: float, consts: np.ndarray) -> OrbitRecord:
    if np.any(consts <= 0):
        i = int(np.flatnonzero(consts <= 0)[0])
        raise ZeroConstant(f"C_(x_{i + 1}, delta) = 0 at x = {pts[i]!r}; the log-average diverges")
    logs = np.log(consts)
    sums = np.cumsum(logs)
    n = len(pts)
    exps = sums / np.arange(1, n + 1)
    h = math.fsum(logs) / n
    half = exps[max(n // 2 - 1, 0)]
    quarter = exps[-max(n // 4, 1):]
    tail = max(abs(h - half), float(np.max(quarter) - np.min(quarter)))
    return OrbitRecord(float(x1), pts, float(delta), consts, sums, exps, h, math.exp(h), tail,
                       float(np.var(quarter)))


def delta_lyapunov(f: MapSpec, x1: float, delta: float, n: int,
                   budget: SamplingBudget = DEFAULT_BUDGET) -> OrbitRecord:
    """Finite-``n`` delta-Lyapunov exponent: the mean of ``ln C_(x_i, delta)`` along the orbit."""
    if n < 1:
        raise ValueError("n must be positive")
    pts = orbit(f, x1, n)
    return record_from_constants(x1, pts, delta, local_constants(f, pts, delta, budget))


@dataclass
class LyapunovComparison:
    delta: float
    delta_bar: float
    halvings: int
    burn_in: int
    h_periodic: float
    h_window: float
    h_full: float
    nested: bool
    holds: bool
    tol: float

    def to_json(self) -> dict:
        return self.__dict__.copy()


def lyapunov_comparison(f: MapSpec, x1: float, y1: float, k: int, delta: float, n: int = 200,
                        budget: SamplingBudget = DEFAULT_BUDGET, tol: float = 1e-3,
                        max_halvings: int = 30) -> LyapunovComparison:
    """Exhibit ``delta_bar`` with ``h_delta_bar(x1) <= h_delta(y1) + tol`` for an orbit attracted to ``y1``'s cycle.

    ``h_delta_bar(x1)`` is measured on the window after burn-in (a whole
    number of periods), since the limit does not see the transient.
    """
    cycle = orbit(f, y1, k)
    n_y = max(k, (n // k) * k)
    h_y = delta_lyapunov(f, y1, delta, n_y, budget).exponent
    xs = orbit(f, x1, n)
    dist = np.min(np.abs(xs[:, None] - cycle[None, :]), axis=1)
    far = np.flatnonzero(dist >= delta / 4)
    burn = int(far[-1]) + 1 if len(far) else 0
    if burn >= n - k:
        raise NotAsymptotic(f"orbit of {x1} is not within delta/4 of the cycle after {n} steps")
    span = ((n - burn) // k) * k
    window = xs[burn:burn + span]
    dbar, halvings = delta, 0
    while halvings < max_halvings:
        dbar /= 2
        halvings += 1
        h_win = float(np.mean(np.log(local_constants(f, window, dbar, budget))))
        if h_win <= h_y + tol:
            break
    h_full = float(np.mean(np.log(local_constants(f, xs, dbar, budget))))
    nested = bool(np.all(dist[burn:burn + span] + dbar <= delta))
    return LyapunovComparison(delta, dbar, halvings, burn, h_y, h_win, h_full, nested, h_win <= h_y + tol, tol)
