"""Hyperbolic linear algebra, L-hyperbolicity certificates and the point solvers.

Everything here works in adapted coordinates: a vector is written in the
splitting basis, stable block first, so ``v = (v_s, v_u)``.  For a
coordinate splitting the change of basis is a permutation.  All norms are
max norms; the induced operator norm is the maximum absolute row sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .errors import NoConvergence, NotHyperbolic, NotInvariant, PreconditionFailed, Singular
from .lipcore.geometry import Box, maxnorm
from .lipcore.lipschitz import DEFAULT_BUDGET, LipEstimate, SamplingBudget, estimate_lip
from .lipcore.maps import Conjugate, LinearPlusLip, MapSpec, Recentered, ZeroMap

INVARIANCE_TOL = 1e-10
COND_CAP = 1e8
DEFAULT_MARGIN = 1.05
DEFAULT_BAND = 0.02


def opnorm(M) -> float:
    """Operator norm induced by the max norm (max absolute row sum)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


@dataclass
class Splitting:
    """``E = E^s + E^u`` given by basis vectors (rows)."""

    basis_s: np.ndarray
    basis_u: np.ndarray
    P: np.ndarray = field(init=False, repr=False)
    Pinv: np.ndarray = field(init=False, repr=False)
    cond: float = field(init=False)

    def __post_init__(self):
        self.basis_s = np.asarray(self.basis_s, dtype=float).reshape(-1, self._n())
        self.basis_u = np.asarray(self.basis_u, dtype=float).reshape(-1, self._n())
        self.P = np.vstack([self.basis_s, self.basis_u]).T
        if self.P.shape[0] != self.P.shape[1]:
            raise Singular(f"splitting has {self.P.shape[1]} vectors in dimension {self.P.shape[0]}")
        self.cond = float(np.linalg.cond(self.P, p=np.inf))
        if not np.isfinite(self.cond) or self.cond > COND_CAP:
            raise Singular(f"splitting basis condition number {self.cond:.3g} exceeds {COND_CAP:g}")
        self.Pinv = np.linalg.inv(self.P)

    def _n(self) -> int:
        for b in (self.basis_s, self.basis_u):
            a = np.asarray(b, dtype=float)
            if a.size:
                return a.shape[-1]
        raise Singular("empty splitting")

    @classmethod
    def coordinate(cls, n: int, stable, unstable) -> "Splitting":
        eye = np.eye(n)
        return cls(eye[list(stable)].reshape(-1, n), eye[list(unstable)].reshape(-1, n))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def dim_s(self) -> int:
        return self.basis_s.shape[0]

    @property
    def dim_u(self) -> int:
        return self.basis_u.shape[0]

    @property
    def proj_s(self) -> np.ndarray:
        return self.P[:, : self.dim_s] @ self.Pinv[: self.dim_s]

    @property
    def proj_u(self) -> np.ndarray:
        return self.P[:, self.dim_s:] @ self.Pinv[self.dim_s:]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.P, np.eye(self.n)))

    def to_adapted(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.Pinv.T

    def from_adapted(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self.P.T

    def to_json(self) -> dict:
        return {"stable": self.basis_s.tolist(), "unstable": self.basis_u.tolist(), "cond": self.cond}


@dataclass
class HyperbolicLinear:
    A: np.ndarray
    splitting: Splitting
    B: np.ndarray
    A_s: np.ndarray
    A_u: np.ndarray
    A_u_inv: np.ndarray
    tau: float
    m: float

    @property
    def dim_s(self) -> int:
        return self.splitting.dim_s

    @property
    def dim_u(self) -> int:
        return self.splitting.dim_u

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "splitting": self.splitting.to_json(), "tau": self.tau, "m": self.m,
                "A_s": self.A_s.tolist(), "A_u": self.A_u.tolist()}


def analyze_linear(A, splitting: Splitting | None = None) -> HyperbolicLinear:
    """Blocks, skewness ``tau`` and mininorm ``m`` of ``A`` relative to ``splitting``.

    With no splitting, the stable space is spanned by the coordinate axes
    whose diagonal entry is below one in modulus.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e12:
        raise Singular("A is not invertible")
    if splitting is None:
        d = np.abs(np.diag(A))
        splitting = Splitting.coordinate(n, np.flatnonzero(d < 1), np.flatnonzero(d >= 1))
    B = splitting.Pinv @ A @ splitting.P
    ds = splitting.dim_s
    scale = 1.0 + opnorm(B)
    off = max(opnorm(B[:ds, ds:]) if ds and ds < n else 0.0, opnorm(B[ds:, :ds]) if ds and ds < n else 0.0)
    if off > INVARIANCE_TOL * scale:
        raise NotInvariant(f"off-diagonal block of size {off:.3g} couples E^s and E^u")
    A_s, A_u = B[:ds, :ds], B[ds:, ds:]
    A_u_inv = np.linalg.inv(A_u) if A_u.size else A_u.copy()
    tau = max(opnorm(A_s), opnorm(A_u_inv))
    if tau >= 1:
        raise NotHyperbolic(f"skewness tau = {tau:.6g} >= 1")
    m = 1.0 / opnorm(np.linalg.inv(B))
    return HyperbolicLinear(A=A, splitting=splitting, B=B, A_s=A_s, A_u=A_u, A_u_inv=A_u_inv, tau=tau, m=m)


def splitting_from_meta(meta: dict | None, n: int) -> Splitting | None:
    if not meta or "splitting" not in meta:
        return None
    sp = meta["splitting"]
    return Splitting(np.asarray(sp.get("stable", []), dtype=float).reshape(-1, n),
                     np.asarray(sp.get("unstable", []), dtype=float).reshape(-1, n))


class SaddleSystem:
    """``f = A + phi`` written in adapted coordinates ``c = P^{-1} x``.

    ``phi_c`` is the perturbation in those coordinates; ``f_c`` the full map.
    """

    def __init__(self, A, phi: MapSpec | None = None, splitting: Splitting | None = None,
                 domain: Box | None = None):
        self.lin = analyze_linear(A, splitting)
        self.splitting = self.lin.splitting
        n = self.lin.A.shape[0]
        self.phi = phi if phi is not None else ZeroMap(n)
        self.phi_c = self.phi if self.splitting.is_identity else Conjugate(self.phi, self.splitting.P)
        self.f_c = LinearPlusLip(self.lin.B, self.phi_c, name="f")
        self.domain = domain if domain is not None else (self.phi.domain if isinstance(self.phi.domain, Box) else None)

    @classmethod
    def from_map(cls, m: LinearPlusLip) -> "SaddleSystem":
        sp = splitting_from_meta(getattr(m, "meta", None), m.dim)
        dom = m.domain if isinstance(m.domain, Box) else None
        return cls(m.A, m.phi, sp, dom)

    @property
    def dim_s(self) -> int:
        return self.lin.dim_s

    @property
    def dim_u(self) -> int:
        return self.lin.dim_u

    @property
    def n(self) -> int:
        return self.lin.A.shape[0]

    def adapted_box(self, box: Box) -> Box:
        """The adapted-coordinate box with the same center; exact for permutation bases."""
        return Box(self.splitting.to_adapted(box.c), box.radius)

    def translated(self, p_c) -> MapSpec:
        """Perturbation after moving the (adapted) fixed point ``p_c`` to the origin.

        ``f(v + p) - p = B v + phi(v + p) - phi(p)`` because ``p`` is fixed.
        """
        p_c = np.asarray(p_c, dtype=float)
        if not np.any(p_c):
            return self.phi_c
        return Recentered(self.phi_c, p_c)


@dataclass
class LHyperbolicCert:
    A: HyperbolicLinear
    phi: MapSpec
    region: Box
    lip_phi: LipEstimate
    threshold: float
    margin: float
    band: float
    verdict: str

    def to_json(self) -> dict:
        return {
            "linear": self.A.to_json(),
            "region": self.region.to_json(),
            "lip_phi": self.lip_phi.to_json(),
            "threshold": self.threshold,
            "threshold_terms": {"(1-tau)/2": (1 - self.A.tau) / 2, "m": self.A.m},
            "margin": self.margin,
            "band": self.band,
            "lip_times_margin": self.lip_phi.value * self.margin,
            "verdict": self.verdict,
        }


def certify_L_hyperbolic(A, phi: MapSpec | None, region: Box, budget: SamplingBudget = DEFAULT_BUDGET,
                         splitting: Splitting | None = None, margin: float = DEFAULT_MARGIN,
                         band: float = DEFAULT_BAND) -> LHyperbolicCert:
    """Check ``Lip(phi) * margin < min((1 - tau)/2, m)`` on ``region``.

    ``region`` is given in adapted coordinates.  Values within ``band``
    (relative) of the threshold are reported as inconclusive.
    """
    sysm = SaddleSystem(A, phi, splitting)
    lin = sysm.lin
    lip = estimate_lip(sysm.phi_c, region, budget)
    thr = min((1.0 - lin.tau) / 2.0, lin.m)
    v = lip.value * margin
    if v < thr * (1 - band):
        verdict = "certified"
    elif v > thr * (1 + band):
        verdict = "rejected"
    else:
        verdict = "inconclusive"
    return LHyperbolicCert(lin, sysm.phi, region, lip, thr, margin, band, verdict)


@dataclass
class FixedPointResult:
    point: np.ndarray
    point_adapted: np.ndarray
    iterations: int
    steps: list
    ratios: list
    rate_bound: float
    lip_phi: float
    converged: bool = True

    def to_json(self) -> dict:
        return {"point": self.point.tolist(), "iterations": self.iterations, "steps": self.steps,
                "observed_ratios": self.ratios, "rate_bound": self.rate_bound, "lip_phi": self.lip_phi}


def _max_iter(tol: float, diam: float, rate: float) -> int:
    if rate <= 0:
        return 16
    return int(math.ceil(math.log(max(tol, 1e-300) / max(diam, 1e-300)) / math.log(rate))) + 16


def find_fixed_point(A, phi: MapSpec | None, region: Box, tol: float = 1e-12,
                     splitting: Splitting | None = None, budget: SamplingBudget = DEFAULT_BUDGET,
                     lip_phi: float | None = None) -> FixedPointResult:
    """Fixed point of ``A + phi`` by the hyperbolic contraction.

    ``T(v) = (A_s v_s + phi_s(v), A_u^{-1}(v_u - phi_u(v)))`` has the same
    fixed points as ``f`` and contracts with rate ``tau + Lip(phi)``.
    ``region`` is in adapted coordinates; iteration starts at its center.
    """
    sysm = SaddleSystem(A, phi, splitting)
    lin, ds = sysm.lin, sysm.dim_s
    if lip_phi is None:
        lip_phi = estimate_lip(sysm.phi_c, region, budget).value
    rate = lin.tau + lip_phi
    if rate >= 1:
        raise PreconditionFailed(f"tau + Lip(phi) = {rate:.6g} >= 1")

    def T(v):
        ph = sysm.phi_c.eval_points(v[None, :])[0]
        out = np.empty_like(v)
        out[:ds] = lin.A_s @ v[:ds] + ph[:ds]
        out[ds:] = lin.A_u_inv @ (v[ds:] - ph[ds:])
        return out

    c = region.c.copy()
    first = maxnorm(T(c) - c)
    if first > (1.0 - rate) * region.radius:
        raise PreconditionFailed(
            f"|T(c) - c| = {first:.6g} exceeds (1 - tau - Lip phi) r = {(1 - rate) * region.radius:.6g}")
    v = c
    steps, ratios = [], []
    for it in range(1, _max_iter(tol, 2 * region.radius, rate) + 1):
        w = T(v)
        step = float(maxnorm(w - v))
        if steps and steps[-1] > 0:
            ratios.append(step / steps[-1])
        steps.append(step)
        v = w
        if step <= tol:
            x = sysm.splitting.from_adapted(v)
            return FixedPointResult(x, v, it, steps, ratios, rate, float(lip_phi))
    raise NoConvergence(f"fixed-point iteration did not reach tol {tol:g} (last step {steps[-1]:.3g})")


@dataclass
class InversionResult:
    x: np.ndarray
    residual: float
    iterations: int
    steps: list
    lip_inverse_bound: float

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "residual": self.residual, "iterations": self.iterations,
                "steps": self.steps, "lip_inverse_bound": self.lip_inverse_bound}


def invert_at(A, phi: MapSpec | None, z, region: Box, tol: float = 1e-12,
              budget: SamplingBudget = DEFAULT_BUDGET, lip_phi: float | None = None) -> InversionResult:
    """Solve ``A x + phi(x) = z`` by ``x <- A^{-1}(z - phi(x))`` (original coordinates).

    Iterates are clamped onto ``region`` (a nonexpansive retraction), so a
    root inside the region is still reached at rate ``Lip(phi) / m(A)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    phi = phi if phi is not None else ZeroMap(n)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    Ainv = np.linalg.inv(A)
    m = 1.0 / opnorm(Ainv)
    if lip_phi is None:
        lip_phi = estimate_lip(phi, region, budget).value
    if lip_phi >= m:
        raise PreconditionFailed(f"Lip(phi) = {lip_phi:.6g} >= m(A) = {m:.6g}")
    rate = lip_phi / m
    x = region.c.copy()
    steps = []
    for it in range(1, _max_iter(tol / 10, 2 * region.radius, max(rate, 1e-16)) + 1):
        ph = phi.eval_points(x[None, :])[0]
        w = np.clip(Ainv @ (z - ph), region.lo, region.hi)
        step = float(maxnorm(w - x))
        steps.append(step)
        x = w
        if step <= tol / 10:
            break
    residual = float(maxnorm(A @ x + phi.eval_points(x[None, :])[0] - z))
    if residual > tol:
        raise NoConvergence(f"inversion residual {residual:.3g} > tol {tol:g} (root outside region?)")
    return InversionResult(x, residual, it, steps, 1.0 / (m - lip_phi))


def sweep_fixed_points(m: MapSpec, region: Box, nodes: int | None = None, tol: float = 1e-9) -> list[np.ndarray]:
    """All fixed points of ``m`` found by a grid sweep of the displacement ``m(x) - x``.

    In 1D, sign changes are solved with Brent's method and local minima of
    ``|m(x) - x|`` (touching zeros, as at kinks) are polished by bounded
    minimization.  In higher dimension grid minima of the displacement are
    polished with Nelder-Mead.  Points closer than ``1e3 * tol`` merge.
    """
    d = region.dim
    nodes = nodes or {1: 4001, 2: 201, 3: 41}[d]
    axes = [np.linspace(lo, hi, nodes) for lo, hi in zip(region.lo, region.hi)]
    found = []
    if d == 1:
        xs = axes[0]
        disp = m.eval_points(xs[:, None])[:, 0] - xs
        g = lambda t: float(m.eval_points(np.array([[t]]))[0, 0]) - t  # noqa: E731
        for i in np.flatnonzero(disp == 0):
            found.append(xs[i])
        for i in np.flatnonzero(disp[:-1] * disp[1:] < 0):
            found.append(brentq(g, xs[i], xs[i + 1], xtol=1e-15))
        a = np.abs(disp)
        for i in range(1, len(xs) - 1):
            if a[i] <= a[i - 1] and a[i] <= a[i + 1] and a[i] > 0:
                res = minimize_scalar(lambda t: abs(g(t)), bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                                      options={"xatol": 1e-15})
                if res.fun <= tol:
                    found.append(float(res.x))
        pts = [np.array([v]) for v in sorted(found)]
    else:
        grids = np.meshgrid(*axes, indexing="ij")
        X = np.stack([g.ravel() for g in grids], axis=1)
        a = maxnorm(m.eval_points(X) - X).reshape(grids[0].shape)
        from scipy.ndimage import minimum_filter
        cand = np.argwhere(a == minimum_filter(a, size=3, mode="nearest"))
        bounds = list(zip(region.lo, region.hi))
        pts = []
        for idx in cand:
            x0 = np.array([axes[k][i] for k, i in enumerate(idx)])
            res = minimize(lambda z: float(maxnorm(m.eval_points(np.clip(z, region.lo, region.hi)[None, :])[0]
                                                   - np.clip(z, region.lo, region.hi))),
                           x0, method="Nelder-Mead", bounds=bounds,
                           options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": 2000})
            if res.fun <= tol:
                pts.append(np.asarray(res.x))
    merged: list[np.ndarray] = []
    for p in pts:
        if all(maxnorm(p - q) > 1e3 * tol for q in merged):
            merged.append(p)
    return merged


@dataclass
class IsolationReport:
    fixed_point: np.ndarray
    q: np.ndarray
    sweep: list
    unique: bool
    orbit_in_region: bool
    distance: float
    distance_bound: float

    def to_json(self) -> dict:
        return {"fixed_point": self.fixed_point.tolist(), "q": self.q.tolist(),
                "sweep": [p.tolist() for p in self.sweep], "unique": self.unique,
                "orbit_in_region": self.orbit_in_region, "distance": self.distance,
                "distance_bound": self.distance_bound}


def isolation_check(A, phi: MapSpec | None, q, region: Box, n_steps: int = 20,
                    splitting: Splitting | None = None, budget: SamplingBudget = DEFAULT_BUDGET,
                    nodes: int | None = None) -> IsolationReport:
    """Report whether ``q`` can be a second fixed point in ``region``.

    If the orbit of ``q`` stays ``n`` steps forward and backward in the
    region, the stable part of ``q - p`` is at most ``lam^n`` times the
    diameter (backward), and likewise the unstable part (forward), with
    ``lam = tau + Lip phi``.  A displacement sweep of the region counts the
    fixed points it contains.
    """
    sysm = SaddleSystem(A, phi, splitting)
    fp = find_fixed_point(A, phi, region, splitting=splitting, budget=budget)
    lam = fp.rate_bound
    q_c = sysm.splitting.to_adapted(np.atleast_1d(np.asarray(q, dtype=float)))
    stays = True
    v = q_c.copy()
    for _ in range(n_steps):
        if not region.contains(v)[0]:
            stays = False
            break
        v = sysm.f_c.eval_points(v[None, :])[0]
    if stays:
        w = q_c.copy()
        for _ in range(n_steps):
            if not region.contains(w)[0]:
                stays = False
                break
            try:
                w = invert_at(sysm.lin.B, sysm.phi_c, w, region, tol=1e-13, budget=budget,
                              lip_phi=fp.lip_phi).x
            except NoConvergence:
                # preimage lies outside the region
                stays = False
                break
    sweep = sweep_fixed_points(sysm.f_c, region, nodes)
    dist = float(maxnorm(q_c - fp.point_adapted))
    bound = lam ** n_steps * 2 * region.radius if stays else float("inf")
    unique = len(sweep) == 1 and float(maxnorm(sweep[0] - fp.point_adapted)) < 1e-6
    return IsolationReport(fp.point, np.asarray(q, dtype=float), [sysm.splitting.from_adapted(p) for p in sweep],
                           unique, stays, dist, bound)
