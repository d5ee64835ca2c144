"""Intersections of Lipschitz graphs and L-transversality.

``E = E1 + E2`` with ``E1`` the first ``d1`` coordinates.  A perturbed
pair of graphs ``theta~: E1 -> E2`` and ``sigma~: E2 -> E1`` meets in a
unique point found as the fixed point of ``g = sigma~ o theta~`` on the
compactum ``K1 = {|y| <= r/2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EscapedCompactum, NoConvergence, NotOnSet, PreconditionFailed
from .graphs import GraphFn
from .lipcore.geometry import Box, maxnorm
from .lipcore.lipschitz import DEFAULT_BUDGET, SamplingBudget, estimate_lip
from .lipcore.maps import FunctionMap

SLACK = 1e-12
LIP_TOL = 1e-9


class _Graph:
    """Uniform wrapper over a :class:`GraphFn` or a vectorized callable ``(N, d_in) -> (N, d_out)``."""

    def __init__(self, g, d_in: int, d_out: int):
        self.g = g
        self.d_in, self.d_out = d_in, d_out

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.d_in)
        out = np.asarray(self.g(pts), dtype=float)
        return out.reshape(len(pts), self.d_out)

    @property
    def spacing(self) -> float | None:
        return self.g.h if isinstance(self.g, GraphFn) else None

    def lip_on(self, ball: Box, budget: SamplingBudget) -> float:
        if self.d_in == self.d_out:
            fm = FunctionMap(self, dim=self.d_in, scalar=False)
        else:
            n = max(self.d_in, self.d_out)

            def padded(V):
                out = np.zeros((V.shape[0], n))
                out[:, : self.d_out] = self(V[:, : self.d_in])
                return out
            fm = FunctionMap(padded, dim=n, scalar=False)
            if n > self.d_in:
                ball = Box(np.r_[ball.c, np.zeros(n - self.d_in)], ball.radius)
        return estimate_lip(fm, ball, budget).value


def _zero(d_out):
    return lambda pts: np.zeros((np.asarray(pts).reshape(len(pts), -1).shape[0], d_out))


@dataclass
class TransversalityProblem:
    d1: int
    d2: int
    r: float
    theta_t: Callable
    sigma_t: Callable
    c: float = 0.5
    theta: Callable | None = None
    sigma: Callable | None = None
    z: np.ndarray | None = None

    def __post_init__(self):
        self.T = _Graph(self.theta_t, self.d1, self.d2)
        self.S = _Graph(self.sigma_t, self.d2, self.d1)
        self.T0 = _Graph(self.theta if self.theta is not None else _zero(self.d2), self.d1, self.d2)
        self.S0 = _Graph(self.sigma if self.sigma is not None else _zero(self.d1), self.d2, self.d1)
        self.z = np.zeros(self.d1 + self.d2) if self.z is None else np.asarray(self.z, dtype=float)


def _ball_samples(d: int, radius: float, nodes: int | None = None) -> np.ndarray:
    nodes = nodes or {1: 2001, 2: 201, 3: 41}[d]
    axes = [np.linspace(-radius, radius, nodes)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@dataclass
class HypothesisReport:
    c: float
    allowance: float
    dist_theta: float
    dist_sigma: float
    lip_theta: float
    lip_sigma: float
    lip_theta_t: float
    lip_sigma_t: float
    sup_theta_t_on_K1: float
    sup_sigma_t_on_K2: float
    checks: dict
    passed: bool

    def to_json(self) -> dict:
        return self.__dict__.copy()


def check_hypotheses(p: TransversalityProblem, budget: SamplingBudget = DEFAULT_BUDGET) -> HypothesisReport:
    """Closeness, Lipschitz and containment hypotheses, evaluated on ``K1``, ``K2`` (radius ``r/2``)."""
    half = p.r / 2
    K1, K2 = _ball_samples(p.d1, half), _ball_samples(p.d2, half)
    allowance = (1 - p.c) * p.r / 2
    dist_t = float(np.max(maxnorm(p.T(K1) - p.T0(K1))))
    dist_s = float(np.max(maxnorm(p.S(K2) - p.S0(K2))))
    lt0 = p.T0.lip_on(Box(np.zeros(p.d1), half), budget)
    ls0 = p.S0.lip_on(Box(np.zeros(p.d2), half), budget)
    lt = p.T.lip_on(Box(np.zeros(p.d1), half), budget)
    ls = p.S.lip_on(Box(np.zeros(p.d2), half), budget)
    sup_t = float(np.max(maxnorm(p.T(K1))))
    sup_s = float(np.max(maxnorm(p.S(K2))))
    checks = {
        "c < 1": p.c < 1,
        "||theta - theta~|| <= (1-c)r/2": dist_t <= allowance + SLACK,
        "||sigma - sigma~|| <= (1-c)r/2": dist_s <= allowance + SLACK,
        "Lip(theta) <= c": lt0 <= p.c + SLACK,
        "Lip(sigma) <= c": ls0 <= p.c + SLACK,
        "Lip(theta~) < 1": lt < 1,
        "Lip(sigma~) < 1": ls < 1,
        "theta~(K1) in K2": sup_t <= half + SLACK,
        "sigma~(K2) in K1": sup_s <= half + SLACK,
    }
    return HypothesisReport(p.c, allowance, dist_t, dist_s, lt0, ls0, lt, ls, sup_t, sup_s, checks,
                            all(checks.values()))


@dataclass
class TransversalityCert:
    y1: np.ndarray
    y2: np.ndarray
    y0: np.ndarray
    iterations: int
    steps: list
    ratios: list
    contraction_bound: float
    r0: float
    theta_star: GraphFn = field(repr=False)
    sigma_star: GraphFn = field(repr=False)
    lip_theta_star: float = 0.0
    lip_sigma_star: float = 0.0
    verdict: str = "transversal"
    hypotheses_overridden: bool = False

    def to_json(self) -> dict:
        return {"y1": self.y1.tolist(), "y2": self.y2.tolist(), "y0": self.y0.tolist(),
                "iterations": self.iterations, "steps": self.steps, "observed_ratios": self.ratios,
                "contraction_bound": self.contraction_bound, "r0": self.r0,
                "lip_theta_star": self.lip_theta_star, "lip_sigma_star": self.lip_sigma_star,
                "verdict": self.verdict, "hypotheses_overridden": self.hypotheses_overridden}


def iterate_composition(outer: _Graph, inner: _Graph, start, radius: float, tol: float,
                        max_iter: int = 10_000) -> tuple[np.ndarray, list]:
    """Fixed point of ``outer o inner`` by plain iteration, staying in ``{|y| <= radius}``."""
    y = np.asarray(start, dtype=float).reshape(1, -1)
    steps = []
    for _ in range(max_iter):
        if maxnorm(y)[0] > radius * (1 + SLACK) + SLACK:
            raise EscapedCompactum(f"iterate {y[0].tolist()} left the ball of radius {radius}")
        w = outer(inner(y))
        step = float(maxnorm(w - y)[0])
        steps.append(step)
        y = w
        if step <= tol:
            return y[0], steps
    raise NoConvergence(f"composition did not converge (last step {steps[-1]:.3g})")


def _translated_graph(G: _Graph, at: np.ndarray, r0: float, spacing: float | None) -> GraphFn:
    """``y -> G(y + at) - G(at)`` sampled finely on ``B_r0``."""
    d = G.d_in
    base = G(at[None, :])[0]
    n = 1025 if d == 1 else 129
    if spacing is not None:
        n = max(n, 2 * int(math.ceil(4 * r0 / spacing)) + 1) if d == 1 else n
    return GraphFn.from_function(lambda Y: G(Y + at) - base, r0, n, d)


def find_intersection(p: TransversalityProblem, tol: float = 1e-13, start=None, override: bool = False,
                      budget: SamplingBudget = DEFAULT_BUDGET) -> TransversalityCert:
    """Unique intersection of ``graph(theta~)`` and ``graph(sigma~)`` and the local graphs there."""
    hyp = check_hypotheses(p, budget)
    if not hyp.passed and not override:
        failed = [k for k, v in hyp.checks.items() if not v]
        raise PreconditionFailed(f"hypotheses fail: {failed}")
    half = p.r / 2
    y_start = np.zeros(p.d1) if start is None else np.asarray(start, dtype=float)
    y1, steps = iterate_composition(p.S, p.T, y_start, half, tol)
    y2 = p.T(y1[None, :])[0]
    ratios = [b / a for a, b in zip(steps, steps[1:]) if a > 1e3 * np.finfo(float).eps]
    bound = hyp.lip_sigma_t * hyp.lip_theta_t
    y0 = p.z + np.r_[y1, y2]
    r_max = min(p.r - float(maxnorm(y1)), p.r - float(maxnorm(y2)))
    h = p.T.spacing or p.S.spacing
    if h is not None and r_max >= h:
        r_max = math.floor(r_max / h) * h
    r0 = 0.9 * r_max
    ts = _translated_graph(p.T, y1, r0, p.T.spacing)
    ss = _translated_graph(p.S, y2, r0, p.S.spacing)
    lt, ls = ts.lip(), ss.lip()
    verdict = _lip_verdict(max(lt, ls))
    return TransversalityCert(y1, y2, y0, len(steps), steps, ratios, bound, r0, ts, ss, lt, ls, verdict,
                              not hyp.passed)


def uniqueness_check(p: TransversalityProblem, seeds: int = 10, tol: float = 1e-13, seed: int = 0) -> dict:
    """Restart the iteration from random points of ``K1``; all limits must agree to ``10 tol``."""
    rng = np.random.default_rng(seed)
    half = p.r / 2
    limits = [iterate_composition(p.S, p.T, rng.uniform(-half, half, p.d1), half, tol)[0] for _ in range(seeds)]
    spread = max(float(maxnorm(a - limits[0])) for a in limits)
    swapped, _ = iterate_composition(p.T, p.S, np.zeros(p.d2), half, tol)
    y2 = p.T(limits[0][None, :])[0]
    return {"limits": [l.tolist() for l in limits], "spread": spread, "unique": spread <= 10 * tol,
            "y2_swapped": swapped.tolist(), "y2_mismatch": float(maxnorm(swapped - y2)),
            "symmetric": float(maxnorm(swapped - y2)) <= 10 * tol}


def _lip_verdict(lip: float, tol: float = LIP_TOL) -> str:
    if lip < 1 - tol:
        return "transversal"
    if lip > 1:
        return "rejected"
    return "inconclusive"


@dataclass
class GraphTransversality:
    lip_w1: float
    lip_w2: float
    verdict: str

    def to_json(self) -> dict:
        return self.__dict__.copy()


def l_transversal_graphs(w1, w2, x, r: float, d1: int | None = None, d2: int | None = None,
                         tol: float = 1e-9) -> GraphTransversality:
    """L-transversality at ``x`` of ``graph(w1: E1 -> E2)`` and ``graph(w2: E2 -> E1)`` on ``B_r``."""
    d1 = d1 if d1 is not None else (w1.d1 if isinstance(w1, GraphFn) else 1)
    d2 = d2 if d2 is not None else (w2.d1 if isinstance(w2, GraphFn) else 1)
    G1, G2 = _Graph(w1, d1, d2), _Graph(w2, d2, d1)
    x = np.asarray(x, dtype=float)
    x1, x2 = x[:d1], x[d1:]
    off1 = float(maxnorm(G1(x1[None, :])[0] - x2))
    off2 = float(maxnorm(G2(x2[None, :])[0] - x1))
    if off1 > tol or off2 > tol:
        raise NotOnSet(f"x is {off1:.3g} from graph 1 and {off2:.3g} from graph 2")
    l1 = _translated_graph(G1, x1, r, G1.spacing).lip()
    l2 = _translated_graph(G2, x2, r, G2.spacing).lip()
    return GraphTransversality(l1, l2, _lip_verdict(max(l1, l2)))
