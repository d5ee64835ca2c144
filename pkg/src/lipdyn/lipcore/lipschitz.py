"""Sampled Lipschitz, reverse-Lipschitz and local Lipschitz-norm estimates.

The Lipschitz seminorm is the supremum of difference quotients
``|m(x) - m(y)| / |x - y|`` (max norm).  Sampling a finite set of pairs
gives a lower bound; the reverse constant (infimum of quotients) is
likewise bounded from above.  Pairs come from a seeded Sobol sequence
plus a few structured families, and the most extreme pairs are refined by
bisection: for a segment ``[x, y]`` with midpoint ``m`` one of the halves
always has a quotient at least as large as the whole, so keeping the
better half never loses ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from ..errors import DegenerateRegion, DomainError
from .geometry import Box
from .maps import MapSpec, difference

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SamplingBudget:
    pairs: int = 256
    seed: int = 0
    refine_depth: int = 60
    refine_top: int = 8

    def to_json(self) -> dict:
        return {"pairs": self.pairs, "seed": self.seed, "refine_depth": self.refine_depth,
                "refine_top": self.refine_top}


DEFAULT_BUDGET = SamplingBudget()


@dataclass
class LipEstimate:
    value: float
    kind: str
    region: Box
    pair_count: int
    refinement_depth: int
    is_lower_bound: bool
    argpair: tuple = field(default=(), repr=False)

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "kind": self.kind,
            "region": self.region.to_json(),
            "pair_count": self.pair_count,
            "refinement_depth": self.refinement_depth,
            "is_lower_bound": self.is_lower_bound,
            "bound_semantics": ("sampled sup of quotients, lower bound of Lip"
                                if self.kind == "lipschitz"
                                else "sampled inf of quotients, upper bound of the reverse constant"),
        }


@lru_cache(maxsize=64)
def _unit_sobol(dim: int, m: int, seed: int) -> np.ndarray:
    pts = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)
    pts.setflags(write=False)
    return pts


def _check_region(m: MapSpec, region: Box) -> None:
    if region.dim != m.dim:
        raise ValueError(f"region dimension {region.dim} does not match map dimension {m.dim}")
    if region.radius < 64 * EPS * max(1.0, float(np.max(np.abs(region.c)))):
        raise DegenerateRegion(f"radius {region.radius} too small at center {list(region.center)}")
    dom = m.domain
    if dom is not None:
        rect = dom.to_rect() if isinstance(dom, Box) else dom
        slack = 1e-12 * (1.0 + float(np.max(np.abs(np.r_[rect.lo_a, rect.hi_a]))))
        if not region.subset_of(rect, slack=slack):
            raise DomainError(f"region {region.to_json()} not inside domain of {m.name}")


def min_separation(region: Box) -> float:
    return 1e-12 * region.radius


def sample_pairs(region: Box, budget: SamplingBudget = DEFAULT_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic pair set for ``region``.

    Families: Sobol pairs; every corner paired with Sobol points; center
    antithetic pairs ``(x, 2c - x)``; axis micro-pairs ``(x, x + h e_j)``.
    """
    d = region.dim
    lo, width = region.lo, 2.0 * region.radius
    m = max(4, math.ceil(math.log2(max(budget.pairs, 2))))
    u = _unit_sobol(2 * d, m, budget.seed)[: budget.pairs]
    X = lo + u[:, :d] * width
    Y = lo + u[:, d:] * width
    xs, ys = [X], [Y]

    corners = region.corners()
    k = min(16, budget.pairs)
    for c in corners:
        xs.append(np.repeat(c[None, :], k, axis=0))
        ys.append(X[:k])
    xs.append(corners)
    ys.append(np.repeat(region.c[None, :], len(corners), axis=0))
    if len(corners) > 1:
        xs.append(corners)
        ys.append(corners[::-1])

    na = min(64, budget.pairs)
    xs.append(X[:na])
    ys.append(2.0 * region.c - X[:na])

    h = 1e-3 * region.radius
    nm = min(32, budget.pairs)
    for j in range(d):
        base = Y[:nm].copy()
        step = np.where(base[:, j] + h <= region.hi[j], h, -h)
        other = base.copy()
        other[:, j] += step
        xs.append(base)
        ys.append(other)

    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    keep = np.max(np.abs(X - Y), axis=1) > min_separation(region)
    return X[keep], Y[keep]


def _quotients(m: MapSpec, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fX = m.eval_points(X)
    fY = m.eval_points(Y)
    sep = np.max(np.abs(X - Y), axis=1)
    num = np.max(np.abs(fX - fY), axis=1) if m.dim else np.zeros(len(X))
    q = num / sep
    # intermediates of size O(1) round even when the outputs cancel to something small
    scale = np.maximum(np.maximum(np.max(np.abs(fX), axis=1), np.max(np.abs(fY), axis=1)), 1.0)
    noise = 4.0 * EPS * scale / sep + 4.0 * EPS * q
    return q, noise


def _refine(m: MapSpec, X, Y, q, budget: SamplingBudget, region: Box, sign: float):
    """Bisection refinement of the ``refine_top`` most extreme pairs.

    ``sign = +1`` pushes quotients up (Lipschitz), ``-1`` down (reverse).
    Returns the best value, its pair, pairs evaluated and rounds used.
    """
    order = np.argsort(-sign * q, kind="stable")[: budget.refine_top]
    x, y, cur = X[order].copy(), Y[order].copy(), q[order].copy()
    active = np.ones(len(order), dtype=bool)
    floor = min_separation(region)
    evaluated = 0
    rounds = 0
    for _ in range(budget.refine_depth):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, ya = x[idx], y[idx]
        mid = 0.5 * (xa + ya)
        sep = 0.5 * np.max(np.abs(xa - ya), axis=1)
        q1, n1 = _quotients(m, xa, mid)
        q2, n2 = _quotients(m, mid, ya)
        evaluated += 2 * len(idx)
        rounds += 1
        take_first = sign * q1 >= sign * q2
        best = np.where(take_first, q1, q2)
        noise = np.where(take_first, n1, n2)
        gain = sign * (best - cur[idx])
        ok = (gain > noise) & (sep > floor)
        upd = idx[ok]
        tf = take_first[ok]
        new_x = np.where(tf[:, None], xa[ok], mid[ok])
        new_y = np.where(tf[:, None], mid[ok], ya[ok])
        x[upd], y[upd], cur[upd] = new_x, new_y, best[ok]
        active[idx[~ok]] = False
    k = int(np.argmax(sign * cur))
    return float(cur[k]), (x[k].tolist(), y[k].tolist()), evaluated, rounds


def _estimate(m: MapSpec, region: Box, budget: SamplingBudget, pairs, kind: str) -> LipEstimate:
    _check_region(m, region)
    X, Y = pairs if pairs is not None else sample_pairs(region, budget)
    X = np.asarray(X, dtype=float).reshape(-1, m.dim)
    Y = np.asarray(Y, dtype=float).reshape(-1, m.dim)
    q, _ = _quotients(m, X, Y)
    sign = 1.0 if kind == "lipschitz" else -1.0
    k = int(np.argmax(sign * q))
    value, argpair = float(q[k]), (X[k].tolist(), Y[k].tolist())
    evaluated, rounds = len(q), 0
    if budget.refine_depth > 0 and len(q):
        rv, rp, extra, rounds = _refine(m, X, Y, q, budget, region, sign)
        evaluated += extra
        if sign * rv >= sign * value:
            value, argpair = rv, rp
    return LipEstimate(value=value, kind=kind, region=region, pair_count=int(evaluated),
                       refinement_depth=rounds, is_lower_bound=(kind == "lipschitz"),
                       argpair=argpair)


def estimate_lip(m: MapSpec, region: Box, budget: SamplingBudget = DEFAULT_BUDGET,
                 pairs=None) -> LipEstimate:
    """Sampled Lipschitz constant of ``m`` on ``region`` (a lower bound).

    ``pairs`` overrides the sampled pair set, which is how fixed-sample
    comparisons (triangle and scaling laws) are made.
    """
    return _estimate(m, region, budget, pairs, "lipschitz")


def estimate_reverse_lip(m: MapSpec, region: Box, budget: SamplingBudget = DEFAULT_BUDGET,
                         pairs=None) -> LipEstimate:
    """Sampled reverse-Lipschitz constant (inf of quotients; an upper bound of the true one)."""
    return _estimate(m, region, budget, pairs, "reverse_lipschitz")


def sup_norm(m: MapSpec, region: Box, budget: SamplingBudget = DEFAULT_BUDGET) -> float:
    """Sampled ``sup |m(x)|`` over ``region``, polished by a bounded local search."""
    _check_region(m, region)
    d = region.dim
    mm = max(4, math.ceil(math.log2(max(budget.pairs, 2))))
    u = _unit_sobol(d, mm, budget.seed)[: budget.pairs]
    pts = np.concatenate([region.lo + u * 2.0 * region.radius, region.corners(), region.c[None, :]])
    vals = np.max(np.abs(m.eval_points(pts)), axis=1)
    best = float(np.max(vals))
    if budget.refine_depth > 0:
        bounds = list(zip(region.lo, region.hi))
        for i in np.argsort(-vals, kind="stable")[:2]:
            res = minimize(lambda z: -float(np.max(np.abs(m.eval_points(np.clip(z, region.lo, region.hi)[None, :])))),
                           pts[i], method="Nelder-Mead", bounds=bounds,
                           options={"xatol": 1e-12 * region.radius, "fatol": 1e-15, "maxiter": 400})
            best = max(best, -float(res.fun))
    return best


@dataclass
class LipNorm:
    value: float
    c0: float
    lip: LipEstimate

    def __float__(self):
        return float(self.value)

    def to_json(self) -> dict:
        return {"value": self.value, "c0": self.c0, "lip": self.lip.to_json()}


def lip_norm_parts(m: MapSpec, region: Box, budget: SamplingBudget = DEFAULT_BUDGET) -> LipNorm:
    c0 = sup_norm(m, region, budget)
    lip = estimate_lip(m, region, budget)
    return LipNorm(value=max(c0, lip.value), c0=c0, lip=lip)


def lip_norm(m: MapSpec, region: Box, budget: SamplingBudget = DEFAULT_BUDGET) -> float:
    """Local Lipschitz norm ``max(sup |m|, Lip m)`` on ``region`` (sampled)."""
    return lip_norm_parts(m, region, budget).value


def lip_distance(m1: MapSpec, m2: MapSpec, region: Box, budget: SamplingBudget = DEFAULT_BUDGET) -> float:
    """Local Lipschitz norm of ``m1 - m2`` on ``region``."""
    return lip_norm(difference(m1, m2), region, budget)


def lip_distance_parts(m1: MapSpec, m2: MapSpec, region: Box,
                       budget: SamplingBudget = DEFAULT_BUDGET) -> LipNorm:
    return lip_norm_parts(difference(m1, m2), region, budget)
