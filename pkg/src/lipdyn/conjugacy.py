"""Hartman-Grobman conjugacy ``h o f = B o h`` with ``h = I + psi``.

Coordinates are adapted and recentred at the fixed point, and ``f`` is the
cut-off map ``B + phi o clamp``.  The bounded field ``psi`` is the fixed
point of the contraction

    psi_s <- (A_s psi_s - phi_s) o f^{-1},    psi_u <- A_u^{-1} (phi_u + psi_u o f),

iterated on a grid over ``U_r`` (both blocks at once).  Lookups that land
outside the grid use the orbit series of the same fixed point,

    psi_s(w) = -sum_j A_s^j phi_s(f^{-(j+1)} w),   psi_u(y) = sum_j A_u^{-(j+1)} phi_u(f^j y),

which is exact for the cut-off map; these values never change and are
computed once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import NoConvergence
from .graphs import GraphFn
from .hyperbolic import SaddleSystem, find_fixed_point
from .lipcore.geometry import Box, maxnorm
from .lipcore.lipschitz import DEFAULT_BUDGET, SamplingBudget
from .manifolds import BlockMap, ManifoldResult, block_maps


class _Series:
    """Orbit-series evaluation of ``psi`` anywhere in the plane."""

    def __init__(self, bm: BlockMap, tau: float, ds: int):
        self.bm = bm
        self.ds = ds
        self.A_s = bm.L[:ds, :ds]
        self.A_u_inv = np.linalg.inv(bm.L[ds:, ds:]) if bm.n > ds else np.zeros((0, 0))
        self.terms = int(math.ceil(math.log(1e-18) / math.log(max(tau, 1e-3)))) + 5

    def psi(self, W: np.ndarray) -> np.ndarray:
        ds, n = self.ds, self.bm.n
        out = np.zeros((W.shape[0], n))
        if ds:
            acc = np.zeros((W.shape[0], ds))
            P, M = W, np.eye(ds)
            for _ in range(self.terms):
                P = self.bm.inverse(P)
                acc += self.bm.nonlin(P)[:, :ds] @ M.T
                M = self.A_s @ M
            out[:, :ds] = -acc
        if n > ds:
            acc = np.zeros((W.shape[0], n - ds))
            P, M = W, self.A_u_inv.copy()
            for _ in range(self.terms):
                acc += self.bm.nonlin(P)[:, ds:] @ M.T
                P = self.bm.forward(P)
                M = self.A_u_inv @ M
            out[:, ds:] = acc
        return out


@dataclass
class BoundedField:
    """``psi`` on a uniform grid over ``U_r``, with series evaluation off the grid."""

    radius: float
    values: np.ndarray
    series: _Series = field(repr=False)

    def __post_init__(self):
        self.n = self.values.shape[0]
        self.dim = self.values.shape[-1]
        self.axes = [np.linspace(-self.radius, self.radius, self.n)] * self.dim
        self._rgi = RegularGridInterpolator(self.axes, self.values, method="linear")

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def inside(self, W: np.ndarray) -> np.ndarray:
        return np.all(np.abs(W) <= self.radius * (1 + 1e-12), axis=1)

    def __call__(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(W)
        out = np.empty_like(W)
        ins = self.inside(W)
        if ins.any():
            out[ins] = self._rgi(np.clip(W[ins], -self.radius, self.radius))
        if (~ins).any():
            out[~ins] = self.series.psi(W[~ins])
        return out

    def h(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(W)
        return W + self(W)

    def to_csv(self) -> str:
        lines = [",".join([f"x{j}" for j in range(self.dim)] + [f"psi{j}" for j in range(self.dim)])]
        for x, v in zip(self.nodes(), self.values.reshape(-1, self.dim)):
            lines.append(",".join(repr(float(a)) for a in (*x, *v)))
        return "\n".join(lines) + "\n"


@dataclass
class ConjugacyResult:
    field: BoundedField
    residual: float
    iterations: int
    changes: list
    ratios: list
    residuals: list
    offgrid_fraction: float
    fixed_point: np.ndarray
    block: BlockMap = field(repr=False)

    def to_json(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations, "sup_changes": self.changes,
                "observed_ratios": self.ratios, "residual_trace": self.residuals,
                "offgrid_fraction": self.offgrid_fraction, "sup_norm_psi": self.field.sup_norm,
                "fixed_point": self.fixed_point.tolist(), "grid_nodes_per_axis": self.field.n,
                "radius": self.field.radius}


def _residual(fld: BoundedField, bm: BlockMap, X: np.ndarray, FX: np.ndarray) -> float:
    lhs = FX + fld(FX)
    rhs = (X + fld(X)) @ bm.L.T
    return float(np.max(maxnorm(lhs - rhs)))


def solve_conjugacy(sysm: SaddleSystem, r: float = 1.0, grid_n: int = 65, tol: float = 1e-12,
                    max_iter: int = 500, fixed_point=None,
                    budget: SamplingBudget = DEFAULT_BUDGET) -> ConjugacyResult:
    """Iterate the conjugacy contraction on a ``grid_n``-per-axis grid over ``U_r``.

    The observed sup-change ratio must stay below one; a ratio of one or
    more (above the rounding floor) raises :class:`NoConvergence`.
    """
    if fixed_point is None:
        region = sysm.adapted_box(sysm.domain) if sysm.domain is not None else Box(np.zeros(sysm.n), r)
        p_c = find_fixed_point(sysm.lin.A, sysm.phi, region, splitting=sysm.splitting, budget=budget).point_adapted
    else:
        p_c = sysm.splitting.to_adapted(np.atleast_1d(np.asarray(fixed_point, dtype=float)))
    bm, _ = block_maps(sysm, p_c, r)
    ds, n = sysm.dim_s, sysm.n
    series = _Series(bm, sysm.lin.tau, ds)
    A_s = bm.L[:ds, :ds]
    A_u_inv = series.A_u_inv

    shape = (grid_n,) * n + (n,)
    fld = BoundedField(r, np.zeros(shape), series)
    X = fld.nodes()
    FX = bm.forward(X)
    BX = bm.inverse(X)
    phi_X = bm.nonlin(X)
    phi_BX = bm.nonlin(BX)
    in_f, in_b = fld.inside(FX), fld.inside(BX)
    # fixed boundary data
    psi_FX_out = series.psi(FX[~in_f]) if (~in_f).any() else np.zeros((0, n))
    psi_BX_out = series.psi(BX[~in_b]) if (~in_b).any() else np.zeros((0, n))
    offgrid = float(np.count_nonzero(~in_f) + np.count_nonzero(~in_b)) / (2 * len(X))

    def lookup(points, inside, outside_vals):
        out = np.empty((len(points), n))
        if inside.any():
            out[inside] = fld._rgi(np.clip(points[inside], -r, r))
        out[~inside] = outside_vals
        return out

    changes, ratios, residuals = [], [], []
    floor = 1e3 * np.finfo(float).eps
    for it in range(1, max_iter + 1):
        psi_B = lookup(BX, in_b, psi_BX_out)
        psi_F = lookup(FX, in_f, psi_FX_out)
        new = np.empty((len(X), n))
        new[:, :ds] = psi_B[:, :ds] @ A_s.T - phi_BX[:, :ds]
        new[:, ds:] = (phi_X[:, ds:] + psi_F[:, ds:]) @ A_u_inv.T
        ch = float(np.max(np.abs(new - fld.values.reshape(-1, n))))
        fld = BoundedField(r, new.reshape(shape), series)
        if changes and changes[-1] > floor:
            ratio = ch / changes[-1]
            ratios.append(ratio)
            if ratio >= 1 and ch > floor:
                raise NoConvergence(f"conjugacy iteration not contracting (ratio {ratio:.3g} at step {it})")
        changes.append(ch)
        residuals.append(_residual(fld, bm, X, FX))
        if ch <= tol:
            return ConjugacyResult(fld, residuals[-1], it, changes, ratios, residuals, offgrid,
                                   sysm.splitting.from_adapted(p_c), bm)
    raise NoConvergence(f"conjugacy did not converge in {max_iter} steps (last change {changes[-1]:.3g})")


@dataclass
class OrbitCheck:
    starts: int
    max_error: float
    worst_start: list
    steps_checked: int

    def to_json(self) -> dict:
        return self.__dict__.copy()


def orbit_conjugation(res: ConjugacyResult, samples: int = 50, horizon: int = 10, seed: int = 0) -> OrbitCheck:
    """``max |h(f^k x) - B^k h(x)|`` over random ``x`` in ``U_{r/2}``, ``k <= horizon``,
    as long as the orbit stays in ``U_r``."""
    fld, bm = res.field, res.block
    r = fld.radius
    rng = np.random.default_rng(seed)
    X = rng.uniform(-r / 2, r / 2, size=(samples, bm.n))
    hx = fld.h(X)
    P, Q = X.copy(), hx.copy()
    alive = np.ones(samples, dtype=bool)
    worst, worst_x, steps = 0.0, X[0].tolist(), 0
    for _ in range(horizon):
        P = bm.forward(P)
        Q = Q @ bm.L.T
        alive &= fld.inside(P)
        if not alive.any():
            break
        steps += 1
        err = maxnorm(fld.h(P[alive]) - Q[alive])
        i = int(np.argmax(err))
        if err[i] > worst:
            worst, worst_x = float(err[i]), X[alive][i].tolist()
    return OrbitCheck(samples, worst, worst_x, steps)


@dataclass
class ConjugacyReport:
    unstable_deviation: float | None
    stable_deviation: float | None
    min_node_separation: float
    injective_on_nodes: bool
    orbit: OrbitCheck

    def to_json(self) -> dict:
        d = self.__dict__.copy()
        d["orbit"] = self.orbit.to_json()
        return d


def _graph_deviation(res: ConjugacyResult, man: ManifoldResult, samples: int) -> float:
    """Max distance of ``h(graph)`` from the linear subspace the graph is tangent to."""
    g: GraphFn = man.graph
    bm = man.block
    xi = np.linspace(-g.radius, g.radius, samples)[:, None] if g.d1 == 1 else g.nodes()
    V = bm.assemble(xi, g(xi))
    H = res.field.h(V)
    return float(np.max(np.abs(H[:, bm.rng])))


def conjugacy_report(res: ConjugacyResult, unstable: ManifoldResult | None = None,
                     stable: ManifoldResult | None = None, samples: int = 101,
                     horizon: int = 10, seed: int = 0) -> ConjugacyReport:
    """Check that ``h`` straightens the computed manifolds and is injective on grid nodes."""
    du = _graph_deviation(res, unstable, samples) if unstable is not None else None
    dsv = _graph_deviation(res, stable, samples) if stable is not None else None
    H = res.field.h(res.field.nodes())
    dist, _ = cKDTree(H).query(H, k=2, p=np.inf)
    sep = float(np.min(dist[:, 1]))
    return ConjugacyReport(du, dsv, sep, sep > 1e-12, orbit_conjugation(res, 50, horizon, seed))
