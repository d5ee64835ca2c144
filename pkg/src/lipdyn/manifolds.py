"""Local stable and unstable manifolds by the graph transform.

The fixed point is moved to the origin and the perturbation is cut off
outside ``U_r`` by clamping.  The unstable manifold is the graph of
``sigma: E^u -> E^s`` fixed by the graph transform of ``f``; the stable
manifold is the unstable manifold of ``f^{-1}``, computed with the same
code through a :class:`BlockMap` built from the inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundInapplicable, InversionFailure, LipBlowup, NoConvergence
from .graphs import GraphFn
from .hyperbolic import SaddleSystem, find_fixed_point, opnorm
from .lipcore.geometry import Box, maxnorm
from .lipcore.lipschitz import DEFAULT_BUDGET, SamplingBudget, estimate_lip, sup_norm
from .lipcore.maps import Clamped, FunctionMap, MapSpec

MAX_INNER = 200


def invert_points(L: np.ndarray, nonlin, Z: np.ndarray, tol: float, max_iter: int = MAX_INNER) -> np.ndarray:
    """Solve ``L x + nonlin(x) = z`` for every row of ``Z`` by ``x <- L^{-1}(z - nonlin(x))``."""
    Linv = np.linalg.inv(L)
    X = Z @ Linv.T
    for _ in range(max_iter):
        new = (Z - nonlin(X)) @ Linv.T
        ch = np.max(np.abs(new - X), axis=1)
        X = new
        if np.all(ch <= tol):
            return X
    bad = int(np.argmax(ch))
    raise InversionFailure(f"inversion stalled at row {bad} (change {ch[bad]:.3g})", node=bad)


@dataclass
class BlockMap:
    """A map ``v -> L v + N(v)`` in adapted coordinates, split as graph-domain and range blocks.

    ``dom``/``rng`` are index arrays of the coordinates spanning the graph's
    domain (expanding block) and range (contracting block).  ``inverse``
    evaluates the inverse map on ``(N, n)`` arrays.
    """

    L: np.ndarray
    nonlin: object
    dom: np.ndarray
    rng: np.ndarray
    radius: float
    inner_tol: float = 1e-15

    def __post_init__(self):
        self.L_dom = self.L[np.ix_(self.dom, self.dom)]
        self.L_dom_inv = np.linalg.inv(self.L_dom) if self.L_dom.size else self.L_dom
        self.L_rng = self.L[np.ix_(self.rng, self.rng)]
        self.n = self.L.shape[0]

    def forward(self, V: np.ndarray) -> np.ndarray:
        return V @ self.L.T + self.nonlin(V)

    def inverse(self, V: np.ndarray, tol: float | None = None) -> np.ndarray:
        return invert_points(self.L, self.nonlin, V, tol if tol is not None else self.inner_tol)

    def assemble(self, d: np.ndarray, r: np.ndarray) -> np.ndarray:
        V = np.empty((d.shape[0], self.n))
        V[:, self.dom] = d
        V[:, self.rng] = r
        return V


def block_maps(sysm: SaddleSystem, p_c, r: float, inner_tol: float = 1e-15) -> tuple[BlockMap, BlockMap]:
    """``(unstable, stable)`` block maps of ``f`` near the adapted fixed point ``p_c``.

    The first is ``f`` itself with graph domain ``E^u``; the second is
    ``f^{-1}`` with graph domain ``E^s``.  Both use the perturbation
    recentred at ``p_c`` and clamped onto ``U_r``.
    """
    n, ds = sysm.n, sysm.dim_s
    phi_cut = Clamped(sysm.translated(p_c), Box(np.zeros(n), r))
    B = sysm.lin.B
    s_idx, u_idx = np.arange(ds), np.arange(ds, n)
    fwd = BlockMap(B, phi_cut.eval_points, u_idx, s_idx, r, inner_tol)
    Binv = np.linalg.inv(B)

    def inv_nonlin(V):
        return fwd.inverse(V) - V @ Binv.T

    bwd = BlockMap(Binv, inv_nonlin, s_idx, u_idx, r, inner_tol)
    return fwd, bwd


def graph_transform_step(sigma: GraphFn, bm: BlockMap, lip_tol: float = 1e-9) -> tuple[GraphFn, dict]:
    """One graph transform ``T sigma``.

    For each node ``xi``, ``eta`` solves ``L_dom eta + N_dom(eta, sigma(eta)) = xi``
    by contraction; then ``T sigma(xi) = L_rng sigma(eta) + N_rng(eta, sigma(eta))``.
    """
    xi = sigma.nodes()
    eta = xi @ bm.L_dom_inv.T
    for it in range(MAX_INNER):
        V = bm.assemble(eta, sigma(eta))
        N = bm.nonlin(V)
        new = (xi - N[:, bm.dom]) @ bm.L_dom_inv.T
        ch = np.max(np.abs(new - eta), axis=1)
        eta = new
        if np.all(ch <= bm.inner_tol):
            break
    else:
        bad = int(np.argmax(ch))
        raise InversionFailure(f"inner inversion failed at node {bad} (change {ch[bad]:.3g})", node=bad)
    sig_eta = sigma(eta)
    clamped = sigma.last_clamped
    N = bm.nonlin(bm.assemble(eta, sig_eta))
    vals = sig_eta @ bm.L_rng.T + N[:, bm.rng]
    new_sigma = sigma.with_values(vals.reshape(sigma.values.shape))
    lip = new_sigma.lip()
    if lip > 1 + lip_tol:
        raise LipBlowup(f"graph Lipschitz constant {lip:.6g} exceeds 1")
    return new_sigma, {"inner_iterations": it + 1, "clamped_lookups": clamped, "lip": lip}


@dataclass
class ManifoldResult:
    graph: GraphFn
    side: str
    fixed_point: np.ndarray
    iterations: int
    changes: list
    ratios: list
    lips: list
    clamped_lookups: int
    block: BlockMap = field(repr=False)
    system: SaddleSystem = field(repr=False)

    def to_json(self) -> dict:
        return {"side": self.side, "fixed_point": self.fixed_point.tolist(), "iterations": self.iterations,
                "sup_changes": self.changes, "observed_ratios": self.ratios, "lip_trace": self.lips,
                "clamped_lookups": self.clamped_lookups, "graph": self.graph.to_json()}


def _fixed_point_c(sysm: SaddleSystem, fixed_point, r: float, budget: SamplingBudget) -> np.ndarray:
    if fixed_point is not None:
        return sysm.splitting.to_adapted(np.atleast_1d(np.asarray(fixed_point, dtype=float)))
    region = sysm.adapted_box(sysm.domain) if sysm.domain is not None else Box(np.zeros(sysm.n), r)
    res = find_fixed_point(sysm.lin.A, sysm.phi, region, splitting=sysm.splitting, budget=budget)
    return res.point_adapted


def compute_manifold(sysm: SaddleSystem, side: str = "unstable", r: float = 1.0, grid_n: int = 257,
                     tol: float = 1e-13, max_iter: int = 500, fixed_point=None,
                     budget: SamplingBudget = DEFAULT_BUDGET) -> ManifoldResult:
    """Iterate the graph transform from ``sigma = 0`` until the sup change is ``<= tol``."""
    if side not in ("stable", "unstable"):
        raise ValueError("side must be 'stable' or 'unstable'")
    p_c = _fixed_point_c(sysm, fixed_point, r, budget)
    fwd, bwd = block_maps(sysm, p_c, r, inner_tol=min(1e-15, tol / 10))
    bm = fwd if side == "unstable" else bwd
    d1, d2 = len(bm.dom), len(bm.rng)
    sigma = GraphFn.zeros(r, grid_n, d1, d2, side=side)
    changes, ratios, lips = [], [], []
    clamped = 0
    for it in range(1, max_iter + 1):
        new, info = graph_transform_step(sigma, bm)
        ch = float(np.max(np.abs(new.values - sigma.values)))
        if changes and changes[-1] > 0:
            ratios.append(ch / changes[-1])
        changes.append(ch)
        lips.append(info["lip"])
        clamped = max(clamped, info["clamped_lookups"])
        sigma = new
        if ch <= tol:
            return ManifoldResult(sigma, side, sysm.splitting.from_adapted(p_c), it, changes, ratios, lips,
                                  clamped, bm, sysm)
    raise NoConvergence(f"graph transform did not converge in {max_iter} steps (last change {changes[-1]:.3g})")


def graph_points(res: ManifoldResult, xi: np.ndarray) -> np.ndarray:
    """Adapted, recentred coordinates of the graph points over ``xi``."""
    return res.block.assemble(xi, res.graph(xi))


@dataclass
class CharacterizationReport:
    samples: int
    steps: int
    stayed_in_ball: bool
    cone_violations: list
    worst_step_ratio: float
    rate_bound: float
    escape_steps: int | None
    escape_bound: int
    max_graph_defect: float

    def to_json(self) -> dict:
        return self.__dict__.copy()


def verify_characterization(res: ManifoldResult, n_steps: int = 20, samples: int = 33,
                            offset: float = 0.1, budget: SamplingBudget = DEFAULT_BUDGET) -> CharacterizationReport:
    """Check the orbit characterizations of the computed graph.

    Graph points are iterated with the dynamics that contracts along the
    graph (``f^{-1}`` for the unstable graph, ``f`` for the stable one):
    the orbit must stay in ``U_r`` and in the 1-cone about the graph's
    domain space, and each step must shrink the norm by at most
    ``tau + Lip(phi)``.  A point displaced by ``offset`` along the range
    space must leave ``U_r`` under the same dynamics.

    Those dynamics expand the range direction, so the discretization error
    of the graph would grow geometrically along the orbit.  Each image is
    therefore put back on the graph (shadowing); the distance it had from
    the graph before that is reported as ``max_graph_defect``.
    """
    bm, r = res.block, res.graph.radius
    sysm = res.system
    lip_phi = estimate_lip(Clamped(sysm.translated(sysm.splitting.to_adapted(res.fixed_point)),
                                   Box(np.zeros(sysm.n), r)), Box(np.zeros(sysm.n), r), budget).value
    lam = sysm.lin.tau + lip_phi
    if bm.dom.size == 1:
        xi = np.linspace(-r, r, samples)[:, None]
    else:
        xi = np.random.default_rng(budget.seed).uniform(-r, r, size=(samples, bm.dom.size))
    xi = xi[np.max(np.abs(xi), axis=1) > 0]
    V = graph_points(res, xi)
    contract = bm.inverse
    worst, stayed, viol, defect = 0.0, True, [], 0.0
    for k in range(n_steps):
        W = contract(V)
        on_graph = res.graph(W[:, bm.dom])
        defect = max(defect, float(np.max(maxnorm(W[:, bm.rng] - on_graph))))
        W[:, bm.rng] = on_graph
        nv, nw = maxnorm(V), maxnorm(W)
        live = nv > 1e-12 * r
        if live.any():
            worst = max(worst, float(np.max(nw[live] / nv[live])))
        if np.any(nw > r * (1 + 1e-12)):
            stayed = False
        cone = maxnorm(W[:, bm.rng]) <= maxnorm(W[:, bm.dom]) * (1 + 1e-9) + 1e-300
        for i in np.flatnonzero(~cone):
            viol.append({"sample": int(i), "step": k + 1})
        V = W
    bound = math.ceil(math.log(r / offset) / math.log(1.0 / sysm.lin.tau)) if offset < r else 0
    x0 = np.zeros((1, bm.dom.size))
    P = bm.assemble(x0, res.graph(x0) + offset)
    escape = None
    for k in range(1, 10 * max(bound, 1) + 10):
        try:
            P = contract(P)
        except InversionFailure:
            escape = k
            break
        if maxnorm(P)[0] > r:
            escape = k
            break
    return CharacterizationReport(len(xi), n_steps, stayed, viol, worst, lam, escape, bound, defect)


@dataclass
class PerturbationRow:
    eta: float
    c0: float
    lip: float
    bound1: float | None
    bound2: float | None
    gamma: float
    K: float
    c0_phi_diff: float

    @property
    def applicable(self) -> bool:
        return self.bound1 is not None and self.bound2 is not None

    def to_json(self) -> dict:
        return {**self.__dict__, "applicable": self.applicable}


def _block_map(fn, idx, n: int) -> FunctionMap:
    """``fn`` restricted to the coordinates ``idx``, zero-padded to ``n`` outputs (same max norm)."""
    def ev(V):
        out = np.zeros((V.shape[0], n))
        out[:, : len(idx)] = fn(V)[:, idx]
        return out
    return FunctionMap(ev, dim=n, scalar=False, name="block")


def flattened_perturbation(res: ManifoldResult, base: GraphFn | None) -> FunctionMap:
    """Nonlinear part of the graph map after straightening ``base`` to the axis.

    The graph map is ``f`` (unstable side) or ``f^{-1}`` (stable side) in
    recentred adapted coordinates.  With the shear ``H(v) = v - base(v_dom)``
    in the range block, the result is ``H F H^{-1} - L``.
    """
    bm = res.block
    n = bm.n
    F = bm.forward

    def H(V, sign):
        if base is None:
            return V
        W = V.copy()
        W[:, bm.rng] += sign * base(V[:, bm.dom])
        return W

    return FunctionMap(lambda V: H(F(H(V, +1)), -1) - V @ bm.L.T, dim=n, scalar=False, name="phi~")


def perturbation_study(A, phi0: MapSpec | None, phi_family: list[tuple[float, MapSpec]], side: str = "unstable",
                       r: float = 1.0, grid_n: int = 257, tol: float = 1e-13, splitting=None,
                       budget: SamplingBudget = DEFAULT_BUDGET) -> list[PerturbationRow]:
    """Measure ``||sigma_eta||_C0`` and ``Lip(sigma_eta)`` against the continuity bounds.

    Each perturbed graph is measured after flattening the base graph, i.e.
    as ``sigma_eta - sigma_0``.  With ``phi~`` the flattened nonlinear parts,
    ``gamma = Lip(phi~_eta)``, ``K = ||phi~_{0,s}||_C0 + Lip(phi~_{eta,s} - phi~_{0,s})``
    (``s`` = the graph's range block), the bounds are
    ``bound1 = ||phi~_eta - phi~_0||_C0 / (1 - tau - gamma)`` and
    ``bound2 = K / (1/tau - tau - 2 gamma - K)``; a bound is ``None`` when
    its denominator is not positive.
    """
    base_sys = SaddleSystem(A, phi0, splitting)
    base = compute_manifold(base_sys, side, r, grid_n, tol, budget=budget)
    sigma0 = base.graph if base.graph.sup() > 0 else None
    n, tau = base_sys.n, base_sys.lin.tau
    ball = Box(np.zeros(n), r)
    rng = base.block.rng
    phi0_flat = flattened_perturbation(base, sigma0)
    rows = []
    for eta, phi_eta in phi_family:
        res = compute_manifold(SaddleSystem(A, phi_eta, splitting), side, r, grid_n, tol, budget=budget)
        g = res.graph if sigma0 is None else res.graph.with_values(res.graph.values - sigma0.values)
        phi_flat = flattened_perturbation(res, sigma0)
        diff = FunctionMap(lambda V, a=phi_flat: a.eval_points(V) - phi0_flat.eval_points(V),
                           dim=n, scalar=False)
        gamma = estimate_lip(phi_flat, ball, budget).value
        c0_diff = sup_norm(diff, ball, budget)
        K = (sup_norm(_block_map(phi0_flat.eval_points, rng, n), ball, budget)
             + estimate_lip(_block_map(diff.eval_points, rng, n), ball, budget).value)
        den1 = 1 - tau - gamma
        den2 = 1 / tau - tau - 2 * gamma - K
        rows.append(PerturbationRow(float(eta), g.sup(), g.lip(), c0_diff / den1 if den1 > 0 else None,
                                    K / den2 if den2 > 0 else None, gamma, K, c0_diff))
    return rows


def require_bound(row: PerturbationRow) -> None:
    if not row.applicable:
        raise BoundInapplicable(f"eta = {row.eta}: bound denominator nonpositive")


__all__ = [
    "BlockMap", "ManifoldResult", "CharacterizationReport", "PerturbationRow", "block_maps",
    "compute_manifold", "graph_points", "graph_transform_step", "invert_points", "perturbation_study",
    "require_bound", "verify_characterization", "opnorm",
]
