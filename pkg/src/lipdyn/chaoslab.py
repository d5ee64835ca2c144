"""Numerical experiments around a saddle: disk pushforwards converging to
the unstable manifold, symbolic dynamics of piecewise-affine horseshoes,
and chaining transverse connections through an intermediate saddle."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (DepthExceeded, InversionFailure, LipBlowup, PreconditionFailed, RegraphFailure)
from .graphs import GraphFn
from .hyperbolic import SaddleSystem, certify_L_hyperbolic
from .lipcore.geometry import Box, Rect
from .lipcore.lipschitz import DEFAULT_BUDGET, SamplingBudget
from .lipcore.maps import AffinePieces
from .manifolds import BlockMap, ManifoldResult, compute_manifold, graph_transform_step
from .transversal import TransversalityProblem, find_intersection

# ---------------------------------------------------------------- disks and the lambda-lemma


@dataclass
class DiskSpec:
    """A disk written as a graph over the expanding (or, for ``side="stable"``,
    contracting) coordinates, anchored at ``anchor`` (adapted coordinates,
    fixed point at the origin)."""

    graph: GraphFn
    anchor: np.ndarray
    side: str = "unstable"

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)

    @classmethod
    def affine(cls, offset, slope, radius: float, n: int, side: str = "unstable") -> "DiskSpec":
        """``xi -> offset + slope @ xi`` sampled on ``n`` nodes per axis over ``B_radius``."""
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        slope = np.atleast_2d(np.asarray(slope, dtype=float))
        d1 = slope.shape[1]
        g = GraphFn.from_function(lambda X: offset + X @ slope.T, radius, n, d1, side=side)
        anchor = np.r_[offset, np.zeros(d1)]
        return cls(g, anchor, side)

    @property
    def lip(self) -> float:
        return self.graph.lip()

    def to_json(self) -> dict:
        return {"side": self.side, "anchor": self.anchor.tolist(), "graph": self.graph.to_json()}


def _fold_check(sigma: GraphFn, bm: BlockMap, step: int) -> None:
    """With a one-dimensional graph domain, the pushed samples must stay ordered."""
    if len(bm.dom) != 1:
        return
    pts = bm.assemble(sigma.nodes(), sigma.node_values())
    img = bm.forward(pts)[:, bm.dom[0]]
    d = np.diff(img)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise RegraphFailure(f"image folds over the window at step {step}", step=step)


@dataclass
class LambdaRow:
    n: int
    c0: float
    lip: float
    distance: float

    def to_json(self) -> dict:
        return self.__dict__.copy()


@dataclass
class LambdaResult:
    rows: list
    window: float
    disk_lip: float
    graphs: list = field(default_factory=list, repr=False)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.distance for r in self.rows])

    @property
    def seminorms(self) -> np.ndarray:
        return np.array([r.lip for r in self.rows])

    def ratios(self, part: str = "distance") -> np.ndarray:
        v = np.array([getattr(r, part) for r in self.rows])
        return v[1:] / v[:-1]

    def to_json(self) -> dict:
        return {"window": self.window, "disk_lip": self.disk_lip, "rows": [r.to_json() for r in self.rows]}

    def to_csv(self) -> str:
        lines = ["n,c0,lip,distance"]
        lines += [f"{r.n},{r.c0!r},{r.lip!r},{r.distance!r}" for r in self.rows]
        return "\n".join(lines) + "\n"


def lambda_experiment(manifold: ManifoldResult, disk: DiskSpec, n_max: int,
                      keep_graphs: bool = False) -> LambdaResult:
    """Push ``disk`` forward ``n_max`` times (backward for stable-side data) and
    measure the Lip-norm distance of each re-graphed image to ``manifold``.

    Re-graphing is one graph-transform step per iterate on the manifold's
    own grid, so both graphs are compared over the same window.  The disk
    must be a graph over (at least) the whole window.
    """
    if disk.side != manifold.side:
        raise ValueError(f"disk side {disk.side!r} does not match manifold side {manifold.side!r}")
    target = manifold.graph
    bm = manifold.block
    if disk.graph.d1 != target.d1 or disk.graph.d2 != target.d2:
        raise ValueError("disk dimension must equal the manifold dimension")
    if disk.graph.radius < target.radius * (1 - 1e-12):
        raise ValueError(f"disk covers radius {disk.graph.radius}, the window needs {target.radius}")
    sigma = target.with_values(disk.graph(target.nodes()).reshape(target.values.shape))

    def row(n, g):
        diff = g.with_values(g.values - target.values)
        c0, lip = diff.sup(), diff.lip()
        return LambdaRow(n, c0, lip, max(c0, lip))

    rows, graphs = [row(0, sigma)], [sigma] if keep_graphs else []
    for n in range(1, n_max + 1):
        _fold_check(sigma, bm, n)
        try:
            sigma, _ = graph_transform_step(sigma, bm)
        except (InversionFailure, LipBlowup) as exc:
            raise RegraphFailure(f"re-graphing failed at step {n}: {exc}", step=n) from exc
        rows.append(row(n, sigma))
        if keep_graphs:
            graphs.append(sigma)
    return LambdaResult(rows, target.radius, disk.lip, graphs)


def linear_lambda_formula(n: int, slope: float, offset: float, tau_s: float, tau_u_inv: float,
                          window: float) -> tuple[float, float]:
    """Exact ``(c0, seminorm)`` for an affine disk ``s = offset + slope * u`` under ``diag(tau_s, 1/tau_u_inv)``."""
    lip = abs(slope) * (tau_s * tau_u_inv) ** n
    c0 = abs(offset) * tau_s ** n + lip * window
    return c0, lip


# ---------------------------------------------------------------- horseshoe


def _is_monomial(M: np.ndarray) -> bool:
    nz = M != 0
    return bool(np.all(nz.sum(axis=0) <= 1) and np.all(nz.sum(axis=1) <= 1))


def _image_box(M: np.ndarray, c: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interval hull of the affine image of a box (exact for monomial ``M``)."""
    a = M @ ((lo + hi) / 2) + c
    r = np.abs(M) @ ((hi - lo) / 2)
    return a - r, a + r


@dataclass
class ItineraryTable:
    k_max: int
    realized: dict
    fixed_point_counts: dict
    orbit_counts: dict
    undecided: int
    divisor_check: dict
    fixed_points: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {"k_max": self.k_max,
                "realized_counts": {str(k): len(v) for k, v in self.realized.items()},
                "realized_words": {str(k): sorted(v) for k, v in self.realized.items()},
                "fixed_points_of_f_k": {str(k): v for k, v in self.fixed_point_counts.items()},
                "orbits_of_minimal_period": {str(k): v for k, v in self.orbit_counts.items()},
                "undecided_cells": self.undecided,
                "divisor_check": {str(k): v for k, v in self.divisor_check.items()}}


class _Symbolic:
    def __init__(self, m: AffinePieces, rects: list[Rect], slack: float = 1e-12):
        self.m = m
        self.rects = rects
        self.slack = slack
        self.affine = []
        for R in rects:
            idx = [i for i, (P, _, _) in enumerate(m.pieces) if R.subset_of(P, slack=slack)]
            if not idx:
                raise ValueError(f"rectangle {R.to_json()} is not inside a single affine piece")
            _, M, c = m.pieces[idx[0]]
            self.affine.append((M, c))
        self.exact = all(_is_monomial(M) for M, _ in self.affine)

    def itinerary_ok(self, x: np.ndarray, word: str) -> bool:
        for i, a in enumerate(word):
            R = self.rects[int(a)]
            if not np.all((x >= R.lo_a - self.slack) & (x <= R.hi_a + self.slack)):
                return False
            if i + 1 < len(word):
                M, c = self.affine[int(a)]
                x = M @ x + c
        return True

    def propagate(self, lo, hi, word: str):
        """Hull of ``f^i(cell) cap R_{w_i}`` along the word; ``None`` once it is empty."""
        for i, a in enumerate(word):
            R = self.rects[int(a)]
            lo, hi = np.maximum(lo, R.lo_a), np.minimum(hi, R.hi_a)
            if np.any(lo > hi + self.slack):
                return None
            if i + 1 < len(word):
                M, c = self.affine[int(a)]
                lo, hi = _image_box(M, c, lo, hi)
        return lo, hi

    def decide(self, word: str, max_depth: int) -> tuple[bool | None, int]:
        """``(realized, undecided_cells)`` for the cylinder of ``word`` by box subdivision."""
        R = self.rects[int(word[0])]
        stack = [(R.lo_a.copy(), R.hi_a.copy(), 0)]
        undecided = 0
        while stack:
            lo, hi, depth = stack.pop()
            if self.propagate(lo, hi, word) is None:
                continue
            if self.exact or self.itinerary_ok((lo + hi) / 2, word):
                return True, 0
            if depth >= max_depth:
                undecided += 1
                continue
            mid = (lo + hi) / 2
            for corner in itertools.product((0, 1), repeat=len(lo)):
                sel = np.array(corner, dtype=bool)
                stack.append((np.where(sel, mid, lo), np.where(sel, hi, mid), depth + 1))
        return (None if undecided else False), undecided

    def periodic_point(self, word: str):
        """Fixed point of ``f^k`` with itinerary ``word`` (affine solve), or ``None``."""
        n = self.m.dim
        M_tot, c_tot = np.eye(n), np.zeros(n)
        for a in word:
            M, c = self.affine[int(a)]
            M_tot, c_tot = M @ M_tot, M @ c_tot + c
        try:
            x = np.linalg.solve(np.eye(n) - M_tot, c_tot)
        except np.linalg.LinAlgError:
            return None
        if not self.itinerary_ok(x, word):
            return None
        y = x.copy()
        for a in word:
            M, c = self.affine[int(a)]
            y = M @ y + c
        return x if np.max(np.abs(y - x)) <= 1e-9 else None


def _minimal_period(word: str) -> int:
    k = len(word)
    for d in range(1, k + 1):
        if k % d == 0 and word[:d] * (k // d) == word:
            return d
    return k


def horseshoe_verify(m: AffinePieces, rect0: Rect, rect1: Rect, k_max: int, max_depth: int = 20,
                     strict: bool = True) -> ItineraryTable:
    """Realized itineraries of length ``<= k_max`` and periodic-orbit counts.

    Unrealized prefixes prune their extensions.  Undecided cells raise
    :class:`DepthExceeded` when ``strict`` (they are never counted).
    """
    if not rect0.intersect(rect1).is_empty():
        raise ValueError("rectangles must be disjoint")
    sym = _Symbolic(m, [rect0, rect1])
    realized: dict[int, set] = {}
    undecided_total = 0
    frontier = [""]
    for k in range(1, k_max + 1):
        words = set()
        for prefix in frontier:
            for a in "01":
                w = prefix + a
                ok, und = sym.decide(w, max_depth)
                undecided_total += und
                if ok:
                    words.add(w)
        realized[k] = words
        frontier = sorted(words)
    if strict and undecided_total:
        raise DepthExceeded(f"{undecided_total} cells undecided at depth {max_depth}")

    fixed, points, min_period_pts = {}, {}, {}
    for k in range(1, k_max + 1):
        pts = {w: sym.periodic_point(w) for w in sorted(realized[k])}
        pts = {w: x for w, x in pts.items() if x is not None}
        points[k] = {w: x.tolist() for w, x in pts.items()}
        fixed[k] = len(pts)
        min_period_pts[k] = sum(1 for w in pts if _minimal_period(w) == k)
    orbits = {k: min_period_pts[k] // k for k in min_period_pts}
    divisor = {}
    for k in range(1, k_max + 1):
        total = sum(d * orbits[d] for d in range(1, k + 1) if k % d == 0)
        divisor[k] = {"sum_d_orbits": total, "fixed_points": fixed[k], "two_to_k": 2 ** k,
                      "holds": total == fixed[k]}
    return ItineraryTable(k_max, realized, fixed, orbits, undecided_total, divisor, points)


def prefix_closed(table: ItineraryTable) -> bool:
    """Every prefix and every suffix of a realized word is realized."""
    for k, words in table.realized.items():
        if k == 1:
            continue
        for w in words:
            if w[:-1] not in table.realized[k - 1] or w[1:] not in table.realized[k - 1]:
                return False
    return True


def rectangles_from_meta(m) -> tuple[Rect, Rect]:
    rects = getattr(m, "meta", {}).get("rectangles")
    if not rects or len(rects) != 2:
        raise ValueError("config needs a 'rectangles' list with two entries")
    return tuple(Rect(r["lo"], r["hi"]) for r in rects)


# ---------------------------------------------------------------- heteroclinic chains


@dataclass
class ChainCert:
    n_x: int
    n_y: int
    point: np.ndarray
    point_original: np.ndarray
    transversality: object
    saddles: dict
    lambda_x: LambdaResult
    lambda_y: LambdaResult

    def to_json(self) -> dict:
        return {"n_x": self.n_x, "n_y": self.n_y, "point_adapted": self.point.tolist(),
                "point": self.point_original.tolist(), "transversality": self.transversality.to_json(),
                "saddles": self.saddles, "lambda_x": self.lambda_x.to_json(), "lambda_y": self.lambda_y.to_json()}


def heteroclinic_chain(q: SaddleSystem, disk_x: DiskSpec, disk_y: DiskSpec, n_max: int = 20, r: float = 0.5,
                       grid_n: int = 129, p: SaddleSystem | None = None, r_saddle: SaddleSystem | None = None,
                       budget: SamplingBudget = DEFAULT_BUDGET) -> ChainCert:
    """Exhibit ``f^{n_x}(D_x)`` crossing ``f^{-n_y}(D_y)`` L-transversally near ``q``.

    ``D_x`` (a piece of ``W^u(p)``) is a graph over ``E^u(q)`` crossing
    ``W^s(q)``; ``D_y`` (a piece of ``W^s(r)``) is a graph over ``E^s(q)``
    crossing ``W^u(q)``.  Both are given in ``q``'s adapted chart.  The
    smallest ``n_x``, ``n_y`` for which the transversality hypotheses hold
    are reported with the intersection point.
    """
    for name, disk in (("D_x", disk_x), ("D_y", disk_y)):
        if disk.lip >= 1:
            raise PreconditionFailed(f"{name} has Lip {disk.lip:.4g} >= 1; it is not L-transverse")
    saddles = {}
    for name, s in (("p", p), ("q", q), ("r", r_saddle)):
        if s is None:
            continue
        region = s.adapted_box(s.domain) if s.domain is not None else Box(np.zeros(s.n), r)
        cert = certify_L_hyperbolic(s.lin.A, s.phi, region, budget, s.splitting)
        if cert.verdict != "certified":
            raise PreconditionFailed(f"saddle {name} is {cert.verdict}, not a certified L-hyperbolic point")
        saddles[name] = cert.verdict
    wu = compute_manifold(q, "unstable", r=r, grid_n=grid_n, budget=budget)
    ws = compute_manifold(q, "stable", r=r, grid_n=grid_n, budget=budget)
    lam_x = lambda_experiment(wu, disk_x, n_max, keep_graphs=True)
    lam_y = lambda_experiment(ws, disk_y, n_max, keep_graphs=True)
    c = max(wu.graph.lip(), ws.graph.lip())
    du, ds = len(wu.block.dom), len(ws.block.dom)
    last_error = None
    for total in range(0, 2 * n_max + 1):
        for n_x in range(max(0, total - n_max), min(n_max, total) + 1):
            n_y = total - n_x
            prob = TransversalityProblem(du, ds, r, lam_x.graphs[n_x], lam_y.graphs[n_y], c=c,
                                         theta=wu.graph, sigma=ws.graph)
            try:
                cert = find_intersection(prob, budget=budget)
            except PreconditionFailed as exc:
                last_error = exc
                continue
            # adapted point: unstable coordinates y1, stable coordinates y2
            pt = wu.block.assemble(cert.y1[None, :], cert.y2[None, :])[0]
            p_c = q.splitting.to_adapted(wu.fixed_point)
            original = q.splitting.from_adapted(pt + p_c)
            return ChainCert(n_x, n_y, pt, original, cert, saddles, lam_x, lam_y)
    raise PreconditionFailed(f"no n_x, n_y <= {n_max} satisfy the transversality hypotheses ({last_error})")


def load_chain(name: str = "heteroclinic_chain"):
    """``(q, disk_x, disk_y, p, r, window)`` from a chain file or ``fixtures/<name>.json``."""
    from .config import _build
    path = Path(name)
    text = path.read_text() if path.exists() else resources.files("lipdyn").joinpath("fixtures", f"{name}.json").read_text()
    cfg = json.loads(text)

    def saddle(key):
        if key not in cfg:
            return None
        return SaddleSystem.from_map(_build(cfg[key], text))

    r = float(cfg.get("window", 0.5))
    n = int(cfg.get("grid", 129))
    dx = DiskSpec.affine(cfg["disk_x"]["offset"], cfg["disk_x"]["slope"], r, n, "unstable")
    dy = DiskSpec.affine(cfg["disk_y"]["offset"], cfg["disk_y"]["slope"], r, n, "stable")
    return saddle("q"), dx, dy, saddle("p"), saddle("r"), r
