"""Lipschitz graphs sampled on uniform grids with multilinear interpolation."""

from __future__ import annotations

import csv
import io
import itertools

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class GraphFn:
    """A map ``B_r(center) subset E1 -> E2`` stored on a uniform grid.

    ``values`` has shape ``(n,) * d1 + (d2,)``.  Evaluation is piecewise
    multilinear; points outside the grid are clamped onto it (and counted
    in :attr:`last_clamped`).
    """

    def __init__(self, radius: float, values, center=None, side: str = "unstable"):
        values = np.asarray(values, dtype=float)
        self.d1 = values.ndim - 1
        self.d2 = values.shape[-1]
        self.n = values.shape[0]
        if any(s != self.n for s in values.shape[:-1]):
            raise ValueError("grid must have the same node count on every axis")
        if self.n < 2:
            raise ValueError("need at least two nodes per axis")
        self.radius = float(radius)
        self.center = np.zeros(self.d1) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
        self.values = values
        self.side = side
        self.axes = [np.linspace(c - radius, c + radius, self.n) for c in self.center]
        self.h = 2.0 * self.radius / (self.n - 1)
        self.last_clamped = 0
        self._rgi = None

    @classmethod
    def from_function(cls, fn, radius: float, n: int, d1: int = 1, center=None, side: str = "unstable"):
        """Sample ``fn((N, d1)) -> (N, d2)`` on the grid."""
        g = cls(radius, np.zeros((n,) * d1 + (1,)), center, side)
        vals = np.asarray(fn(g.nodes()), dtype=float)
        vals = vals.reshape(len(g.nodes()), -1)
        return cls(radius, vals.reshape((n,) * d1 + (vals.shape[1],)), center, side)

    @classmethod
    def zeros(cls, radius: float, n: int, d1: int, d2: int, center=None, side: str = "unstable"):
        return cls(radius, np.zeros((n,) * d1 + (d2,)), center, side)

    def with_values(self, values) -> "GraphFn":
        return GraphFn(self.radius, values, self.center, self.side)

    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def node_values(self) -> np.ndarray:
        return self.values.reshape(-1, self.d2)

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1 and self.d1 > 1 or xi.ndim == 0
        pts = xi.reshape(-1, self.d1)
        lo = self.center - self.radius
        hi = self.center + self.radius
        out_of_range = np.any((pts < lo - 1e-12 * self.radius) | (pts > hi + 1e-12 * self.radius), axis=1)
        self.last_clamped = int(np.count_nonzero(out_of_range))
        pts = np.clip(pts, lo, hi)
        if self.d1 == 1:
            x = self.axes[0]
            out = np.stack([np.interp(pts[:, 0], x, self.values[:, j]) for j in range(self.d2)], axis=1)
        else:
            if self._rgi is None:
                self._rgi = RegularGridInterpolator(self.axes, self.values, method="linear")
            out = self._rgi(pts)
        return out[0] if single else out

    def lip(self) -> float:
        """Exact Lipschitz constant of the interpolant (max norms on both sides).

        On each cell the Jacobian row sums ``sum_j |d_j g_i|`` are convex
        along every axis, so their maximum sits at a cell corner, where each
        partial derivative is the slope of the grid edge through it.
        """
        d, n = self.d1, self.n
        slopes = [np.abs(np.diff(self.values, axis=j)) / self.h for j in range(d)]
        best = 0.0
        for corner in itertools.product((0, 1), repeat=d):
            total = 0.0
            for j, D in enumerate(slopes):
                idx = tuple(slice(None) if k == j else slice(corner[k], corner[k] + n - 1) for k in range(d))
                total = total + D[idx]
            best = max(best, float(np.max(total)))
        return best

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at_center(self) -> np.ndarray:
        return self(self.center[None, :])[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"xi{j}" for j in range(self.d1)] + [f"value{j}" for j in range(self.d2)])
        for x, v in zip(self.nodes(), self.node_values()):
            w.writerow([repr(float(a)) for a in x] + [repr(float(b)) for b in v])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, side: str = "unstable") -> "GraphFn":
        rows = list(csv.reader(io.StringIO(text)))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        d1 = sum(1 for h in header if h.startswith("xi"))
        X, V = data[:, :d1], data[:, d1:]
        n = int(round(len(X) ** (1.0 / d1)))
        lo, hi = X.min(axis=0), X.max(axis=0)
        radius = float(np.max(hi - lo) / 2)
        order = np.lexsort(X.T[::-1])
        return cls(radius, V[order].reshape((n,) * d1 + (V.shape[1],)), (lo + hi) / 2, side)

    def to_json(self) -> dict:
        return {"side": self.side, "radius": self.radius, "nodes_per_axis": self.n, "d1": self.d1,
                "d2": self.d2, "lip": self.lip(), "sup": self.sup()}
