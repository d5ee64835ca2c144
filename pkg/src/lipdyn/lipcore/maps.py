"""Map representations.

All maps are vectorized: calling a map on an ``(N, dim)`` array returns an
``(N, dim)`` array, and a single point in gives a single point out.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import DomainError, EvalError
from .expr import Expr
from .geometry import Box, Rect, as_points

_DOMAIN_SLACK = 1e-12


class MapSpec:
    """Base class: an evaluatable map of a box in R^dim."""

    dim: int = 1
    domain: Box | Rect | None = None
    differentiable: bool = False
    derivative: Callable | None = None
    name: str = "map"

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        self.check_domain(pts)
        out = self._eval(pts)
        return out[0] if single else out

    def eval_points(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate an ``(N, dim)`` array with the domain check."""
        self.check_domain(pts)
        return self._eval(pts)

    def check_domain(self, pts: np.ndarray) -> None:
        if self.domain is None:
            return
        rect = self.domain.to_rect() if isinstance(self.domain, Box) else self.domain
        slack = _DOMAIN_SLACK * (1.0 + float(np.max(np.abs(np.r_[rect.lo_a, rect.hi_a]))))
        inside = self.domain.contains(pts, slack=slack)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise DomainError(f"{self.name}: point {bad.tolist()} outside domain {self.domain.to_json()}")

    def _eval(self, pts: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dim={self.dim})"


def _shape_output(vals, n: int, dim: int) -> np.ndarray:
    out = np.asarray(vals, dtype=float)
    if out.ndim == 1 and dim == 1:
        out = out.reshape(n, 1)
    if out.shape != (n, dim):
        raise EvalError(f"map returned shape {out.shape}, expected {(n, dim)}")
    return out


class FunctionMap(MapSpec):
    """Wrap a vectorized python callable ``fn((N, dim)) -> (N, dim)``.

    For ``dim == 1`` the callable may also take and return flat ``(N,)``
    arrays (``scalar=True``), which keeps 1D fixtures readable.
    """

    def __init__(self, fn, dim: int = 1, domain=None, name: str = "function",
                 scalar: bool | None = None, derivative=None, differentiable: bool = False):
        self.fn = fn
        self.dim = dim
        self.domain = domain
        self.name = name
        self.scalar = (dim == 1) if scalar is None else scalar
        self.derivative = derivative
        self.differentiable = differentiable or derivative is not None

    def _eval(self, pts):
        if self.scalar:
            vals = self.fn(pts[:, 0])
        else:
            vals = self.fn(pts)
        return _shape_output(vals, pts.shape[0], self.dim)


class PiecewiseExpr(MapSpec):
    """List of ``(predicate, expressions)``; the lexically first matching piece wins."""

    def __init__(self, pieces: Sequence[tuple[Expr | None, Sequence[Expr]]], dim: int,
                 domain=None, name: str = "piecewise", differentiable: bool = False):
        self.pieces = [(pred, list(exprs)) for pred, exprs in pieces]
        for _, exprs in self.pieces:
            if len(exprs) != dim:
                raise ValueError(f"piece has {len(exprs)} components, expected {dim}")
        self.dim = dim
        self.domain = domain
        self.name = name
        self.differentiable = differentiable

    def selection(self, pts: np.ndarray) -> np.ndarray:
        """Index of the selected piece per point, ``-1`` where none matches."""
        sel = np.full(pts.shape[0], -1, dtype=int)
        free = np.ones(pts.shape[0], dtype=bool)
        for k, (pred, _) in enumerate(self.pieces):
            if not free.any():
                break
            hit = free.copy() if pred is None else free & pred(pts)
            sel[hit] = k
            free &= ~hit
        return sel

    def _eval(self, pts):
        sel = self.selection(pts)
        if np.any(sel < 0):
            bad = pts[sel < 0][0]
            raise DomainError(f"{self.name}: no piece covers {bad.tolist()}")
        out = np.empty_like(pts)
        for k, (_, exprs) in enumerate(self.pieces):
            mask = sel == k
            if not mask.any():
                continue
            sub = pts[mask]
            for j, e in enumerate(exprs):
                out[mask, j] = e(sub)
        return out


class LinearPlusLip(MapSpec):
    """``x -> A x + phi(x)``."""

    def __init__(self, A, phi: MapSpec | None = None, name: str = "linear+lip", domain=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        self.dim = n
        self.phi = phi if phi is not None else ZeroMap(n)
        if self.phi.dim != n:
            raise ValueError("phi dimension does not match A")
        self.domain = domain if domain is not None else self.phi.domain
        self.name = name

    def _eval(self, pts):
        return pts @ self.A.T + self.phi.eval_points(pts)


class ZeroMap(MapSpec):
    def __init__(self, dim: int, domain=None):
        self.dim = dim
        self.domain = domain
        self.name = "zero"
        self.differentiable = True

    def _eval(self, pts):
        return np.zeros_like(pts)


class IdentityMap(MapSpec):
    def __init__(self, dim: int, domain=None):
        self.dim = dim
        self.domain = domain
        self.name = "identity"
        self.differentiable = True

    def _eval(self, pts):
        return pts.copy()


class Iterate(MapSpec):
    """``inner`` composed with itself ``k`` times; every iterate must stay in the domain."""

    def __init__(self, inner: MapSpec, k: int):
        if k < 1:
            raise ValueError("iterate count must be positive")
        self.inner = inner
        self.k = int(k)
        self.dim = inner.dim
        self.domain = inner.domain
        self.name = f"{inner.name}^{k}"
        self.differentiable = inner.differentiable

    def _eval(self, pts):
        out = pts
        for _ in range(self.k):
            out = self.inner.eval_points(out)
        return out


class Translate(MapSpec):
    """``x -> inner(x + p) - p``: moves the point ``p`` to the origin."""

    def __init__(self, inner: MapSpec, p):
        self.inner = inner
        self.p = np.atleast_1d(np.asarray(p, dtype=float))
        self.dim = inner.dim
        self.domain = None
        if isinstance(inner.domain, Box):
            self.domain = Box(inner.domain.c - self.p, inner.domain.radius)
        elif isinstance(inner.domain, Rect):
            self.domain = Rect(inner.domain.lo_a - self.p, inner.domain.hi_a - self.p)
        self.name = f"translate({inner.name})"
        self.differentiable = inner.differentiable

    def _eval(self, pts):
        return self.inner.eval_points(pts + self.p) - self.p


class Conjugate(MapSpec):
    """``c -> P^{-1} inner(P c)``: ``inner`` written in the coordinates of basis ``P``."""

    def __init__(self, inner: MapSpec, P):
        self.inner = inner
        self.P = np.asarray(P, dtype=float)
        self.Pinv = np.linalg.inv(self.P)
        self.dim = inner.dim
        self.domain = None
        self.name = f"conjugate({inner.name})"
        self.differentiable = inner.differentiable

    def _eval(self, pts):
        return self.inner.eval_points(pts @ self.P.T) @ self.Pinv.T


class Combination(MapSpec):
    """Linear combination ``sum_i coef_i * map_i``; ``None`` stands for the identity."""

    def __init__(self, terms: Sequence[tuple[float, MapSpec | None]], dim: int | None = None,
                 domain=None, name: str = "combination"):
        self.terms = list(terms)
        dims = {m.dim for _, m in self.terms if m is not None}
        if dim is None:
            if len(dims) != 1:
                raise ValueError("cannot infer dimension of combination")
            dim = dims.pop()
        self.dim = dim
        if domain is None:
            for _, m in self.terms:
                if m is not None and m.domain is not None:
                    domain = m.domain
                    break
        self.domain = domain
        self.name = name

    def _eval(self, pts):
        out = np.zeros_like(pts)
        for coef, m in self.terms:
            out += coef * (pts if m is None else m.eval_points(pts))
        return out


def difference(m1: MapSpec, m2: MapSpec) -> Combination:
    return Combination([(1.0, m1), (-1.0, m2)], name=f"{m1.name}-{m2.name}")


def shifted(m: MapSpec, eps: float) -> MapSpec:
    """``m + eps`` (constant shift of every component)."""
    return FunctionMap(lambda X: m.eval_points(X) + eps, dim=m.dim, domain=m.domain,
                       name=f"{m.name}+{eps:g}", scalar=False)


class Clamped(MapSpec):
    """``inner`` composed with the nearest-point retraction onto ``box``.

    This is the Lipschitz cutoff: it extends ``inner`` from ``box`` to the
    whole space without increasing its Lipschitz constant (max norm).
    """

    def __init__(self, inner: MapSpec, box: Box | Rect):
        self.inner = inner
        self.box = box.to_rect() if isinstance(box, Box) else box
        self.dim = inner.dim
        self.domain = None
        self.name = f"clamped({inner.name})"

    def _eval(self, pts):
        return self.inner.eval_points(np.clip(pts, self.box.lo_a, self.box.hi_a))


class AffinePieces(MapSpec):
    """Piecewise-affine map: on ``region_k`` it is ``x -> M_k x + c_k``.

    Regions are closed rectangles; the first containing region wins.
    """

    def __init__(self, pieces: Sequence[tuple[Rect, np.ndarray, np.ndarray]], name: str = "affine-pieces"):
        self.pieces = [(r, np.atleast_2d(np.asarray(M, dtype=float)), np.atleast_1d(np.asarray(c, dtype=float)))
                       for r, M, c in pieces]
        self.dim = self.pieces[0][0].dim
        lo = np.min([r.lo_a for r, _, _ in self.pieces], axis=0)
        hi = np.max([r.hi_a for r, _, _ in self.pieces], axis=0)
        self.domain = Rect(lo, hi)
        self.name = name

    def piece_index(self, pts: np.ndarray) -> np.ndarray:
        sel = np.full(pts.shape[0], -1, dtype=int)
        for k, (r, _, _) in enumerate(self.pieces):
            hit = (sel < 0) & r.contains(pts, slack=1e-12)
            sel[hit] = k
        return sel

    def _eval(self, pts):
        sel = self.piece_index(pts)
        if np.any(sel < 0):
            bad = pts[sel < 0][0]
            raise DomainError(f"{self.name}: no affine piece contains {bad.tolist()}")
        out = np.empty_like(pts)
        for k, (_, M, c) in enumerate(self.pieces):
            mask = sel == k
            if mask.any():
                out[mask] = pts[mask] @ M.T + c
        return out


class Recentered(MapSpec):
    """``x -> inner(x + p) - inner(p)``: a perturbation seen from the point ``p``."""

    def __init__(self, inner: MapSpec, p):
        self.inner = inner
        self.p = np.atleast_1d(np.asarray(p, dtype=float))
        self.base = inner.eval_points(self.p[None, :])[0]
        self.dim = inner.dim
        self.domain = None
        self.name = f"recentered({inner.name})"

    def _eval(self, pts):
        return self.inner.eval_points(pts + self.p) - self.base
