"""Points, boxes and the max norm.

Every norm in lipdyn is the maximum norm, so a ball ``B_r(c)`` is an
axis-aligned cube and a :class:`Box` is both a ball and a rectangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def maxnorm(v, axis=-1):
    """Maximum norm along ``axis``."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return abs(float(v))
    if v.shape[axis] == 0:
        return np.zeros(np.delete(v.shape, axis if axis >= 0 else v.ndim + axis))
    return np.max(np.abs(v), axis=axis)


def as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to an ``(N, dim)`` float array.

    Returns the array and a flag telling whether the input was a single
    point (so callers can squeeze the result back).
    """
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar given for a {dim}-dimensional point")
        return a.reshape(1, 1), True
    if a.ndim == 1:
        if dim == 1 and a.shape[0] != 1:
            return a.reshape(-1, 1), False
        if a.shape[0] != dim:
            raise ValueError(f"point of length {a.shape[0]} given, expected {dim}")
        return a.reshape(1, dim), True
    if a.ndim == 2 and a.shape[1] == dim:
        return a, False
    raise ValueError(f"cannot interpret array of shape {a.shape} as {dim}-dimensional points")


@dataclass(frozen=True)
class Box:
    """Max-norm ball ``B_radius(center)``."""

    center: tuple
    radius: float

    def __init__(self, center, radius):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if not np.all(np.isfinite(c)):
            raise ValueError("box center must be finite")
        if not radius > 0:
            raise ValueError(f"box radius must be positive, got {radius}")
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        object.__setattr__(self, "radius", float(radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def lo(self) -> np.ndarray:
        return self.c - self.radius

    @property
    def hi(self) -> np.ndarray:
        return self.c + self.radius

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        return np.all(np.abs(pts - self.c) <= self.radius + slack, axis=1)

    def clamp(self, x) -> np.ndarray:
        """Nearest point of the box (1-Lipschitz in the max norm)."""
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[[lo, hi] for lo, hi in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_rect(self) -> "Rect":
        return Rect(self.lo, self.hi)

    def subset_of(self, other: "Box | Rect", slack: float = 0.0) -> bool:
        o = other.to_rect() if isinstance(other, Box) else other
        return bool(np.all(self.lo >= o.lo_a - slack) and np.all(self.hi <= o.hi_a + slack))

    def to_json(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle ``[lo, hi]``; may be empty."""

    lo: tuple
    hi: tuple

    def __init__(self, lo, hi):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.atleast_1d(lo)))
        object.__setattr__(self, "hi", tuple(float(v) for v in np.atleast_1d(hi)))
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_a(self) -> np.ndarray:
        return np.asarray(self.lo)

    @property
    def hi_a(self) -> np.ndarray:
        return np.asarray(self.hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo_a + self.hi_a)

    def is_empty(self) -> bool:
        return bool(np.any(self.lo_a > self.hi_a))

    def intersect(self, other: "Rect") -> "Rect":
        return Rect(np.maximum(self.lo_a, other.lo_a), np.minimum(self.hi_a, other.hi_a))

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        return np.all((pts >= self.lo_a - slack) & (pts <= self.hi_a + slack), axis=1)

    def subset_of(self, other: "Box | Rect", slack: float = 0.0) -> bool:
        o = other.to_rect() if isinstance(other, Box) else other
        return bool(np.all(self.lo_a >= o.lo_a - slack) and np.all(self.hi_a <= o.hi_a + slack))

    def split(self) -> list["Rect"]:
        """Bisect along every axis (2**dim children)."""
        mid = self.center
        halves = [((lo, m), (m, hi)) for lo, m, hi in zip(self.lo, mid, self.hi)]
        out = []
        for idx in np.ndindex(*(2,) * self.dim):
            out.append(Rect([halves[a][i][0] for a, i in enumerate(idx)],
                            [halves[a][i][1] for a, i in enumerate(idx)]))
        return out

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}
