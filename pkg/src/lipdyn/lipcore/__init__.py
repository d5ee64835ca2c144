"""Geometry, maps and sampled Lipschitz estimation."""

from .expr import Expr, coordinate_names
from .geometry import Box, Rect, as_points, maxnorm
from .lipschitz import (
    DEFAULT_BUDGET,
    LipEstimate,
    LipNorm,
    SamplingBudget,
    estimate_lip,
    estimate_reverse_lip,
    lip_distance,
    lip_distance_parts,
    lip_norm,
    lip_norm_parts,
    sample_pairs,
    sup_norm,
)
from .maps import (
    AffinePieces,
    Clamped,
    Combination,
    Conjugate,
    FunctionMap,
    IdentityMap,
    Iterate,
    LinearPlusLip,
    MapSpec,
    PiecewiseExpr,
    Recentered,
    Translate,
    ZeroMap,
    difference,
    shifted,
)


def eval_map(m: MapSpec, x):
    """Evaluate ``m`` at a point (or an ``(N, dim)`` batch)."""
    return m(x)


__all__ = [
    "AffinePieces",
    "Box",
    "Clamped",
    "Combination",
    "Conjugate",
    "DEFAULT_BUDGET",
    "Expr",
    "FunctionMap",
    "IdentityMap",
    "Iterate",
    "LinearPlusLip",
    "LipEstimate",
    "LipNorm",
    "MapSpec",
    "PiecewiseExpr",
    "Recentered",
    "Rect",
    "SamplingBudget",
    "Translate",
    "ZeroMap",
    "as_points",
    "coordinate_names",
    "difference",
    "estimate_lip",
    "estimate_reverse_lip",
    "lip_distance",
    "lip_distance_parts",
    "lip_norm",
    "lip_norm_parts",
    "maxnorm",
    "sample_pairs",
    "shifted",
    "sup_norm",
    "eval_map",
]
