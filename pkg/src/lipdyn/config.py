"""JSON map configurations.

A config is a JSON object::

    {"dim": 1, "domain": {"center": [0.5], "radius": 0.5},
     "kind": "piecewise",
     "pieces": [{"when": "x < 0.4794", "expr": ["0.15*x + 0.75"]},
                {"expr": ["3.3*x*(1-x)"]}]}

Kinds: ``piecewise``, ``linear_plus_lip`` (``matrix`` plus ``phi``, itself
a config or a bare list of expressions), ``iterate`` (``inner`` and ``k``)
and ``affine_pieces`` (rectangles with ``matrix`` and ``offset``).  An
optional ``splitting`` (``stable``/``unstable`` basis vectors) and any
other top-level keys are kept in ``MapSpec.meta``.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CoverageGap, ParseError
from .lipcore.expr import Expr, coordinate_names
from .lipcore.geometry import Box, Rect
from .lipcore.maps import AffinePieces, Iterate, LinearPlusLip, MapSpec, PiecewiseExpr

KINDS = ("piecewise", "linear_plus_lip", "iterate", "affine_pieces")
_GRID_NODES = {1: 20001, 2: 301, 3: 41}


def _locate(text: str, key: str) -> tuple[int | None, int | None]:
    """Line/column of the first occurrence of ``"key"`` in ``text`` (best effort)."""
    idx = text.find(f'"{key}"')
    if idx < 0:
        return None, None
    line = text.count("\n", 0, idx) + 1
    col = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, col


def _require(cfg: dict, key: str, text: str):
    if key not in cfg:
        raise ParseError(f"missing field {key!r}", *_locate(text, next(iter(cfg), "")))
    return cfg[key]


def _parse_domain(cfg: dict, dim: int, text: str):
    dom = cfg.get("domain")
    if dom is None:
        return None
    try:
        if "center" in dom:
            box = Box(dom["center"], dom["radius"])
        else:
            box = Rect(dom["lo"], dom["hi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad domain: {exc}", *_locate(text, "domain")) from None
    if box.dim != dim:
        raise ParseError(f"domain has dimension {box.dim}, expected {dim}", *_locate(text, "domain"))
    return box


def _expr(src: str, variables, text: str, predicate=False) -> Expr:
    try:
        return Expr(src, variables, predicate=predicate)
    except ParseError as exc:
        line, col = _locate(text, src) if src in text else (None, None)
        raise ParseError(str(exc).split(" (line")[0], line, col) from None


def _build(cfg: dict, text: str, dim_hint: int | None = None) -> MapSpec:
    if isinstance(cfg, list):
        # bare expression vector, used for phi
        dim = len(cfg) if dim_hint is None else dim_hint
        cfg = {"dim": dim, "kind": "piecewise", "pieces": [{"expr": cfg}]}
    if not isinstance(cfg, dict):
        raise ParseError("config must be a JSON object")
    if cfg.get("kind") == "iterate" and "dim" not in cfg and isinstance(cfg.get("inner"), dict):
        dim_hint = cfg["inner"].get("dim", dim_hint)
    dim = int(cfg.get("dim", dim_hint or 0))
    if dim not in (1, 2, 3):
        raise ParseError(f"dim must be 1, 2 or 3, got {dim}", *_locate(text, "dim"))
    kind = cfg.get("kind", "piecewise")
    if kind not in KINDS:
        raise ParseError(f"unknown kind {kind!r}", *_locate(text, "kind"))
    domain = _parse_domain(cfg, dim, text)
    variables = coordinate_names(dim)
    name = cfg.get("name", kind)

    if kind == "piecewise":
        pieces = []
        for piece in _require(cfg, "pieces", text):
            exprs = piece["expr"]
            if isinstance(exprs, str):
                exprs = [exprs]
            if len(exprs) != dim:
                raise ParseError(f"piece has {len(exprs)} components, expected {dim}", *_locate(text, "expr"))
            pred = piece.get("when")
            pieces.append((None if pred is None else _expr(pred, variables, text, predicate=True),
                           [_expr(e, variables, text) for e in exprs]))
        m = PiecewiseExpr(pieces, dim, domain=domain, name=name,
                          differentiable=bool(cfg.get("differentiable", False)))
        if domain is not None:
            check_coverage(m)
    elif kind == "linear_plus_lip":
        A = np.asarray(_require(cfg, "matrix", text), dtype=float)
        if A.shape != (dim, dim):
            raise ParseError(f"matrix shape {A.shape}, expected {(dim, dim)}", *_locate(text, "matrix"))
        phi_cfg = cfg.get("phi")
        phi = None
        if phi_cfg is not None:
            if isinstance(phi_cfg, dict) and "domain" not in phi_cfg and "domain" in cfg:
                phi_cfg = {**phi_cfg, "domain": cfg["domain"]}
            phi = _build(phi_cfg, text, dim)
            if phi.domain is None:
                phi.domain = domain
        m = LinearPlusLip(A, phi, name=name, domain=domain)
    elif kind == "iterate":
        inner = _build(_require(cfg, "inner", text), text, dim)
        m = Iterate(inner, int(_require(cfg, "k", text)))
    else:
        pieces = []
        for piece in _require(cfg, "pieces", text):
            pieces.append((Rect(piece["lo"], piece["hi"]), piece["matrix"], piece["offset"]))
        m = AffinePieces(pieces, name=name)
    m.meta = {k: v for k, v in cfg.items() if k not in ("pieces", "inner", "phi")}
    return m


def check_coverage(m: PiecewiseExpr) -> None:
    """Raise :class:`CoverageGap` if some part of the domain matches no piece.

    The domain is sampled on a dense grid; in 1D the ends of the first
    uncovered run are then located by bisection.
    """
    rect = m.domain.to_rect() if isinstance(m.domain, Box) else m.domain
    n = _GRID_NODES[m.dim]
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(rect.lo, rect.hi)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    free = m.selection(pts) < 0
    if not free.any():
        return
    if m.dim > 1:
        bad = pts[free]
        raise CoverageGap(bad.min(axis=0), bad.max(axis=0))

    xs = axes[0]
    covered = lambda x: m.selection(np.array([[x]]))[0] >= 0  # noqa: E731
    i = int(np.argmax(free))
    j = i
    while j + 1 < n and free[j + 1]:
        j += 1
    lo, hi = xs[i], xs[j]
    if i > 0:
        a, b = xs[i - 1], xs[i]
        for _ in range(80):
            mid = 0.5 * (a + b)
            a, b = (mid, b) if covered(mid) else (a, mid)
        lo = b
    if j + 1 < n:
        a, b = xs[j], xs[j + 1]
        for _ in range(80):
            mid = 0.5 * (a + b)
            a, b = (a, mid) if covered(mid) else (mid, b)
        hi = b
    raise CoverageGap([lo], [hi])


def parse_map_config(text: str) -> MapSpec:
    """Parse JSON text into a validated :class:`MapSpec`."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return _build(cfg, text)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def fixture_text(name: str) -> str:
    return resources.files("lipdyn").joinpath("fixtures", f"{name}.json").read_text()


def load_fixture(name: str) -> MapSpec:
    """Load one of the shipped configs by name (file stem)."""
    return parse_map_config(fixture_text(name))


def read_config(path_or_name: str) -> tuple[MapSpec, str]:
    """Parse a config file, or a shipped fixture when no such file exists."""
    p = Path(path_or_name)
    text = p.read_text() if p.exists() else fixture_text(path_or_name)
    return parse_map_config(text), text
