"""Command-line front end.

Every subcommand prints one JSON report on stdout (sorted keys, versioned
schema, run manifest with the config hash) and exits with

    0  certified / pass      1  rejected / fail
    2  inconclusive          3  error
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chaoslab import (DiskSpec, heteroclinic_chain, horseshoe_verify, lambda_experiment, load_chain,
                       prefix_closed, rectangles_from_meta)
from .config import config_hash, fixture_text, read_config
from .conjugacy import conjugacy_report, solve_conjugacy
from .errors import LipdynError, NotHyperbolic, NotInvariant, PreconditionFailed, ThresholdExceeded
from .hyperbolic import SaddleSystem, certify_L_hyperbolic, find_fixed_point, invert_at
from .lipcore.expr import Expr
from .lipcore.geometry import Box, Rect
from .lipcore.lipschitz import SamplingBudget, estimate_lip, estimate_reverse_lip
from .lipcore.maps import LinearPlusLip, shifted
from .manifolds import compute_manifold, verify_characterization
from .onedim import (classify_fixed_point, delta_lyapunov, perturbed_fixed_point, perturbed_periodic_point,
                     thread_count)
from .transversal import TransversalityProblem, find_intersection, uniqueness_check

SCHEMA_VERSION = "1"
EXIT = {"pass": 0, "certified": 0, "transversal": 0, "rejected": 1, "fail": 1, "inconclusive": 2, "error": 3}
REJECTIONS = (PreconditionFailed, ThresholdExceeded, NotHyperbolic, NotInvariant)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def _region_of(m, center, radius) -> Box:
    dom = m.domain
    if center is None:
        if dom is None:
            raise ValueError("map has no domain; pass --center and --radius")
        c = dom.c if isinstance(dom, Box) else dom.center
    else:
        c = np.asarray(center, dtype=float)
    if radius is None:
        if isinstance(dom, Box):
            radius = dom.radius
        elif isinstance(dom, Rect):
            radius = float(np.min(dom.hi_a - dom.lo_a) / 2)
        else:
            raise ValueError("map has no domain; pass --radius")
    return Box(c, radius)


def _saddle(m) -> SaddleSystem:
    if not isinstance(m, LinearPlusLip):
        raise ValueError("this subcommand needs a 'linear_plus_lip' config")
    return SaddleSystem.from_map(m)


def _graph_expr(text: str, d_out: int = 1):
    ex = Expr(text, {"x": 0})

    def g(P):
        P = np.asarray(P, dtype=float).reshape(-1, 1)
        return np.broadcast_to(np.asarray(ex(P), dtype=float).reshape(-1), (len(P),)).reshape(-1, d_out).copy()
    return g


# ---------------------------------------------------------------- subcommands
# each returns (verdict, result dict, optional csv text)

def cmd_lip(args, m, budget):
    region = _region_of(m, args.center, args.radius)
    est = (estimate_reverse_lip if args.reverse else estimate_lip)(m, region, budget)
    return "pass", {"estimate": est.to_json()}, None


def cmd_certify(args, m, budget):
    sysm = _saddle(m)
    region = (Box(np.zeros(sysm.n), args.radius) if args.radius is not None
              else sysm.adapted_box(sysm.domain) if sysm.domain is not None else Box(np.zeros(sysm.n), 1.0))
    cert = certify_L_hyperbolic(sysm.lin.A, sysm.phi, region, budget, sysm.splitting)
    return cert.verdict, cert.to_json(), None


def cmd_fixpoint(args, m, budget):
    sysm = _saddle(m)
    region = sysm.adapted_box(sysm.domain) if sysm.domain is not None else Box(np.zeros(sysm.n), args.radius or 1.0)
    res = find_fixed_point(sysm.lin.A, sysm.phi, region, tol=args.tol or 1e-12, splitting=sysm.splitting,
                           budget=budget)
    return "pass", res.to_json(), None


def cmd_invert(args, m, budget):
    sysm = _saddle(m)
    region = _region_of(m, None, None) if m.domain is not None else Box(np.zeros(sysm.n), args.radius or 1.0)
    res = invert_at(sysm.lin.A, sysm.phi, np.asarray(args.point, dtype=float), region, tol=args.tol or 1e-12,
                    budget=budget)
    return "pass", res.to_json(), None


def cmd_manifold(args, m, budget):
    sysm = _saddle(m)
    res = compute_manifold(sysm, args.side, r=args.radius or 1.0, grid_n=args.grid or 257,
                           tol=args.tol or 1e-13, budget=budget)
    report = verify_characterization(res, budget=budget)
    verdict = "fail" if report.cone_violations else "pass"
    return verdict, {"manifold": res.to_json(), "characterization": report.to_json()}, res.graph.to_csv()


def cmd_conjugacy(args, m, budget):
    sysm = _saddle(m)
    res = solve_conjugacy(sysm, r=args.radius or 1.0, grid_n=args.grid or 65, tol=args.tol or 1e-12,
                          budget=budget)
    rep = conjugacy_report(res, seed=args.seed)
    ok = res.residual <= args.residual_bound and rep.orbit.max_error <= args.orbit_bound
    out = {"conjugacy": res.to_json(), "report": rep.to_json(),
           "bounds": {"residual": args.residual_bound, "orbit": args.orbit_bound}}
    return ("pass" if ok else "fail"), out, res.field.to_csv()


def cmd_transversal(args, m, budget):
    prob = TransversalityProblem(1, 1, args.radius or 1.0, _graph_expr(args.theta), _graph_expr(args.sigma),
                                 c=args.c)
    cert = find_intersection(prob, tol=args.tol or 1e-13, budget=budget)
    uniq = uniqueness_check(prob, seeds=args.seeds, tol=args.tol or 1e-13, seed=args.seed)
    verdict = cert.verdict if uniq["unique"] else "fail"
    return verdict, {"certificate": cert.to_json(), "uniqueness": uniq}, None


def cmd_classify1d(args, m, budget):
    rep = classify_fixed_point(m, args.point, args.delta, budget)
    verdict = "pass" if rep.classification in ("sink", "source") else "inconclusive"
    return verdict, rep.to_json(), None


def cmd_permanence(args, m, budget):
    g = read_config(args.g)[0] if args.g else shifted(m, args.eps)
    tol = args.tol or 1e-13
    if args.period > 1:
        cert = perturbed_periodic_point(m, g, args.point, args.period, args.delta, budget, tol)
    else:
        cert = perturbed_fixed_point(m, g, args.point, args.delta, budget, tol)
    return "certified", cert.to_json(), None


def cmd_lyapunov(args, m, budget):
    rec = delta_lyapunov(m, args.x1, args.delta, args.n, budget)
    return "pass", rec.to_json(), rec.to_csv()


def cmd_lambda(args, m, budget):
    sysm = _saddle(m)
    r = args.radius or 1.0
    grid = args.grid or 257
    wu = compute_manifold(sysm, "unstable", r=r, grid_n=grid, budget=budget)
    disk = DiskSpec.affine(args.offset, [args.slope], r, grid)
    res = lambda_experiment(wu, disk, args.n_max)
    ratios = res.ratios()
    tail = ratios[len(ratios) // 2:]
    ok = bool(len(tail) and np.all(tail <= args.ratio_bound))
    out = res.to_json()
    out["tail_ratios"] = tail.tolist()
    out["ratio_bound"] = args.ratio_bound
    return ("pass" if ok else "fail"), out, res.to_csv()


def cmd_horseshoe(args, m, budget):
    r0, r1 = rectangles_from_meta(m)
    table = horseshoe_verify(m, r0, r1, args.k_max, args.max_depth, strict=False)
    closed = prefix_closed(table)
    ok = table.undecided == 0 and closed and all(v["holds"] for v in table.divisor_check.values())
    out = table.to_json()
    out["prefix_closed"] = closed
    return ("pass" if ok else "fail"), out, None


def cmd_chain(args, _m, budget):
    q, dx, dy, p, r, window = load_chain(args.config)
    cert = heteroclinic_chain(q, dx, dy, args.n_max, window, grid_n=args.grid or 129, p=p, r_saddle=r,
                              budget=budget)
    return "certified", cert.to_json(), None


# ---------------------------------------------------------------- parser and driver

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="sampling seed")
    common.add_argument("--pairs", type=int, default=256, help="sampled pairs per estimate")
    common.add_argument("--tol", type=float, default=None, help="iteration tolerance")
    common.add_argument("--grid", type=int, default=None, help="grid nodes per axis")
    common.add_argument("--csv", type=Path, default=None, help="write plot-ready CSV here")
    common.add_argument("--timing", action="store_true", help="record wall time in the manifest")

    p = argparse.ArgumentParser(prog="lipdyn", description="Lipschitz dynamics toolkit")
    p.add_argument("--version", action="version", version=f"lipdyn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        if config:
            sp.add_argument("config", help="config file or shipped fixture name")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("lip", cmd_lip, "sampled Lipschitz constant on a ball")
    sp.add_argument("--center", type=float, nargs="+")
    sp.add_argument("--radius", type=float)
    sp.add_argument("--reverse", action="store_true")

    sp = add("certify", cmd_certify, "L-hyperbolicity certificate")
    sp.add_argument("--radius", type=float)

    sp = add("fixpoint", cmd_fixpoint, "fixed point by the hyperbolic contraction")
    sp.add_argument("--radius", type=float)

    sp = add("invert", cmd_invert, "solve A x + phi(x) = z")
    sp.add_argument("--point", type=float, nargs="+", required=True)
    sp.add_argument("--radius", type=float)

    sp = add("manifold", cmd_manifold, "local stable or unstable manifold")
    sp.add_argument("--side", choices=("stable", "unstable"), default="unstable")
    sp.add_argument("--radius", type=float)

    sp = add("conjugacy", cmd_conjugacy, "linearizing conjugacy near the fixed point")
    sp.add_argument("--radius", type=float)
    sp.add_argument("--residual-bound", type=float, default=1e-5)
    sp.add_argument("--orbit-bound", type=float, default=1e-4)

    sp = add("transversal", cmd_transversal, "intersection of two graphs in the plane", config=False)
    sp.add_argument("--theta", required=True, help="E1 -> E2 graph, expression in x")
    sp.add_argument("--sigma", required=True, help="E2 -> E1 graph, expression in x")
    sp.add_argument("--radius", type=float)
    sp.add_argument("--c", type=float, default=0.5)
    sp.add_argument("--seeds", type=int, default=10)

    sp = add("classify1d", cmd_classify1d, "sink, source or indifferent")
    sp.add_argument("--point", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)

    sp = add("permanence", cmd_permanence, "fixed or periodic point of a perturbed map")
    sp.add_argument("--point", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--period", type=int, default=1)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--eps", type=float, help="perturb by a constant shift")
    grp.add_argument("--g", help="config of the perturbed map")

    sp = add("lyapunov", cmd_lyapunov, "delta-Lyapunov exponent of an orbit")
    sp.add_argument("--x1", type=float, required=True)
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--delta", type=float, required=True)

    sp = add("lambda", cmd_lambda, "disk pushforward distances to W^u")
    sp.add_argument("--offset", type=float, required=True, help="disk crossing point on W^s")
    sp.add_argument("--slope", type=float, required=True)
    sp.add_argument("--n-max", type=int, default=20)
    sp.add_argument("--radius", type=float)
    sp.add_argument("--ratio-bound", type=float, default=0.9)

    sp = add("horseshoe", cmd_horseshoe, "itineraries and periodic counts of a horseshoe")
    sp.add_argument("--k-max", type=int, default=8)
    sp.add_argument("--max-depth", type=int, default=20)

    sp = add("chain", cmd_chain, "heteroclinic chain through an intermediate saddle", config=False)
    sp.add_argument("config", nargs="?", default="heteroclinic_chain", help="chain file or fixture name")
    sp.add_argument("--n-max", type=int, default=20)
    return p


def _config_text(name: str | None) -> str | None:
    if name is None:
        return None
    path = Path(name)
    return path.read_text() if path.exists() else fixture_text(name)


def run(argv: list[str] | None = None) -> tuple[int, str]:
    """Parse ``argv``, run the analysis and return ``(exit code, JSON text)``."""
    parser = build_parser()
    args = parser.parse_args(argv)
    budget = SamplingBudget(pairs=args.pairs, seed=args.seed)
    start = time.perf_counter()
    manifest = {"subcommand": args.command, "seed": args.seed, "budget": budget.to_json(), "tol": args.tol,
                "grid": args.grid, "tool_version": __version__, "threads": thread_count()}
    skip = {"fn", "command", "seed", "pairs", "tol", "grid", "csv", "timing", "config"}
    manifest["options"] = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    config = getattr(args, "config", None)
    manifest["config"] = config
    csv_text = None
    try:
        text = _config_text(config)
        manifest["config_sha256"] = config_hash(text) if text is not None else None
        m = read_config(config)[0] if (config is not None and args.command != "chain") else None
        verdict, result, csv_text = args.fn(args, m, budget)
    except REJECTIONS as exc:
        verdict, result = "rejected", {"error": type(exc).__name__, "message": str(exc),
                                       "inequality": getattr(exc, "inequality", None)}
    except (LipdynError, ValueError, OSError, FileNotFoundError) as exc:
        verdict, result = "error", {"error": type(exc).__name__, "message": str(exc)}
    if args.timing:
        manifest["wall_time_s"] = time.perf_counter() - start
    code = EXIT[verdict]
    if args.csv is not None and csv_text is not None:
        args.csv.write_text(csv_text)
    report = {"schema_version": SCHEMA_VERSION, "manifest": manifest, "verdict": verdict, "exit_code": code,
              "result": result}
    return code, json.dumps(_jsonable(report), sort_keys=True, indent=2)


def main(argv: list[str] | None = None) -> int:
    code, text = run(argv)
    sys.stdout.write(text + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
