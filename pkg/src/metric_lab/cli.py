"""Command-line entry point.

Machine output is one JSON record per line on stdout (or ``--out``).
Timing lines go to stderr and are suppressed by ``--quiet``.  Exit codes:
0 success, 1 computation or input error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import conformal, ghb, hyperbolicity, metric_core, stability_lab
from .errors import MetricError

DEFAULT_SEED = 0


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _index_range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split("..")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from None


def _meshes(text: str) -> tuple[float, ...]:
    try:
        return tuple(stability_lab.parse_mesh(v) for v in text.split(",") if v.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad mesh schedule {text!r}") from None


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def _space_record(space: metric_core.MarkedMetricSpace) -> dict:
    return space.to_dict()


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    data = _read_json(args.file)
    try:
        space = metric_core.MarkedMetricSpace.from_dict(data)
    except metric_core.MetricValidationError as exc:
        yield {"kind": "validation", "valid": False, "errors": [str(e) for e in exc.errors]}
        raise
    yield {"kind": "validation", "valid": True, "n": space.n, "boundary": int(space.boundary.sum())}


def cmd_hausdorff(args):
    space = metric_core.load_space(args.file)
    A = metric_core.subset(space, args.a)
    B = metric_core.subset(space, args.b)
    if args.a_boundary is None and args.b_boundary is None:
        yield {"kind": "hausdorff", "value": metric_core.hausdorff(space, A, B)}
        return
    X1 = metric_core.MarkedSubspace(A, metric_core.subset(space, args.a_boundary or []))
    X2 = metric_core.MarkedSubspace(B, metric_core.subset(space, args.b_boundary or []))
    yield {"kind": "hausdorff_with_boundary", "value": metric_core.hausdorff_with_boundary(space, X1, X2)}


def cmd_ghb(args):
    X, Y = metric_core.load_space(args.x), metric_core.load_space(args.y)
    if args.exact:
        br = ghb.ghb_exact(X, Y)
    else:
        br = ghb.ghb_heuristic(X, Y, budget=args.budget, seed=args.seed, restarts=args.restarts)
    yield {"kind": "ghb_bracket", **br.to_dict()}


def cmd_delta(args):
    rep = hyperbolicity.four_point_delta(metric_core.load_space(args.file))
    yield {"kind": "hyperbolicity", **rep.to_dict()}


def cmd_visual(args):
    space = metric_core.load_space(args.file)
    vm = hyperbolicity.visual_metric(space, args.base, args.eps, args.delta)
    yield {"kind": "visual_metric", "base": args.base, "eps": args.eps, **vm.to_dict()}


def cmd_starlike(args):
    space = metric_core.load_space(args.file)
    rep = hyperbolicity.rough_starlike_constant(hyperbolicity.PointedSpace(space, args.base), args.targets)
    yield {"kind": "rough_starlike", "base": args.base, **rep.to_dict()}


def _graph(args):
    return conformal.build_domain_graph(conformal.load_cloud(args.file), args.h)


def _interior_space(D) -> metric_core.MarkedMetricSpace:
    return metric_core.MarkedMetricSpace(D, np.zeros(D.shape[0], bool))


def cmd_qh(args):
    g = _graph(args)
    yield _space_record(_interior_space(conformal.quasihyperbolic_metric(g)))


def cmd_uniformize(args):
    g = _graph(args)
    base = conformal.deepest_node(g) if args.base is None else args.base
    graph = conformal.qh_graph(g) if args.qh else g
    u = conformal.uniformize(graph, base, args.eps, args.delta)
    yield {"kind": "uniformized", "base": base, "eps": args.eps, "diam": u.diam, "diam_bound": 2 / args.eps}
    yield _space_record(_interior_space(u.dist))


def cmd_uniformity(args):
    est = conformal.estimate_uniformity_constant(_graph(args), args.max_nodes, args.seed)
    yield {"kind": "uniformity", **est.to_dict()}


def cmd_clearance(args):
    g = _graph(args)
    base = conformal.deepest_node(g) if args.base is None else args.base
    yield {"kind": "clearance", "base": base, "R": args.R, **conformal.qh_ball_clearance(g, base, args.R).to_dict()}


def cmd_lab(args):
    params = dict(args.param or [])
    spec = stability_lab.DomainSequenceSpec(args.family, args.indices, args.mesh_schedule, params, args.seed)
    report = stability_lab.run_experiment(spec, args.experiment)
    yield json.loads(report.to_json())
    if args.table:
        for row in report.table():
            yield {"kind": "table_row", **row}
    _human(args, f"runtime {report.runtime:.2f} s, verdict {report.verdict}")


# ---------------------------------------------------------------------------
# plumbing


def _read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise metric_core.ParseError(f"line {exc.lineno}", exc.msg) from None


def _human(args, line: str):
    if not args.quiet:
        print(line, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write records to this file instead of stdout")
    common.add_argument("--quiet", action="store_true", help="suppress human-readable lines")
    common.add_argument("--threads", type=int, default=None, help="worker count (METRIC_LAB_THREADS overrides)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = argparse.ArgumentParser(prog="metric-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check a marked-space file")
    s.add_argument("file")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("hausdorff", parents=[common], help="Hausdorff distance between subsets")
    s.add_argument("file")
    s.add_argument("--a", type=_ints, required=True)
    s.add_argument("--b", type=_ints, required=True)
    s.add_argument("--a-boundary", type=_ints)
    s.add_argument("--b-boundary", type=_ints)
    s.set_defaults(func=cmd_hausdorff)

    s = sub.add_parser("ghb", parents=[common], help="bracket on the GH distance with boundary")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--heuristic", action="store_true")
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--restarts", type=int, default=5)
    s.add_argument("x")
    s.add_argument("y")
    s.set_defaults(func=cmd_ghb)

    s = sub.add_parser("delta", parents=[common], help="four-point hyperbolicity constant")
    s.add_argument("file")
    s.set_defaults(func=cmd_delta)

    s = sub.add_parser("visual", parents=[common], help="visual metric on the boundary")
    s.add_argument("file")
    s.add_argument("--base", type=int, required=True)
    s.add_argument("--eps", type=_positive, required=True)
    s.add_argument("--delta", type=float)
    s.set_defaults(func=cmd_visual)

    s = sub.add_parser("starlike", parents=[common], help="rough starlike constant")
    s.add_argument("file")
    s.add_argument("--base", type=int, required=True)
    s.add_argument("--targets", type=_ints)
    s.set_defaults(func=cmd_starlike)

    for name, func, helptext in (
        ("qh", cmd_qh, "quasihyperbolic metric of a point cloud"),
        ("uniformize", cmd_uniformize, "uniformized metric of a point cloud"),
        ("uniformity", cmd_uniformity, "uniformity constant estimate"),
        ("clearance", cmd_clearance, "quasihyperbolic ball clearance"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("file")
        s.add_argument("--h", type=_positive, required=True, help="connection radius")
        s.set_defaults(func=func)
        if name in ("uniformize", "clearance"):
            s.add_argument("--base", type=int, help="base node (default: deepest interior node)")
        if name == "uniformize":
            s.add_argument("--eps", type=_positive, required=True)
            s.add_argument("--delta", type=float, help="hyperbolicity constant for the epsilon0 warning")
            s.add_argument("--qh", action="store_true", help="uniformize the quasihyperbolic graph instead of the Euclidean one")
        if name == "uniformity":
            s.add_argument("--max-nodes", type=int, default=conformal.EXACT_UNIFORMITY_NODES)
        if name == "clearance":
            s.add_argument("--R", type=_positive, required=True)

    s = sub.add_parser("lab", help="stability experiments")
    labsub = s.add_subparsers(dest="lab_command", required=True)
    r = labsub.add_parser("run", parents=[common], help="run one experiment")
    r.add_argument("--experiment", required=True, choices=stability_lab.EXPERIMENTS)
    r.add_argument("--family", required=True, choices=stability_lab.FAMILIES)
    r.add_argument("--indices", type=_index_range, required=True)
    r.add_argument("--mesh-schedule", type=_meshes, required=True)
    r.add_argument("--param", type=_param, action="append", help="family or experiment parameter key=value")
    r.add_argument("--table", action="store_true", help="also emit one flat row per index")
    r.set_defaults(func=cmd_lab)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and "METRIC_LAB_THREADS" not in os.environ:
        os.environ["METRIC_LAB_THREADS"] = str(max(1, args.threads))
    sink = open(args.out, "w") if args.out else sys.stdout
    t0 = time.perf_counter()
    code = 0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: _human(args, f"warning: {msg}")
            for rec in args.func(args):
                sink.write(json.dumps(stability_lab._plain(rec), sort_keys=True) + "\n")
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc.filename}", file=sys.stderr)
        code = 1
    except (MetricError, ValueError, IndexError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        code = 1
    finally:
        if args.out:
            sink.close()
        else:
            sink.flush()
    if code == 0:
        _human(args, f"{args.command} done in {time.perf_counter() - t0:.3f} s")
    return code


if __name__ == "__main__":
    sys.exit(main())
