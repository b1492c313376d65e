"""Command line interface: ``polyrelax {certify,hull,sblm,bounds}``.

Exit codes: 0 on success, 1 when ``--fail-on-falsify`` is set and a
counterexample was found, 2 on configuration or input errors.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .abstraction import GroupingConfig, analyze_bounds
from .errors import PolyrelaxError
from .exact import enumerate_vertices
from .network import Property, load_dataset, load_network
from .pddm import convex_hull_approx
from .polytope import VPoly, format_hpoly, format_vpoly, read_hpoly
from .sblm import maxpool_spec, relu_spec, sblm, scurve_spec
from .verifier import EncodingOptions, certify, format_report, summary_line, write_report_csv

log = logging.getLogger("polyrelax")


class ConfigError(Exception):
    pass


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _dd(path):
    h = read_hpoly(path)
    return h, VPoly(enumerate_vertices(h))


def cmd_hull(args):
    p1, p2 = _dd(args.first), _dd(args.second)
    h, v = convex_hull_approx(p1, p2, remove_redundant=args.remove_redundant)
    _emit(format_hpoly(h), args.output)
    if args.vertices:
        # keep only the input vertices that are vertices of the hull
        V = v.vertices
        act = np.abs(h.residuals(V)) <= 1e-7
        keep = [i for i in range(len(V)) if act[i].sum() >= h.dim and np.linalg.matrix_rank(h.a[act[i]]) == h.dim]
        _emit(format_vpoly(VPoly(V[keep])), args.vertices)
    return 0


def cmd_sblm(args):
    p = read_hpoly(args.input)
    V = enumerate_vertices(p)
    if len(V) == 0:
        raise ConfigError("input polytope is empty")
    lo, hi = V.min(axis=0), V.max(axis=0)
    if args.activation == "maxpool":
        specs = [maxpool_spec(p.dim, np.column_stack([lo, hi]))]
    elif args.activation == "relu":
        specs = [relu_spec(a, b) for a, b in zip(lo, hi)]
    else:
        specs = [scurve_spec(args.activation, a, b) for a, b in zip(lo, hi)]
    order = None if args.order is None else [int(t) for t in args.order.split(",")]
    K = sblm(order, p, specs, remove_redundant=args.remove_redundant)
    _emit(format_hpoly(K), args.output)
    return 0


def _options(args):
    try:
        grouping = GroupingConfig(k=args.k, n_s=args.ns, s=args.overlap)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return EncodingOptions(
        use_multi_neuron=not args.no_multi_neuron,
        grouping=grouping,
        refine_neuron_bounds=args.refine,
        refine_octahedron=args.refine_octahedron,
        lp_time_limit=args.time_limit,
        lp_backend=args.lp_backend,
    )


def _certify_one(job):
    net, sample, prop, options = job
    return certify(net, sample, prop, options)


def cmd_certify(args):
    if args.epsilon < 0:
        raise ConfigError("--epsilon must be nonnegative")
    if args.count < 1 or args.jobs < 1 or args.time_limit <= 0:
        raise ConfigError("--count, --jobs and --time-limit must be positive")
    net = load_network(args.network)
    samples = load_dataset(args.dataset, net)[: args.count]
    options = _options(args)
    prop = Property(args.epsilon)
    jobs = [(net, s, prop, options) for s in samples]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_certify_one, jobs))
    else:
        results = [_certify_one(j) for j in jobs]
    os.makedirs(args.output_dir, exist_ok=True)
    with open(os.path.join(args.output_dir, "report.csv"), "w", newline="") as fh:
        write_report_csv(results, args.epsilon, fh)
    with open(os.path.join(args.output_dir, "report.txt"), "w") as fh:
        fh.write(format_report(results, args.epsilon))
    print(summary_line(results))
    if args.fail_on_falsify and any(r.verdict == "falsified" for r in results):
        return 1
    return 0


def cmd_bounds(args):
    net = load_network(args.network)
    samples = load_dataset(args.dataset, net)
    if not 0 <= args.sample < len(samples):
        raise ConfigError(f"--sample must be in 0..{len(samples) - 1}")
    box = Property(args.epsilon).input_box(samples[args.sample].x)
    an = analyze_bounds(net, box)
    lines = []
    for i, (l, u) in enumerate(zip(an.lower, an.upper)):
        name = "input" if i == 0 else net.layers[i - 1].kind
        lines.append(f"# layer {i} ({name})")
        lines += [f"{repr(float(a))} {repr(float(b))}" for a, b in zip(l, u)]
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="polyrelax", description="Polyhedral relaxations and network certification.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="certify local robustness on a dataset")
    c.add_argument("--network", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--count", type=int, default=100)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--ns", type=int, default=100)
    c.add_argument("--overlap", type=int, default=1)
    c.add_argument("--refine", action="store_true", help="LP-tighten neuron bounds of later layers")
    c.add_argument("--refine-octahedron", action="store_true", help="LP-tighten octahedron directions")
    c.add_argument("--no-multi-neuron", action="store_true")
    c.add_argument("--lp-backend", choices=("scipy", "external"), default=None)
    c.add_argument("--time-limit", type=float, default=60.0, help="seconds per LP")
    c.add_argument("--output-dir", default=".")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--fail-on-falsify", action="store_true")
    c.set_defaults(func=cmd_certify)

    h = sub.add_parser("hull", help="approximate convex hull of two H-polytope files")
    h.add_argument("first")
    h.add_argument("second")
    h.add_argument("-o", "--output", help="H-representation of the hull (default stdout)")
    h.add_argument("--vertices", help="also write the hull's vertices to this file")
    h.add_argument("--remove-redundant", action="store_true")
    h.set_defaults(func=cmd_hull)

    s = sub.add_parser("sblm", help="multi-neuron constraints for a group over an input polytope")
    s.add_argument("input")
    s.add_argument("--activation", choices=("relu", "sigmoid", "tanh", "maxpool"), default="relu")
    s.add_argument("--order", help="comma separated splitting order of the units")
    s.add_argument("-o", "--output")
    s.add_argument("--remove-redundant", action="store_true")
    s.set_defaults(func=cmd_sblm)

    b = sub.add_parser("bounds", help="per-layer bounds around one dataset sample")
    b.add_argument("--network", required=True)
    b.add_argument("--dataset", required=True)
    b.add_argument("--epsilon", type=float, required=True)
    b.add_argument("--sample", type=int, default=0)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bounds)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PolyrelaxError, OSError, ValueError) as exc:
        ap.print_usage(sys.stderr)
        print(f"polyrelax: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
