"""Command line entry point ``borsuklab``.

Every subcommand reads an optional JSON config (``--config``) whose keys are
the long option names with dashes replaced by underscores; flags given on
the command line override it.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .. import io
from ..coloring import cap_cover_certificate, chromatic_number, ChromaticUnknown, k_colorable
from ..embedding import BadPatchEmbedding, BumpSum, lipschitz_pairs, lipschitz_ratio, sphere_probes
from ..graph import (antipodal_connectivity, antipodal_edges, build_geo_mirror, build_graph,
                     has_triangle, is_bipartite, odd_girth_floor)
from ..percolation import (bond_percolation_box, c2_constant, decay_fit,
                           estimate_lambda_c, reach_profile)
from ..rng import stream
from ..sphere import sample_uniform
from ..stats import TransitionNotBracketed
from .harness import (AllCensored, ConfigError, edge_count_experiment, emit_report,
                      pn_experiment, poissonize, threshold_sweep)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_BRACKETED = 3
EXIT_ALL_CENSORED = 4

log = logging.getLogger("borsuklab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: config error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text):
    return [int(float(x)) for x in str(text).split(",") if x.strip()]


def _global(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    p = _Parser(prog="borsuklab", description="Random Borsuk graph experiments")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="sample points (and optionally the graph)")
    _global(g)
    g.add_argument("--d", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--poisson", action="store_true", default=None)
    g.add_argument("--alpha", type=float)
    g.add_argument("--c", type=float, help="alpha = c n^(-1/d)")
    g.add_argument("--format", choices=["bin", "jsonl"])

    c = sub.add_parser("color", help="colour a graph, decide chi > k, build certificates")
    _global(c)
    c.add_argument("--points", help="point file (binary or JSONL)")
    c.add_argument("--alpha", type=float)
    c.add_argument("--k", type=int)
    c.add_argument("--node-budget", type=int)
    c.add_argument("--net-spacing", type=float)

    pc = sub.add_parser("percolate", help="AB / Boolean / bond percolation runs")
    _global(pc)
    pc.add_argument("--task", choices=["lambda-c", "decay", "bond"])
    pc.add_argument("--model", choices=["ab", "boolean"])
    pc.add_argument("--d", type=int)
    pc.add_argument("--lambdas", type=_floats)
    pc.add_argument("--boxes", type=_floats)
    pc.add_argument("--lam", type=float)
    pc.add_argument("--m", type=int)
    pc.add_argument("--p", type=float)
    pc.add_argument("--epsilon", type=float)

    s = sub.add_parser("sweep", help="threshold sweep in c over several n")
    _global(s)
    s.add_argument("--d", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--n-list", type=_ints)
    s.add_argument("--c-list", type=_floats)
    s.add_argument("--poisson", action="store_true", default=None)
    s.add_argument("--node-budget", type=int)
    s.add_argument("--svg", action="store_true", default=None)

    e = sub.add_parser("edges", help="edge-count Poisson law and pair connection probability")
    _global(e)
    e.add_argument("--d", type=int)
    e.add_argument("--nu", type=float)
    e.add_argument("--n-list", type=_ints)
    e.add_argument("--pair-alphas", type=_floats)

    m = sub.add_parser("embed", help="build and verify the odd bump-sum embedding")
    _global(m)
    m.add_argument("--points", help="point file; sampled if omitted")
    m.add_argument("--d", type=int)
    m.add_argument("--n", type=int)
    m.add_argument("--epsilon", type=float)
    m.add_argument("--c", type=float)
    m.add_argument("--constant", choices=["proof", "effective"])

    v = sub.add_parser("verify", help="check structural invariants on a point set or a bump sum")
    _global(v)
    v.add_argument("--points")
    v.add_argument("--alpha", type=float)
    v.add_argument("--bumps", help="BumpSum JSON to re-verify")
    v.add_argument("--epsilon", type=float)
    return p


DEFAULTS = {
    "generate": {"d": 2, "n": 1000, "poisson": False, "alpha": None, "c": None, "format": None},
    "color": {"points": None, "alpha": None, "k": None, "node_budget": 10 ** 7, "net_spacing": None},
    "percolate": {"task": "lambda-c", "model": "ab", "d": 2, "lambdas": None, "boxes": None,
                  "lam": None, "m": 30, "p": 0.99, "epsilon": 0.1},
    "sweep": {"d": 2, "k": 2, "n_list": [2000, 8000], "c_list": None, "poisson": False,
              "node_budget": 10 ** 6, "svg": False},
    "edges": {"d": 2, "nu": 8.0, "n_list": [4000], "pair_alphas": None},
    "embed": {"points": None, "d": 2, "n": 100000, "epsilon": 0.05, "c": 280.0,
              "constant": "proof"},
    "verify": {"points": None, "alpha": None, "bumps": None, "epsilon": None},
}
GLOBAL_DEFAULTS = {"seed": 0, "trials": 100, "out": None, "threads": 1}


def resolve(args):
    """Merge defaults, the JSON config and explicit flags (in increasing priority)."""
    opts = dict(GLOBAL_DEFAULTS) | dict(DEFAULTS[args.command])
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(cfg) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        opts.update(cfg)
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if val is not None:
            opts[key] = val
    if int(opts["trials"]) < 1:
        raise ConfigError("trials must be >= 1")
    if int(opts["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    return opts


def _out_dir(opts, default):
    return Path(opts["out"] or default)


def _write(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    io.write_json(path, obj)
    print(path)


def _load_points(path):
    if path is None:
        raise ConfigError("--points is required")
    try:
        return io.read_points(path)
    except (OSError, io.FormatError, ValueError) as err:
        raise ConfigError(f"cannot read points from {path}: {err}") from err


def cmd_generate(o):
    d, n = int(o["d"]), int(o["n"])
    rng = stream(o["seed"], "generate")
    size = poissonize(n, rng) if o["poisson"] else n
    X = sample_uniform(d, size, rng)
    out = _out_dir(o, "points.bin")
    fmt = o["format"] or ("jsonl" if str(out).endswith(".jsonl") else "bin")
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"points.{fmt}"
    out.parent.mkdir(parents=True, exist_ok=True)
    (io.write_points_jsonl if fmt == "jsonl" else io.write_points_binary)(out, X)
    print(out)
    alpha = o["alpha"] if o["alpha"] is not None else (
        o["c"] * n ** (-1.0 / d) if o["c"] is not None else None)
    if alpha is not None:
        if not 0 < alpha < math.pi:
            raise ConfigError("alpha must lie in (0, pi)")
        g = build_graph(X, alpha, seed=o["seed"])
        _write(out.with_suffix(".graph.json"), io.graph_to_dict(g))
        io.write_edges_binary(out.with_suffix(".edges.bin"), g.n_, g.edges_)
        print(out.with_suffix(".edges.bin"))
    return EXIT_OK


def cmd_color(o):
    X = _load_points(o["points"])
    if o["alpha"] is None:
        raise ConfigError("--alpha is required")
    g = build_graph(X, o["alpha"])
    out = _out_dir(o, "color")
    out.mkdir(parents=True, exist_ok=True)
    report = {"n": g.n_, "d": g.d_, "alpha": g.alpha, "edges": g.n_edges}
    bip, wit = is_bipartite(g)
    report["bipartite"] = bip
    if wit is not None:
        _write(out / "witness.json", io.witness_to_dict(wit))
    if o["k"] is not None:
        ok, col = k_colorable(g, int(o["k"]), int(o["node_budget"]))
        report["k"] = int(o["k"])
        report["k_colorable"] = ok
        if col is not None:
            _write(out / "coloring.json", col.to_list())
        if ok is None:
            _write(out / "report.json", report)
            return EXIT_ALL_CENSORED
    else:
        try:
            report["chromatic_number"] = chromatic_number(g, int(o["node_budget"]))
        except ChromaticUnknown as err:
            report["chromatic_bounds"] = [err.lo, err.hi]
            _write(out / "report.json", report)
            return EXIT_ALL_CENSORED
    if o["net_spacing"] is not None:
        cert = cap_cover_certificate(g, o["net_spacing"], seed=o["seed"])
        _write(out / "certificate.json", cert.to_dict())
        report["certificate_valid"] = cert.valid
    _write(out / "report.json", report)
    return EXIT_OK


def cmd_percolate(o):
    d, seed, trials = int(o["d"]), o["seed"], int(o["trials"])
    out = _out_dir(o, "percolation")
    task = o["task"]
    if task == "bond":
        res = bond_percolation_box(d, int(o["m"]), float(o["p"]), trials, seed, float(o["epsilon"]))
        _write(out / "bond.json", {"d": d, "m": o["m"], "p": o["p"], "epsilon": o["epsilon"]}
               | res.to_dict())
        return EXIT_OK
    if task == "decay":
        if o["lam"] is None:
            raise ConfigError("--lam is required for the decay task")
        radii = o["boxes"] or [4, 6, 8, 10, 12]
        prof = reach_profile(d, float(o["lam"]), radii, trials, seed, model=o["model"])
        rows = [{"lambda": float(o["lam"]), "R": R} | p.to_dict() for R, p in prof.items()]
        emit_report({"rows": rows}, out, "decay", ("csv",),
                    ["lambda", "R", "trials", "hits", "freq", "ci_lo", "ci_hi"])
        try:
            fit = decay_fit(prof).to_dict()
        except ValueError as err:
            fit = {"error": str(err)}
        _write(out / "decay.json", fit)
        return EXIT_OK
    grid = o["lambdas"] or list(np.round(np.linspace(0.6, 1.6, 11), 4))
    boxes = o["boxes"] or [10, 20]
    est = estimate_lambda_c(d, grid, boxes, trials, seed, model=o["model"])
    emit_report({"rows": est.table}, out, f"sweep_{o['model']}", ("csv",),
                ["lambda", "R", "trials", "hits", "freq", "ci_lo", "ci_hi"])
    summary = est.to_dict()
    summary.pop("table")
    summary["c2"] = c2_constant(d, max(est.estimate, 0.0))
    _write(out / f"lambda_c_{o['model']}.json", summary)
    return EXIT_OK


def cmd_sweep(o):
    if not o["c_list"]:
        raise ConfigError("--c-list is required")
    rep = threshold_sweep(int(o["d"]), int(o["k"]), list(o["n_list"]), list(o["c_list"]),
                          int(o["trials"]), o["seed"], bool(o["poisson"]), int(o["node_budget"]),
                          threads=int(o["threads"]))
    out = _out_dir(o, "sweep")
    formats = ("csv", "json", "svg") if o["svg"] else ("csv", "json")
    from .harness import SWEEP_COLUMNS

    for p in emit_report(rep, out, "sweep", formats, SWEEP_COLUMNS).values():
        print(p)
    return EXIT_OK


def cmd_edges(o):
    d, trials = int(o["d"]), int(o["trials"])
    reports = edge_count_experiment(d, float(o["nu"]), list(o["n_list"]), trials, o["seed"],
                                    threads=int(o["threads"]))
    payload = {"edge_counts": [r.to_dict() for r in reports]}
    if o["pair_alphas"]:
        payload["pairs"] = [p.to_dict() for p in pn_experiment(d, o["pair_alphas"], trials, o["seed"])]
    _write(_out_dir(o, "edges") / "edges.json", payload)
    return EXIT_OK


def cmd_embed(o):
    if o["points"]:
        X = _load_points(o["points"])
    else:
        X = sample_uniform(int(o["d"]), int(o["n"]), stream(o["seed"], "embed"))
    est = BadPatchEmbedding(epsilon=float(o["epsilon"]), c=float(o["c"]),
                            constant=o["constant"], seed=o["seed"]).fit(X)
    out = _out_dir(o, "embed")
    _write(out / "bumps.json", est.h_.to_dict())
    _write(out / "report.json", est.report_.to_dict())
    return EXIT_OK


def cmd_verify(o):
    out = _out_dir(o, "verify")
    report = {}
    if o["bumps"]:
        h = BumpSum.from_dict(io.read_json(o["bumps"]))
        probes = sphere_probes(h.d, 10_000, o["seed"])
        plus, minus = h.evaluate_pair(probes)
        U, V = lipschitz_pairs(h.d, 100_000, [o["seed"], 3])
        report["bumps"] = {"layers": h.n_layers, "max_odd_defect": float(np.max(np.abs(plus + minus))),
                           "max_abs": float(np.max(np.abs(plus))),
                           "lipschitz_ratio": lipschitz_ratio(h, U, V), "probes": len(probes)}
        if o["epsilon"] is not None:
            report["bumps"]["lipschitz_ok"] = report["bumps"]["lipschitz_ratio"] <= o["epsilon"] * (1 + 1e-6)
    if o["points"]:
        if o["alpha"] is None:
            raise ConfigError("--alpha is required with --points")
        X = _load_points(o["points"])
        g = build_graph(X, o["alpha"])
        same = bool(np.array_equal(antipodal_edges(X, o["alpha"], "grid"),
                                   antipodal_edges(X, o["alpha"], "brute"))) if len(X) <= 5000 else None
        bip, _ = is_bipartite(g)
        anti, _ = antipodal_connectivity(build_geo_mirror(X, o["alpha"]))
        girth = odd_girth_floor(g, seed=o["seed"])
        report["graph"] = {"n": g.n_, "edges": g.n_edges, "grid_equals_brute": same,
                           "bipartite": bip, "antipodal_connected": anti,
                           "bipartite_iff_not_antipodal": bip == (not anti),
                           "triangle": bool(has_triangle(g)) if o["alpha"] < math.pi / 3 else None,
                           "odd_girth_bound": girth.bound, "shortest_witness": girth.shortest,
                           "odd_girth_violations": girth.violations}
    if not report:
        raise ConfigError("nothing to verify: pass --points/--alpha or --bumps")
    _write(out / "verification.json", report)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "color": cmd_color, "percolate": cmd_percolate,
            "sweep": cmd_sweep, "edges": cmd_edges, "embed": cmd_embed, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except TransitionNotBracketed as err:
        print(str(err), file=sys.stderr)
        return EXIT_NOT_BRACKETED
    except AllCensored as err:
        print(str(err), file=sys.stderr)
        return EXIT_ALL_CENSORED


if __name__ == "__main__":
    sys.exit(main())
