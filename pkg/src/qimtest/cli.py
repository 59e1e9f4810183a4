"""Command-line interface: ``qimtest <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .graph import read_graph
from .metrics import METRICS, VARIANTS, QimParams, gamma_star
from .permtest import distance_matrix, permutation_test, raw_distances
from .remoteness import mr_test

log = logging.getLogger("qimtest")

GRAPH_SUFFIXES = {".csv": "adjacency-csv", ".txt": "edgelist", ".edges": "edgelist"}


class CliError(Exception):
    pass


def _add_metric_flags(p: argparse.ArgumentParser):
    p.add_argument("--metric", choices=METRICS, default="qim")
    p.add_argument("--variant", choices=VARIANTS, default="product")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--abs", dest="abs_weights", action="store_true",
                   help="use |w| for the spectral part when weights are negative")


def _add_test_flags(p: argparse.ArgumentParser):
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--pseudo-count", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mr", action="store_true", help="test on mutual remoteness")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")


def _add_input_flags(p: argparse.ArgumentParser):
    p.add_argument("groups", nargs="*", help="group A and group B directories")
    p.add_argument("--manifest", help="CSV with columns path,group (group is A or B)")
    p.add_argument("--nodes", type=int, help="node count for edge-list files")
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--drop-diagonal", action="store_true",
                   help="zero the diagonal (e.g. correlation matrices)")


def _params(args) -> QimParams:
    return QimParams(
        metric=args.metric, kappa=args.kappa, variant=args.variant, abs_weights=args.abs_weights
    )


def _load_one(path: Path, args):
    fmt = GRAPH_SUFFIXES.get(path.suffix.lower(), "adjacency-csv")
    return read_graph(
        path, fmt, nodes=args.nodes, symmetrize=args.symmetrize, drop_diagonal=args.drop_diagonal
    )


def _graph_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in GRAPH_SUFFIXES)
    return files


def load_groups(args):
    """Group A and group B graphs from two directories or a manifest."""
    if args.manifest:
        if args.groups:
            raise CliError("give either a manifest or two directories, not both")
        manifest = Path(args.manifest)
        paths = {"A": [], "B": []}
        with open(manifest, newline="") as fh:
            for row in csv.DictReader(fh):
                group = row["group"].strip().upper()
                if group not in paths:
                    raise CliError(f"manifest group must be A or B, got {row['group']!r}")
                p = Path(row["path"].strip())
                paths[group].append(p if p.is_absolute() else manifest.parent / p)
        files_a, files_b = paths["A"], paths["B"]
    elif len(args.groups) == 2:
        files_a, files_b = (_graph_files(Path(d)) for d in args.groups)
    else:
        raise CliError("need two group directories or --manifest")
    for name, files in (("A", files_a), ("B", files_b)):
        if len(files) < 2:
            raise CliError(f"group {name} has {len(files)} graph(s); at least 2 are needed")
    graphs = []
    for p in [*files_a, *files_b]:
        try:
            graphs.append(_load_one(p, args))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read {p}: {exc}") from exc
    sizes = {g.v for g in graphs}
    if len(sizes) != 1:
        raise CliError(f"graphs have mixed node counts: {sorted(sizes)}")
    return graphs, len(files_a)


def _emit(text: str, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _flat_csv(record: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(record)
    writer.writerow(repr(v) if isinstance(v, float) else v for v in record.values())
    return buf.getvalue()


def cmd_compare(args):
    graphs, n_a = load_groups(args)
    params = _params(args)
    if args.mr:
        res = mr_test(graphs, n_a, params, args.perms, args.pseudo_count, args.seed,
                      workers=args.workers)
    else:
        D = distance_matrix(graphs, n_a, params, workers=args.workers)
        res = permutation_test(D, args.perms, args.pseudo_count, args.seed, workers=args.workers)
    record = res.to_dict()
    if args.format == "json":
        _emit(json.dumps(record, indent=2) + "\n", args.output)
    else:
        _emit(_flat_csv(record), args.output)
    return 0


def cmd_distmat(args):
    graphs, _ = load_groups(args)
    raw = raw_distances(graphs, _params(args), workers=args.workers)
    out = raw if args.raw else raw * raw
    lines = [",".join(repr(float(x)) for x in row) for row in out]
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_gamma_star(args):
    for n in args.n:
        print(f"{n},{gamma_star(n, method=args.method)!r}")
    return 0


def _scenario(args) -> harness.ScenarioConfig:
    if args.config:
        cfg = harness.ScenarioConfig.load(args.config)
        if args.full:
            cfg = replace(cfg, reps=harness.FULL_REPS, perms=harness.FULL_PERMS)
    else:
        cfg = harness.preset(args.preset, full=args.full)
    overrides = {}
    for key in ("reps", "perms", "seed", "alpha", "kappa", "metric", "variant"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "mr", False):
        overrides["mr"] = True
    if getattr(args, "pseudo_count", None) is not None:
        overrides["pseudo_count"] = args.pseudo_count
    return replace(cfg, **overrides) if overrides else cfg


def _add_scenario_flags(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="scenario JSON file")
    src.add_argument("--preset", default="1a", help="named scenario (see --list-presets)")
    p.add_argument("--list-presets", action="store_true")
    p.add_argument("--full", action="store_true", help="1000 replicates x 1000 permutations")
    p.add_argument("--reps", type=int)
    p.add_argument("--perms", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--pseudo-count", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="include wall time in the JSON")
    p.add_argument("-o", "--output")


def cmd_simulate(args):
    if args.list_presets:
        print("\n".join(sorted(harness.PRESETS)))
        return 0
    cfg = _scenario(args)
    report = harness.run_scenario(cfg, workers=args.workers)
    if args.format == "csv":
        _emit("\n".join(report.csv_rows()) + "\n", args.output)
    else:
        _emit(report.to_json(timing=args.timing) + "\n", args.output)
    if args.csv:
        Path(args.csv).write_text("\n".join(report.csv_rows()) + "\n")
    log.info("rejection rate %.3f (%d replicates)", report.rejection_rate, len(report.per_replicate))
    return 0


def cmd_sweep_kappa(args):
    if args.list_presets:
        print("\n".join(sorted(harness.PRESETS)))
        return 0
    cfg = _scenario(args)
    if args.kappas:
        kappas = [float(k) for k in args.kappas.split(",")]
    else:
        kappas = harness.KAPPA_GRIDS[args.grid]
    variants = args.variants.split(",")
    table = harness.kappa_sweep(cfg, kappas, variants, workers=args.workers)
    _emit(json.dumps(harness.sweep_to_dict(table, cfg), indent=2) + "\n", args.output)
    return 0


def cmd_theory_check(args):
    report = harness.theory_check_euclidean(
        args.v, args.nA, args.nB, args.reps, args.seed, shift_sq=args.shift_sq
    )
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qimtest", description="Two-sample permutation tests for samples of networks."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="test two groups of graph files")
    _add_input_flags(p)
    _add_metric_flags(p)
    _add_test_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("distmat", help="write the pairwise distance matrix as CSV")
    _add_input_flags(p)
    _add_metric_flags(p)
    p.add_argument("--raw", action="store_true", help="unsquared distances")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("gamma-star", help="print the IM normalising width for node counts")
    p.add_argument("n", type=int, nargs="+")
    p.add_argument("--method", choices=("analytic", "quad"), default="analytic")
    p.set_defaults(func=cmd_gamma_star)

    p = sub.add_parser("simulate", help="estimate power or type-I error of a scenario")
    _add_scenario_flags(p)
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--kappa", type=float)
    p.add_argument("--mr", action="store_true")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--csv", help="also write one CSV row per replicate here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-kappa", help="power over a grid of kappa and both variants")
    _add_scenario_flags(p)
    p.add_argument("--kappas", help="comma-separated list (overrides --grid)")
    p.add_argument("--grid", choices=sorted(harness.KAPPA_GRIDS), default="wide")
    p.add_argument("--variants", default="product,plus")
    p.set_defaults(func=cmd_sweep_kappa)

    p = sub.add_parser("theory-check", help="pseudo-F on Gaussian vectors vs its chi-square limit")
    p.add_argument("--v", type=int, default=5)
    p.add_argument("--nA", type=int, default=100)
    p.add_argument("--nB", type=int, default=100)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-sq", type=float, default=0.0, help="squared norm of the group B shift")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_theory_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliError, ValueError, RuntimeError) as exc:
        print(f"qimtest: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
