"""Command-line interface: ``ldof detect | gen | sweep | verify-theory | fetch-wdbc``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Relative output paths resolve against ``$LDOF_OUTPUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import os
import secrets
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .baselines import top_n_knn, top_n_lof
from .core import DataError, Dataset, Metric
from .datagen import OUTLIER, SceneSpec, generate_scene, default_scene
from .evaluation import (
    METHODS,
    TrialSpec,
    mix_outliers,
    precision,
    run_protocol,
    subsample_normals,
    verify_lower_bound,
    verify_false_detection,
)
from .io import PRESETS, SCALINGS, filter_by_label, load_csv, write_dataset_csv, write_json, write_ranking_csv
from .ldof import default_k, top_n_ldof
from .neighbors import Backend

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
OUTPUT_DIR_ENV = "LDOF_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _output_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbelow(2**32)
        print(f"seed: {args.seed} (pass --seed {args.seed} to replay)")
    return args.seed


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("input", nargs="?", help="data file")
    src.add_argument("--default-scene", "--paper-scene", dest="default_scene", action="store_true", help="use the built-in 2-D scattered scene")
    p.add_argument("--format", choices=sorted(PRESETS), default="plain", help="file layout preset (default: plain)")
    p.add_argument("--scaling", choices=SCALINGS, default=None, help="per-feature scaling over all loaded rows")
    p.add_argument("--truth-label", help="records with this label are the true outliers")
    p.add_argument("--outlier-label", help="draw outliers from records with this label")
    p.add_argument("--normal-label", help="normal records (default: every label but --outlier-label)")
    p.add_argument("--outlier-count", type=int, help="number of outliers to mix in (default: all)")
    p.add_argument("--mix-mode", choices=("first", "random"), default="first")
    p.add_argument("--sample-normals", type=int, help="subsample this many normal records per run")
    p.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.EUCLIDEAN.value)
    p.add_argument("--backend", choices=[b.value for b in Backend], default=Backend.TREE.value)
    p.add_argument("--threads", type=int, help="worker cap (default: all cores)")
    p.add_argument("--seed", type=int, help="base seed for random mixing or subsampling")


def _load(args) -> Dataset:
    if args.default_scene:
        return generate_scene(default_scene())
    schema = PRESETS[args.format]
    if args.scaling is not None:
        schema = schema.replace(scaling=args.scaling)
    return load_csv(args.input, schema)


def _needs_seed(args) -> bool:
    return bool(args.sample_normals) or (args.outlier_label is not None and args.mix_mode == "random")


def _run_factory(args, dataset: Dataset):
    """``make_run(run, seed) -> (dataset, truth)`` built from the data-selection flags."""
    if args.outlier_label is None:
        if args.outlier_count is not None or args.sample_normals:
            raise UsageError("--outlier-count and --sample-normals need --outlier-label")
        label = args.truth_label or (OUTLIER if args.default_scene else None)
        if label is None:
            raise UsageError("say which records are outliers with --truth-label or --outlier-label")
        if dataset.labels is None:
            raise DataError("dataset has no labels")
        truth = {i for i, lab in enumerate(dataset.labels) if lab == label}
        if not truth:
            raise DataError(f"no records carry the truth label {label!r}")
        return lambda run, seed: (dataset, truth)

    pool = filter_by_label(dataset, args.outlier_label)
    if args.normal_label is not None:
        normal = filter_by_label(dataset, args.normal_label)
    else:
        normal = filter_by_label(dataset, lambda lab: lab != args.outlier_label)
    count = pool.size if args.outlier_count is None else args.outlier_count
    if count < 1:
        raise UsageError("--outlier-count must be at least 1")

    def make_run(run, seed):
        mix_seed, sample_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2))
        base = subsample_normals(normal, args.sample_normals, sample_seed) if args.sample_normals else normal
        return mix_outliers(base, pool, count, args.mix_mode, mix_seed)

    return make_run


def cmd_detect(args) -> int:
    dataset = _load(args)
    seed = _seed(args) if _needs_seed(args) else (args.seed or 0)
    truth = None
    if args.outlier_label is not None or args.truth_label is not None or args.default_scene:
        dataset, truth = _run_factory(args, dataset)(0, seed)
    k = args.k if args.k is not None else default_k(dataset.dimension)
    common = dict(metric=args.metric, backend=args.backend, threads=args.threads)
    if args.method == "ldof":
        ranking = top_n_ldof(dataset, args.n, k, prune=not args.no_prune, **common)
    elif args.method == "knn":
        ranking = top_n_knn(dataset, args.n, k, **common)
    else:
        ranking = top_n_lof(dataset, args.n, k, **common)
    out = _output_path(args.output)
    write_ranking_csv(ranking, out, dataset)
    print(f"top-{args.n} {args.method} (k={k}, N={dataset.size}, d={dataset.dimension})")
    print(f"{'rank':>4}  {'id':>6}  {'source':>10}  {'label':>8}  {'score':>12}")
    for rank, e in enumerate(ranking.entries, start=1):
        label = dataset.labels[e.id] if dataset.labels is not None else ""
        print(f"{rank:>4}  {e.id:>6}  {str(dataset.source_id(e.id)):>10}  {str(label or ''):>8}  {e.score:>12.6g}")
    if len(ranking) < args.n:
        print(f"({args.n - len(ranking)} slot(s) empty: fewer records scored above the pruning bound)")
    if truth:
        print(f"precision: {precision(ranking, truth):.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.default_scene:
        spec = default_scene(args.seed)
    else:
        with open(args.config, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise DataError(f"{args.config}: expected a mapping at top level")
        spec = SceneSpec.from_dict(raw)
        if args.seed is None and "seed" not in raw:
            _seed(args)
        if args.seed is not None:
            spec = SceneSpec(spec.dimension, spec.clusters, spec.outliers, args.seed, spec.name)
    dataset = generate_scene(spec)
    out = _output_path(args.output)
    write_dataset_csv(dataset, out)
    n_out = len(spec.outliers)
    print(f"seed: {spec.seed}")
    print(f"wrote {dataset.size} records ({n_out} planted outliers, d={dataset.dimension}) to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset = _load(args)
    seed = _seed(args) if _needs_seed(args) or args.runs > 1 else (args.seed or 0)
    k_lo, k_hi = args.k_range
    trial = TrialSpec(tuple(args.methods), (k_lo, k_hi), args.n, args.runs, seed, args.outlier_count)
    make_run = _run_factory(args, dataset)
    report = run_protocol(trial, make_run, args.metric, args.backend, args.threads, name=dataset.name)
    prefix = _output_path(args.output)
    report.to_csv(prefix.with_suffix(".csv"))
    report.to_json(prefix.with_suffix(".json"))
    print(f"mean precision over {trial.runs} run(s), n={trial.n}")
    print("    k  " + "  ".join(f"{m:>6}" for m in trial.methods))
    for k in trial.ks:
        print(f"{k:>5}  " + "  ".join(_cell(report.mean(m, k)) for m in trial.methods))
    print("pooled " + "  ".join(f"{m}={_cell(report.pooled(m)[0]).strip()}" for m in trial.methods))
    if report.reasons:
        print(f"{len(report.reasons)} missing cell(s); reasons in the JSON report")
    audit = report.audit
    print(f"pruning audit: {audit.cells} cells, {audit.high_score_pruned} high-score prunes, "
          f"{audit.membership_changes} top-n changes")
    print(f"wrote {prefix.with_suffix('.csv')} and {prefix.with_suffix('.json')}")
    return EXIT_OK


def _cell(v: float) -> str:
    return "     -" if v != v else f"{v:>6.3f}"


CHECKS = ("lower-bound", "false-detection")


def _check(args) -> str:
    return args.check or CHECKS[args.theorem - 1]


def cmd_verify_theory(args) -> int:
    seed = _seed(args)
    if _check(args) == "lower-bound":
        report = verify_lower_bound(args.d, args.k, args.samples, args.trials, seed, args.metric)
        print(f"mean LDOF of center: {report.mean:.4f} (expected 0.5, deviation {report.deviation:+.4f}, "
              f"tolerance {report.tolerance})")
    else:
        if args.c is None:
            raise UsageError("the false-detection check needs -c")
        report = verify_false_detection(args.d, args.k, args.c, args.trials, seed, args.metric)
        print(f"P[LDOF > {args.c}]: empirical {report.frequency:.4g} ({report.exceedances}/{report.trials}), "
              f"bound {report.bound:.4g} (alpha {report.alpha:.4g})")
    print("PASS" if report.passed else "FLAG")
    if args.output:
        out = _output_path(args.output)
        write_json(report.to_dict(), out)
        print(f"wrote {out}")
    return EXIT_OK


def cmd_fetch_wdbc(args) -> int:
    from .io import export_wdbc

    out = _output_path(args.output)
    try:
        rows = export_wdbc(out)
    except RuntimeError as exc:
        raise DataError(str(exc)) from None
    print(f"wrote {rows} rows to {out} (ids are 1-based row numbers)")
    return EXIT_OK


def _k_range(text: str) -> tuple[int, int]:
    parts = text.replace(":", "-").split("-")
    try:
        lo, hi = (int(parts[0]), int(parts[-1])) if len(parts) in (1, 2) else (None, None)
    except ValueError:
        lo = None
    if lo is None:
        raise argparse.ArgumentTypeError(f"expected LO-HI, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldof", description="Top-n outlier detection with the local distance-based outlier factor.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="rank the n most outlying records")
    _add_data_args(p)
    p.add_argument("--method", choices=METHODS, default="ldof")
    p.add_argument("-k", "--k", type=int, help="neighborhood size (default: max(d+1, 10))")
    p.add_argument("-n", "--n", type=int, required=True, help="number of records to report")
    p.add_argument("--no-prune", action="store_true", help="rank every record, including LDOF < 1/2")
    p.add_argument("-o", "--output", default="ranking.csv")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("gen", help="generate a synthetic scene as a dataset CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--default-scene", "--paper-scene", dest="default_scene", action="store_true", help="the built-in 2-D scattered scene")
    src.add_argument("--config", help="scene YAML file")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", default="scene.csv")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sweep", help="precision of each method over a range of k")
    _add_data_args(p)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--k-range", type=_k_range, default=(2, 50), help="inclusive LO-HI (default 2-50)")
    p.add_argument("-n", "--n", type=int, required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("-o", "--output", default="sweep", help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-theory", help="Monte-Carlo check of the LDOF lower bound or false-detection bound")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--check", choices=CHECKS, help="lower-bound: center of a uniform ball scores 1/2; "
                       "false-detection: P[LDOF > c] stays under exp(-alpha (k-2))")
    which.add_argument("--theorem", type=int, choices=(1, 2), help="same as --check (1 = lower-bound, 2 = false-detection)")
    p.add_argument("-d", type=int, default=3)
    p.add_argument("-k", type=int, default=100)
    p.add_argument("-c", type=float)
    p.add_argument("--samples", type=int, default=5000, help="ball samples per trial (lower-bound check)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.SQUARED_EUCLIDEAN.value)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", help="also write the report as JSON")
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("fetch-wdbc", help="write scikit-learn's copy of WDBC in the UCI layout")
    p.add_argument("-o", "--output", default="wdbc.data")
    p.set_defaults(func=cmd_fetch_wdbc)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "verify-theory" and args.trials is None:
            args.trials = 50 if _check(args) == "lower-bound" else 10000
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
