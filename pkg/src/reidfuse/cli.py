"""Command-line front end.

Subcommands: ``run`` executes an experiment config and prints the results
table (optionally writing reports, CSV, and figures to a directory);
``simulate`` writes a synthetic dataset to disk; ``evaluate`` scores a
stored distance matrix against a manifest; ``validate`` checks that a
manifest and vector files satisfy the format contracts.

On engine errors the process exits nonzero after printing a single JSON
object ``{"category": ..., "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .distances import DistanceMatrix
from .errors import ConfigError, EngineError, EvaluationError
from .evaluation import Protocol, mean_ap
from .harness import (
    load_config,
    parse_simspec,
    print_table,
    reports_json,
    run_experiment,
    select_channel_records,
    write_outputs,
)
from .manifest import Kind, Split, load_manifest
from .simulator import generate, write_dataset
from .vectors import load_vectors, read_vector_file


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reidfuse",
        description="multi-source embedding fusion and retrieval evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="experiment YAML file")
    run_p.add_argument("--out", help="write reports, table, CSV and figures here")
    run_p.add_argument(
        "--format", choices=("table", "json"), default="table",
        help="stdout format (default: table)",
    )
    run_p.add_argument(
        "--seed", type=int, help="override the simulator seed in the config"
    )

    sim_p = sub.add_parser("simulate", help="write a synthetic dataset")
    sim_p.add_argument("spec", help="YAML file of simulator parameters")
    sim_p.add_argument("--out", required=True, help="output directory")
    sim_p.add_argument("--seed", type=int,
                       help="override the seed in the parameter file")

    eval_p = sub.add_parser(
        "evaluate", help="score a stored query x gallery distance matrix"
    )
    eval_p.add_argument("distances", help="REIDVEC1 file, one row per query")
    eval_p.add_argument("manifest", help="manifest the matrix is aligned to")
    eval_p.add_argument(
        "--protocol", choices=("plain", "cross_camera"), default="plain"
    )

    val_p = sub.add_parser(
        "validate", help="check a manifest and vector files against the formats"
    )
    val_p.add_argument("manifest")
    val_p.add_argument(
        "--vectors", action="append", default=[], metavar="CHANNEL=PATH",
        help="vector file to validate against the manifest subset "
        "for CHANNEL (repeatable)",
    )
    return parser


def _cmd_run(args) -> int:
    experiment = load_config(args.config)
    if args.seed is not None:
        if experiment.data.simulate is None:
            raise ConfigError("--seed only applies to configs with simulated data")
        experiment.data.simulate = replace(experiment.data.simulate, seed=args.seed)
    reports = run_experiment(experiment)
    if args.out:
        for path in write_outputs(experiment.name, reports, args.out):
            print(f"wrote {path}", file=sys.stderr)
    if args.format == "json":
        sys.stdout.write(reports_json(experiment.name, reports))
    else:
        sys.stdout.write(print_table(reports))
    return 0


def _cmd_simulate(args) -> int:
    import yaml

    try:
        raw = yaml.safe_load(open(args.spec, encoding="utf-8").read())
    except FileNotFoundError:
        raise ConfigError(f"spec file not found: {args.spec}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"spec is not valid YAML: {exc}")
    spec = parse_simspec(raw, "simspec")
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    records, channels = generate(spec)
    out = write_dataset(records, channels, args.out)
    print(f"wrote {len(records)} records and {len(channels)} channels to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    records = load_manifest(args.manifest)
    base = [r for r in records if r.kind is Kind.BASE]
    queries = [r for r in base if r.split is Split.QUERY]
    gallery = [r for r in base if r.split is Split.GALLERY]
    matrix = read_vector_file(args.distances)
    if matrix.shape != (len(queries), len(gallery)):
        raise EvaluationError(
            f"distance file shape {matrix.shape[0]}x{matrix.shape[1]} does not "
            f"match the manifest splits ({len(queries)} queries x "
            f"{len(gallery)} gallery items)"
        )
    report = mean_ap(
        DistanceMatrix(values=matrix),
        queries,
        gallery,
        protocol=Protocol(args.protocol),
        run_label="evaluate",
    )
    json.dump(report.to_json_obj(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _cmd_validate(args) -> int:
    records = load_manifest(args.manifest)
    print(f"manifest: {len(records)} records OK")
    for entry in args.vectors:
        channel, sep, path = entry.partition("=")
        if not sep or not channel or not path:
            raise ConfigError(
                f"--vectors expects CHANNEL=PATH, got {entry!r}"
            )
        subset = select_channel_records(records, channel)
        if not subset:
            raise ConfigError(
                f"channel {channel!r}: the manifest has no matching records"
            )
        emb = load_vectors(path, subset)
        print(f"{channel}: {emb.count} x {emb.dim} vectors OK")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "simulate": _cmd_simulate,
        "evaluate": _cmd_evaluate,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except EngineError as exc:
        json.dump(
            {"category": exc.category, "message": str(exc)}, sys.stderr
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
