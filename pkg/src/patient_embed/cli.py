"""Command-line entry point: generate -> preprocess -> train -> embed -> evaluate -> report.

Exit codes: 0 success, 1 usage/config error, 2 data-contract error,
3 incomplete input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .cells import ContractError
from .data.container import Cohort, SchemaMismatch
from .data.records import FeatureSchema, SchemaError, read_admissions, write_admissions
from .data.synthetic import ConfigError, SyntheticSpec, generate_synthetic_cohort, schema_for
from .evaluation.reports import EvalReport, InputError, load_report, run_extrinsic, run_intrinsic
from .files import atomic_write_text, dump_json, write_projection
from .model import Model
from .numerics import ShapeError
from .pipeline import (ARCHITECTURES, ModelDims, RunSettings, available_architectures, embedding_pairs, find_runs,
                       prediction_files, preprocess, split_from_json, train_all, write_manifest, write_run_outputs)
from .training import Objective, TrainConfig

log = logging.getLogger("patient_embed")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INCOMPLETE = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "architecture": "all",
    "objective": "both",
    "folds": 5,
    "validation_fraction": 0.2,
    "projection_dim": 16,
    "hidden_dim": 16,
    "head_hidden_dim": 16,
    "learning_rate": 0.01,
    "batch_size": 64,
    "max_epochs": 60,
    "patience": 10,
    "min_delta": 1e-4,
    "oversample": True,
    "imputation": "mean",
    "perplexity": 30.0,
    "iterations": 1000,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def resolve_settings(args) -> dict:
    """Defaults, overlaid by ``--config`` file values, overlaid by explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        data = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: expected key-value pairs")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {sorted(unknown)}")
        merged.update(data)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _architectures(value: str) -> list:
    if value == "all":
        return list(ARCHITECTURES)
    if value not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {value!r}")
    return [value]


def _objectives(value: str) -> list:
    if value == "both":
        return [o.value for o in Objective]
    return [Objective(value).value]


def run_settings(s: dict) -> RunSettings:
    train = TrainConfig(learning_rate=float(s["learning_rate"]), batch_size=int(s["batch_size"]),
                        max_epochs=int(s["max_epochs"]), patience=int(s["patience"]),
                        min_delta=float(s["min_delta"]), oversample=bool(s["oversample"]))
    dims = ModelDims(int(s["projection_dim"]), int(s["hidden_dim"]), int(s["head_hidden_dim"]))
    if int(s["folds"]) < 2:
        raise ConfigError("--folds must be >= 2")
    return RunSettings(dims=dims, train=train, folds=int(s["folds"]),
                       validation_fraction=float(s["validation_fraction"]), seed=int(s["seed"]))


# -- commands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    started = time.time()
    spec = SyntheticSpec.load(args.spec) if args.spec else SyntheticSpec()
    if args.size is not None:
        spec.size = args.size
    if args.seed is not None:
        spec.seed = args.seed
    spec.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = generate_synthetic_cohort(spec)
    write_admissions(out / "admissions.jsonl", records)
    schema_for(spec).save(out / "schema.json")
    atomic_write_text(out / "spec.yaml", yaml.safe_dump(spec.to_dict(), sort_keys=True))
    write_manifest(out, "generate", spec.to_dict(), [args.spec or "<default spec>"],
                   ["admissions.jsonl", "schema.json", "spec.yaml"], spec.seed, started)
    print(f"wrote {len(records)} admissions to {out / 'admissions.jsonl'}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    started = time.time()
    s = resolve_settings(args)
    schema = FeatureSchema.load(args.schema)
    cohort, exclusions, provenance = preprocess(read_admissions(args.admissions), schema, s["imputation"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cohort.save(out / "cohort.npz")
    schema.save(out / "schema.json")
    atomic_write_text(out / "exclusions.tsv", "admission_id\ttask\treason\n" + "".join(e + "\n" for e in exclusions))
    atomic_write_text(out / "provenance.log", "".join(p + "\n" for p in provenance))
    write_manifest(out, "preprocess", {"imputation": s["imputation"], "schema_hash": schema.hash()},
                   [args.admissions, args.schema], ["cohort.npz", "schema.json", "exclusions.tsv", "provenance.log"],
                   int(s["seed"]), started)
    print(f"{len(cohort)} sequences, {len(exclusions)} task exclusions -> {out / 'cohort.npz'}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    s = resolve_settings(args)
    settings = run_settings(s)
    archs = _architectures(s["architecture"])
    objectives = _objectives(s["objective"])
    schema = FeatureSchema.load(args.schema) if args.schema else None
    Cohort.load(args.cohort, schema)  # validates the container up front
    runs = train_all(args.cohort, archs, objectives, settings, args.out, jobs=int(s["jobs"]),
                     resume=not args.no_resume)
    config = {**s, "architecture": archs, "objective": objectives}
    out = Path(args.out)
    write_manifest(out, "train", config, [args.cohort], [str(Path(r).relative_to(out)) for r in runs],
                   settings.seed, started)
    print(f"{len(runs)} runs complete under {out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    started = time.time()
    run = Path(args.run)
    config = json.loads((run / "config.json").read_text())
    model = Model.load(run / "checkpoint.npz")
    cohort = Cohort.load(args.cohort)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    split = split_from_json(config["split"])
    if max(int(np.max(p)) for p in (split.train, split.test) if len(p)) >= len(cohort):
        raise ContractError("run split refers to admissions outside this cohort")
    outputs = write_run_outputs(model, cohort, split, Objective(config["train"]["objective"]), out)
    if out != run:
        write_manifest(out, "embed", config, [run, args.cohort], [p.name for p in outputs], config["seed"], started)
    print(f"embeddings written to {out}")
    return EXIT_OK


def _eval_archs(s: dict, runs_root, objective: str) -> list:
    if s["architecture"] != "all":
        return _architectures(s["architecture"])
    found = available_architectures(runs_root, objective)
    if not found:
        raise InputError(f"no {objective} runs under {runs_root}")
    return found


def cmd_eval_intrinsic(args) -> int:
    started = time.time()
    s = resolve_settings(args)
    archs = _eval_archs(s, args.runs, "stage")
    runs = find_runs(args.runs, archs, "stage", int(s["folds"]))
    projections = {}
    report = run_intrinsic(embedding_pairs(runs), float(s["perplexity"]), int(s["iterations"]), int(s["seed"]),
                           n_folds=int(s["folds"]), projections=projections)
    out = Path(args.out)
    names = _write_report(out, "intrinsic", report)
    for (arch, k), (ids, stage, pts) in sorted(projections.items()):
        name = f"projections/{arch}_fold{k}.tsv"
        write_projection(out / name, ids, stage, pts)
        names.append(name)
    write_manifest(out, "eval-intrinsic", {k: s[k] for k in ("perplexity", "iterations", "seed", "folds")},
                   [args.runs], names, int(s["seed"]), started)
    print(report.render(), end="")
    return EXIT_OK


def cmd_eval_extrinsic(args) -> int:
    started = time.time()
    s = resolve_settings(args)
    archs = _eval_archs(s, args.runs, "stage")
    folds = int(s["folds"])
    stage_runs = find_runs(args.runs, archs, "stage", folds)
    mort_runs = find_runs(args.runs, archs, "mortality", folds)
    report = run_extrinsic(embedding_pairs(stage_runs), prediction_files(mort_runs), n_folds=folds)
    out = Path(args.out)
    names = _write_report(out, "extrinsic", report)
    write_manifest(out, "eval-extrinsic", {"folds": folds}, [args.runs], names, int(s["seed"]), started)
    print(report.render(), end="")
    return EXIT_OK


def _write_report(out: Path, stem: str, report: EvalReport) -> list:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / f"{stem}.json", report.to_json())
    atomic_write_text(out / f"{stem}.txt", report.render())
    return [f"{stem}.json", f"{stem}.txt"]


def cmd_report(args) -> int:
    started = time.time()
    parts, texts = {}, []
    for kind in ("intrinsic", "extrinsic"):
        path = getattr(args, kind)
        if path is None:
            continue
        if not Path(path).is_file():
            raise InputError(f"missing {kind} report {path}")
        rep = load_report(path)
        parts[kind] = rep.to_dict()
        texts.append(rep.render())
    if not parts:
        raise UsageError("give --intrinsic and/or --extrinsic")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.json", dump_json(parts))
    atomic_write_text(out / "report.txt", "\n".join(texts))
    write_manifest(out, "report", {}, [p for p in (args.intrinsic, args.extrinsic) if p],
                   ["report.json", "report.txt"], 0, started)
    print("\n".join(texts), end="")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _common(p, *, train=False, evaluate=False):
    p.add_argument("--config", help="key-value (YAML) file; explicit flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--architecture", choices=list(ARCHITECTURES) + ["all"])
    p.add_argument("--objective", choices=["stage", "mortality", "both"])
    p.add_argument("--folds", type=int)
    if train:
        for name, typ in (("validation_fraction", float), ("projection_dim", int), ("hidden_dim", int),
                          ("head_hidden_dim", int), ("learning_rate", float), ("batch_size", int),
                          ("max_epochs", int), ("patience", int), ("min_delta", float)):
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
        p.add_argument("--oversample", type=_bool)
    if evaluate:
        p.add_argument("--perplexity", type=float)
        p.add_argument("--iterations", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patient-embed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic cohort")
    p.add_argument("--spec", help="synthetic-spec key-value file (default: built-in demo spec)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="bucket, impute and label admissions")
    p.add_argument("--admissions", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--imputation", choices=["mean", "median"])
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="k-fold training for the selected architectures and objectives")
    p.add_argument("--cohort", required=True)
    p.add_argument("--schema", help="verify the container against this schema")
    p.add_argument("--out", required=True)
    p.add_argument("--no-resume", action="store_true", help="retrain runs that already have a manifest")
    _common(p, train=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="re-extract embeddings from a trained run")
    p.add_argument("--run", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval-intrinsic", help="t-SNE + Davies-Bouldin + stage accuracy per fold")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    _common(p, evaluate=True)
    p.set_defaults(func=cmd_eval_intrinsic)

    p = sub.add_parser("eval-extrinsic", help="direct vs downstream-LR mortality prediction")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_eval_extrinsic)

    p = sub.add_parser("report", help="combine evaluation reports")
    p.add_argument("--intrinsic")
    p.add_argument("--extrinsic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"incomplete input: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (SchemaError, SchemaMismatch, ContractError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"incomplete input: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
