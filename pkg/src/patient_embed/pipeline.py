"""Glue between the data, training and evaluation layers.

A training output directory holds one run per (architecture, objective,
fold) under ``<out>/<arch>/<objective>/fold<k>/``. A run is complete when its
``manifest.json`` exists; the manifest is written last and atomically.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import __version__
from .data.bucketing import DEFAULT_MORTALITY_EXCLUDE_HOURS, preprocess_record
from .data.container import Cohort
from .data.icd import stage_from_codes
from .data.records import AdmissionRecord, FeatureSchema
from .data.splits import CohortSplit, kfold_split
from .files import atomic_write_text, dump_json, write_embeddings, write_predictions
from .model import ArchitectureKind, Model, ModelConfig
from .numerics import derive_seed, make_rng
from .training import Objective, TrainConfig, extract_embeddings, predict_probabilities, train_fold

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
ARCHITECTURES = tuple(a.value for a in ArchitectureKind)
OBJECTIVES = tuple(o.value for o in Objective)


@dataclass
class ModelDims:
    projection_dim: int = 16
    hidden_dim: int = 16
    head_hidden_dim: int = 16


@dataclass
class RunSettings:
    dims: ModelDims = field(default_factory=ModelDims)
    train: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 5
    validation_fraction: float = 0.2
    seed: int = 0


def write_manifest(directory, command: str, config: dict, inputs: Iterable, outputs: Iterable,
                   seed: int, started: float) -> None:
    from hashlib import sha256

    manifest = {
        "command": command,
        "config_hash": sha256(json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    atomic_write_text(Path(directory) / MANIFEST, dump_json(manifest))


def is_complete(directory) -> bool:
    return (Path(directory) / MANIFEST).is_file()


# -- preprocessing --------------------------------------------------------------

def preprocess(records: Iterable[AdmissionRecord], schema: FeatureSchema, strategy: str = "mean",
               exclude_before_hours: float = DEFAULT_MORTALITY_EXCLUDE_HOURS):
    """Returns ``(cohort, exclusion_log, provenance_log)``."""
    seqs, exclusions, provenance = [], [], []
    seen = set()
    for rec in records:
        if rec.admission_id in seen:
            raise ValueError(f"duplicate admission_id {rec.admission_id}")
        seen.add(rec.admission_id)
        seq = preprocess_record(rec, schema, strategy, exclude_before_hours, provenance)
        if stage_from_codes(rec.icd_codes) is None:
            exclusions.append(f"{rec.admission_id}\tstage\tICD code(s) {','.join(rec.icd_codes)} not in stage table")
        if seq.mortality < 0:
            exclusions.append(f"{rec.admission_id}\tmortality\tdeath at {rec.mortality_offset_hours}h "
                              f"before the end of the prediction window")
        seqs.append(seq)
    return Cohort.from_sequences(seqs, schema), exclusions, provenance


# -- training -------------------------------------------------------------------

def cohort_splits(n: int, settings: RunSettings) -> list:
    return kfold_split(n, settings.folds, settings.validation_fraction, make_rng(derive_seed(settings.seed, "split")))


def run_dir(out, arch: str, objective: str, fold: int) -> Path:
    return Path(out) / arch / objective / f"fold{fold}"


def _split_to_json(split: CohortSplit) -> dict:
    return {k: [int(i) for i in getattr(split, k)] for k in ("train", "validation", "test")}


def split_from_json(d: dict) -> CohortSplit:
    return CohortSplit(*(np.asarray(d[k], dtype=np.int64) for k in ("train", "validation", "test")))


def write_run_outputs(model: Model, cohort: Cohort, split: CohortSplit, objective: Objective, directory: Path) -> list:
    """Embeddings for train and test admissions; test probabilities for mortality runs."""
    outputs = []
    train_idx = np.sort(np.concatenate([split.train, split.validation]))
    for name, idx in (("embeddings_train.tsv", train_idx), ("embeddings_test.tsv", split.test)):
        write_embeddings(directory / name, extract_embeddings(model, idx, cohort))
        outputs.append(directory / name)
    if objective is Objective.MORTALITY_END_TO_END:
        probs = predict_probabilities(model, split.test, cohort)[:, 1]
        write_predictions(directory / "predictions_test.tsv", cohort.admission_ids[split.test],
                          cohort.mortality[split.test], probs)
        outputs.append(directory / "predictions_test.tsv")
    return outputs


def train_one(cohort: Cohort, arch: str, objective: str, fold: int, split: CohortSplit, settings: RunSettings,
              out, cohort_path: str = "") -> Path:
    started = time.time()
    objective = Objective(objective)
    directory = run_dir(out, arch, objective.value, fold)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / MANIFEST).unlink(missing_ok=True)

    mcfg = ModelConfig(input_dim=cohort.input_dim, projection_dim=settings.dims.projection_dim,
                       hidden_dim=settings.dims.hidden_dim, head_hidden_dim=settings.dims.head_hidden_dim,
                       num_classes=objective.num_classes, architecture=arch)
    tcfg = TrainConfig(**{**settings.train.to_dict(), "objective": objective,
                          "seed": derive_seed(settings.seed, "train", arch, objective.value, fold)})
    model0 = Model.init(mcfg, make_rng(derive_seed(settings.seed, "init", arch, objective.value, fold)))
    model, history = train_fold(model0, cohort, split, tcfg)

    config = {"model": mcfg.to_dict(), "train": tcfg.to_dict(), "fold": fold, "folds": settings.folds,
              "validation_fraction": settings.validation_fraction, "seed": settings.seed,
              "split": _split_to_json(split)}
    atomic_write_text(directory / "config.json", dump_json(config))
    metrics = "".join(json.dumps(e, sort_keys=True) + "\n" for e in history.epochs())
    atomic_write_text(directory / "metrics.jsonl", metrics)
    atomic_write_text(directory / "history.json", dump_json({
        "best_epoch": history.best_epoch, "stopped_early": history.stopped_early,
        "clipped_steps": history.clipped_steps, "epochs_run": len(history.train_loss)}))
    model.save(directory / "checkpoint.npz")
    outputs = [directory / n for n in ("config.json", "metrics.jsonl", "history.json", "checkpoint.npz")]
    outputs += write_run_outputs(model, cohort, split, objective, directory)
    write_manifest(directory, "train", config, [cohort_path], [p.name for p in outputs], settings.seed, started)
    return directory


def _train_job(args):
    cohort_path, arch, objective, fold, split, settings, out = args
    cohort = Cohort.load(cohort_path)
    return str(train_one(cohort, arch, objective, fold, split, settings, out, cohort_path))


def train_all(cohort_path, architectures: Iterable[str], objectives: Iterable[str], settings: RunSettings,
              out, jobs: int = 1, resume: bool = True) -> list:
    """Train every (architecture, objective, fold); completed runs are skipped when ``resume``."""
    cohort = Cohort.load(cohort_path)
    splits = cohort_splits(len(cohort), settings)
    todo, done = [], []
    for arch in architectures:
        for objective in objectives:
            for k, split in enumerate(splits):
                d = run_dir(out, arch, objective, k)
                if resume and is_complete(d):
                    done.append(str(d))
                    continue
                todo.append((str(cohort_path), arch, objective, k, split, settings, str(out)))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done += list(pool.map(_train_job, todo))
    else:
        for job in todo:
            _, arch, objective, k, split, _, _ = job
            log.info("training %s/%s fold %d", arch, objective, k)
            done.append(str(train_one(cohort, arch, objective, k, split, settings, out, str(cohort_path))))
    return sorted(done)


# -- collecting runs for evaluation ---------------------------------------------

def find_runs(run_root, architectures: Iterable[str], objective: str, folds: int):
    """Per architecture, the list of complete run directories (``None`` for missing folds)."""
    found = {}
    for arch in architectures:
        found[arch] = []
        for k in range(folds):
            d = run_dir(run_root, arch, objective, k)
            found[arch].append(d if is_complete(d) else None)
    return found


def embedding_pairs(runs: dict) -> dict:
    return {a: [None if d is None else (d / "embeddings_train.tsv", d / "embeddings_test.tsv") for d in ds]
            for a, ds in runs.items()}


def prediction_files(runs: dict) -> dict:
    return {a: [None if d is None else d / "predictions_test.tsv" for d in ds] for a, ds in runs.items()}


def available_architectures(run_root, objective: str) -> list:
    return [a for a in ARCHITECTURES if (Path(run_root) / a / objective).is_dir()]
