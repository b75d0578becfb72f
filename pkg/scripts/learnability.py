"""Held-out stage accuracy per architecture on the two diagnostic cohorts.

``separable``: stage sets a disjoint, noise-free lab level, so every encoder
should classify stages almost perfectly.
``gap``: lab values carry no stage information; only the spacing between lab
panels does, which the time-aware cell can read from the elapsed-time input.

    python scripts/learnability.py --cohort gap --out /tmp/gap
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from patient_embed.data import SyntheticSpec, generate_synthetic_cohort, schema_for
from patient_embed.evaluation import run_intrinsic
from patient_embed.pipeline import (ModelDims, RunSettings, embedding_pairs, find_runs, preprocess, train_all)
from patient_embed.training import TrainConfig

COHORTS = {"separable": SyntheticSpec.separable, "gap": SyntheticSpec.gap_signal}


def stage_accuracy(kind: str, out, archs=("lstm", "attn", "tlstm"), size: int = 500, seed: int = 0,
                   max_epochs: int = 40, patience: int = 10, hidden: int = 16, tsne_iterations: int = 300) -> dict:
    """Per-architecture list of held-out fold accuracies."""
    out = Path(out)
    spec = COHORTS[kind](size=size, seed=seed)
    cohort, _, _ = preprocess(generate_synthetic_cohort(spec), schema_for(spec))
    out.mkdir(parents=True, exist_ok=True)
    cohort.save(out / "cohort.npz")
    settings = RunSettings(dims=ModelDims(hidden, hidden, hidden),
                           train=TrainConfig(max_epochs=max_epochs, patience=patience), seed=seed)
    train_all(out / "cohort.npz", archs, ["stage"], settings, out / "runs")
    runs = find_runs(out / "runs", archs, "stage", settings.folds)
    report = run_intrinsic(embedding_pairs(runs), iterations=tsne_iterations, seed=seed, n_folds=settings.folds)
    return {a: [r["accuracy"] for r in report.rows if r["architecture"] == a] for a in archs}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cohort", choices=sorted(COHORTS), default="gap")
    p.add_argument("--out")
    p.add_argument("--arch", nargs="+", default=["lstm", "attn", "tlstm"])
    p.add_argument("--size", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=40)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--hidden", type=int, default=16)
    args = p.parse_args(argv)
    out = args.out or tempfile.mkdtemp(prefix=f"learn_{args.cohort}_")
    t0 = time.time()
    acc = stage_accuracy(args.cohort, out, args.arch, args.size, args.seed, args.max_epochs, args.patience,
                         args.hidden)
    for arch, values in acc.items():
        print(f"{arch:6s} mean {np.mean(values):.3f}  folds " + " ".join(f"{v:.3f}" for v in values))
    print(f"{time.time() - t0:.0f} s, runs under {out}")
    (Path(out) / "accuracy.json").write_text(json.dumps(acc, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
