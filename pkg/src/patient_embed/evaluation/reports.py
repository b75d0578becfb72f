"""Per-fold intrinsic and extrinsic evaluation, aggregated into reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..files import read_embeddings, read_predictions
from ..model import ARCH_LABELS, ArchitectureKind
from ..numerics import derive_seed, make_rng
from .logreg import fit_logreg
from .metrics import accuracy, auprc, auroc, davies_bouldin, threshold
from .tsne import tsne_project

DIRECT = "DirectPrediction"
DOWNSTREAM = "DownstreamLR"
STAGE = "StageClustering"

INTRINSIC_METRICS = ("dbi", "accuracy", "dbi_raw")
EXTRINSIC_METRICS = ("auroc", "accuracy", "auprc")

# Values published for this protocol on the restricted MIMIC-IV CKD cohort.
# Shown for context only; synthetic cohorts are not expected to match them.
REFERENCE_INTRINSIC = {
    "lstm": {"dbi": "15.85 ± 20.01", "accuracy": "0.63 ± 0.05"},
    "attn": {"dbi": "20.72 ± 28.10", "accuracy": "0.68 ± 0.02"},
    "tlstm": {"dbi": "9.91 ± 6.18", "accuracy": "0.74 ± 0.04"},
}
REFERENCE_EXTRINSIC = {
    "lstm": {DIRECT: {"auroc": 0.88, "accuracy": 0.74, "auprc": 0.83},
             DOWNSTREAM: {"auroc": 0.89, "accuracy": 0.83, "auprc": 0.89}},
    "attn": {DIRECT: {"auroc": 0.89, "accuracy": 0.72, "auprc": 0.82},
             DOWNSTREAM: {"auroc": 0.90, "accuracy": 0.82, "auprc": 0.89}},
    "tlstm": {DIRECT: {"auroc": 0.88, "accuracy": 0.75, "auprc": 0.82},
              DOWNSTREAM: {"auroc": 0.90, "accuracy": 0.82, "auprc": 0.90}},
}


class InputError(ValueError):
    """Missing folds or mismatched configurations."""


def mean_sd(values) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1; 0 for a single value)."""
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass
class EvalReport:
    kind: str  # "intrinsic" | "extrinsic"
    rows: list = field(default_factory=list)  # {architecture, configuration, fold, <metrics>}
    reference: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    @property
    def metric_names(self) -> tuple:
        return INTRINSIC_METRICS if self.kind == "intrinsic" else EXTRINSIC_METRICS

    def groups(self) -> list:
        seen = []
        for r in self.rows:
            key = (r["architecture"], r["configuration"])
            if key not in seen:
                seen.append(key)
        return seen

    def summary(self) -> list:
        out = []
        for arch, conf in self.groups():
            rows = [r for r in self.rows if r["architecture"] == arch and r["configuration"] == conf]
            entry = {"architecture": arch, "configuration": conf, "n_folds": len(rows)}
            for m in self.metric_names:
                mu, sd = mean_sd([r[m] for r in rows])
                entry[f"{m}_mean"] = mu
                entry[f"{m}_sd"] = sd
            out.append(entry)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": self.rows, "summary": self.summary(), "reference": self.reference,
                "settings": self.settings}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["kind"], d["rows"], d.get("reference", {}), d.get("settings", {}))

    def render(self) -> str:
        return render_intrinsic(self) if self.kind == "intrinsic" else render_extrinsic(self)


def _label(arch: str) -> str:
    return ARCH_LABELS[ArchitectureKind(arch)]


def render_intrinsic(report: EvalReport) -> str:
    archs = [a for a, _ in report.groups()]
    folds = sorted({r["fold"] for r in report.rows})
    cell = 18
    head = "Fold".ljust(6) + "".join(_label(a)[:2 * cell - 1].ljust(2 * cell) for a in archs)
    sub = " " * 6 + "".join("DBI".ljust(cell) + "Accuracy".ljust(cell) for _ in archs)
    lines = ["Davies-Bouldin index (2-D t-SNE of test embeddings) and stage accuracy (logistic regression)",
             head, sub, "-" * len(sub)]
    by = {(r["architecture"], r["fold"]): r for r in report.rows}
    for f in folds:
        line = str(f).ljust(6)
        for a in archs:
            r = by.get((a, f))
            line += (f"{r['dbi']:.2f}".ljust(cell) + f"{r['accuracy']:.3f}".ljust(cell)) if r else "-".ljust(2 * cell)
        lines.append(line)
    lines.append("-" * len(sub))
    summ = {s["architecture"]: s for s in report.summary()}
    line = "Mean".ljust(6)
    for a in archs:
        s = summ[a]
        line += f"{s['dbi_mean']:.2f} ± {s['dbi_sd']:.2f}".ljust(cell) + \
            f"{s['accuracy_mean']:.3f} ± {s['accuracy_sd']:.3f}".ljust(cell)
    lines.append(line)
    if report.reference:
        lines.append("")
        lines.append("Reference (published, MIMIC-IV CKD cohort; not reproducible on synthetic data):")
        for a in archs:
            ref = report.reference.get(a)
            if ref:
                lines.append(f"  {_label(a)}: DBI {ref['dbi']}, accuracy {ref['accuracy']}")
    return "\n".join(lines) + "\n"


def render_extrinsic(report: EvalReport) -> str:
    cell = 10
    head = "Model".ljust(28) + DIRECT.ljust(3 * cell) + DOWNSTREAM.ljust(3 * cell)
    sub = " " * 28 + ("AUROC".ljust(cell) + "Accuracy".ljust(cell) + "AUPRC".ljust(cell)) * 2
    lines = ["In-ICU mortality prediction (mean over folds)", head, sub, "-" * len(sub)]
    summ = {(s["architecture"], s["configuration"]): s for s in report.summary()}
    archs = []
    for a, _ in report.groups():
        if a not in archs:
            archs.append(a)
    for a in archs:
        line = _label(a).ljust(28)
        for conf in (DIRECT, DOWNSTREAM):
            s = summ.get((a, conf))
            for m in EXTRINSIC_METRICS:
                line += (f"{s[m + '_mean']:.3f}" if s else "-").ljust(cell)
        lines.append(line)
    lines.append("")
    lines.append("Per-fold standard deviations are in the JSON report.")
    if report.reference:
        lines.append("Reference (published, MIMIC-IV CKD cohort; not reproducible on synthetic data):")
        for a in archs:
            ref = report.reference.get(a)
            if ref:
                d, s = ref[DIRECT], ref[DOWNSTREAM]
                lines.append(f"  {_label(a)}: direct {d['auroc']:.2f}/{d['accuracy']:.2f}/{d['auprc']:.2f}, "
                             f"downstream {s['auroc']:.2f}/{s['accuracy']:.2f}/{s['auprc']:.2f}")
    return "\n".join(lines) + "\n"


# -- intrinsic ------------------------------------------------------------------

def evaluate_stage_fold(train_file, test_file, perplexity: float, iterations: int, rng, l2: float = 1e-3):
    """One fold: t-SNE + DBI on test embeddings, LR stage accuracy (train -> test).

    Returns ``(metrics, (admission_ids, stages, points))``.
    """
    _, tr_stage, _, tr_Z = read_embeddings(train_file)
    te_ids, te_stage, _, te_Z = read_embeddings(test_file)
    tr = tr_stage >= 0
    te = te_stage >= 0
    te_ids, te_stage, te_Z = te_ids[te], te_stage[te], te_Z[te]
    if te_Z.shape[0] < 4:
        raise InputError(f"{test_file}: too few staged test embeddings")
    perp = min(perplexity, (te_Z.shape[0] - 1) / 3.0)
    proj = tsne_project(te_Z, perp, iterations, rng)
    lr = fit_logreg(tr_Z[tr], tr_stage[tr], l2=l2, trained_on=str(train_file))
    metrics = {
        "dbi": davies_bouldin(proj.points, te_stage),
        "dbi_raw": davies_bouldin(te_Z, te_stage),
        "accuracy": accuracy(lr.predict(te_Z), te_stage),
        "perplexity": perp,
    }
    return metrics, (te_ids, te_stage, proj.points)


def run_intrinsic(fold_files: Mapping[str, Sequence], perplexity: float = 30.0, iterations: int = 1000,
                  seed: int = 0, n_folds: int = None, projections: dict = None) -> EvalReport:
    """``fold_files`` maps architecture -> list of (train_embeddings, test_embeddings) per fold.

    A ``None`` entry marks a missing fold. If ``projections`` is a dict it
    receives the 2-D points keyed by (architecture, fold).
    """
    missing = [f"{a}/fold{k}" for a, files in fold_files.items() for k, f in enumerate(files) if f is None]
    if n_folds is not None:
        missing += [f"{a}/fold{k}" for a, files in fold_files.items() for k in range(len(files), n_folds)]
    if missing:
        raise InputError("missing folds: " + ", ".join(sorted(missing)))
    report = EvalReport("intrinsic", reference={a: REFERENCE_INTRINSIC[a] for a in fold_files if a in REFERENCE_INTRINSIC},
                        settings={"perplexity": perplexity, "iterations": iterations, "seed": seed})
    for arch, files in fold_files.items():
        for k, (train_file, test_file) in enumerate(files):
            rng = make_rng(derive_seed(seed, "tsne", arch, k))
            metrics, proj = evaluate_stage_fold(train_file, test_file, perplexity, iterations, rng)
            report.rows.append({"architecture": arch, "configuration": STAGE, "fold": k, **metrics})
            if projections is not None:
                projections[(arch, k)] = proj
    return report


# -- extrinsic ------------------------------------------------------------------

def score_binary(scores, labels) -> dict:
    """Accuracy at the 0.5 threshold, AUROC and AUPRC: one path for both configurations."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    return {"accuracy": accuracy(threshold(scores), labels), "auroc": auroc(scores, labels),
            "auprc": auprc(scores, labels)}


def downstream_fold(train_file, test_file, l2: float = 1e-3) -> dict:
    _, _, tr_m, tr_Z = read_embeddings(train_file)
    _, _, te_m, te_Z = read_embeddings(test_file)
    tr, te = tr_m >= 0, te_m >= 0
    lr = fit_logreg(tr_Z[tr], tr_m[tr], l2=l2, trained_on=str(train_file))
    return score_binary(lr.positive_scores(te_Z[te]), te_m[te])


def direct_fold(pred_file) -> dict:
    _, mort, probs = read_predictions(pred_file)
    keep = mort >= 0
    return score_binary(probs[keep], mort[keep])


def run_extrinsic(embedding_files: Mapping[str, Sequence], direct_prediction_files: Mapping[str, Sequence],
                  n_folds: int = None) -> EvalReport:
    """``embedding_files``: arch -> [(train, test)] from stage-trained runs;
    ``direct_prediction_files``: arch -> [test predictions] from mortality-trained runs."""
    if set(embedding_files) != set(direct_prediction_files):
        raise InputError(f"configuration mismatch: embeddings for {sorted(embedding_files)}, "
                         f"direct predictions for {sorted(direct_prediction_files)}")
    missing = []
    for a in embedding_files:
        want = n_folds if n_folds is not None else max(len(embedding_files[a]), len(direct_prediction_files[a]))
        for k in range(want):
            if k >= len(embedding_files[a]) or embedding_files[a][k] is None:
                missing.append(f"{a}/stage/fold{k}")
            if k >= len(direct_prediction_files[a]) or direct_prediction_files[a][k] is None:
                missing.append(f"{a}/mortality/fold{k}")
    if missing:
        raise InputError("missing folds: " + ", ".join(sorted(missing)))
    report = EvalReport("extrinsic", reference={a: REFERENCE_EXTRINSIC[a] for a in embedding_files
                                                if a in REFERENCE_EXTRINSIC})
    for arch in embedding_files:
        for k, pred_file in enumerate(direct_prediction_files[arch]):
            report.rows.append({"architecture": arch, "configuration": DIRECT, "fold": k, **direct_fold(pred_file)})
        for k, (train_file, test_file) in enumerate(embedding_files[arch]):
            report.rows.append({"architecture": arch, "configuration": DOWNSTREAM, "fold": k,
                                **downstream_fold(train_file, test_file)})
    return report


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
