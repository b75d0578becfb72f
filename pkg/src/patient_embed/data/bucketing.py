"""Turn one admission into a fixed 72 x D matrix.

Events in the first ``window_hours`` are averaged (continuous) or flagged
(occurrence) per one-hour bucket, continuous gaps are forward-filled and any
leading gap gets the admission's own mean (or median). The static and
demographic slice is appended to every time step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .icd import stage_from_codes
from .records import CATEGORICAL, CONTINUOUS, AdmissionRecord, FeatureSchema, SchemaError

log = logging.getLogger(__name__)

WINDOW_HOURS = 72
BUCKET_HOURS = 1.0
# first 72 h are the input; deaths before the end of the 2 h prediction window are excluded
DEFAULT_MORTALITY_EXCLUDE_HOURS = 74.0
PREDICTING = "predicting"
CLUSTERING = "clustering"


@dataclass
class BucketedSequence:
    admission_id: str
    subject_id: str
    features: np.ndarray  # (T, D)
    raw_mask: np.ndarray  # (T, D_dynamic), uint8
    delta_t: np.ndarray  # (T,)
    stage_class: int  # -1 when the ICD code is not in the stage table
    mortality: int  # -1 when excluded from the mortality task

    def label(self, mode: str) -> int:
        if mode == PREDICTING:
            return self.mortality
        if mode == CLUSTERING:
            return self.stage_class
        raise ValueError(f"unknown mode {mode!r}")


def bucketize(rec: AdmissionRecord, schema: FeatureSchema, window_hours: int = WINDOW_HOURS,
              bucket_hours: float = BUCKET_HOURS):
    """Per-bucket aggregates and raw-observation mask.

    Returns ``(values, mask)``; ``values`` is NaN for continuous buckets
    without data, occurrence columns are always 0/1.
    """
    n_buckets = int(round(window_hours / bucket_hours))
    index = schema.dynamic_index
    D = len(schema.dynamic)
    continuous = np.array([f.kind == CONTINUOUS for f in schema.dynamic], dtype=bool)
    cols, offs, vals = [], [], []
    for ev in rec.events:
        j = index.get(ev.feature_id)
        if j is None:
            raise SchemaError(f"{rec.admission_id}: unknown feature id {ev.feature_id!r}")
        if continuous[j] and ev.value is None:
            raise SchemaError(f"{rec.admission_id}: continuous feature {ev.feature_id} without a value")
        cols.append(j)
        offs.append(ev.offset_hours)
        vals.append(0.0 if ev.value is None else ev.value)
    cols = np.asarray(cols, dtype=np.int64)
    offs = np.asarray(offs, dtype=np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    keep = offs < window_hours
    cols, offs, vals = cols[keep], offs[keep], vals[keep]
    rows = (offs // bucket_hours).astype(np.int64)
    sums = np.zeros((n_buckets, D))
    counts = np.zeros((n_buckets, D), dtype=np.int64)
    np.add.at(sums, (rows, cols), vals)
    np.add.at(counts, (rows, cols), 1)
    mask = (counts > 0).astype(np.uint8)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts
    values = np.where(continuous, np.where(counts > 0, means, np.nan), mask.astype(np.float64))
    return values, mask


def impute(values: np.ndarray, mask: np.ndarray, schema: FeatureSchema, strategy: str = "mean",
           admission_id: str = "") -> tuple[np.ndarray, list]:
    """Forward fill, then fill leading gaps from the admission's own statistics.

    Returns the completed matrix and a provenance list naming the continuous
    features that had no observation at all and fell back to the schema
    default.
    """
    if strategy not in ("mean", "median"):
        raise ValueError(f"unknown imputation strategy {strategy!r}")
    out = np.array(values, dtype=np.float64, copy=True)
    provenance = []
    for j, f in enumerate(schema.dynamic):
        if f.kind != CONTINUOUS:
            continue
        col = out[:, j]
        observed = col[mask[:, j] > 0]
        if observed.size == 0:
            col[:] = f.default
            provenance.append(f"{admission_id}: {f.id} never observed, filled with default {f.default}")
            continue
        # forward fill: index of the latest observed row at or before t
        seen = ~np.isnan(col)
        last = np.maximum.accumulate(np.where(seen, np.arange(col.size), -1))
        filled = np.where(last >= 0, col[np.maximum(last, 0)], np.nan)
        col[:] = filled
        fill = np.mean(observed) if strategy == "mean" else np.median(observed)
        col[np.isnan(col)] = fill
    return out, provenance


def compute_delta_t(mask: np.ndarray) -> np.ndarray:
    """Hours since the last bucket with any raw observation.

    Admission time counts as an observation at index 0 and bucket ``b`` sits
    at index ``b + 1``, so ``delta_t[t]`` is ``t + 1`` minus the latest index
    ``<= t`` that was observed.
    """
    observed = np.asarray(mask).reshape(len(mask), -1).any(axis=1)
    steps = np.arange(1, observed.size + 1)
    last_obs = np.maximum.accumulate(np.where(observed, steps, 0))
    before = np.concatenate([[0], last_obs[:-1]])
    return (steps - before).astype(np.float64)


def static_vector(rec: AdmissionRecord, schema: FeatureSchema) -> np.ndarray:
    parts = []
    for f in schema.static:
        v = rec.static_features.get(f.id, f.default)
        if f.kind == CATEGORICAL:
            if v not in f.vocabulary:
                raise SchemaError(f"{rec.admission_id}: {f.id}={v!r} not in vocabulary {list(f.vocabulary)}")
            parts += [1.0 if v == cat else 0.0 for cat in f.vocabulary]
        else:
            if v is None:
                raise SchemaError(f"{rec.admission_id}: missing static feature {f.id}")
            parts.append(float(v))
    if rec.sex not in schema.sex_vocabulary:
        raise SchemaError(f"{rec.admission_id}: sex {rec.sex!r} not in vocabulary {list(schema.sex_vocabulary)}")
    parts.append(float(rec.age))
    parts += [1.0 if rec.sex == s else 0.0 for s in schema.sex_vocabulary]
    return np.asarray(parts, dtype=np.float64)


def mortality_label(rec: AdmissionRecord, exclude_before_hours: float = DEFAULT_MORTALITY_EXCLUDE_HOURS) -> int:
    if rec.mortality and rec.mortality_offset_hours < exclude_before_hours:
        return -1
    return rec.mortality


def assemble(rec: AdmissionRecord, dynamic: np.ndarray, mask: np.ndarray, schema: FeatureSchema,
             exclude_before_hours: float = DEFAULT_MORTALITY_EXCLUDE_HOURS) -> BucketedSequence:
    if dynamic.shape[1] != len(schema.dynamic) or np.isnan(dynamic).any():
        raise SchemaError(f"{rec.admission_id}: dynamic block does not match the schema or is incomplete")
    tail = static_vector(rec, schema)
    T = dynamic.shape[0]
    features = np.concatenate([dynamic, np.broadcast_to(tail, (T, tail.size))], axis=1)
    stage = stage_from_codes(rec.icd_codes)
    return BucketedSequence(
        admission_id=rec.admission_id,
        subject_id=rec.subject_id,
        features=features,
        raw_mask=mask.astype(np.uint8),
        delta_t=compute_delta_t(mask),
        stage_class=-1 if stage is None else stage,
        mortality=mortality_label(rec, exclude_before_hours),
    )


def preprocess_record(rec: AdmissionRecord, schema: FeatureSchema, strategy: str = "mean",
                      exclude_before_hours: float = DEFAULT_MORTALITY_EXCLUDE_HOURS,
                      provenance: Optional[list] = None) -> BucketedSequence:
    values, mask = bucketize(rec, schema)
    dynamic, prov = impute(values, mask, schema, strategy, rec.admission_id)
    if provenance is not None:
        provenance.extend(prov)
    for line in prov:
        log.debug(line)
    return assemble(rec, dynamic, mask, schema, exclude_before_hours)
