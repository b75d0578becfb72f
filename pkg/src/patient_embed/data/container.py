"""Preprocessed cohort: stacked bucketed sequences in one ``.npz`` file."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bucketing import BucketedSequence
from .records import FeatureSchema

CONTAINER_VERSION = 1


class SchemaMismatch(ValueError):
    pass


@dataclass
class Cohort:
    admission_ids: np.ndarray  # (N,) str
    subject_ids: np.ndarray  # (N,) str
    features: np.ndarray  # (N, T, D)
    raw_mask: np.ndarray  # (N, T, D_dyn) uint8
    delta_t: np.ndarray  # (N, T)
    stage: np.ndarray  # (N,) int, -1 = not in stage task
    mortality: np.ndarray  # (N,) int, -1 = not in mortality task
    schema_hash: str
    feature_names: tuple = ()

    def __len__(self) -> int:
        return len(self.admission_ids)

    @property
    def input_dim(self) -> int:
        return self.features.shape[-1]

    @classmethod
    def from_sequences(cls, seqs: Sequence[BucketedSequence], schema: FeatureSchema) -> "Cohort":
        if not seqs:
            raise ValueError("cannot build an empty cohort")
        return cls(
            admission_ids=np.array([s.admission_id for s in seqs], dtype=str),
            subject_ids=np.array([s.subject_id for s in seqs], dtype=str),
            features=np.stack([s.features for s in seqs]).astype(np.float64),
            raw_mask=np.stack([s.raw_mask for s in seqs]).astype(np.uint8),
            delta_t=np.stack([s.delta_t for s in seqs]).astype(np.float64),
            stage=np.array([s.stage_class for s in seqs], dtype=np.int64),
            mortality=np.array([s.mortality for s in seqs], dtype=np.int64),
            schema_hash=schema.hash(),
            feature_names=tuple(schema.feature_names()),
        )

    def sequence(self, i: int) -> BucketedSequence:
        return BucketedSequence(str(self.admission_ids[i]), str(self.subject_ids[i]), self.features[i],
                                self.raw_mask[i], self.delta_t[i], int(self.stage[i]), int(self.mortality[i]))

    def labels(self, objective_task: str) -> np.ndarray:
        return self.stage if objective_task == "stage" else self.mortality

    def save(self, path) -> None:
        meta = {"version": CONTAINER_VERSION, "schema_hash": self.schema_hash,
                "feature_names": list(self.feature_names)}
        buf = io.BytesIO()
        np.savez(buf, admission_ids=self.admission_ids, subject_ids=self.subject_ids, features=self.features,
                 raw_mask=self.raw_mask, delta_t=self.delta_t, stage=self.stage, mortality=self.mortality,
                 meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path, schema: FeatureSchema = None) -> "Cohort":
        """Load a container; if ``schema`` is given its hash must match."""
        with np.load(path) as z:
            meta = json.loads(z["meta"].tobytes().decode())
            if meta.get("version") != CONTAINER_VERSION:
                raise SchemaMismatch(f"unsupported container version {meta.get('version')}")
            if schema is not None and schema.hash() != meta["schema_hash"]:
                raise SchemaMismatch(f"{path}: container was built with a different schema")
            return cls(z["admission_ids"], z["subject_ids"], z["features"], z["raw_mask"], z["delta_t"],
                       z["stage"], z["mortality"], meta["schema_hash"], tuple(meta["feature_names"]))
