"""Admission records, the feature schema, and their line-delimited JSON files."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

CONTINUOUS = "continuous"
OCCURRENCE = "occurrence"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Input data does not conform to the feature schema."""


@dataclass(frozen=True)
class TimedEvent:
    feature_id: str
    offset_hours: float
    value: Optional[float] = None  # None for occurrence markers

    def __post_init__(self):
        off = float(self.offset_hours)
        if not (off >= 0.0) or off == float("inf"):
            raise SchemaError(f"event offset must be finite and >= 0, got {self.offset_hours}")


@dataclass
class AdmissionRecord:
    subject_id: str
    admission_id: str
    age: float
    sex: str
    icd_code: Union[str, list]
    mortality: int
    static_features: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    mortality_offset_hours: Optional[float] = None

    def __post_init__(self):
        self.events = [e if isinstance(e, TimedEvent) else TimedEvent(**e) for e in self.events]
        self.mortality = int(self.mortality)
        if self.mortality not in (0, 1):
            raise SchemaError(f"{self.admission_id}: mortality must be 0 or 1")
        if (self.mortality == 1) != (self.mortality_offset_hours is not None):
            raise SchemaError(f"{self.admission_id}: mortality_offset_hours present iff mortality == 1")

    @property
    def icd_codes(self) -> list:
        return [self.icd_code] if isinstance(self.icd_code, str) else list(self.icd_code)

    def to_json(self) -> str:
        d = asdict(self)
        d["events"] = [[e.feature_id, e.offset_hours, e.value] for e in self.events]
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "AdmissionRecord":
        d = json.loads(line)
        d["events"] = [TimedEvent(*e) if isinstance(e, list) else TimedEvent(**e) for e in d.get("events", [])]
        return cls(**d)


def write_admissions(path, records: Iterable[AdmissionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_admissions(path) -> Iterator[AdmissionRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield AdmissionRecord.from_json(line)
            except (TypeError, KeyError, json.JSONDecodeError) as exc:
                raise SchemaError(f"{path}:{lineno}: malformed admission record ({exc})") from exc


@dataclass(frozen=True)
class DynamicFeature:
    id: str
    kind: str  # continuous | occurrence
    default: float = 0.0  # cohort fallback for a continuous feature never observed in an admission


@dataclass(frozen=True)
class StaticFeature:
    id: str
    kind: str  # continuous | categorical
    vocabulary: tuple = ()
    default: Optional[float] = None


@dataclass(frozen=True)
class FeatureSchema:
    dynamic: tuple
    static: tuple = ()
    sex_vocabulary: tuple = ("F", "M")

    def __post_init__(self):
        object.__setattr__(self, "dynamic", tuple(
            f if isinstance(f, DynamicFeature) else DynamicFeature(**f) for f in self.dynamic))
        object.__setattr__(self, "static", tuple(
            f if isinstance(f, StaticFeature) else StaticFeature(**{**f, "vocabulary": tuple(f.get("vocabulary", ()))})
            for f in self.static))
        object.__setattr__(self, "sex_vocabulary", tuple(self.sex_vocabulary))
        ids = [f.id for f in self.dynamic] + [f.id for f in self.static]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate feature ids in schema")
        for f in self.dynamic:
            if f.kind not in (CONTINUOUS, OCCURRENCE):
                raise SchemaError(f"dynamic feature {f.id}: unknown kind {f.kind!r}")
        for f in self.static:
            if f.kind not in (CONTINUOUS, CATEGORICAL):
                raise SchemaError(f"static feature {f.id}: unknown kind {f.kind!r}")
            if f.kind == CATEGORICAL and not f.vocabulary:
                raise SchemaError(f"categorical feature {f.id} needs a vocabulary")

    @property
    def dynamic_index(self) -> dict:
        return {f.id: j for j, f in enumerate(self.dynamic)}

    def feature_names(self) -> list:
        names = [f.id for f in self.dynamic]
        for f in self.static:
            if f.kind == CATEGORICAL:
                names += [f"{f.id}={v}" for v in f.vocabulary]
            else:
                names.append(f.id)
        names.append("age")
        names += [f"sex={v}" for v in self.sex_vocabulary]
        return names

    @property
    def input_dim(self) -> int:
        return len(self.feature_names())

    def to_dict(self) -> dict:
        return {
            "dynamic": [asdict(f) for f in self.dynamic],
            "static": [{**asdict(f), "vocabulary": list(f.vocabulary)} for f in self.static],
            "sex_vocabulary": list(self.sex_vocabulary),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(dynamic=d["dynamic"], static=d.get("static", ()), sex_vocabulary=d.get("sex_vocabulary", ("F", "M")))

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"{path}: malformed schema ({exc})") from exc
