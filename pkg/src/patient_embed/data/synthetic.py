"""Synthetic CKD-like cohorts standing in for restricted ICU data.

Each admission follows a latent renal-function trajectory whose level and
decline depend on the stage. Continuous "lab panel" features are noisy
linear read-outs of that trajectory, sampled at irregular times whose mean
gap may also depend on the stage. Mortality risk rises with stage and with
the steepness of the decline.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..numerics import make_rng
from .icd import ICD_TABLE, NUM_STAGES
from .records import CATEGORICAL, CONTINUOUS, OCCURRENCE, AdmissionRecord, FeatureSchema, TimedEvent

ADMISSION_TYPES = ("emergency", "elective", "urgent")
UNMAPPED_CODE = "585.8"
_HORIZON_HOURS = 80.0


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    size: int = 500
    seed: int = 0
    n_continuous: int = 4
    n_occurrence: int = 2
    n_static: int = 2
    stage_weights: list = field(default_factory=lambda: [0.08, 0.10, 0.20, 0.15, 0.10, 0.15, 0.07, 0.15])
    level_spacing: float = 1.0  # trajectory level drop per stage
    stage_drift: float = 0.5  # extra decline over the window for the highest stage
    noise: float = 0.3  # per-observation measurement noise
    patient_sd: float = 0.3  # per-admission trajectory offset
    walk_sd: float = 0.05  # hourly random-walk increment
    gap_means: list = field(default_factory=lambda: [3.0] * NUM_STAGES)  # mean hours between lab panels
    observe_prob: float = 0.85  # chance each lab is drawn at a panel
    occurrence_rate: float = 0.08  # events per hour, stage independent
    icd9_fraction: float = 0.4
    unmapped_fraction: float = 0.0
    mortality_base_rate: float = 0.25
    hazard_stage: float = 1.0
    hazard_decline: float = 0.5
    admissions_per_subject: int = 3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if int(self.size) < 1:
            raise ConfigError("cohort size must be >= 1 (empty cohort)")
        w = np.asarray(self.stage_weights, dtype=float)
        if w.shape != (NUM_STAGES,) or (w < 0).any() or w.sum() <= 0:
            raise ConfigError(f"stage_weights must be {NUM_STAGES} non-negative numbers with a positive sum")
        g = np.asarray(self.gap_means, dtype=float)
        if g.shape != (NUM_STAGES,) or (g <= 0).any():
            raise ConfigError(f"gap_means must be {NUM_STAGES} positive numbers")
        for name in ("noise", "patient_sd", "walk_sd", "occurrence_rate", "mortality_base_rate",
                     "icd9_fraction", "unmapped_fraction"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("icd9_fraction", "unmapped_fraction", "mortality_base_rate", "observe_prob"):
            if getattr(self, name) > 1:
                raise ConfigError(f"{name} must be <= 1")
        if self.n_continuous < 1 or self.n_occurrence < 0 or self.n_static < 0 or self.admissions_per_subject < 1:
            raise ConfigError("feature counts must be non-negative (at least one continuous feature)")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic-spec keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected key-value pairs")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def separable(cls, **kw) -> "SyntheticSpec":
        """Noise-free cohort whose stages have disjoint feature levels."""
        base = dict(noise=0.0, patient_sd=0.0, walk_sd=0.0, stage_drift=0.0, level_spacing=1.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def gap_signal(cls, **kw) -> "SyntheticSpec":
        """Stage shows up only in how often labs are drawn, not in their values.

        Lab values are a per-admission constant, so the forward-filled input
        carries no trace of when panels were drawn; only elapsed time does.
        """
        base = dict(level_spacing=0.0, stage_drift=0.0, noise=0.0, walk_sd=0.0, patient_sd=0.3,
                    n_occurrence=0, n_static=0, observe_prob=1.0,
                    gap_means=[1.0, 1.5, 2.25, 3.4, 5.0, 7.5, 11.0, 16.0])
        base.update(kw)
        return cls(**base)


def schema_for(spec: SyntheticSpec) -> FeatureSchema:
    dynamic = [{"id": f"lab_{k}", "kind": CONTINUOUS, "default": 0.0} for k in range(spec.n_continuous)]
    dynamic += [{"id": f"event_{k}", "kind": OCCURRENCE} for k in range(spec.n_occurrence)]
    static = [{"id": f"static_{k}", "kind": CONTINUOUS} for k in range(spec.n_static)]
    static.append({"id": "admission_type", "kind": CATEGORICAL, "vocabulary": list(ADMISSION_TYPES)})
    return FeatureSchema(dynamic=dynamic, static=static)


def _icd_code(stage: int, rng: np.random.Generator, spec: SyntheticSpec) -> str:
    if rng.random() < spec.unmapped_fraction:
        return UNMAPPED_CODE
    icd10, icd9, _ = ICD_TABLE[stage]
    if icd9 is not None and rng.random() < spec.icd9_fraction:
        return icd9
    return icd10


def _panel_times(gap: float, rng: np.random.Generator) -> np.ndarray:
    times = []
    t = rng.uniform(0.0, gap)
    while t < _HORIZON_HOURS:
        times.append(t)
        t += max(rng.exponential(gap), 0.25)
    return np.asarray(times)


def generate_synthetic_cohort(spec: SyntheticSpec, rng: np.random.Generator = None) -> list:
    """Admission records fully determined by ``spec`` and ``rng`` (default: ``spec.seed``)."""
    spec.validate()
    if rng is None:
        rng = make_rng(spec.seed)
    weights = np.asarray(spec.stage_weights, float) / np.sum(spec.stage_weights)
    loadings = rng.uniform(0.5, 1.5, spec.n_continuous) * rng.choice([-1.0, 1.0], spec.n_continuous)
    intercepts = rng.normal(0.0, 1.0, spec.n_continuous)

    records = []
    subject = None
    remaining = 0
    for n in range(spec.size):
        if remaining == 0:
            subject = {
                "id": f"S{len(records):05d}",
                "age": float(np.clip(rng.normal(65.0, 12.0), 18.0, 95.0)),
                "sex": str(rng.choice(["F", "M"])),
                "stage": int(rng.choice(NUM_STAGES, p=weights)),
            }
            remaining = int(rng.integers(1, spec.admissions_per_subject + 1))
        remaining -= 1
        stage = subject["stage"]

        offset = rng.normal(0.0, spec.patient_sd) if spec.patient_sd > 0 else 0.0
        level = -spec.level_spacing * stage + offset
        decline = spec.stage_drift * stage / (NUM_STAGES - 1)  # drop over the window
        if decline > 0:
            decline *= rng.lognormal(0.0, 0.3)
        walk = np.cumsum(rng.normal(0.0, spec.walk_sd, int(_HORIZON_HOURS) + 1)) if spec.walk_sd > 0 else \
            np.zeros(int(_HORIZON_HOURS) + 1)

        events = []
        for t in _panel_times(spec.gap_means[stage], rng):
            r = level - decline * t / 72.0 + walk[int(t)]
            for k in range(spec.n_continuous):
                if rng.random() >= spec.observe_prob:
                    continue
                eps = rng.normal() * spec.noise if spec.noise > 0 else 0.0
                events.append(TimedEvent(f"lab_{k}", round(float(t), 4), float(loadings[k] * r + intercepts[k] + eps)))
        for k in range(spec.n_occurrence):
            if spec.occurrence_rate > 0:
                count = rng.poisson(spec.occurrence_rate * _HORIZON_HOURS)
                for t in np.sort(rng.uniform(0.0, _HORIZON_HOURS, count)):
                    events.append(TimedEvent(f"event_{k}", round(float(t), 4), None))
        events.sort(key=lambda e: (e.offset_hours, e.feature_id))

        static = {f"static_{k}": round(float(rng.normal()), 6) for k in range(spec.n_static)}
        static["admission_type"] = str(rng.choice(ADMISSION_TYPES))

        risk = spec.mortality_base_rate * np.exp(spec.hazard_stage * (stage - 3.5) / 3.5
                                                 + spec.hazard_decline * (decline - 0.25))
        p_death = float(np.clip(risk, 0.0, 0.95))
        died = rng.random() < p_death
        death_at = round(float(rng.uniform(12.0, 336.0)), 4) if died else None

        records.append(AdmissionRecord(
            subject_id=subject["id"],
            admission_id=f"A{n:06d}",
            age=round(subject["age"], 3),
            sex=subject["sex"],
            icd_code=_icd_code(stage, rng, spec),
            mortality=int(died),
            static_features=static,
            events=events,
            mortality_offset_hours=death_at,
        ))
    return records

