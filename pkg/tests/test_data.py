import numpy as np
import pytest
from hypothesis import given, strategies as st

from patient_embed.data import (AdmissionRecord, Cohort, CohortSplit, ConfigError, DynamicFeature, FeatureSchema,
                                SchemaError, SchemaMismatch, StaticFeature, SyntheticSpec, TimedEvent, assemble,
                                bucketize, compute_delta_t, fold_sizes, generate_synthetic_cohort, impute,
                                kfold_split, map_icd_to_stage, oversample_minority, preprocess_record,
                                read_admissions, schema_for, stage_from_codes, write_admissions)
from patient_embed.data.bucketing import CLUSTERING, PREDICTING
from patient_embed.evaluation import fit_logreg
from patient_embed.numerics import make_rng
from patient_embed.pipeline import preprocess

TABLE = {
    "N18.1": 0, "585.1": 0, "N18.2": 1, "585.2": 1, "N18.3": 2, "585.3": 2, "N18.4": 3, "585.4": 3,
    "N18.5": 4, "585.5": 4, "N18.6": 5, "585.6": 5, "N18.8": 6, "N18.9": 7, "585.9": 7,
}

SCHEMA = FeatureSchema(
    dynamic=[DynamicFeature("lab", "continuous", default=1.5), DynamicFeature("lab2", "continuous"),
             DynamicFeature("vent", "occurrence")],
    static=[StaticFeature("weight", "continuous"), StaticFeature("adm", "categorical", ("er", "elective"))],
)


def record(events, **kw):
    base = dict(subject_id="s1", admission_id="a1", age=60.0, sex="F", icd_code="N18.3", mortality=0,
                static_features={"weight": 80.0, "adm": "er"})
    base.update(kw)
    return AdmissionRecord(events=events, **base)


@pytest.mark.parametrize("code,cls", sorted(TABLE.items()))
def test_icd_table(code, cls):
    assert map_icd_to_stage(code) == cls
    assert map_icd_to_stage(code.replace(".", "")) == cls
    assert map_icd_to_stage(code.lower()) == cls


def test_icd_unmapped():
    assert len(TABLE) == 15
    assert map_icd_to_stage("585.8") is None
    assert map_icd_to_stage("I10") is None
    assert stage_from_codes(["585.8"]) is None


def test_multiple_codes_resolution():
    assert stage_from_codes(["N18.9", "N18.2", "585.4"]) == 3
    assert stage_from_codes(["N18.9", "N18.8"]) == 6
    assert stage_from_codes(["N18.9", "I10"]) == 7
    assert stage_from_codes(["N18.6", "N18.8"]) == 5


def test_bucketize_means_and_indicators():
    rec = record([TimedEvent("lab", 0.5, 4.0), TimedEvent("lab", 0.9, 6.0), TimedEvent("vent", 3.2),
                  TimedEvent("lab", 72.0, 100.0)])
    values, mask = bucketize(rec, SCHEMA)
    assert values.shape == (72, 3)
    assert values[0, 0] == 5.0 and mask[0, 0] == 1
    assert mask[:, 0].sum() == 1  # the 72 h event is discarded
    assert values[3, 2] == 1.0 and values[:, 2].sum() == 1.0
    assert not mask[:, 1].any() and np.isnan(values[:, 1]).all()


def test_bucketize_unknown_feature():
    with pytest.raises(SchemaError):
        bucketize(record([TimedEvent("nope", 1.0, 2.0)]), SCHEMA)


def _schema1():
    return FeatureSchema(dynamic=[DynamicFeature("x", "continuous", default=9.0)])


def test_impute_hand_case():
    values = np.array([[np.nan], [3.0], [np.nan], [5.0]])
    mask = np.array([[0], [1], [0], [1]])
    out, prov = impute(values, mask, _schema1())
    assert np.array_equal(out[:, 0], [4.0, 3.0, 3.0, 5.0])
    assert prov == []
    med, _ = impute(np.array([[np.nan], [1.0], [2.0], [9.0]]), np.array([[0], [1], [1], [1]]), _schema1(), "median")
    assert med[0, 0] == 2.0


def test_impute_never_observed_uses_default():
    out, prov = impute(np.full((4, 1), np.nan), np.zeros((4, 1)), _schema1(), admission_id="a9")
    assert np.array_equal(out[:, 0], [9.0] * 4)
    assert len(prov) == 1 and "a9" in prov[0]


@given(st.lists(st.one_of(st.none(), st.floats(-100, 100)), min_size=1, max_size=72))
def test_impute_leaves_no_gaps_and_keeps_observations(col):
    values = np.array([[np.nan if v is None else v] for v in col])
    mask = (~np.isnan(values)).astype(np.uint8)
    out, _ = impute(values, mask, _schema1())
    assert not np.isnan(out).any()
    assert np.array_equal(out[mask[:, 0] == 1], values[mask[:, 0] == 1])


def test_delta_t_hand_cases():
    mask = np.zeros((4, 2), np.uint8)
    mask[0, 1] = 1
    assert np.array_equal(compute_delta_t(mask), [1, 1, 2, 3])
    assert np.array_equal(compute_delta_t(np.zeros((72, 3))), np.arange(1, 73))
    assert np.array_equal(compute_delta_t(np.ones((72, 3))), np.ones(72))


@given(st.lists(st.booleans(), min_size=1, max_size=72))
def test_delta_t_matches_definition(obs):
    expected, last = [], 0
    for t, o in enumerate(obs):
        expected.append(t + 1 - last)
        if o:
            last = t + 1
    assert np.array_equal(compute_delta_t(np.array(obs)[:, None]), expected)


def test_assemble_layout():
    schema = FeatureSchema(dynamic=[DynamicFeature(f"d{i}", "continuous") for i in range(3)],
                           static=[StaticFeature("w", "continuous"), StaticFeature("h", "continuous")],
                           sex_vocabulary=("M",))
    rec = record([], static_features={"w": 70.0, "h": 1.8}, sex="M", mortality=1, mortality_offset_hours=100.0)
    seq = assemble(rec, np.zeros((72, 3)), np.zeros((72, 3)), schema)
    assert seq.features.shape == (72, 7)
    assert np.array_equal(seq.features[:, 3:], np.tile([70.0, 1.8, 60.0, 1.0], (72, 1)))
    assert seq.label(CLUSTERING) == 2 and seq.label(PREDICTING) == 1


def test_same_patient_same_demographics():
    a = preprocess_record(record([TimedEvent("lab", 1.0, 2.0)]), SCHEMA)
    b = preprocess_record(record([TimedEvent("lab2", 5.0, 2.0)], admission_id="a2"), SCHEMA)
    assert np.array_equal(a.features[:, 3:], b.features[:, 3:])


def test_static_vocabulary_violation():
    with pytest.raises(SchemaError):
        preprocess_record(record([], static_features={"weight": 1.0, "adm": "walk-in"}), SCHEMA)


def test_early_death_excluded_from_mortality_only():
    seq = preprocess_record(record([], mortality=1, mortality_offset_hours=50.0), SCHEMA)
    assert seq.mortality == -1 and seq.stage_class == 2
    late = preprocess_record(record([], mortality=1, mortality_offset_hours=74.0), SCHEMA)
    assert late.mortality == 1


def test_record_validation():
    with pytest.raises(SchemaError):
        TimedEvent("lab", -1.0, 1.0)
    with pytest.raises(SchemaError):
        record([], mortality=1)


def test_admissions_round_trip(tmp_path):
    recs = generate_synthetic_cohort(SyntheticSpec(size=20, seed=2))
    write_admissions(tmp_path / "a.jsonl", recs)
    assert list(read_admissions(tmp_path / "a.jsonl")) == recs


def test_synthetic_deterministic(tmp_path):
    spec = SyntheticSpec(size=200, seed=7)
    write_admissions(tmp_path / "a.jsonl", generate_synthetic_cohort(spec))
    write_admissions(tmp_path / "b.jsonl", generate_synthetic_cohort(spec))
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_default_spec_has_all_stages():
    recs = generate_synthetic_cohort(SyntheticSpec())
    assert len(recs) == 500
    assert {stage_from_codes(r.icd_codes) for r in recs} == set(range(8))


def test_synthetic_has_irregular_gaps():
    cohort, _, _ = preprocess(generate_synthetic_cohort(SyntheticSpec(size=30, seed=1)), schema_for(SyntheticSpec()))
    assert cohort.delta_t.max() > 1.0


def test_zero_hazard_means_no_deaths():
    recs = generate_synthetic_cohort(SyntheticSpec(size=200, seed=1, mortality_base_rate=0.0))
    assert all(r.mortality == 0 for r in recs)


@pytest.mark.parametrize("bad", [{"size": 0}, {"mortality_base_rate": -0.1}, {"stage_weights": [0.0] * 8},
                                 {"noise": -1.0}])
def test_invalid_spec(bad):
    with pytest.raises(ConfigError):
        SyntheticSpec(**bad).validate()


def test_separable_spec_raw_means_are_linearly_separable():
    spec = SyntheticSpec.separable(size=300, seed=5)
    cohort, _, _ = preprocess(generate_synthetic_cohort(spec), schema_for(spec))
    X = cohort.features.mean(axis=1)
    y = cohort.stage
    keep = y >= 0
    model = fit_logreg(X[keep], y[keep], l2=1e-6, max_iter=20000)
    assert np.mean(model.predict(X[keep]) == y[keep]) == 1.0


def test_kfold_partition():
    folds = kfold_split(10, 5, 0.2, make_rng(0))
    tests = [set(f.test) for f in folds]
    assert all(len(t) == 2 for t in tests)
    assert set().union(*tests) == set(range(10))
    for f in folds:
        assert len(set(f.train) | set(f.validation) | set(f.test)) == 10
    again = kfold_split(10, 5, 0.2, make_rng(0))
    assert all(np.array_equal(a.test, b.test) and np.array_equal(a.train, b.train) for a, b in zip(folds, again))


def test_kfold_remainder_sizes():
    assert fold_sizes(11, 5) == [3, 2, 2, 2, 2]
    assert [len(f.test) for f in kfold_split(11, 5, 0.2, make_rng(1))] == [3, 2, 2, 2, 2]
    with pytest.raises(ValueError):
        kfold_split(4, 5)


def test_split_overlap_rejected():
    with pytest.raises(ValueError):
        CohortSplit(np.array([1, 2]), np.array([2]), np.array([3]))


def test_oversample(caplog):
    idx = np.arange(13)
    labels = np.array([0] * 10 + [1] * 3)
    out = oversample_minority(idx, labels, make_rng(0))
    counts = np.bincount(labels[out])
    assert counts.tolist() == [10, 10]
    assert np.array_equal(out[:13], idx)
    assert np.array_equal(out, oversample_minority(idx, labels, make_rng(0)))
    bal = np.array([0, 1, 0, 1])
    assert np.array_equal(oversample_minority(np.arange(4), bal, make_rng(0)), np.arange(4))
    single = oversample_minority(np.arange(3), np.zeros(3), make_rng(0))
    assert np.array_equal(single, np.arange(3)) and "one class" in caplog.text


def test_cohort_round_trip_and_schema_hash(tmp_path, small_cohort):
    small_cohort.save(tmp_path / "c.npz")
    back = Cohort.load(tmp_path / "c.npz", schema_for(SyntheticSpec()))
    for name in ("features", "delta_t", "raw_mask", "stage", "mortality", "admission_ids"):
        assert np.array_equal(getattr(back, name), getattr(small_cohort, name))
    seq = back.sequence(3)
    assert seq.features.tobytes() == small_cohort.features[3].tobytes()
    with pytest.raises(SchemaMismatch):
        Cohort.load(tmp_path / "c.npz", SCHEMA)


def test_schema_hash_stable(tmp_path):
    SCHEMA.save(tmp_path / "s.json")
    assert FeatureSchema.load(tmp_path / "s.json").hash() == SCHEMA.hash()
    assert len(SCHEMA.feature_names()) == SCHEMA.input_dim == 3 + 1 + 2 + 1 + 2
