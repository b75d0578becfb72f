import math

import numpy as np
import pytest

from patient_embed.cells import ContractError
from patient_embed.data import CohortSplit, ConfigError, SyntheticSpec
from patient_embed.model import Model, ModelConfig
from patient_embed.numerics import make_rng
from patient_embed.training import (AdamState, EarlyStopping, Objective, TrainConfig, adam_step, clip_by_global_norm,
                                    cross_entropy, extract_embeddings, loss_and_grads, mean_loss, train_fold)

from conftest import build_cohort


def test_cross_entropy_cases():
    assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0
    assert cross_entropy(np.array([0.5, 0.5]), 0) == pytest.approx(math.log(2.0), abs=1e-15)
    assert cross_entropy(np.array([1.0 - 1e-20, 1e-20]), 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ContractError):
        cross_entropy(np.array([0.7, 0.7]), 0)
    with pytest.raises(ContractError):
        cross_entropy(np.array([0.5, 0.5]), 2)


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    adam_step(params, {"w": np.zeros(2)}, AdamState(), 0.1)
    assert np.array_equal(params["w"], [1.0, -2.0])


def test_adam_first_step_is_lr_times_sign():
    params = {"w": np.zeros(4)}
    g = np.array([3.0, -0.2, 1e-3, -50.0])
    adam_step(params, {"w": g}, AdamState(), 0.01)
    assert np.allclose(params["w"], -0.01 * np.sign(g), rtol=1e-4)


def test_adam_shape_mismatch():
    with pytest.raises(ContractError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), 0.1)


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_by_global_norm(grads, 1.0)
    assert math.hypot(grads["a"][0], grads["b"][0]) == pytest.approx(1.0)
    assert not clip_by_global_norm(grads, 5.0)


def test_early_stopping_plateau():
    stopper = EarlyStopping(patience=2, min_delta=1e-4)
    losses = [1.0, 0.8, 0.6, 0.6, 0.6, 0.6]
    for epoch, loss in enumerate(losses, 1):
        _, stop = stopper.update(epoch, loss)
        if stop:
            break
    assert epoch == 5 and stopper.best_epoch == 3


def test_early_stopping_tiny_gains_do_not_reset_patience():
    stopper = EarlyStopping(patience=2, min_delta=0.1)
    results = [stopper.update(e, v) for e, v in enumerate([1.0, 0.99, 0.98], 1)]
    assert results[1] == (True, False)
    assert results[2] == (True, True)
    assert stopper.best_epoch == 3


@pytest.fixture(scope="module")
def toy():
    cohort = build_cohort(SyntheticSpec.separable(size=60, seed=2))
    idx = np.arange(60)
    split = CohortSplit(idx[:40], idx[40:50], idx[50:])
    return cohort, split


def model_for(cohort, arch="lstm", hidden=8, classes=8, seed=0):
    cfg = ModelConfig(input_dim=cohort.input_dim, projection_dim=8, hidden_dim=hidden, head_hidden_dim=8,
                      num_classes=classes, architecture=arch)
    return Model.init(cfg, make_rng(seed))


def test_one_small_step_decreases_loss(toy):
    cohort, split = toy
    m = model_for(cohort)
    x, dt, y = cohort.features[:16], cohort.delta_t[:16], cohort.stage[:16]
    m.feature_mean = x.reshape(-1, x.shape[-1]).mean(axis=0)
    m.feature_std = x.reshape(-1, x.shape[-1]).std(axis=0) + 1e-8
    before, grads = loss_and_grads(m, x, dt, y)
    for k in m.params:
        m.params[k] -= 1e-4 * grads[k]
    assert mean_loss(m, x, dt, y) < before


def test_separable_toy_fits(toy):
    cohort, split = toy
    cfg = TrainConfig(max_epochs=200, patience=200, learning_rate=0.02, seed=1)
    _, hist = train_fold(model_for(cohort), cohort, split, cfg)
    assert min(hist.train_loss) < 0.1


def test_train_fold_history_and_restore(toy):
    cohort, split = toy
    cfg = TrainConfig(max_epochs=4, patience=10, seed=3)
    m, hist = train_fold(model_for(cohort, "tlstm"), cohort, split, cfg)
    assert len(hist.train_loss) == len(hist.val_loss) == 4
    assert not hist.stopped_early
    assert hist.val_loss[hist.best_epoch - 1] == min(hist.val_loss)
    restored = mean_loss(m, cohort.features[split.validation], cohort.delta_t[split.validation],
                         cohort.stage[split.validation])
    assert restored == pytest.approx(min(hist.val_loss), abs=1e-12)


def test_train_fold_deterministic(toy):
    cohort, split = toy
    cfg = TrainConfig(max_epochs=2, seed=5, objective=Objective.MORTALITY_END_TO_END)
    a, _ = train_fold(model_for(cohort, "attn", classes=2), cohort, split, cfg)
    b, _ = train_fold(model_for(cohort, "attn", classes=2), cohort, split, cfg)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_train_fold_config_errors(toy):
    cohort, split = toy
    with pytest.raises(ConfigError):
        train_fold(model_for(cohort, classes=2), cohort, split, TrainConfig(max_epochs=1))
    empty = CohortSplit(split.train, np.array([], dtype=np.int64), split.test)
    with pytest.raises(ConfigError):
        train_fold(model_for(cohort), cohort, empty, TrainConfig(max_epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


def test_extract_embeddings(toy):
    cohort, _ = toy
    m = model_for(cohort, "tlstm")
    a = extract_embeddings(m, np.arange(10), cohort)
    b = extract_embeddings(m, np.arange(10), cohort)
    assert len(a) == 10 and all(r.embedding.shape == (8,) for r in a)
    assert all(np.array_equal(r.embedding, s.embedding) for r, s in zip(a, b))
    assert a[4].admission_id == cohort.admission_ids[4] and a[4].stage_class == cohort.stage[4]
    zero = Model.zeros(m.config)
    assert all(not r.embedding.any() for r in extract_embeddings(zero, np.arange(5), cohort))
    with pytest.raises(ContractError):
        extract_embeddings(model_for(cohort).__class__.zeros(ModelConfig(input_dim=3, hidden_dim=8)), [0], cohort)
