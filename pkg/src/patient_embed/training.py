"""Cross-entropy training with Adam, early stopping and embedding extraction."""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .cells import ContractError
from .data.container import Cohort
from .data.splits import CohortSplit, oversample_minority
from .model import Model, backward, encode, forward
from .numerics import DTYPE, make_rng

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Objective(str, enum.Enum):
    STAGE_EMBEDDING = "stage"
    MORTALITY_END_TO_END = "mortality"

    @property
    def num_classes(self) -> int:
        return 8 if self is Objective.STAGE_EMBEDDING else 2


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 60
    patience: int = 10
    min_delta: float = 1e-4
    oversample: bool = True
    seed: int = 0
    objective: Objective = Objective.STAGE_EMBEDDING
    clip_norm: float = 5.0
    standardize: bool = True
    debug_gradcheck: bool = False

    def __post_init__(self):
        self.objective = Objective(self.objective)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.value
        return d


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    stopped_early: bool = False
    clipped_steps: int = 0

    def epochs(self) -> list:
        return [{"epoch": e + 1, "train_loss": tl, "val_loss": vl}
                for e, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss))]


# -- loss ---------------------------------------------------------------------

def cross_entropy(pred, label: int) -> float:
    """Negative log-probability of ``label``, floored at 1e-12."""
    pred = np.asarray(pred, dtype=DTYPE)
    if pred.ndim != 1 or (pred < 0).any() or abs(pred.sum() - 1.0) > 1e-6:
        raise ContractError("prediction is not a probability distribution")
    if not 0 <= label < pred.size:
        raise ContractError(f"label {label} out of range for {pred.size} classes")
    return float(-np.log(max(pred[label], PROB_FLOOR)))


def batch_loss_grad(probs: np.ndarray, labels: np.ndarray, num_classes: int):
    """Mean cross-entropy over a batch and its gradient w.r.t. the head logits."""
    labels = np.asarray(labels, dtype=np.int64)
    B = labels.size
    p_true = probs[np.arange(B), labels]
    loss = float(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR))))
    live = (p_true >= PROB_FLOOR)[:, None]
    if num_classes == 2:
        dlogits = (probs[:, 1] - labels)[:, None]
    else:
        dlogits = probs.copy()
        dlogits[np.arange(B), labels] -= 1.0
    return loss, dlogits * live / B


def loss_and_grads(model: Model, features, delta_t, labels):
    probs, tape = forward(model, features, delta_t)
    loss, dlogits = batch_loss_grad(probs, labels, model.config.num_classes)
    return loss, backward(model, tape, dlogits)


def mean_loss(model: Model, features, delta_t, labels, chunk: int = 256) -> float:
    total = 0.0
    for s in range(0, len(labels), chunk):
        probs, _ = forward(model, features[s:s + chunk], delta_t[s:s + chunk])
        loss, _ = batch_loss_grad(probs, labels[s:s + chunk], model.config.num_classes)
        total += loss * len(labels[s:s + chunk])
    return total / len(labels)


# -- gradient check -----------------------------------------------------------

def gradient_check(model: Model, features, delta_t, labels, eps: float = 1e-5, floor: float = 1e-6) -> dict:
    """Max relative error per parameter tensor between BPTT and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    _, grads = loss_and_grads(model, features, delta_t, labels)
    errors = {}
    for name, param in model.params.items():
        numeric = np.zeros_like(param)
        flat = param.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = mean_loss(model, features, delta_t, labels)
            flat[j] = orig - eps
            lm = mean_loss(model, features, delta_t, labels)
            flat[j] = orig
            num_flat[j] = (lp - lm) / (2 * eps)
        a = grads[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num_flat)), floor)
        errors[name] = float(np.max(np.abs(a - num_flat) / denom)) if a.size else 0.0
    return errors


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> AdamState:
    """In-place bias-corrected Adam update of ``params``."""
    if set(grads) != set(params):
        raise ContractError("gradient names do not match parameter names")
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ContractError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return state


def clip_by_global_norm(grads: dict, max_norm: float) -> bool:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return True
    return False


# -- early stopping -----------------------------------------------------------

class EarlyStopping:
    """Tracks the best validation loss.

    Any strict decrease updates the best epoch; only a decrease of at least
    ``min_delta`` resets the patience counter.
    """

    def __init__(self, patience: int = 10, min_delta: float = 1e-4):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = np.inf
        self.best_epoch = 0
        self._anchor = np.inf
        self._bad = 0

    def update(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Returns ``(is_new_best, should_stop)``."""
        is_best = val_loss < self.best_loss
        if is_best:
            self.best_loss = val_loss
            self.best_epoch = epoch
        if val_loss < self._anchor - self.min_delta:
            self._anchor = val_loss
            self._bad = 0
        else:
            self._bad += 1
        return is_best, self._bad >= self.patience


# -- fold training ------------------------------------------------------------

def _standardizer(features: np.ndarray):
    mean = features.reshape(-1, features.shape[-1]).mean(axis=0)
    std = features.reshape(-1, features.shape[-1]).std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std


def task_split(cohort: Cohort, split: CohortSplit, objective: Objective) -> CohortSplit:
    labels = cohort.stage if objective is Objective.STAGE_EMBEDDING else cohort.mortality
    return split.restrict(labels >= 0)


def train_fold(model_init: Model, cohort: Cohort, split: CohortSplit, cfg: TrainConfig):
    """Train one fold and return the best-validation-loss model and its history."""
    from .data.synthetic import ConfigError

    if model_init.config.num_classes != cfg.objective.num_classes:
        raise ConfigError(f"{cfg.objective.value} objective needs a {cfg.objective.num_classes}-class head")
    if model_init.config.input_dim != cohort.input_dim:
        raise ContractError("model input size does not match the cohort")
    split = task_split(cohort, split, cfg.objective)
    if min(len(split.train), len(split.validation)) == 0:
        raise ConfigError("training and validation sets must be nonempty")
    labels = cohort.stage if cfg.objective is Objective.STAGE_EMBEDDING else cohort.mortality
    rng = make_rng(cfg.seed)

    model = model_init.copy()
    if cfg.standardize:
        model.feature_mean, model.feature_std = _standardizer(cohort.features[split.train])

    train_idx = split.train
    if cfg.oversample:
        train_idx = oversample_minority(train_idx, labels[train_idx], rng)

    val_x, val_dt, val_y = cohort.features[split.validation], cohort.delta_t[split.validation], labels[split.validation]

    if cfg.debug_gradcheck:
        probe = train_idx[:2]
        errs = gradient_check(model, cohort.features[probe][:, :5], cohort.delta_t[probe][:, :5], labels[probe])
        worst = max(errs.values())
        log.info("gradient check: worst relative error %.2e", worst)
        if worst >= 1e-4:
            raise ContractError(f"gradient check failed: {errs}")

    state = AdamState()
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    history = TrainHistory()
    best_params = {k: v.copy() for k, v in model.params.items()}

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(train_idx)
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            b = np.sort(order[s:s + cfg.batch_size])
            loss, grads = loss_and_grads(model, cohort.features[b], cohort.delta_t[b], labels[b])
            if clip_by_global_norm(grads, cfg.clip_norm):
                history.clipped_steps += 1
            adam_step(model.params, grads, state, cfg.learning_rate)
            total += loss * len(b)
        history.train_loss.append(total / len(order))
        val = mean_loss(model, val_x, val_dt, val_y)
        history.val_loss.append(val)
        is_best, stop = stopper.update(epoch, val)
        if is_best:
            best_params = {k: v.copy() for k, v in model.params.items()}
        log.debug("epoch %d train %.4f val %.4f", epoch, history.train_loss[-1], val)
        if stop:
            history.stopped_early = epoch < cfg.max_epochs
            break
    if history.clipped_steps:
        log.info("gradient norm clipped at %.1f on %d steps", cfg.clip_norm, history.clipped_steps)

    history.best_epoch = stopper.best_epoch
    model.params = best_params
    return model, history


# -- embeddings ---------------------------------------------------------------

@dataclass
class EmbeddingRecord:
    admission_id: str
    architecture: str
    embedding: np.ndarray
    stage_class: int
    mortality: int


def extract_embeddings(model: Model, indices, cohort: Cohort, chunk: int = 256) -> list:
    if cohort.input_dim != model.config.input_dim:
        raise ContractError(f"cohort has {cohort.input_dim} features, model expects {model.config.input_dim}")
    indices = np.asarray(indices, dtype=np.int64)
    out = []
    for s in range(0, len(indices), chunk):
        idx = indices[s:s + chunk]
        z = encode(model, cohort.features[idx], cohort.delta_t[idx])
        for j, i in enumerate(idx):
            out.append(EmbeddingRecord(str(cohort.admission_ids[i]), model.config.architecture.value, z[j],
                                       int(cohort.stage[i]), int(cohort.mortality[i])))
    return out


def predict_probabilities(model: Model, indices, cohort: Cohort, chunk: int = 256) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    parts = [forward(model, cohort.features[indices[s:s + chunk]], cohort.delta_t[indices[s:s + chunk]])[0]
             for s in range(0, len(indices), chunk)]
    return np.concatenate(parts) if parts else np.zeros((0, model.config.num_classes))
