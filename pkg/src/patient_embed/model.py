"""Input projection + recurrent encoder + two-layer prediction head.

The embedding of a sequence is the last hidden state (LSTM, T-LSTM) or the
attention context vector (attention LSTM). The head is
``v = W2 relu(W1 z + b1) + b2`` followed by a sigmoid for the binary task or a
softmax for the 8-class stage task.
"""

from __future__ import annotations

import enum
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import cells
from .cells import AttentionParams, DecayParams, LstmParams
from .numerics import DTYPE, ShapeError, relu, sigmoid, softmax, uniform_init

CHECKPOINT_VERSION = 1


class ArchitectureKind(str, enum.Enum):
    VANILLA_LSTM = "lstm"
    ATTENTION_LSTM = "attn"
    TIME_AWARE_LSTM = "tlstm"


ARCH_LABELS = {
    ArchitectureKind.VANILLA_LSTM: "LSTM",
    ArchitectureKind.ATTENTION_LSTM: "Attention-augmented LSTM",
    ArchitectureKind.TIME_AWARE_LSTM: "T-LSTM",
}


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    projection_dim: int = 16
    hidden_dim: int = 16
    head_hidden_dim: int = 16
    num_classes: int = 8
    architecture: ArchitectureKind = ArchitectureKind.TIME_AWARE_LSTM

    def __post_init__(self):
        object.__setattr__(self, "architecture", ArchitectureKind(self.architecture))
        for name in ("input_dim", "projection_dim", "hidden_dim", "head_hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes not in (2, 8):
            raise ValueError("num_classes must be 2 (mortality) or 8 (stage)")

    @property
    def n_outputs(self) -> int:
        return 1 if self.num_classes == 2 else self.num_classes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["architecture"] = self.architecture.value
        return d


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    P, H, K = cfg.projection_dim, cfg.hidden_dim, cfg.head_hidden_dim
    shapes = {"proj_W": (P, cfg.input_dim), "proj_b": (P,)}
    for g in cells.GATES:
        shapes[f"lstm.W_{g}"] = (H, P)
        shapes[f"lstm.U_{g}"] = (H, H)
        shapes[f"lstm.b_{g}"] = (H,)
    if cfg.architecture is ArchitectureKind.ATTENTION_LSTM:
        shapes["attn.w_a"] = (H,)
        shapes["attn.b_a"] = ()
    elif cfg.architecture is ArchitectureKind.TIME_AWARE_LSTM:
        shapes["decay.W_delta"] = (H,)
        shapes["decay.b_delta"] = (H,)
    shapes.update({"head_W1": (K, H), "head_b1": (K,), "head_W2": (cfg.n_outputs, K), "head_b2": (cfg.n_outputs,)})
    return shapes


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    # fixed per-feature standardisation applied before the projection
    feature_mean: np.ndarray = field(default=None)
    feature_std: np.ndarray = field(default=None)

    def __post_init__(self):
        D = self.config.input_dim
        if self.feature_mean is None:
            self.feature_mean = np.zeros(D, DTYPE)
        if self.feature_std is None:
            self.feature_std = np.ones(D, DTYPE)
        shapes = _param_shapes(self.config)
        if set(shapes) != set(self.params):
            raise ShapeError(f"parameter names {sorted(self.params)} do not match the architecture")
        for k, s in shapes.items():
            if self.params[k].shape != s:
                raise ShapeError(f"{k}: expected shape {s}, got {self.params[k].shape}")

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "Model":
        params = {}
        for name, shape in _param_shapes(config).items():
            if name == "attn.b_a":
                params[name] = np.zeros((), DTYPE)
                continue
            fan_in = {"proj": config.input_dim, "head_W1": config.hidden_dim, "head_b1": config.hidden_dim,
                      "head_W2": config.head_hidden_dim, "head_b2": config.head_hidden_dim}
            key = "proj" if name.startswith("proj") else name
            params[name] = uniform_init(rng, shape, fan_in.get(key, config.hidden_dim))
        return cls(config, params)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "Model":
        return cls(config, {k: np.zeros(s, DTYPE) for k, s in _param_shapes(config).items()})

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()},
                     self.feature_mean.copy(), self.feature_std.copy())

    def _block(self, prefix: str) -> dict:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    @property
    def lstm(self) -> LstmParams:
        return LstmParams(**self._block("lstm"))

    @property
    def attention(self) -> Optional[AttentionParams]:
        b = self._block("attn")
        return AttentionParams(**b) if b else None

    @property
    def decay(self) -> Optional[DecayParams]:
        b = self._block("decay")
        return DecayParams(**b) if b else None

    # -- checkpoints ---------------------------------------------------------

    def save(self, path) -> None:
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays["norm/mean"] = self.feature_mean
        arrays["norm/std"] = self.feature_std
        meta = {"version": CHECKPOINT_VERSION, "config": self.config.to_dict()}
        arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path) -> "Model":
        with np.load(path) as z:
            meta = json.loads(z["meta"].tobytes().decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
            return cls(ModelConfig(**meta["config"]), params, z["norm/mean"], z["norm/std"])


@dataclass
class ForwardTape:
    x_norm: np.ndarray  # (T, B, D)
    proj: np.ndarray  # (T, B, P)
    hs: np.ndarray  # (T, B, H)
    cell_tape: list
    attn_weights: Optional[np.ndarray]
    z: np.ndarray
    head_pre: np.ndarray
    head_hidden: np.ndarray
    logits: np.ndarray
    batched: bool


def _as_batch(features, delta_t):
    if hasattr(features, "features"):  # a BucketedSequence
        if delta_t is None:
            delta_t = features.delta_t
        features = features.features
    x = np.asarray(features, dtype=DTYPE)
    batched = x.ndim == 3
    if not batched:
        x = x[None]
        if delta_t is not None:
            delta_t = np.asarray(delta_t, dtype=DTYPE)[None]
    if x.ndim != 3:
        raise ShapeError("features must be (T, D) or (B, T, D)")
    if delta_t is not None:
        delta_t = np.asarray(delta_t, dtype=DTYPE)
        if delta_t.shape != x.shape[:2]:
            raise ShapeError("elapsed-time vector must match the sequence length")
    return x, delta_t, batched


def _encode_batch(model: Model, x, delta_t):
    cfg = model.config
    if x.shape[-1] != cfg.input_dim:
        raise ShapeError(f"sequence has {x.shape[-1]} features, model expects {cfg.input_dim}")
    if x.shape[1] == 0:
        raise ValueError("cannot encode an empty sequence")
    x_norm = (x - model.feature_mean) / model.feature_std
    x_norm = np.ascontiguousarray(x_norm.transpose(1, 0, 2))  # time-major
    proj = x_norm @ model.params["proj_W"].T + model.params["proj_b"]
    decay = model.decay
    dts = None
    if decay is not None:
        dts = np.ones(x.shape[:2], DTYPE) if delta_t is None else delta_t
        dts = dts.T
    hs, cell_tape = cells.run_sequence(proj, model.lstm, decay, dts)
    weights = None
    if model.attention is not None:
        z, weights = cells.attention_context(hs, model.attention)
    else:
        z = hs[-1]
    return z, (x_norm, proj, hs, cell_tape, weights)


def _head(model: Model, z):
    p = model.params
    a1 = z @ p["head_W1"].T + p["head_b1"]
    u = relu(a1)
    v = u @ p["head_W2"].T + p["head_b2"]
    return a1, u, v


def logits_to_probs(logits: np.ndarray, num_classes: int) -> np.ndarray:
    if num_classes == 2:
        p1 = sigmoid(logits[..., 0])
        return np.stack([1.0 - p1, p1], axis=-1)
    return softmax(logits, axis=-1)


def encode(model: Model, features, delta_t=None) -> np.ndarray:
    """Embedding of one (T, D) sequence or a (B, T, D) batch."""
    x, dt, batched = _as_batch(features, delta_t)
    z, _ = _encode_batch(model, x, dt)
    return z if batched else z[0]


def predict_head(model: Model, z) -> np.ndarray:
    z = np.asarray(z, dtype=DTYPE)
    if z.shape[-1] != model.config.hidden_dim:
        raise ShapeError(f"embedding has length {z.shape[-1]}, head expects {model.config.hidden_dim}")
    _, _, v = _head(model, z)
    return logits_to_probs(v, model.config.num_classes)


def forward(model: Model, features, delta_t=None):
    """Class probabilities plus the tape needed by :func:`backward`."""
    x, dt, batched = _as_batch(features, delta_t)
    z, (x_norm, proj, hs, cell_tape, weights) = _encode_batch(model, x, dt)
    a1, u, v = _head(model, z)
    probs = logits_to_probs(v, model.config.num_classes)
    tape = ForwardTape(x_norm, proj, hs, cell_tape, weights, z, a1, u, v, batched)
    return (probs if batched else probs[0]), tape


def backward(model: Model, tape: ForwardTape, dlogits) -> dict[str, np.ndarray]:
    """Parameter gradients given the loss gradient w.r.t. the head logits.

    For the binary head the logit is the scalar pre-sigmoid value, shape
    (B, 1); for the stage head it is the pre-softmax vector, shape (B, 8).
    """
    p = model.params
    dv = np.asarray(dlogits, dtype=DTYPE)
    if not tape.batched:
        dv = dv[None]
    if dv.shape != tape.logits.shape:
        raise cells.ContractError(f"logit gradient {dv.shape} does not match logits {tape.logits.shape}")
    grads = {}
    grads["head_W2"] = dv.T @ tape.head_hidden
    grads["head_b2"] = dv.sum(axis=0)
    da1 = (dv @ p["head_W2"]) * (tape.head_pre > 0)
    grads["head_W1"] = da1.T @ tape.z
    grads["head_b1"] = da1.sum(axis=0)
    dz = da1 @ p["head_W1"]

    if tape.attn_weights is not None:
        agrads, dhs = cells.attention_backward(tape.hs, tape.attn_weights, dz, model.attention)
        grads["attn.w_a"] = agrads.w_a
        grads["attn.b_a"] = agrads.b_a
    else:
        dhs = np.zeros_like(tape.hs)
        dhs[-1] = dz
    lgrads, dgrads, dproj = cells.sequence_backward(tape.cell_tape, dhs, model.lstm, model.decay)
    for k, v in lgrads.as_dict().items():
        grads[f"lstm.{k}"] = v
    if dgrads is not None:
        for k, v in dgrads.as_dict().items():
            grads[f"decay.{k}"] = v
    D = tape.x_norm.shape[-1]
    grads["proj_W"] = dproj.reshape(-1, dproj.shape[-1]).T @ tape.x_norm.reshape(-1, D)
    grads["proj_b"] = dproj.reshape(-1, dproj.shape[-1]).sum(axis=0)
    return grads
