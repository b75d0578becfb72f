"""Forward and BPTT backward passes for the LSTM, the time-aware LSTM and the
temporal attention layer.

Weights follow the ``hidden x input`` convention, so a gate pre-activation is
``x @ W.T + h_prev @ U.T + b``. Every function accepts either a single
example (1-D state vectors) or a batch with one leading batch axis; gradients
are summed over the batch.

The time-aware cell differs from the vanilla one only in the cell state fed
to the forget term: ``c_prev`` is first scaled elementwise by
``gamma = exp(-max(0, W_delta * dt + b_delta))``. Gates always see the
undecayed ``h_prev``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .numerics import DTYPE, ShapeError, sigmoid, softmax, uniform_init

GATES = ("f", "i", "o", "c")
_TINY = np.finfo(DTYPE).tiny


class ContractError(ValueError):
    """Raised when a backward pass is fed inconsistent inputs."""


class _ParamBlock:
    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def zeros_like(cls, other):
        return cls(**{k: np.zeros_like(v) for k, v in other.as_dict().items()})


@dataclass
class LstmParams(_ParamBlock):
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_f: np.ndarray
    U_i: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        hidden, inp = self.W_f.shape
        for g in GATES:
            W, U, b = (getattr(self, f"{k}_{g}") for k in "WUb")
            if W.shape != (hidden, inp) or U.shape != (hidden, hidden) or b.shape != (hidden,):
                raise ShapeError(f"inconsistent LSTM parameter shapes for gate {g}")

    @property
    def hidden_dim(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmParams":
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = uniform_init(rng, (hidden_dim, input_dim), hidden_dim)
            kw[f"U_{g}"] = uniform_init(rng, (hidden_dim, hidden_dim), hidden_dim)
            kw[f"b_{g}"] = uniform_init(rng, (hidden_dim,), hidden_dim)
        return cls(**kw)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = np.zeros((hidden_dim, input_dim), DTYPE)
            kw[f"U_{g}"] = np.zeros((hidden_dim, hidden_dim), DTYPE)
            kw[f"b_{g}"] = np.zeros(hidden_dim, DTYPE)
        return cls(**kw)


@dataclass
class AttentionParams(_ParamBlock):
    w_a: np.ndarray
    b_a: np.ndarray  # 0-d

    @classmethod
    def init(cls, hidden_dim: int, rng: np.random.Generator) -> "AttentionParams":
        return cls(uniform_init(rng, (hidden_dim,), hidden_dim), np.zeros((), DTYPE))

    @classmethod
    def zeros(cls, hidden_dim: int) -> "AttentionParams":
        return cls(np.zeros(hidden_dim, DTYPE), np.zeros((), DTYPE))


@dataclass
class DecayParams(_ParamBlock):
    W_delta: np.ndarray
    b_delta: np.ndarray

    def __post_init__(self):
        if self.W_delta.shape != self.b_delta.shape or self.W_delta.ndim != 1:
            raise ShapeError("decay parameters must be two vectors of the hidden size")

    @classmethod
    def init(cls, hidden_dim: int, rng: np.random.Generator) -> "DecayParams":
        return cls(uniform_init(rng, (hidden_dim,), hidden_dim), uniform_init(rng, (hidden_dim,), hidden_dim))

    @classmethod
    def zeros(cls, hidden_dim: int) -> "DecayParams":
        return cls(np.zeros(hidden_dim, DTYPE), np.zeros(hidden_dim, DTYPE))


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: Optional[int] = None) -> "CellState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape, DTYPE), np.zeros(shape, DTYPE))


@dataclass
class TapeEntry:
    """Everything the backward pass needs from one forward step."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    c_eff: np.ndarray  # cell state entering the forget term (decayed for T-LSTM)
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray  # tanh of the candidate pre-activation
    c: np.ndarray
    tanh_c: np.ndarray
    delta_t: Optional[np.ndarray] = None
    decay_pre: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None


def _check_step_shapes(x, prev: CellState, p: LstmParams):
    if x.shape[-1] != p.input_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, cell expects {p.input_dim}")
    if prev.h.shape[-1] != p.hidden_dim or prev.c.shape != prev.h.shape:
        raise ShapeError("previous state does not match the hidden size")


def _cell(x, prev: CellState, c_eff, p: LstmParams, **extra):
    f = sigmoid(x @ p.W_f.T + prev.h @ p.U_f.T + p.b_f)
    i = sigmoid(x @ p.W_i.T + prev.h @ p.U_i.T + p.b_i)
    o = sigmoid(x @ p.W_o.T + prev.h @ p.U_o.T + p.b_o)
    g = np.tanh(x @ p.W_c.T + prev.h @ p.U_c.T + p.b_c)
    c = f * c_eff + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    tape = TapeEntry(x=x, h_prev=prev.h, c_prev=prev.c, c_eff=c_eff, f=f, i=i, o=o, g=g,
                     c=c, tanh_c=tanh_c, **extra)
    return CellState(h, c), tape


def lstm_step(x, prev: CellState, p: LstmParams) -> tuple[CellState, TapeEntry]:
    x = np.asarray(x, dtype=DTYPE)
    _check_step_shapes(x, prev, p)
    return _cell(x, prev, prev.c, p)


def _decay_pre(delta_t, d: DecayParams):
    dt = np.asarray(delta_t, dtype=DTYPE)
    if np.any(dt < 0) or not np.all(np.isfinite(dt)):
        raise ValueError("elapsed time must be finite and non-negative")
    return dt, dt[..., None] * d.W_delta + d.b_delta


def _gamma(z):
    # floored at the smallest normal float so the factor never underflows to 0
    return np.maximum(np.exp(-np.maximum(z, 0.0)), _TINY)


def time_decay(delta_t, d: DecayParams) -> np.ndarray:
    """Per-unit decay factor in (0, 1] for an elapsed time in hours."""
    _, z = _decay_pre(delta_t, d)
    return _gamma(z)


def tlstm_step(x, prev: CellState, delta_t, p: LstmParams, d: DecayParams) -> tuple[CellState, TapeEntry]:
    x = np.asarray(x, dtype=DTYPE)
    _check_step_shapes(x, prev, p)
    if d.W_delta.shape != (p.hidden_dim,):
        raise ShapeError("decay parameters do not match the hidden size")
    dt, z = _decay_pre(delta_t, d)
    gamma = _gamma(z)
    return _cell(x, prev, gamma * prev.c, p, delta_t=dt, decay_pre=z, gamma=gamma)


def run_sequence(xs, p: LstmParams, decay: Optional[DecayParams] = None, delta_ts=None,
                 state: Optional[CellState] = None):
    """Unroll a cell over ``xs`` of shape (T, [B,] input).

    Returns the stacked hidden states (T, [B,] hidden) and the tape.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim not in (2, 3) or xs.shape[0] == 0:
        raise ValueError("expected a nonempty sequence of shape (T, [B,] input)")
    if state is None:
        state = CellState.zeros(p.hidden_dim, None if xs.ndim == 2 else xs.shape[1])
    if decay is not None:
        if delta_ts is None:
            raise ValueError("time-aware cell needs elapsed times")
        delta_ts = np.asarray(delta_ts, dtype=DTYPE)
        if delta_ts.shape != xs.shape[:-1]:
            raise ShapeError(f"elapsed times {delta_ts.shape} do not match inputs {xs.shape[:-1]}")
    hs, tape = [], []
    for t in range(xs.shape[0]):
        if decay is None:
            state, entry = lstm_step(xs[t], state, p)
        else:
            state, entry = tlstm_step(xs[t], state, delta_ts[t], p, decay)
        hs.append(state.h)
        tape.append(entry)
    return np.stack(hs), tape


def _outer_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def sequence_backward(tape: Sequence[TapeEntry], dhs, p: LstmParams,
                      decay: Optional[DecayParams] = None, dc_last=None):
    """BPTT through a tape.

    ``dhs`` holds the loss gradient with respect to every hidden state (T, [B,]
    hidden). Returns ``(lstm_grads, decay_grads_or_None, dxs)``.
    """
    dhs = np.asarray(dhs, dtype=DTYPE)
    if len(tape) == 0 or dhs.shape[0] != len(tape):
        raise ContractError(f"tape has {len(tape)} steps but {dhs.shape[0]} upstream gradients were given")
    if dhs.shape[1:] != tape[0].c.shape:
        raise ContractError("upstream gradient shape does not match hidden states")
    timeaware = tape[0].gamma is not None
    if timeaware and decay is None:
        raise ContractError("time-aware tape needs decay parameters")

    grads = LstmParams.zeros_like(p)
    dgrads = DecayParams.zeros_like(decay) if timeaware else None
    dxs = [None] * len(tape)
    dh_next = np.zeros_like(tape[0].c)
    dc_next = np.zeros_like(tape[0].c) if dc_last is None else np.asarray(dc_last, DTYPE)

    for t in range(len(tape) - 1, -1, -1):
        e = tape[t]
        dh = dhs[t] + dh_next
        do = dh * e.tanh_c
        dc = dc_next + dh * e.o * (1.0 - e.tanh_c ** 2)
        da = {
            "f": dc * e.c_eff * e.f * (1.0 - e.f),
            "i": dc * e.g * e.i * (1.0 - e.i),
            "o": do * e.o * (1.0 - e.o),
            "c": dc * e.i * (1.0 - e.g ** 2),
        }
        dx = np.zeros_like(e.x)
        dh_prev = np.zeros_like(e.h_prev)
        for g, a in da.items():
            getattr(grads, f"W_{g}")[...] += _outer_sum(a, e.x)
            getattr(grads, f"U_{g}")[...] += _outer_sum(a, e.h_prev)
            getattr(grads, f"b_{g}")[...] += a.reshape(-1, a.shape[-1]).sum(axis=0)
            dx += a @ getattr(p, f"W_{g}")
            dh_prev += a @ getattr(p, f"U_{g}")
        dc_eff = dc * e.f
        if timeaware:
            dc_prev = dc_eff * e.gamma
            dz = -(dc_eff * e.c_prev) * e.gamma * ((e.decay_pre > 0) & (e.gamma > _TINY))
            dgrads.W_delta[...] += (dz * e.delta_t[..., None]).reshape(-1, dz.shape[-1]).sum(axis=0)
            dgrads.b_delta[...] += dz.reshape(-1, dz.shape[-1]).sum(axis=0)
        else:
            dc_prev = dc_eff
        dxs[t] = dx
        dh_next, dc_next = dh_prev, dc_prev
    return grads, dgrads, np.stack(dxs)


def attention_context(hidden_states, p: AttentionParams):
    """Softmax-over-time weighted sum of hidden states.

    ``hidden_states`` is (T, [B,] hidden); returns ``(context, weights)`` with
    weights of shape (T, [B]).
    """
    hs = np.asarray(hidden_states, dtype=DTYPE)
    if hs.ndim < 2 or hs.shape[0] == 0:
        raise ValueError("attention needs a nonempty sequence of hidden states")
    if hs.shape[-1] != p.w_a.shape[0]:
        raise ShapeError("attention vector does not match the hidden size")
    scores = hs @ p.w_a + p.b_a
    weights = softmax(scores, axis=0)
    context = np.sum(weights[..., None] * hs, axis=0)
    return context, weights


def attention_backward(hidden_states, weights, dcontext, p: AttentionParams):
    """Returns ``(attention_grads, d_hidden_states)``."""
    hs = np.asarray(hidden_states, dtype=DTYPE)
    dcontext = np.asarray(dcontext, dtype=DTYPE)
    if dcontext.shape != hs.shape[1:]:
        raise ContractError("context gradient does not match hidden state shape")
    dalpha = np.sum(hs * dcontext, axis=-1)
    de = weights * (dalpha - np.sum(weights * dalpha, axis=0, keepdims=True))
    dhs = weights[..., None] * dcontext + de[..., None] * p.w_a
    grads = AttentionParams(
        w_a=_outer_sum(de[..., None], hs).reshape(-1),
        b_a=np.asarray(de.sum(), DTYPE),
    )
    return grads, dhs
