"""LSTM, GRU and two-layer LSTM cells with hand-derived backward passes.

LSTM step::

    i = sigm(W_xi x + W_hi h + b_i)      o = sigm(W_xo x + W_ho h + b_o)
    f = sigm(W_xf x + W_hf h + b_f)      j = tanh(W_xj x + W_hj h + b_j)
    c' = c * f + i * j                   h' = tanh(c') * o

GRU step::

    r = sigm(W_xr x + W_hr h + b_r)      z = sigm(W_xz x + W_hz h + b_z)
    h~ = tanh(W_xh x + W_hh (r * h) + b_h)
    h' = z * h + (1 - z) * h~

The deep LSTM feeds ``inter @ h_lower`` (no bias) into a second LSTM.

Backward passes implement truncated BPTT: the gradient injected at step
``t`` flows back through steps ``t, t-1, ..., t-depth+1`` and is dropped
beyond that.  States themselves are never truncated on the forward side.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Sequence, Union

import numpy as np

from .numeric import Rng, init_gaussian, init_orthogonal, sigm, tanh_v

CELL_KINDS = ("lstm", "deep-lstm", "gru")


class DimensionError(ValueError):
    pass


def _dsigm(y: np.ndarray) -> np.ndarray:
    return y * (1.0 - y)


def _dtanh(y: np.ndarray) -> np.ndarray:
    return 1.0 - y * y


def init_weight(rows: int, cols: int, rng: Rng) -> np.ndarray:
    # square -> orthogonal, otherwise N(0, 0.01^2)
    if rows == cols:
        return init_orthogonal(rows, rng)
    return init_gaussian(rows, cols, rng)


class _ParamGroup:
    """Shared behaviour for dataclasses whose fields are all arrays."""

    def named(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}

    def zeros_like(self):
        return type(self)(**{f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)})


@dataclass
class LstmParams(_ParamGroup):
    W_xi: np.ndarray
    W_xo: np.ndarray
    W_xf: np.ndarray
    W_xj: np.ndarray
    W_hi: np.ndarray
    W_ho: np.ndarray
    W_hf: np.ndarray
    W_hj: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_f: np.ndarray
    b_j: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_hi.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_xi.shape[1]

    @classmethod
    def init(cls, input_size: int, hidden: int, rng: Rng) -> "LstmParams":
        x = [init_weight(hidden, input_size, rng) for _ in range(4)]
        h = [init_weight(hidden, hidden, rng) for _ in range(4)]
        b = [np.zeros(hidden) for _ in range(4)]
        return cls(*x, *h, *b)

    @classmethod
    def zeros(cls, input_size: int, hidden: int) -> "LstmParams":
        x = [np.zeros((hidden, input_size)) for _ in range(4)]
        h = [np.zeros((hidden, hidden)) for _ in range(4)]
        return cls(*x, *h, *[np.zeros(hidden) for _ in range(4)])

    def x_stack(self) -> np.ndarray:
        return np.vstack([self.W_xi, self.W_xo, self.W_xf, self.W_xj])

    def h_stack(self) -> np.ndarray:
        return np.vstack([self.W_hi, self.W_ho, self.W_hf, self.W_hj])


@dataclass
class GruParams(_ParamGroup):
    W_xr: np.ndarray
    W_xz: np.ndarray
    W_xh: np.ndarray
    W_hr: np.ndarray
    W_hz: np.ndarray
    W_hh: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray
    b_h: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_hr.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_xr.shape[1]

    @classmethod
    def init(cls, input_size: int, hidden: int, rng: Rng) -> "GruParams":
        x = [init_weight(hidden, input_size, rng) for _ in range(3)]
        h = [init_weight(hidden, hidden, rng) for _ in range(3)]
        return cls(*x, *h, *[np.zeros(hidden) for _ in range(3)])

    @classmethod
    def zeros(cls, input_size: int, hidden: int) -> "GruParams":
        x = [np.zeros((hidden, input_size)) for _ in range(3)]
        h = [np.zeros((hidden, hidden)) for _ in range(3)]
        return cls(*x, *h, *[np.zeros(hidden) for _ in range(3)])


@dataclass
class DeepLstmParams:
    layer1: LstmParams
    inter: np.ndarray
    layer2: LstmParams

    @property
    def hidden(self) -> int:
        return self.layer2.hidden

    @property
    def input_size(self) -> int:
        return self.layer1.input_size

    @classmethod
    def init(cls, input_size: int, hidden: int, rng: Rng, hidden2: int | None = None) -> "DeepLstmParams":
        hidden2 = hidden if hidden2 is None else hidden2
        layer1 = LstmParams.init(input_size, hidden, rng)
        inter = init_weight(hidden2, hidden, rng)
        layer2 = LstmParams.init(hidden2, hidden2, rng)
        return cls(layer1, inter, layer2)

    @classmethod
    def zeros(cls, input_size: int, hidden: int, hidden2: int | None = None) -> "DeepLstmParams":
        hidden2 = hidden if hidden2 is None else hidden2
        return cls(LstmParams.zeros(input_size, hidden), np.zeros((hidden2, hidden)),
                   LstmParams.zeros(hidden2, hidden2))

    def named(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = self.layer1.named(prefix + "layer1.")
        out[prefix + "inter"] = self.inter
        out.update(self.layer2.named(prefix + "layer2."))
        return out

    def zeros_like(self) -> "DeepLstmParams":
        return DeepLstmParams(self.layer1.zeros_like(), np.zeros_like(self.inter), self.layer2.zeros_like())


CellParams = Union[LstmParams, GruParams, DeepLstmParams]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class GruState:
    h: np.ndarray


@dataclass
class LstmCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    o: np.ndarray
    f: np.ndarray
    j: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


@dataclass
class GruCache:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    h_tilde: np.ndarray
    h: np.ndarray


@dataclass
class DeepLstmCache:
    lower: LstmCache
    x_upper: np.ndarray
    upper: LstmCache

    @property
    def h(self) -> np.ndarray:
        return self.upper.h


def initial_state(p: CellParams):
    """Zero state for a cell; initial states are not learned."""
    if isinstance(p, LstmParams):
        return LstmState(np.zeros(p.hidden), np.zeros(p.hidden))
    if isinstance(p, GruParams):
        return GruState(np.zeros(p.hidden))
    return (LstmState(np.zeros(p.layer1.hidden), np.zeros(p.layer1.hidden)),
            LstmState(np.zeros(p.layer2.hidden), np.zeros(p.layer2.hidden)))


def _check_dims(p, h_prev: np.ndarray, x: np.ndarray) -> None:
    if x.shape != (p.input_size,):
        raise DimensionError(f"input has shape {x.shape}, cell expects ({p.input_size},)")
    if h_prev.shape != (p.hidden,):
        raise DimensionError(f"state has shape {h_prev.shape}, cell expects ({p.hidden},)")


def lstm_forward(p: LstmParams, prev: LstmState, x: np.ndarray) -> tuple[LstmState, LstmCache]:
    _check_dims(p, prev.h, x)
    h_prev, c_prev = prev.h, prev.c
    i = sigm(p.W_xi @ x + p.W_hi @ h_prev + p.b_i)
    o = sigm(p.W_xo @ x + p.W_ho @ h_prev + p.b_o)
    f = sigm(p.W_xf @ x + p.W_hf @ h_prev + p.b_f)
    j = tanh_v(p.W_xj @ x + p.W_hj @ h_prev + p.b_j)
    c = c_prev * f + i * j
    tanh_c = tanh_v(c)
    h = tanh_c * o
    return LstmState(h, c), LstmCache(x, h_prev, c_prev, i, o, f, j, c, tanh_c, h)


def gru_forward(p: GruParams, prev: GruState, x: np.ndarray) -> tuple[GruState, GruCache]:
    _check_dims(p, prev.h, x)
    h_prev = prev.h
    r = sigm(p.W_xr @ x + p.W_hr @ h_prev + p.b_r)
    z = sigm(p.W_xz @ x + p.W_hz @ h_prev + p.b_z)
    h_tilde = tanh_v(p.W_xh @ x + p.W_hh @ (r * h_prev) + p.b_h)
    h = z * h_prev + (1.0 - z) * h_tilde
    return GruState(h), GruCache(x, h_prev, r, z, h_tilde, h)


def deep_lstm_forward(
    p: DeepLstmParams, prev: tuple[LstmState, LstmState], x: np.ndarray
) -> tuple[tuple[LstmState, LstmState], DeepLstmCache]:
    if p.inter.shape != (p.layer2.input_size, p.layer1.hidden):
        raise DimensionError(f"inter-layer transform has shape {p.inter.shape}")
    lower, lower_cache = lstm_forward(p.layer1, prev[0], x)
    x_upper = p.inter @ lower.h
    upper, upper_cache = lstm_forward(p.layer2, prev[1], x_upper)
    return (lower, upper), DeepLstmCache(lower_cache, x_upper, upper_cache)


def cell_forward(p: CellParams, prev, x: np.ndarray):
    if isinstance(p, LstmParams):
        return lstm_forward(p, prev, x)
    if isinstance(p, GruParams):
        return gru_forward(p, prev, x)
    return deep_lstm_forward(p, prev, x)


def cell_output(state) -> np.ndarray:
    """Topmost hidden vector of a cell state."""
    if isinstance(state, tuple):
        return state[1].h
    return state.h


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _sweep(n: int, d_h: Sequence[np.ndarray], depth: int | None,
           zero_carry: Callable[[], tuple], step: Callable[[int, tuple], tuple]) -> None:
    """Drive ``step`` backwards over time with optional truncation.

    ``carry[0]`` is the gradient w.r.t. the topmost hidden state; upstream
    gradients are injected there.  With ``depth >= n`` this is ordinary BPTT.
    """
    if depth is None or depth >= n:
        carry = zero_carry()
        for s in range(n - 1, -1, -1):
            carry = (carry[0] + d_h[s],) + carry[1:]
            carry = step(s, carry)
        return
    for t in range(n):
        if not np.any(d_h[t]):
            continue
        carry = (np.array(d_h[t], dtype=np.float64),) + zero_carry()[1:]
        for s in range(t, max(t - depth, -1), -1):
            carry = step(s, carry)


def _lstm_step_back(c: LstmCache, wh_t: np.ndarray, dh: np.ndarray, dc: np.ndarray):
    d_o = dh * c.tanh_c
    dc = dc + dh * c.o * _dtanh(c.tanh_c)
    d_f = dc * c.c_prev
    d_i = dc * c.j
    d_j = dc * c.i
    da = np.concatenate([d_i * _dsigm(c.i), d_o * _dsigm(c.o), d_f * _dsigm(c.f), d_j * _dtanh(c.j)])
    return da, wh_t @ da, dc * c.f


def _lstm_grads(p: LstmParams, da: np.ndarray, xs: np.ndarray, hs: np.ndarray) -> LstmParams:
    H = p.hidden
    blocks = [da[:, k * H:(k + 1) * H] for k in range(4)]
    wx = [b.T @ xs for b in blocks]
    wh = [b.T @ hs for b in blocks]
    bias = [b.sum(axis=0) for b in blocks]
    return LstmParams(*wx, *wh, *bias)


def _lstm_backward(p: LstmParams, caches, d_h, depth):
    n, H = len(caches), p.hidden
    wh_t = p.h_stack().T
    da = np.zeros((n, 4 * H))

    def step(s, carry):
        a, dh_prev, dc_prev = _lstm_step_back(caches[s], wh_t, carry[0], carry[1])
        da[s] += a
        return dh_prev, dc_prev

    _sweep(n, d_h, depth, lambda: (np.zeros(H), np.zeros(H)), step)
    xs = np.array([c.x for c in caches])
    hs = np.array([c.h_prev for c in caches])
    return _lstm_grads(p, da, xs, hs), da @ p.x_stack()


def _gru_backward(p: GruParams, caches, d_h, depth):
    n, H = len(caches), p.hidden
    da = np.zeros((n, 3 * H))
    whr_t, whz_t, whh_t = p.W_hr.T, p.W_hz.T, p.W_hh.T

    def step(s, carry):
        c = caches[s]
        dh = carry[0]
        dz = dh * (c.h_prev - c.h_tilde)
        da_h = dh * (1.0 - c.z) * _dtanh(c.h_tilde)
        d_rh = whh_t @ da_h
        da_r = d_rh * c.h_prev * _dsigm(c.r)
        da_z = dz * _dsigm(c.z)
        da[s, :H] += da_r
        da[s, H:2 * H] += da_z
        da[s, 2 * H:] += da_h
        return (dh * c.z + d_rh * c.r + whr_t @ da_r + whz_t @ da_z,)

    _sweep(n, d_h, depth, lambda: (np.zeros(H),), step)
    xs = np.array([c.x for c in caches])
    hs = np.array([c.h_prev for c in caches])
    rh = np.array([c.r * c.h_prev for c in caches])
    da_r, da_z, da_h = da[:, :H], da[:, H:2 * H], da[:, 2 * H:]
    grads = GruParams(
        da_r.T @ xs, da_z.T @ xs, da_h.T @ xs,
        da_r.T @ hs, da_z.T @ hs, da_h.T @ rh,
        da_r.sum(axis=0), da_z.sum(axis=0), da_h.sum(axis=0),
    )
    d_x = da_r @ p.W_xr + da_z @ p.W_xz + da_h @ p.W_xh
    return grads, d_x


def _deep_backward(p: DeepLstmParams, caches, d_h, depth):
    n = len(caches)
    H1, H2 = p.layer1.hidden, p.layer2.hidden
    wh1_t, wh2_t = p.layer1.h_stack().T, p.layer2.h_stack().T
    wx2_t = p.layer2.x_stack().T
    inter_t = p.inter.T
    da1 = np.zeros((n, 4 * H1))
    da2 = np.zeros((n, 4 * H2))

    def step(s, carry):
        dh2, dc2, dh1, dc1 = carry
        c = caches[s]
        a2, dh2_prev, dc2_prev = _lstm_step_back(c.upper, wh2_t, dh2, dc2)
        dh1 = dh1 + inter_t @ (wx2_t @ a2)
        a1, dh1_prev, dc1_prev = _lstm_step_back(c.lower, wh1_t, dh1, dc1)
        da1[s] += a1
        da2[s] += a2
        return dh2_prev, dc2_prev, dh1_prev, dc1_prev

    _sweep(n, d_h, depth, lambda: (np.zeros(H2), np.zeros(H2), np.zeros(H1), np.zeros(H1)), step)
    xs = np.array([c.lower.x for c in caches])
    h1_prev = np.array([c.lower.h_prev for c in caches])
    h1 = np.array([c.lower.h for c in caches])
    x2 = np.array([c.x_upper for c in caches])
    h2_prev = np.array([c.upper.h_prev for c in caches])
    dx2 = da2 @ p.layer2.x_stack()
    grads = DeepLstmParams(
        _lstm_grads(p.layer1, da1, xs, h1_prev),
        dx2.T @ h1,
        _lstm_grads(p.layer2, da2, x2, h2_prev),
    )
    return grads, da1 @ p.layer1.x_stack()


def cell_backward(p: CellParams, caches: Sequence, d_h: Sequence[np.ndarray], depth: int | None = None):
    """Gradients of the summed per-step losses for a run of cached steps.

    ``caches`` are ordered oldest to newest and ``d_h[t]`` is the loss
    gradient w.r.t. the topmost hidden output of step ``t``.  Returns a
    parameter-gradient object of the same type as ``p`` and an array of
    per-step input gradients (``len(caches) x input_size``).  With
    ``depth=None`` every cached step is backpropagated through.
    """
    if len(caches) != len(d_h):
        raise DimensionError(f"{len(caches)} cached steps but {len(d_h)} output gradients")
    if depth is not None and depth < 1:
        raise ValueError("BPTT depth must be >= 1")
    if not caches:
        return p.zeros_like(), np.zeros((0, p.input_size))
    if isinstance(p, LstmParams):
        return _lstm_backward(p, caches, d_h, depth)
    if isinstance(p, GruParams):
        return _gru_backward(p, caches, d_h, depth)
    return _deep_backward(p, caches, d_h, depth)


def make_cell(kind: str, input_size: int, hidden: int, rng: Rng, hidden2: int | None = None) -> CellParams:
    if kind == "lstm":
        return LstmParams.init(input_size, hidden, rng)
    if kind == "gru":
        return GruParams.init(input_size, hidden, rng)
    if kind == "deep-lstm":
        return DeepLstmParams.init(input_size, hidden, rng, hidden2)
    raise ValueError(f"unknown cell kind {kind!r}; expected one of {', '.join(CELL_KINDS)}")


def zero_cell(kind: str, input_size: int, hidden: int, hidden2: int | None = None) -> CellParams:
    if kind == "lstm":
        return LstmParams.zeros(input_size, hidden)
    if kind == "gru":
        return GruParams.zeros(input_size, hidden)
    if kind == "deep-lstm":
        return DeepLstmParams.zeros(input_size, hidden, hidden2)
    raise ValueError(f"unknown cell kind {kind!r}")
