# -*- coding: utf-8 -*-
"""
Primitivas neuronales diferenciables

Cada operación calcula su forward con numpy y, si hay una cinta activa y
alguna entrada requiere gradiente, graba su regla de backward. Todas aceptan
dimensiones iniciales de batch: un vector (D,) o un batch (B, D).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.tensor import Tensor, as_tensor, current_tape
from src.utils.exceptions import ConfigError, DimensionError, InvalidTargetError

LOSS_EPS = 1e-7
_MASKED_LOGIT = -1e30

TensorLike = Union[Tensor, np.ndarray, float, Sequence[float]]


def _emit(
    op: str,
    out: Union[np.ndarray, Tuple[np.ndarray, ...]],
    inputs: Sequence[Tensor],
    backward: Callable[..., Sequence[Optional[np.ndarray]]],
):
    multi = isinstance(out, tuple)
    arrays = out if multi else (out,)
    requires_grad = any(t.requires_grad for t in inputs)
    outputs = tuple(Tensor(a, requires_grad=requires_grad) for a in arrays)
    tape = current_tape()
    if tape is not None and requires_grad:
        tape.record(op, outputs, tuple(inputs), backward)
    return outputs if multi else outputs[0]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Suma las dimensiones expandidas por broadcasting hasta volver a ``shape``"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


# ======= ÁLGEBRA BÁSICA =======


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from e
    return _emit(
        "add",
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from e
    return _emit(
        "mul",
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(x: TensorLike, factor: float) -> Tensor:
    x = as_tensor(x)
    return _emit("scale", x.data * factor, (x,), lambda g: (g * factor,))


def sum_tensors(tensors: Sequence[Tensor]) -> Tensor:
    """Suma de tensores con la misma forma (p. ej. pérdidas por paso)"""
    if not tensors:
        raise DimensionError("sum_tensors needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"sum_tensors: shape {t.shape} differs from {shape}")
    out = np.sum([t.data for t in tensors], axis=0)
    return _emit("sum", out, tuple(tensors), lambda g: tuple(g for _ in tensors))


def where(mask: np.ndarray, a: TensorLike, b: TensorLike) -> Tensor:
    """Selecciona ``a`` donde ``mask`` es verdadero y ``b`` en el resto"""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data)
    return _emit(
        "where",
        out,
        (a, b),
        lambda g: (
            _unbroadcast(np.where(mask, g, 0.0), a.shape),
            _unbroadcast(np.where(mask, 0.0, g), b.shape),
        ),
    )


def dense(x: TensorLike, W: TensorLike, b: Optional[TensorLike] = None) -> Tensor:
    """Capa afín: ``W x (+ b)`` sobre la última dimensión de ``x``"""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.ndim == 0 or x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"dense: input shape {x.shape} does not conform to weight shape {W.shape}"
        )
    out_dim, in_dim = W.shape
    out = x.data @ W.data.T
    inputs: Tuple[Tensor, ...] = (x, W)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (out_dim,):
            raise DimensionError(
                f"dense: bias shape {b.shape} does not conform to weight shape {W.shape}"
            )
        out = out + b.data
        inputs = (x, W, b)

    def _backward(g: np.ndarray):
        g2 = g.reshape(-1, out_dim)
        dx = g @ W.data
        dW = g2.T @ x.data.reshape(-1, in_dim)
        if b is None:
            return dx, dW
        return dx, dW, g2.sum(axis=0)

    return _emit("dense", out, inputs, _backward)


def inner(x: TensorLike, w: TensorLike) -> Tensor:
    """Producto interno de la última dimensión de ``x`` con el vector ``w``"""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 1 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"inner: input shape {x.shape} does not conform to {w.shape}")
    out = x.data @ w.data

    def _backward(g: np.ndarray):
        dx = g[..., None] * w.data
        dw = (g[..., None] * x.data).reshape(-1, w.shape[0]).sum(axis=0)
        return dx, dw

    return _emit("inner", out, (x, w), _backward)


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from e
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit(
        "concat",
        out,
        tuple(tensors),
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def reshape(x: TensorLike, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: cannot reshape {x.shape} into {shape}") from e
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def stack(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from e
    return _emit(
        "stack",
        out,
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
    )


def select(x: TensorLike, index: int, axis: int = -1) -> Tensor:
    """Toma la posición ``index`` de ``axis`` conservando la dimensión"""
    x = as_tensor(x)
    out = np.take(x.data, [index], axis=axis)

    def _backward(g: np.ndarray):
        dx = np.zeros_like(x.data)
        slicer = [slice(None)] * x.ndim
        slicer[axis] = slice(index, index + 1)
        dx[tuple(slicer)] = g
        return (dx,)

    return _emit("select", out, (x,), _backward)


def embedding(table: TensorLike, ids: np.ndarray) -> Tensor:
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InvalidTargetError(
            f"token id outside embedding table of size {table.shape[0]}"
        )
    out = table.data[ids]

    def _backward(g: np.ndarray):
        dT = np.zeros_like(table.data)
        np.add.at(dT, ids, g)
        return (dT,)

    return _emit("embedding", out, (table,), _backward)


# ======= ACTIVACIONES =======


def sigmoid(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _emit("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _emit("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def softmax(a: TensorLike, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax estable (resta del máximo); ``mask`` anula posiciones de relleno"""
    a = as_tensor(a)
    if a.size == 0 or a.ndim == 0 or a.shape[axis] == 0:
        raise DimensionError(f"softmax of an empty input (shape {a.shape})")
    logits = a.data if mask is None else np.where(mask, a.data, _MASKED_LOGIT)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", y, (a,), _backward)


def weighted_sum(alpha: TensorLike, values: TensorLike) -> Tensor:
    """``sum_i alpha_i v_i`` con ``alpha`` (..., K) y ``values`` (..., K, D)"""
    alpha, values = as_tensor(alpha), as_tensor(values)
    if values.ndim < 2 or alpha.shape != values.shape[:-1]:
        raise DimensionError(
            f"weighted_sum: weights {alpha.shape} do not conform to values {values.shape}"
        )
    out = (alpha.data[..., None] * values.data).sum(axis=-2)

    def _backward(g: np.ndarray):
        d_alpha = (g[..., None, :] * values.data).sum(axis=-1)
        d_values = alpha.data[..., None] * g[..., None, :]
        return d_alpha, d_values

    return _emit("weighted_sum", out, (alpha, values), _backward)


def dropout(
    x: TensorLike,
    p: float,
    training: bool,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Dropout invertido; identidad en evaluación o con p = 0"""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# ======= PÉRDIDAS =======


def cross_entropy(
    logits: TensorLike,
    target: Union[int, np.ndarray],
    mask: Optional[np.ndarray] = None,
    reduction: str = "mean",
) -> Tensor:
    """Entropía cruzada categórica sobre la última dimensión de ``logits``"""
    logits = as_tensor(logits)
    target = np.asarray(target, dtype=np.int64)
    vocab = logits.shape[-1]
    if target.shape != logits.shape[:-1]:
        raise DimensionError(
            f"cross_entropy: target shape {target.shape} does not conform to logits {logits.shape}"
        )
    if target.size and (target.min() < 0 or target.max() >= vocab):
        raise InvalidTargetError(f"target index outside vocabulary of size {vocab}")
    if reduction not in ("mean", "sum"):
        raise ConfigError(f"unknown reduction {reduction!r}")

    z = logits.data
    z_max = z.max(axis=-1, keepdims=True)
    e = np.exp(z - z_max)
    lse = np.log(e.sum(axis=-1)) + z_max[..., 0]
    picked = np.take_along_axis(z, target[..., None], axis=-1)[..., 0]
    losses = lse - picked
    weights = np.ones_like(losses) if mask is None else np.asarray(mask, dtype=np.float64)
    denom = max(float(weights.sum()), 1.0) if reduction == "mean" else 1.0
    loss = np.asarray((losses * weights).sum() / denom)

    def _backward(g: np.ndarray):
        probs = e / e.sum(axis=-1, keepdims=True)
        np.put_along_axis(
            probs, target[..., None], np.take_along_axis(probs, target[..., None], -1) - 1.0, -1
        )
        return (g * probs * (weights / denom)[..., None],)

    return _emit("cross_entropy", loss, (logits,), _backward)


def binary_cross_entropy(prob: TensorLike, label: Union[int, np.ndarray]) -> Tensor:
    """Entropía cruzada binaria media, con probabilidades acotadas a [eps, 1 - eps]"""
    prob = as_tensor(prob)
    y = np.asarray(label, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InvalidTargetError("binary labels must be 0 or 1")
    if y.shape != prob.shape:
        raise DimensionError(
            f"binary_cross_entropy: labels {y.shape} do not conform to probabilities {prob.shape}"
        )
    p = prob.data
    pc = np.clip(p, LOSS_EPS, 1.0 - LOSS_EPS)
    losses = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    n = max(losses.size, 1)
    loss = np.asarray(losses.sum() / n)
    inside = (p >= LOSS_EPS) & (p <= 1.0 - LOSS_EPS)

    def _backward(g: np.ndarray):
        dp = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n
        return (g * dp * inside,)

    return _emit("binary_cross_entropy", loss, (prob,), _backward)


# ======= LSTM =======


@dataclass
class LstmParams:
    """Pesos de las cuatro puertas; cada ``W_*`` es (hidden, input + hidden)"""

    input_dim: int
    hidden_dim: int
    W_i: Tensor
    W_f: Tensor
    W_o: Tensor
    W_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor

    def __post_init__(self) -> None:
        w_shape = (self.hidden_dim, self.input_dim + self.hidden_dim)
        for name in ("W_i", "W_f", "W_o", "W_g"):
            if getattr(self, name).shape != w_shape:
                raise DimensionError(
                    f"LSTM gate {name} has shape {getattr(self, name).shape}, expected {w_shape}"
                )
        for name in ("b_i", "b_f", "b_o", "b_g"):
            if getattr(self, name).shape != (self.hidden_dim,):
                raise DimensionError(
                    f"LSTM bias {name} has shape {getattr(self, name).shape}, "
                    f"expected {(self.hidden_dim,)}"
                )

    def tensors(self) -> List[Tensor]:
        return [self.W_i, self.W_f, self.W_o, self.W_g, self.b_i, self.b_f, self.b_o, self.b_g]


def lstm_cell(
    x_t: TensorLike, h_prev: TensorLike, m_prev: TensorLike, p: LstmParams
) -> Tuple[Tensor, Tensor]:
    """Un paso LSTM; devuelve (h_t, m_t) con m_t la memoria de celda"""
    x_t, h_prev, m_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(m_prev)
    I, H = p.input_dim, p.hidden_dim
    if x_t.shape[-1] != I:
        raise DimensionError(f"lstm_cell: input shape {x_t.shape} does not match input_dim {I}")
    if h_prev.shape[-1] != H or m_prev.shape != h_prev.shape:
        raise DimensionError(
            f"lstm_cell: state shapes {h_prev.shape} / {m_prev.shape} do not match hidden_dim {H}"
        )
    if x_t.shape[:-1] != h_prev.shape[:-1]:
        raise DimensionError(
            f"lstm_cell: batch shapes of input {x_t.shape} and state {h_prev.shape} differ"
        )

    z = np.concatenate([x_t.data, h_prev.data], axis=-1)
    i = _sigmoid(z @ p.W_i.data.T + p.b_i.data)
    f = _sigmoid(z @ p.W_f.data.T + p.b_f.data)
    o = _sigmoid(z @ p.W_o.data.T + p.b_o.data)
    g = np.tanh(z @ p.W_g.data.T + p.b_g.data)
    m_t = f * m_prev.data + i * g
    tm = np.tanh(m_t)
    h_t = o * tm

    def _backward(dh: np.ndarray, dm_out: np.ndarray):
        dm = dm_out + dh * o * (1.0 - tm * tm)
        da_i = dm * g * i * (1.0 - i)
        da_f = dm * m_prev.data * f * (1.0 - f)
        da_o = dh * tm * o * (1.0 - o)
        da_g = dm * i * (1.0 - g * g)
        z2 = z.reshape(-1, I + H)
        dz = da_i @ p.W_i.data + da_f @ p.W_f.data + da_o @ p.W_o.data + da_g @ p.W_g.data
        weight_grads = [da.reshape(-1, H).T @ z2 for da in (da_i, da_f, da_o, da_g)]
        bias_grads = [da.reshape(-1, H).sum(axis=0) for da in (da_i, da_f, da_o, da_g)]
        return (dz[..., :I], dz[..., I:], dm * f, *weight_grads, *bias_grads)

    inputs = (x_t, h_prev, m_prev, p.W_i, p.W_f, p.W_o, p.W_g, p.b_i, p.b_f, p.b_o, p.b_g)
    return _emit("lstm_cell", (h_t, m_t), inputs, _backward)


def lstm_sequence(
    xs: Sequence[TensorLike], h0: TensorLike, m0: TensorLike, p: LstmParams
) -> Tuple[List[Tensor], Tensor]:
    """Aplica ``lstm_cell`` paso a paso; devuelve los estados ocultos y la última memoria"""
    h, m = as_tensor(h0), as_tensor(m0)
    hidden: List[Tensor] = []
    for x in xs:
        h, m = lstm_cell(x, h, m, p)
        hidden.append(h)
    return hidden, m
