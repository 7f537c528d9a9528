"""Parameters, LSTM step, softmax cross-entropy in bits, clipped SGD and
finite-difference gradient checking."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from ._kernels import kernels

LN2 = math.log(2.0)
INIT_SCALE = 0.1
FORGET_BIAS = 1.0


class Parameters:
    """Named float64 arrays with matching gradient buffers."""

    def __init__(self, arrays: Optional[dict] = None):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        for name, arr in (arrays or {}).items():
            self.add(name, arr)

    def add(self, name: str, array) -> np.ndarray:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.ascontiguousarray(array, dtype=np.float64)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    def shapes(self) -> dict[str, tuple]:
        return {k: v.shape for k, v in self.values.items()}

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "Parameters":
        return Parameters({k: v.copy() for k, v in self.values.items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.values.values())


def uniform_init(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def add_lstm(params: Parameters, prefix: str, n_in: int, dim: int, layers: int,
             rng: np.random.Generator) -> None:
    """Register ``layers`` stacked LSTM layers as ``{prefix}.{l}.Wx/Wh/b``."""
    for layer in range(layers):
        fan_in = n_in if layer == 0 else dim
        params.add(f"{prefix}.{layer}.Wx", uniform_init(rng, (fan_in, 4 * dim)))
        params.add(f"{prefix}.{layer}.Wh", uniform_init(rng, (dim, 4 * dim)))
        b = uniform_init(rng, (4 * dim,))
        b[dim:2 * dim] = FORGET_BIAS
        params.add(f"{prefix}.{layer}.b", b)


def lstm_layers(params: Parameters, prefix: str) -> int:
    n = 0
    while f"{prefix}.{n}.Wx" in params:
        n += 1
    return n


@dataclass(frozen=True)
class LstmState:
    """Per-layer hidden and cell vectors, each of shape ``(d,)``."""

    h: tuple
    c: tuple

    @classmethod
    def zeros(cls, layers: int, dim: int) -> "LstmState":
        return cls(tuple(np.zeros(dim) for _ in range(layers)),
                   tuple(np.zeros(dim) for _ in range(layers)))

    @property
    def top(self) -> np.ndarray:
        return self.h[-1]

    @property
    def layers(self) -> int:
        return len(self.h)


def lstm_step(params: Parameters, prefix: str, state: LstmState, x: np.ndarray) -> LstmState:
    """Advance a stacked LSTM by one input vector."""
    x = np.asarray(x, dtype=np.float64)
    hs, cs = [], []
    for layer in range(state.layers):
        Wx = params[f"{prefix}.{layer}.Wx"]
        if x.shape != (Wx.shape[0],):
            raise ValueError(f"{prefix}.{layer}: input has shape {x.shape}, expected ({Wx.shape[0]},)")
        h, c, _ = kernels.cell_forward(Wx, params[f"{prefix}.{layer}.Wh"], params[f"{prefix}.{layer}.b"],
                                       x[None, :], state.h[layer][None, :], state.c[layer][None, :])
        hs.append(h[0])
        cs.append(c[0])
        x = h[0]
    return LstmState(tuple(hs), tuple(cs))


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(logits, axis=axis, keepdims=True)
    shifted = logits - m
    with np.errstate(invalid="ignore"):
        return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax_xent(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy in bits and its gradient with respect to ``logits``.

    Entries equal to ``-inf`` are treated as masked out.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise IndexError(f"target {target} outside vocabulary of size {logits.shape[-1]}")
    lp = log_softmax(logits)
    loss = -lp[target] / LN2
    grad = np.exp(lp)
    grad[target] -= 1.0
    return float(loss), grad / LN2


def logsumexp2(values) -> float:
    """log2 of sum of 2**v, shifting by the max to avoid underflow."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return -math.inf
    m = v.max()
    if m == -math.inf:
        return -math.inf
    return float(m + np.log2(np.sum(np.exp2(v - m))))


class NonFiniteGradient(FloatingPointError):
    pass


def global_norm(arrays) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


def sgd_step(params: Parameters, grads: Optional[dict] = None, lr: float = 1.0,
             clip: Optional[float] = 5.0) -> Parameters:
    """In-place ``p -= lr * g`` after rescaling ``g`` to global norm at most ``clip``."""
    grads = params.grads if grads is None else grads
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {params[name].shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    scale = 1.0
    if clip is not None:
        norm = global_norm(grads.values())
        if norm > clip:
            scale = clip / norm
    for name, g in grads.items():
        params.values[name] -= (lr * scale) * g
    return params


LossFn = Callable[[Parameters], tuple[float, dict]]


def grad_check_report(loss_fn: LossFn, params: Parameters, eps: float = 1e-3,
                      samples: int = 16, seed: int = 0) -> dict[str, float]:
    """Relative error between analytic and central-difference gradients per parameter group.

    ``loss_fn(params)`` must return ``(loss, {name: grad})`` and be deterministic.
    For each group, half the probed coordinates are drawn among those with a
    nonzero analytic gradient and half uniformly; the error is
    ``|a - n| / max(|a|, |n|)`` over the probed sub-vector.
    """
    rng = np.random.default_rng(seed)
    _, analytic = loss_fn(params)
    analytic = {k: np.array(v, copy=True) for k, v in analytic.items()}
    report = {}
    for name in params.names():
        value = params[name]
        flat = value.reshape(-1)
        ga = analytic[name].reshape(-1)
        nonzero = np.flatnonzero(ga)
        k = min(samples, flat.size)
        picks = []
        if nonzero.size:
            picks.extend(rng.choice(nonzero, size=min(k - k // 2, nonzero.size), replace=False))
        picks.extend(rng.choice(flat.size, size=k // 2 or 1, replace=False))
        idx = np.unique(np.array(picks, dtype=np.int64))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + eps
            lp, _ = loss_fn(params)
            flat[i] = old - eps
            lm, _ = loss_fn(params)
            flat[i] = old
            numeric[j] = (lp - lm) / (2.0 * eps)
        a = ga[idx]
        denom = max(np.linalg.norm(a), np.linalg.norm(numeric))
        report[name] = 0.0 if denom == 0.0 else float(np.linalg.norm(a - numeric) / denom)
    return report


def grad_check(loss_fn: LossFn, params: Parameters, eps: float = 1e-3, samples: int = 16,
               seed: int = 0) -> float:
    """Maximum relative gradient error over all parameter groups."""
    return max(grad_check_report(loss_fn, params, eps, samples, seed).values())
