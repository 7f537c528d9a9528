"""LSTM inner loops.

Each kernel is written once in plain numpy.  When numba is importable the
same functions are also compiled with ``numba.njit``; ``COORDLM_NUMBA``
picks which variant runs (see ``numba_mode``).  Both variants stay
importable as ``py_kernels`` / ``jit_kernels`` so they can be benchmarked and
cross-checked against each other.

Gate layout in the packed pre-activation is ``[i | f | g | o]``.
"""
import os
from types import SimpleNamespace

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def cell_forward(Wx, Wh, b, x, h, c):
    """One step for a batch.  x: (B, n_in), h/c: (B, d).  Returns h', c', gates (B, 4d)."""
    d = h.shape[1]
    z = x @ Wx + h @ Wh + b
    gates = np.empty_like(z)
    gates[:, :2 * d] = _sigmoid(z[:, :2 * d])
    gates[:, 2 * d:3 * d] = np.tanh(z[:, 2 * d:3 * d])
    gates[:, 3 * d:] = _sigmoid(z[:, 3 * d:])
    c_new = gates[:, d:2 * d] * c + gates[:, :d] * gates[:, 2 * d:3 * d]
    h_new = gates[:, 3 * d:] * np.tanh(c_new)
    return h_new, c_new, gates


def cell_backward(Wx, Wh, x, h, c, gates, c_new, dh_new, dc_new):
    """Backward of ``cell_forward``.  Returns dx, dh, dc, dWx, dWh, db."""
    d = h.shape[1]
    i = gates[:, :d]
    f = gates[:, d:2 * d]
    g = gates[:, 2 * d:3 * d]
    o = gates[:, 3 * d:]
    tc = np.tanh(c_new)
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    dz = np.empty_like(gates)
    dz[:, :d] = dc * g * i * (1.0 - i)
    dz[:, d:2 * d] = dc * c * f * (1.0 - f)
    dz[:, 2 * d:3 * d] = dc * i * (1.0 - g * g)
    dz[:, 3 * d:] = dh_new * tc * o * (1.0 - o)
    dx = dz @ Wx.T
    dh = dz @ Wh.T
    dWx = x.T @ dz
    dWh = h.T @ dz
    db = dz.sum(axis=0)
    return dx, dh, dc * f, dWx, dWh, db


def seq_forward(Wx, Wh, b, X, h0, c0):
    """Run one layer over X: (T, B, n_in).  Returns H, C (T, B, d) and gates (T, B, 4d)."""
    T, B = X.shape[0], X.shape[1]
    d = h0.shape[1]
    H = np.empty((T, B, d))
    C = np.empty((T, B, d))
    G = np.empty((T, B, 4 * d))
    h = h0.copy()
    c = c0.copy()
    # input projection for all steps at once; only h @ Wh is sequential
    XW = (np.ascontiguousarray(X).reshape(T * B, X.shape[2]) @ Wx).reshape(T, B, 4 * d)
    for t in range(T):
        z = XW[t] + h @ Wh + b
        G[t, :, :2 * d] = _sigmoid(z[:, :2 * d])
        G[t, :, 2 * d:3 * d] = np.tanh(z[:, 2 * d:3 * d])
        G[t, :, 3 * d:] = _sigmoid(z[:, 3 * d:])
        c = G[t, :, d:2 * d] * c + G[t, :, :d] * G[t, :, 2 * d:3 * d]
        h = G[t, :, 3 * d:] * np.tanh(c)
        H[t] = h
        C[t] = c
    return H, C, G


def seq_backward(Wx, Wh, X, h0, c0, H, C, G, dH):
    """Backward of ``seq_forward`` given dL/dH.  Returns dX, dWx, dWh, db, dh0, dc0."""
    T, B = X.shape[0], X.shape[1]
    d = h0.shape[1]
    dWh = np.zeros_like(Wh)
    dh = np.zeros((B, d))
    dc = np.zeros((B, d))
    dZ = np.empty((T, B, 4 * d))
    for t in range(T - 1, -1, -1):
        if t > 0:
            h_prev = H[t - 1]
            c_prev = C[t - 1]
        else:
            h_prev = h0
            c_prev = c0
        i = G[t, :, :d]
        f = G[t, :, d:2 * d]
        g = G[t, :, 2 * d:3 * d]
        o = G[t, :, 3 * d:]
        tc = np.tanh(C[t])
        dht = dH[t] + dh
        dct = dc + dht * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :d] = dct * g * i * (1.0 - i)
        dz[:, d:2 * d] = dct * c_prev * f * (1.0 - f)
        dz[:, 2 * d:3 * d] = dct * i * (1.0 - g * g)
        dz[:, 3 * d:] = dht * tc * o * (1.0 - o)
        dh = dz @ Wh.T
        dc = dct * f
        dWh += h_prev.T @ dz
    n_in = X.shape[2]
    flat_dz = dZ.reshape(T * B, 4 * d)
    flat_x = np.ascontiguousarray(X).reshape(T * B, n_in)
    dX = (flat_dz @ Wx.T).reshape(T, B, n_in)
    dWx = flat_x.T @ flat_dz
    db = flat_dz.sum(axis=0)
    return dX, dWx, dWh, db, dh, dc


_FUNCS = ("cell_forward", "cell_backward", "seq_forward", "seq_backward")

py_kernels = SimpleNamespace(**{name: globals()[name] for name in _FUNCS}, backend="numpy")


def _build_jit():
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is an optional accelerator
        return None
    jit = numba.njit(cache=True, fastmath=False)
    sig = jit(_sigmoid)
    ns = {"np": np, "_sigmoid": sig}
    compiled = {}
    for name in _FUNCS:
        fn = globals()[name]
        # Rebind the helper so compiled kernels call the compiled sigmoid.
        clone = type(fn)(fn.__code__, {**globals(), **ns}, name)
        compiled[name] = jit(clone)
    return SimpleNamespace(**compiled, backend="numba")


def numba_mode() -> str:
    """``COORDLM_NUMBA``: ``0`` = numpy only, ``1`` = numba for every kernel, unset/``auto`` = per kernel."""
    v = os.environ.get("COORDLM_NUMBA", "auto").strip().lower()
    if v in ("0", "false", "no", "off"):
        return "off"
    if v in ("1", "true", "yes", "on", "all"):
        return "all"
    return "auto"


# Per-kernel choice in auto mode, from benchmarks/bench_kernels.py: compiled
# single-row cell steps win clearly, while batched sequence kernels are
# dominated by BLAS calls that numpy already makes efficiently.
_AUTO_JIT = ("cell_forward", "cell_backward")


def select_kernels(mode: str) -> SimpleNamespace:
    if jit_kernels is None or mode == "off":
        return py_kernels
    if mode == "all":
        return jit_kernels
    chosen = {name: getattr(jit_kernels if name in _AUTO_JIT else py_kernels, name) for name in _FUNCS}
    return SimpleNamespace(**chosen, backend="auto")


jit_kernels = _build_jit()

kernels = select_kernels(numba_mode())
