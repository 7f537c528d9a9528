"""Reverse-mode differentiation over a recorded list of vector ops.

Only what the RNNG needs: parameter-row lookup, LSTM cells, affine maps,
concatenation, tanh and masked softmax cross-entropy.  Vectors are 1-D.
"""
from __future__ import annotations

import numpy as np

from ._kernels import kernels
from .core import LN2, Parameters, log_softmax


class Node:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class Tape:
    def __init__(self, params: Parameters):
        self.params = params
        self.grads = {name: np.zeros_like(v) for name, v in params.values.items()}
        self._backward = []
        self.loss = 0.0

    def constant(self, value) -> Node:
        return Node(np.asarray(value, dtype=np.float64))

    def row(self, name: str, index: int) -> Node:
        node = Node(self.params[name][index].copy())

        def back():
            if node.grad is not None:
                self.grads[name][index] += node.grad

        self._backward.append(back)
        return node

    def lstm(self, prefix: str, x: Node, hs: list, cs: list) -> tuple[list, list]:
        """Stacked LSTM step; ``hs``/``cs`` are per-layer Nodes."""
        new_h, new_c = [], []
        inp = x
        for layer in range(len(hs)):
            Wx = self.params[f"{prefix}.{layer}.Wx"]
            Wh = self.params[f"{prefix}.{layer}.Wh"]
            b = self.params[f"{prefix}.{layer}.b"]
            h_prev, c_prev = hs[layer], cs[layer]
            xv, hv, cv = inp.value[None, :], h_prev.value[None, :], c_prev.value[None, :]
            h, c, gates = kernels.cell_forward(Wx, Wh, b, xv, hv, cv)
            h_node, c_node = Node(h[0]), Node(c[0])

            def back(prefix=prefix, layer=layer, Wx=Wx, Wh=Wh, xv=xv, hv=hv, cv=cv, gates=gates,
                     c=c, inp=inp, h_prev=h_prev, c_prev=c_prev, h_node=h_node, c_node=c_node):
                if h_node.grad is None and c_node.grad is None:
                    return
                d = hv.shape[1]
                dh = np.zeros((1, d)) if h_node.grad is None else h_node.grad[None, :]
                dc = np.zeros((1, d)) if c_node.grad is None else c_node.grad[None, :]
                dx, dhp, dcp, dWx, dWh, db = kernels.cell_backward(Wx, Wh, xv, hv, cv, gates, c, dh, dc)
                self.grads[f"{prefix}.{layer}.Wx"] += dWx
                self.grads[f"{prefix}.{layer}.Wh"] += dWh
                self.grads[f"{prefix}.{layer}.b"] += db
                inp.accumulate(dx[0])
                h_prev.accumulate(dhp[0])
                c_prev.accumulate(dcp[0])

            self._backward.append(back)
            new_h.append(h_node)
            new_c.append(c_node)
            inp = h_node
        return new_h, new_c

    def affine(self, x: Node, wname: str, bname: str) -> Node:
        W, b = self.params[wname], self.params[bname]
        out = Node(x.value @ W + b)

        def back():
            if out.grad is None:
                return
            self.grads[wname] += np.outer(x.value, out.grad)
            self.grads[bname] += out.grad
            x.accumulate(W @ out.grad)

        self._backward.append(back)
        return out

    def concat(self, a: Node, b: Node) -> Node:
        out = Node(np.concatenate([a.value, b.value]))
        n = a.value.shape[0]

        def back():
            if out.grad is None:
                return
            a.accumulate(out.grad[:n])
            b.accumulate(out.grad[n:])

        self._backward.append(back)
        return out

    def tanh(self, x: Node) -> Node:
        out = Node(np.tanh(x.value))

        def back():
            if out.grad is not None:
                x.accumulate(out.grad * (1.0 - out.value * out.value))

        self._backward.append(back)
        return out

    def xent(self, logits: Node, mask: np.ndarray, target: int) -> float:
        """Add ``-log2 softmax(masked logits)[target]`` to the tape's loss; returns it."""
        z = np.where(mask, logits.value, -np.inf)
        lp = log_softmax(z)
        loss = float(-lp[target] / LN2)
        g = np.exp(lp)
        g[target] -= 1.0
        g /= LN2
        logits.accumulate(g)
        self.loss += loss
        return loss

    def backward(self, scale: float = 1.0) -> dict:
        for back in reversed(self._backward):
            back()
        if scale != 1.0:
            for g in self.grads.values():
                g *= scale
        return self.grads
