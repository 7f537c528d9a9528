"""Token-sequence LSTM language model with batched training.

Shared by the word-level LM and the ActionLSTM, which differ only in their
token inventory and in the ActionLSTM's per-position validity masks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import kernels
from .core import LN2, LstmState, Parameters, add_lstm, log_softmax, lstm_step, sgd_step, uniform_init

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    dim: int = 64
    layers: int = 2
    epochs: int = 10
    lr: float = 1.0
    lr_decay: float = 0.5
    decay_start: int = 4  # first epoch (1-based) whose learning rate is decayed
    clip: float = 5.0
    batch_size: int = 32
    seed: int = 1


@dataclass
class Batch:
    inputs: np.ndarray  # (T, B) int
    targets: np.ndarray  # (T, B) int
    weights: np.ndarray  # (T, B) 0/1
    masks: Optional[np.ndarray] = None  # (T, B, V) bool, True = allowed


class LstmLM:
    """Embedding -> stacked LSTM -> affine -> softmax over ``vocab_size`` tokens."""

    def __init__(self, vocab_size: int, dim: int, layers: int, rng: Optional[np.random.Generator] = None,
                 params: Optional[Parameters] = None):
        self.vocab_size = vocab_size
        self.dim = dim
        self.layers = layers
        if params is None:
            rng = rng or np.random.default_rng(0)
            params = Parameters()
            params.add("embed", uniform_init(rng, (vocab_size, dim)))
            add_lstm(params, "lstm", dim, dim, layers, rng)
            params.add("out.W", uniform_init(rng, (dim, vocab_size)))
            params.add("out.b", np.zeros(vocab_size))
        self.params = params

    # -- incremental inference ------------------------------------------------

    def initial_state(self) -> LstmState:
        return LstmState.zeros(self.layers, self.dim)

    def step(self, state: LstmState, token: int) -> LstmState:
        return lstm_step(self.params, "lstm", state, self.params["embed"][token])

    def logits(self, state: LstmState) -> np.ndarray:
        return state.top @ self.params["out.W"] + self.params["out.b"]

    def log2_probs(self, state: LstmState, mask: Optional[np.ndarray] = None) -> np.ndarray:
        z = self.logits(state)
        if mask is not None:
            z = np.where(mask, z, -np.inf)
        return log_softmax(z) / LN2

    # -- batched forward / backward -------------------------------------------

    def forward(self, batch: Batch):
        p = self.params
        X = np.ascontiguousarray(p["embed"][batch.inputs])
        T, B = batch.inputs.shape
        caches = []
        inp = X
        zeros = np.zeros((B, self.dim))
        for layer in range(self.layers):
            Wx, Wh, b = p[f"lstm.{layer}.Wx"], p[f"lstm.{layer}.Wh"], p[f"lstm.{layer}.b"]
            H, C, G = kernels.seq_forward(Wx, Wh, b, inp, zeros, zeros)
            caches.append((inp, H, C, G))
            inp = H
        logits = inp @ p["out.W"] + p["out.b"]
        if batch.masks is not None:
            logits = np.where(batch.masks, logits, -np.inf)
        lp = log_softmax(logits)
        return lp, caches

    def token_losses(self, batch: Batch) -> np.ndarray:
        """Per-position surprisal in bits, shape (T, B); padded positions are 0."""
        lp, _ = self.forward(batch)
        picked = np.take_along_axis(lp, batch.targets[..., None], axis=-1)[..., 0]
        return np.where(batch.weights > 0, -picked / LN2, 0.0)

    def loss_and_grads(self, batch: Batch, normalize: bool = True) -> tuple[float, dict]:
        """Summed (or mean, if ``normalize``) bits loss and gradients of that loss."""
        p = self.params
        lp, caches = self.forward(batch)
        T, B = batch.inputs.shape
        w = batch.weights.astype(np.float64)
        count = max(w.sum(), 1.0) if normalize else 1.0
        picked = np.take_along_axis(lp, batch.targets[..., None], axis=-1)[..., 0]
        loss = float(-np.where(w > 0, picked, 0.0).sum() / LN2 / count)

        dlogits = np.exp(lp)
        np.put_along_axis(dlogits, batch.targets[..., None],
                          np.take_along_axis(dlogits, batch.targets[..., None], axis=-1) - 1.0, axis=-1)
        dlogits *= (w / (LN2 * count))[..., None]
        top = caches[-1][1]
        grads = {name: np.zeros_like(v) for name, v in p.values.items()}
        grads["out.W"] = np.tensordot(top, dlogits, axes=([0, 1], [0, 1]))
        grads["out.b"] = dlogits.sum(axis=(0, 1))
        dH = np.ascontiguousarray(dlogits @ p["out.W"].T)
        zeros = np.zeros((B, self.dim))
        for layer in range(self.layers - 1, -1, -1):
            inp, H, C, G = caches[layer]
            dX, dWx, dWh, db, _, _ = kernels.seq_backward(
                p[f"lstm.{layer}.Wx"], p[f"lstm.{layer}.Wh"], inp, zeros, zeros, H, C, G, dH)
            grads[f"lstm.{layer}.Wx"] = dWx
            grads[f"lstm.{layer}.Wh"] = dWh
            grads[f"lstm.{layer}.b"] = db
            dH = dX
        np.add.at(grads["embed"], batch.inputs, dH)
        return loss, grads


def make_batch(seqs: Sequence[Sequence[int]], pad: int,
               masks: Optional[Sequence[np.ndarray]] = None) -> Batch:
    """Teacher-forcing batch: each ``seq`` is ``[start, t1, ..., tn]``; inputs drop the last
    token and targets drop the first.  ``masks[k]`` has shape ``(len(seq)-1, V)``."""
    T = max(len(s) for s in seqs) - 1
    B = len(seqs)
    inputs = np.full((T, B), pad, dtype=np.int64)
    targets = np.full((T, B), pad, dtype=np.int64)
    weights = np.zeros((T, B))
    mask_arr = None
    if masks is not None:
        V = masks[0].shape[1]
        mask_arr = np.ones((T, B, V), dtype=bool)
    for j, s in enumerate(seqs):
        n = len(s) - 1
        inputs[:n, j] = s[:-1]
        targets[:n, j] = s[1:]
        weights[:n, j] = 1.0
        if masks is not None:
            mask_arr[:n, j] = masks[j]
    return Batch(inputs, targets, weights, mask_arr)


def batches(indices: Sequence[int], size: int):
    for start in range(0, len(indices), size):
        yield indices[start:start + size]


def evaluate_bits(lm: LstmLM, seqs, pad: int, masks=None, batch_size: int = 64) -> tuple[float, int]:
    """Total bits and predicted-token count over ``seqs``."""
    total, count = 0.0, 0
    order = list(range(len(seqs)))
    for idx in batches(order, batch_size):
        b = make_batch([seqs[i] for i in idx], pad, None if masks is None else [masks[i] for i in idx])
        total += float(lm.token_losses(b).sum())
        count += int(b.weights.sum())
    return total, count


def fit(lm: LstmLM, seqs, pad: int, cfg: TrainConfig, masks=None,
        on_epoch: Optional[Callable[[int, float], None]] = None) -> list[dict]:
    """Plain clipped SGD with step decay.  Returns one log record per epoch (epoch 0 = untrained)."""
    rng = np.random.default_rng(cfg.seed + 7919)
    history = []
    bits, n = evaluate_bits(lm, seqs, pad, masks)
    history.append({"epoch": 0, "lr": cfg.lr, "train_ppl": 2.0 ** (bits / n)})
    log.info("epoch 0 ppl %.3f", history[-1]["train_ppl"])
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr * cfg.lr_decay ** max(0, epoch - cfg.decay_start + 1)
        order = rng.permutation(len(seqs))
        total, count = 0.0, 0
        for idx in batches(order, cfg.batch_size):
            b = make_batch([seqs[i] for i in idx], pad, None if masks is None else [masks[i] for i in idx])
            loss, grads = lm.loss_and_grads(b)
            ntok = int(b.weights.sum())
            total += loss * ntok
            count += ntok
            sgd_step(lm.params, grads, lr, cfg.clip)
        if not lm.params.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        ppl = 2.0 ** (total / count)
        history.append({"epoch": epoch, "lr": lr, "train_ppl": ppl})
        log.info("epoch %d lr %.4g ppl %.3f", epoch, lr, ppl)
        if on_epoch:
            on_epoch(epoch, ppl)
    return history
