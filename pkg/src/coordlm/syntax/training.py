"""Training and checkpointing for ActionLSTM and RNNG."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.core import sgd_step
from ..nn.lm import TrainConfig, batches, fit
from ..nn.tape import Tape
from ..treebank import Tree, strip_preterminals
from ..wordlm import Vocabulary
from .actions import (DEFAULT_MAX_DEPTH, DEFAULT_MAX_STREAK, TransitionSystem, nonterminal_inventory,
                      tree_to_actions)
from .models import RNNG, ActionLSTM, SyntaxLM

log = logging.getLogger(__name__)

VARIANTS = ("actionlstm", "rnng")


@dataclass
class SyntaxLMConfig(TrainConfig):
    dim: int = 32
    min_count: int = 1
    max_depth: int = DEFAULT_MAX_DEPTH
    max_streak: int = DEFAULT_MAX_STREAK
    keep_tags: bool = False  # keep preterminal POS nodes as NT(tag) GEN(w) REDUCE


def prepare_trees(trees: Sequence[Tree], keep_tags: bool = False) -> list[Tree]:
    return list(trees) if keep_tags else [strip_preterminals(t) for t in trees]


def build_system(trees: Sequence[Tree], cfg: SyntaxLMConfig) -> TransitionSystem:
    vocab = Vocabulary.build((t.leaves() for t in trees), cfg.min_count)
    return TransitionSystem(nonterminal_inventory(trees), vocab, cfg.max_depth, cfg.max_streak)


def make_model(variant: str, system: TransitionSystem, cfg: SyntaxLMConfig,
               rng: Optional[np.random.Generator] = None, params=None) -> SyntaxLM:
    if variant == "actionlstm":
        return ActionLSTM(system, cfg.dim, cfg.layers, rng=rng, params=params)
    if variant == "rnng":
        return RNNG(system, cfg.dim, cfg.layers, rng=rng, params=params)
    raise ValueError(f"unknown syntax-LM variant {variant!r}; expected one of {VARIANTS}")


def train_syntax_lm(treebank: Sequence[Tree], config: Optional[SyntaxLMConfig] = None,
                    variant: str = "rnng") -> SyntaxLM:
    """Maximise joint action likelihood; ``model.history`` holds per-epoch action perplexity."""
    cfg = config or SyntaxLMConfig()
    if not treebank:
        raise ValueError("empty treebank")
    trees = prepare_trees(treebank, cfg.keep_tags)
    system = build_system(trees, cfg)
    rng = np.random.default_rng(cfg.seed)
    model = make_model(variant, system, cfg, rng)
    model.config = cfg
    seqs = [system.encode(tree_to_actions(t)) for t in trees]
    if variant == "actionlstm":
        examples = [model.training_example(s) for s in seqs]
        model.history = fit(model.lm, [e[0] for e in examples], model.start, cfg,
                            masks=[e[1] for e in examples])
    else:
        model.history = _fit_rnng(model, seqs, cfg)
    return model


def _rnng_epoch_bits(model: RNNG, seqs) -> tuple[float, int]:
    total, n = 0.0, 0
    for s in seqs:
        tape = Tape(model.params)
        total += model.tape_loss(tape, s)
        n += len(s)
    return total, n


def _fit_rnng(model: RNNG, seqs, cfg: SyntaxLMConfig) -> list[dict]:
    for s in seqs:
        model.system.oracle_masks(s)  # reject trees that violate the constraints up front
    rng = np.random.default_rng(cfg.seed + 7919)
    bits, n = _rnng_epoch_bits(model, seqs)
    history = [{"epoch": 0, "lr": cfg.lr, "train_ppl": 2.0 ** (bits / n)}]
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.lr * cfg.lr_decay ** max(0, epoch - cfg.decay_start + 1)
        total, count = 0.0, 0
        for idx in batches(rng.permutation(len(seqs)), cfg.batch_size):
            grads = {k: np.zeros_like(v) for k, v in model.params.values.items()}
            n_actions = sum(len(seqs[i]) for i in idx)
            for i in idx:
                tape = Tape(model.params)
                total += model.tape_loss(tape, seqs[i])
                for k, g in tape.backward().items():
                    grads[k] += g
            for g in grads.values():
                g /= n_actions
            count += n_actions
            sgd_step(model.params, grads, lr, cfg.clip)
        if not model.params.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        history.append({"epoch": epoch, "lr": lr, "train_ppl": 2.0 ** (total / count)})
        log.info("epoch %d lr %.4g action ppl %.3f", epoch, lr, history[-1]["train_ppl"])
    return history


def save_syntax_lm(model: SyntaxLM, path):
    cfg = getattr(model, "config", None) or SyntaxLMConfig(dim=model.params["out.W"].shape[0])
    meta = {"variant": model.variant, "config": asdict(cfg), "vocab": model.system.vocab.itos,
            "system": model.system.describe(), "history": getattr(model, "history", [])}
    return save_checkpoint(path, "syntax-lm", meta, model.params)


def load_syntax_lm(path) -> SyntaxLM:
    meta, params = load_checkpoint(path)
    if meta["kind"] != "syntax-lm":
        raise ValueError(f"{path} holds a {meta['kind']!r} checkpoint, not a syntax LM")
    cfg = SyntaxLMConfig(**meta["config"])
    sysd = meta["system"]
    system = TransitionSystem(sysd["nonterminals"], Vocabulary(meta["vocab"][2:]),
                              sysd["max_depth"], sysd["max_streak"])
    model = make_model(meta["variant"], system, cfg, params=params)
    model.config = cfg
    model.history = meta.get("history", [])
    return model
