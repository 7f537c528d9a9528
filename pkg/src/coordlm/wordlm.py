"""Word-level LSTM language model: vocabulary, training, surprisal."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.lm import LstmLM, TrainConfig, evaluate_bits, fit, make_batch

log = logging.getLogger(__name__)

UNK = "<unk>"
EOS = "<eos>"


class Vocabulary:
    """Word <-> index bijection with ``<unk>`` = 0 and ``<eos>`` = 1."""

    def __init__(self, words: Iterable[str] = ()):
        self.itos: list[str] = [UNK, EOS]
        self.stoi: dict[str, int] = {UNK: 0, EOS: 1}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = 2) -> "Vocabulary":
        counts = Counter(w for s in sentences for w in s)
        # frequency-descending, ties alphabetical, so the mapping is order-independent
        kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
        return cls(w for w in kept if w not in (UNK, EOS))

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi

    def index(self, word: str) -> int:
        return self.stoi.get(word, 0)

    def encode(self, words: Sequence[str]) -> list[int]:
        return [self.stoi.get(w, 0) for w in words]

    @property
    def unk(self) -> int:
        return 0

    @property
    def eos(self) -> int:
        return 1


@dataclass
class SurprisalProfile:
    tokens: list[str]
    surprisals: list[float]

    @property
    def total(self) -> float:
        return float(sum(self.surprisals))

    def __iter__(self):
        return iter(zip(self.tokens, self.surprisals))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class WordLMConfig(TrainConfig):
    min_count: int = 2
    lowercase: bool = False


class WordLM:
    kind = "word-lm"

    def __init__(self, vocab: Vocabulary, lm: LstmLM, config: Optional[WordLMConfig] = None):
        self.vocab = vocab
        self.lm = lm
        self.config = config or WordLMConfig(dim=lm.dim, layers=lm.layers)
        self.history: list[dict] = []

    def prepare(self, words: Sequence[str]) -> list[str]:
        return [w.lower() for w in words] if self.config.lowercase else list(words)

    def encode_sentence(self, words: Sequence[str], eos: bool = True) -> list[int]:
        ids = [self.vocab.eos] + self.vocab.encode(self.prepare(words))
        return ids + [self.vocab.eos] if eos else ids

    def save(self, path):
        meta = {"config": self.config.__dict__, "vocab": self.vocab.itos, "history": self.history}
        return save_checkpoint(path, self.kind, meta, self.lm.params)

    @classmethod
    def load(cls, path) -> "WordLM":
        meta, params = load_checkpoint(path)
        if meta["kind"] != cls.kind:
            raise ValueError(f"{path} holds a {meta['kind']!r} checkpoint, not {cls.kind!r}")
        cfg = WordLMConfig(**meta["config"])
        vocab = Vocabulary(meta["vocab"][2:])
        model = cls(vocab, LstmLM(len(vocab), cfg.dim, cfg.layers, params=params), cfg)
        model.history = meta.get("history", [])
        return model


def train_word_lm(corpus: Sequence[Sequence[str]], config: Optional[WordLMConfig] = None) -> WordLM:
    """Train on tokenized sentences; the returned model's ``history`` holds per-epoch perplexity."""
    cfg = config or WordLMConfig()
    if not corpus:
        raise ValueError("empty corpus")
    sents = [[w.lower() for w in s] if cfg.lowercase else list(s) for s in corpus]
    vocab = Vocabulary.build(sents, cfg.min_count)
    if len(vocab) < 3:
        raise ValueError(f"vocabulary has {len(vocab)} entries; at least 3 are required")
    rng = np.random.default_rng(cfg.seed)
    model = WordLM(vocab, LstmLM(len(vocab), cfg.dim, cfg.layers, rng=rng), cfg)
    seqs = [model.encode_sentence(s) for s in sents]
    model.history = fit(model.lm, seqs, vocab.eos, cfg)
    return model


def perplexity(model: WordLM, corpus: Sequence[Sequence[str]]) -> float:
    seqs = [model.encode_sentence(s) for s in corpus]
    bits, n = evaluate_bits(model.lm, seqs, model.vocab.eos)
    return 2.0 ** (bits / n)


def surprisal_profile(model: WordLM, sentence: Sequence[str], eos: bool = True) -> SurprisalProfile:
    """Per-token surprisal in bits; ``<eos>`` is scored last unless ``eos=False``."""
    if len(sentence) == 0:
        raise ValueError("empty sentence")
    ids = model.encode_sentence(sentence, eos=eos)
    losses = model.lm.token_losses(make_batch([ids], model.vocab.eos))[:, 0]
    tokens = list(sentence) + ([EOS] if eos else [])
    return SurprisalProfile(tokens, [float(x) for x in losses])


def sentence_nll(model: WordLM, sentence: Sequence[str], eos: bool = True) -> float:
    """-log2 P(sentence) from the batched training loss path."""
    ids = model.encode_sentence(sentence, eos=eos)
    loss, _ = model.lm.loss_and_grads(make_batch([ids], model.vocab.eos), normalize=False)
    return loss


def continuation_surprisal(model: WordLM, prefix: Sequence[str], continuation: Sequence[str]) -> float:
    """Summed surprisal of ``continuation`` given ``prefix`` (no ``<eos>`` scored)."""
    if len(continuation) == 0:
        raise ValueError("empty continuation")
    profile = surprisal_profile(model, list(prefix) + list(continuation), eos=False)
    return float(sum(profile.surprisals[len(prefix):]))


def step_surprisals(model: WordLM, sentence: Sequence[str]) -> list[float]:
    """Token surprisals computed one incremental step at a time (no batching)."""
    lm = model.lm
    state = lm.step(lm.initial_state(), model.vocab.eos)
    out = []
    for tok in model.vocab.encode(model.prepare(sentence)):
        out.append(float(-lm.log2_probs(state)[tok]))
        state = lm.step(state, tok)
    return out
