"""Word surprisal under syntactic LMs.

``word_sync_beam`` approximates prefix probabilities with word-synchronous
beam search; ``exact_marginal`` enumerates every partial derivation and is
the reference the beam is tested against.  Both define the surprisal of word
i as ``log2 mass(B_{i-1}) - log2 mass(B_i)`` where ``B_i`` holds derivation
prefixes ending in the GEN of word i.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .nn.core import logsumexp2
from .syntax.actions import ParserState
from .syntax.models import SyntaxLM
from .wordlm import SurprisalProfile


class DeadBeamError(RuntimeError):
    def __init__(self, position: int, word: str):
        super().__init__(f"no hypothesis can generate word {position} ({word!r}) within the action budget")
        self.position = position
        self.word = word


class HypothesisExplosion(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamConfig:
    action_width: int = 100  # K_a
    word_width: int = 10  # K_w
    fast_track: int = 5  # K_f
    max_structural: int = 8  # M, structural actions allowed between two words

    def __post_init__(self):
        if not self.word_width <= self.action_width:
            raise ValueError("word_width must not exceed action_width")
        if not 0 <= self.fast_track <= self.word_width:
            raise ValueError("fast_track must lie in [0, word_width]")
        if self.max_structural < 1 or self.word_width < 1:
            raise ValueError("max_structural and word_width must be >= 1")

    @classmethod
    def saturating(cls, max_structural: int, width: int = 10 ** 9) -> "BeamConfig":
        return cls(width, width, width, max_structural)


@dataclass
class BeamResult:
    profile: SurprisalProfile
    masses: list  # log2 mass of B_i for i = 1..n
    beam: list = field(repr=False)  # final hypotheses B_n

    @property
    def final_mass(self) -> float:
        return self.masses[-1]


def _rank_key(item):
    # higher probability first, then lexicographic action history
    return (-item[0], item[1])


def word_sync_beam(model: SyntaxLM, sentence: Sequence[str], cfg: BeamConfig = BeamConfig(),
                   known_length: bool = False) -> BeamResult:
    if len(sentence) == 0:
        raise ValueError("empty sentence")
    beam = [model.initial_state(len(sentence) if known_length else None)]
    return _decode(model, beam, 0.0, sentence, cfg)


def _decode(model: SyntaxLM, beam: list, prev_mass: float, words: Sequence[str], cfg: BeamConfig) -> BeamResult:
    surprisals, masses = [], []
    for pos, word in enumerate(words):
        beam = _step_word(model, beam, model.system.gen_id(word), cfg)
        if not beam:
            raise DeadBeamError(pos, word)
        mass = logsumexp2([h.logprob for h in beam])
        surprisals.append(prev_mass - mass)
        masses.append(mass)
        prev_mass = mass
    return BeamResult(SurprisalProfile(list(words), surprisals), masses, beam)


def _step_word(model: SyntaxLM, beam: list, gid: int, cfg: BeamConfig) -> list:
    """Advance every hypothesis in ``beam`` past the GEN of one word."""
    frontier = beam
    advanced: dict = {}
    for step in range(cfg.max_structural + 1):
        pool, gen_succ = [], []
        for h in frontier:
            lp = model.log2_probs(h)
            if np.isfinite(lp[gid]):
                cand = (h.logprob + lp[gid], h.history + (gid,), h, gid, lp[gid])
                gen_succ.append(cand)
                pool.append(cand)
            if step == cfg.max_structural:
                continue
            for a in np.flatnonzero(np.isfinite(lp)):
                a = int(a)
                if model.system.kind(a) == "GEN" or (a == 0 and h.n_open == 1):
                    continue  # closing the root would end the sentence
                pool.append((h.logprob + lp[a], h.history + (a,), h, a, lp[a]))
        pool.sort(key=_rank_key)
        gen_succ.sort(key=_rank_key)
        for cand in gen_succ[:cfg.fast_track]:
            advanced[cand[1]] = cand
        frontier = []
        for cand in pool[:cfg.action_width]:
            if cand[3] == gid:
                advanced[cand[1]] = cand
            else:
                frontier.append(model.advance(cand[2], cand[3], cand[4]))
        if not frontier:
            break
    ranked = sorted(advanced.values(), key=_rank_key)[:cfg.word_width]
    return [model.advance(c[2], c[3], c[4]) for c in ranked]


def exact_marginal(model: SyntaxLM, sentence: Sequence[str], max_structural: int,
                   known_length: bool = False, cap: int = 10 ** 6) -> BeamResult:
    """Exhaustive prefix masses (no pruning); raises ``HypothesisExplosion`` past ``cap`` states."""
    if len(sentence) == 0:
        raise ValueError("empty sentence")
    system = model.system
    hyps: list[ParserState] = [model.initial_state(len(sentence) if known_length else None)]
    surprisals, masses = [], []
    prev = 0.0
    visited = 0
    for pos, word in enumerate(sentence):
        gid = system.gen_id(word)
        reached: list[ParserState] = []

        def expand(state: ParserState, depth: int) -> None:
            nonlocal visited
            visited += 1
            if visited > cap:
                raise HypothesisExplosion(f"more than {cap} partial derivations")
            lp = model.log2_probs(state)
            for a in range(lp.size):
                if lp[a] == -np.inf:
                    continue
                if a == gid:
                    reached.append(model.advance(state, a, lp[a]))
                elif system.kind(a) != "GEN" and depth < max_structural:
                    child = model.advance(state, a, lp[a])
                    if not child.done:
                        expand(child, depth + 1)

        for h in hyps:
            expand(h, 0)
        if not reached:
            raise DeadBeamError(pos, word)
        hyps = reached
        mass = logsumexp2([h.logprob for h in hyps])
        surprisals.append(prev - mass)
        masses.append(mass)
        prev = mass
    return BeamResult(SurprisalProfile(list(sentence), surprisals), masses, hyps)


def completion_mass(model: SyntaxLM, hyps: Sequence[ParserState]) -> float:
    """log2 of the probability mass of finishing each hypothesis with REDUCEs only."""
    vals = []
    for h in hyps:
        state, lp_total = h, h.logprob
        while not state.done:
            lp = model.log2_probs(state)
            if lp[0] == -np.inf:
                lp_total = -np.inf
                break
            lp_total += lp[0]
            state = model.advance(state, 0, lp[0])
        vals.append(lp_total)
    return logsumexp2(vals)


def decode_prefix(model: SyntaxLM, prefix: Sequence[str], cfg: BeamConfig = BeamConfig()) -> tuple[list, float]:
    """Beam and log2 mass after ``prefix`` (the root state for an empty prefix)."""
    if not prefix:
        return [model.initial_state()], 0.0
    head = word_sync_beam(model, prefix, cfg)
    return head.beam, head.final_mass


def beam_continuation_surprisal(model: SyntaxLM, prefix: Sequence[str], continuations: Sequence[Sequence[str]],
                                cfg: BeamConfig = BeamConfig(), decoded: Optional[tuple] = None) -> list[BeamResult]:
    """Per-token surprisal of each continuation after ``prefix``.

    The prefix is decoded once (or taken from ``decoded``, a ``decode_prefix``
    result) and every continuation resumes from the same beam.
    """
    beam, mass = decoded if decoded is not None else decode_prefix(model, prefix, cfg)
    out = []
    for cont in continuations:
        if len(cont) == 0:
            raise ValueError("empty continuation")
        out.append(_decode(model, beam, mass, cont, cfg))
    return out
