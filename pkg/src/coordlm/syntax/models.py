"""Generative syntactic LMs over NT/GEN/REDUCE actions.

Every model implements the same small protocol used by scoring and beam search:

``initial_state(budget)``
    Root state (optionally with a known sentence length).
``log2_probs(state)``
    log2 distribution over the action inventory, ``-inf`` on masked actions.
``advance(state, action_id, logp)``
    Successor state carrying the model's cache.
"""
from __future__ import annotations

from dataclasses import replace
from typing import NamedTuple, Optional

import numpy as np

from ..nn.core import LN2, LstmState, Parameters, add_lstm, log_softmax, lstm_step, uniform_init
from ..nn.lm import LstmLM
from ..treebank import Tree
from .actions import ParserState, TransitionSystem, tree_to_actions


class SyntaxLM:
    system: TransitionSystem
    variant = "base"

    def initial_state(self, budget: Optional[int] = None) -> ParserState:
        raise NotImplementedError

    def log2_probs(self, state: ParserState) -> np.ndarray:
        raise NotImplementedError

    def advance(self, state: ParserState, action_id: int, logp: float = 0.0) -> ParserState:
        raise NotImplementedError


class UniformActionModel(SyntaxLM):
    """Uniform distribution over the valid actions; used as a hand-checkable stub."""

    variant = "uniform"

    def __init__(self, system: TransitionSystem):
        self.system = system

    def initial_state(self, budget=None):
        return self.system.initial(budget)

    def log2_probs(self, state):
        mask = self.system.valid_mask(state)
        out = np.full(mask.shape, -np.inf)
        out[mask] = -np.log2(mask.sum())
        return out

    def advance(self, state, action_id, logp=0.0):
        return self.system.apply(state, action_id, logp)


class ActionLSTM(SyntaxLM):
    """Sequence LSTM over the action history (a flat LM on action tokens).

    The token inventory is the action inventory plus a start symbol at index
    ``n_actions``.
    """

    variant = "actionlstm"

    def __init__(self, system: TransitionSystem, dim: int = 32, layers: int = 2,
                 rng: Optional[np.random.Generator] = None, params: Optional[Parameters] = None):
        self.system = system
        self.lm = LstmLM(system.n_actions + 1, dim, layers, rng=rng, params=params)

    @property
    def start(self) -> int:
        return self.system.n_actions

    @property
    def params(self) -> Parameters:
        return self.lm.params

    def full_mask(self, state: ParserState) -> np.ndarray:
        return np.append(self.system.valid_mask(state), False)

    def initial_state(self, budget=None):
        return ParserState(budget=budget, cache=self.lm.step(self.lm.initial_state(), self.start))

    def log2_probs(self, state):
        return self.lm.log2_probs(state.cache, self.full_mask(state))[:-1]

    def advance(self, state, action_id, logp=0.0):
        nxt = self.system.apply(state, action_id, logp)
        if nxt.done:
            return nxt
        return replace(nxt, cache=self.lm.step(state.cache, action_id))

    def training_example(self, action_ids) -> tuple[list[int], np.ndarray]:
        masks = self.system.oracle_masks(action_ids)
        return [self.start] + list(action_ids), np.concatenate([masks, np.zeros((len(masks), 1), bool)], axis=1)


# -- RNNG ------------------------------------------------------------------


class StackItem(NamedTuple):
    open: bool  # an open nonterminal awaiting REDUCE
    nt: int  # nonterminal index for open items, -1 otherwise
    vec: np.ndarray  # input vector pushed onto the stack LSTM
    state: LstmState  # stack-LSTM state after this item was pushed


def rnng_compose(params: Parameters, children: list, label: int) -> np.ndarray:
    """Bidirectional LSTM read of ``[label embedding, children...]`` -> tanh affine.

    The forward LSTM reads the label then the children left to right; the
    backward LSTM reads the label then the children right to left.
    """
    if len(children) == 0:
        raise ValueError("composition needs at least one child")
    nt_vec = params["nt_embed"][label]
    d = nt_vec.shape[0]
    fwd = LstmState.zeros(1, d)
    bwd = LstmState.zeros(1, d)
    fwd = lstm_step(params, "comp_fwd", fwd, nt_vec)
    bwd = lstm_step(params, "comp_bwd", bwd, nt_vec)
    for ch in children:
        fwd = lstm_step(params, "comp_fwd", fwd, ch)
    for ch in reversed(children):
        bwd = lstm_step(params, "comp_bwd", bwd, ch)
    return np.tanh(np.concatenate([fwd.top, bwd.top]) @ params["comp.W"] + params["comp.b"])


def rnng_compose_tape(tape, children: list, label: int):
    """Differentiable twin of ``rnng_compose`` over tape Nodes."""
    nt = tape.row("nt_embed", label)
    d = nt.value.shape[0]
    zero = tape.constant(np.zeros(d))
    fh, fc = tape.lstm("comp_fwd", nt, [zero], [zero])
    bh, bc = tape.lstm("comp_bwd", nt, [zero], [zero])
    for ch in children:
        fh, fc = tape.lstm("comp_fwd", ch, fh, fc)
    for ch in reversed(children):
        bh, bc = tape.lstm("comp_bwd", ch, bh, bc)
    return tape.tanh(tape.affine(tape.concat(fh[-1], bh[-1]), "comp.W", "comp.b"))


class RNNG(SyntaxLM):
    """Stack-structured generative model.

    The next-action distribution is an affine softmax of the top hidden state
    of a stack LSTM whose inputs are nonterminal embeddings (open brackets),
    word embeddings (generated terminals) and composed constituent vectors.
    REDUCE pops the open constituent and its children, composes them with
    ``rnng_compose`` and pushes the result.
    """

    variant = "rnng"

    def __init__(self, system: TransitionSystem, dim: int = 32, layers: int = 2,
                 rng: Optional[np.random.Generator] = None, params: Optional[Parameters] = None):
        self.system = system
        self.dim = dim
        self.layers = layers
        if params is None:
            rng = rng or np.random.default_rng(0)
            params = Parameters()
            params.add("nt_embed", uniform_init(rng, (len(system.nonterminals), dim)))
            params.add("word_embed", uniform_init(rng, (len(system.vocab), dim)))
            add_lstm(params, "stack", dim, dim, layers, rng)
            add_lstm(params, "comp_fwd", dim, dim, 1, rng)
            add_lstm(params, "comp_bwd", dim, dim, 1, rng)
            params.add("comp.W", uniform_init(rng, (2 * dim, dim)))
            params.add("comp.b", np.zeros(dim))
            params.add("out.W", uniform_init(rng, (dim, system.n_actions)))
            params.add("out.b", np.zeros(system.n_actions))
        self.params = params
        self._empty = LstmState.zeros(layers, dim)

    def _top_state(self, stack: tuple) -> LstmState:
        return stack[-1].state if stack else self._empty

    def _push(self, stack: tuple, vec: np.ndarray, open_: bool = False, nt: int = -1) -> tuple:
        st = lstm_step(self.params, "stack", self._top_state(stack), vec)
        return stack + (StackItem(open_, nt, vec, st),)

    def initial_state(self, budget=None):
        return ParserState(budget=budget, cache=())

    def log2_probs(self, state):
        mask = self.system.valid_mask(state)
        z = self._top_state(state.cache).top @ self.params["out.W"] + self.params["out.b"]
        return log_softmax(np.where(mask, z, -np.inf)) / LN2

    def advance(self, state, action_id, logp=0.0):
        nxt = self.system.apply(state, action_id, logp)
        stack = state.cache
        kind = self.system.kind(action_id)
        if kind == "NT":
            nt = action_id - self.system.nt_offset
            stack = self._push(stack, self.params["nt_embed"][nt], True, nt)
        elif kind == "GEN":
            stack = self._push(stack, self.params["word_embed"][action_id - self.system.gen_offset])
        else:
            k = len(stack) - 1
            while not stack[k].open:
                k -= 1
            children = [it.vec for it in stack[k + 1:]]
            composed = rnng_compose(self.params, children, stack[k].nt)
            stack = stack[:k]
            stack = self._push(stack, composed) if not nxt.done else stack + (
                StackItem(False, -1, composed, self._empty),)
        return replace(nxt, cache=stack)

    def tape_loss(self, tape, action_ids, budget=None) -> float:
        """Record the joint loss (bits) of one gold action sequence on ``tape``."""
        system = self.system
        masks = system.oracle_masks(action_ids, budget)
        zero = tape.constant(np.zeros(self.dim))
        empty = ([zero] * self.layers, [zero] * self.layers)
        # stack entries: (open, nt, vec_node, (hs, cs))
        stack: list = []
        total = 0.0
        for k, a in enumerate(action_ids):
            hs, _ = stack[-1][3] if stack else empty
            logits = tape.affine(hs[-1], "out.W", "out.b")
            total += tape.xent(logits, masks[k], a)
            kind = system.kind(a)
            if kind == "REDUCE":
                j = len(stack) - 1
                while not stack[j][0]:
                    j -= 1
                children = [it[2] for it in stack[j + 1:]]
                composed = rnng_compose_tape(tape, children, stack[j][1])
                del stack[j:]
                vec, open_, nt = composed, False, -1
                if k == len(action_ids) - 1:
                    break
            elif kind == "NT":
                nt = a - system.nt_offset
                vec, open_ = tape.row("nt_embed", nt), True
            else:
                vec, open_, nt = tape.row("word_embed", a - system.gen_offset), False, -1
            below = stack[-1][3] if stack else empty
            stack.append((open_, nt, vec, tape.lstm("stack", vec, *below)))
        return total


def next_action_distribution(model: SyntaxLM, state: ParserState) -> np.ndarray:
    """Probability vector over the action inventory (zero on invalid actions)."""
    if state.done:
        raise ValueError("terminal state has no next action")
    return np.exp2(model.log2_probs(state))


def action_surprisals(model: SyntaxLM, action_ids, budget: Optional[int] = None) -> list[float]:
    """-log2 P(a_k | a_<k) for each action of a derivation."""
    state = model.initial_state(budget)
    out = []
    for a in action_ids:
        lp = model.log2_probs(state)
        if not np.isfinite(lp[a]):
            raise ValueError(f"action {model.system.action(a)} is masked in this state")
        out.append(float(-lp[a]))
        state = model.advance(state, a, lp[a])
    return out


def joint_logprob(model: SyntaxLM, tree: Tree, known_length: bool = False) -> float:
    """Joint surprisal ``-log2 P(tree, words)`` in bits."""
    ids = model.system.encode(tree_to_actions(tree))
    budget = len(tree.leaves()) if known_length else None
    return float(sum(action_surprisals(model, ids, budget)))


def sample_actions(model: SyntaxLM, rng: np.random.Generator, budget: Optional[int] = None,
                   max_actions: int = 10_000) -> list[int]:
    """Ancestral sample of one derivation from the masked distribution."""
    state = model.initial_state(budget)
    out = []
    while not state.done:
        if len(out) >= max_actions:
            raise RuntimeError("derivation exceeded max_actions")
        lp = model.log2_probs(state)
        p = np.exp2(lp)
        a = int(rng.choice(p.size, p=p / p.sum()))
        out.append(a)
        state = model.advance(state, a, lp[a])
    return out
