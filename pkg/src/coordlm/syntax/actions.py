"""Top-down generative transition system: NT(X), GEN(w), REDUCE.

A ``TransitionSystem`` fixes the action inventory and the validity rules that
every syntactic model masks its distribution with.  ``ParserState`` is an
immutable snapshot; models attach their own cache in ``ParserState.cache``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from ..treebank import Tree
from ..wordlm import EOS, Vocabulary

DEFAULT_MAX_DEPTH = 12
DEFAULT_MAX_STREAK = 8


class Action(NamedTuple):
    kind: str  # "NT", "GEN" or "REDUCE"
    arg: Optional[str] = None

    def __str__(self) -> str:
        return "REDUCE" if self.kind == "REDUCE" else f"{self.kind}({self.arg})"


def NT(label: str) -> Action:
    return Action("NT", label)


def GEN(word: str) -> Action:
    return Action("GEN", word)


REDUCE = Action("REDUCE")


class InvalidActionSequence(ValueError):
    pass


def tree_to_actions(tree: Tree) -> list[Action]:
    """Depth-first linearization: NT on entry, GEN per leaf, REDUCE on exit."""
    if tree.is_leaf:
        raise ValueError("a bare word is not a tree")
    out: list[Action] = []

    def walk(node: Tree) -> None:
        if node.is_leaf:
            out.append(GEN(node.label))
            return
        out.append(NT(node.label))
        for child in node.children:
            walk(child)
        out.append(REDUCE)

    walk(tree)
    return out


def actions_to_tree(actions: Sequence[Action]) -> Tree:
    """Inverse of ``tree_to_actions``."""
    stack: list[tuple[str, list]] = []
    result: Optional[Tree] = None
    for pos, act in enumerate(actions):
        if result is not None:
            raise InvalidActionSequence(f"action {pos} ({act}) follows the completed tree")
        if act.kind == "NT":
            stack.append((act.arg, []))
        elif act.kind == "GEN":
            if not stack:
                raise InvalidActionSequence(f"GEN at position {pos} before any NT")
            stack[-1][1].append(Tree(act.arg))
        elif act.kind == "REDUCE":
            if not stack:
                raise InvalidActionSequence(f"REDUCE at position {pos} with no open constituent")
            label, children = stack.pop()
            if not children:
                raise InvalidActionSequence(f"REDUCE at position {pos} closes empty {label}")
            node = Tree(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            else:
                result = node
        else:
            raise InvalidActionSequence(f"unknown action kind {act.kind!r} at position {pos}")
    if stack:
        raise InvalidActionSequence(f"{len(stack)} constituent(s) left open at end of sequence")
    if result is None:
        raise InvalidActionSequence("empty action sequence")
    return result


@dataclass(frozen=True)
class ParserState:
    """Partial derivation.

    ``open_children[k]`` is the number of children already attached to the k-th
    open constituent (bottom to top).  ``streak`` counts structural actions
    since the last GEN.  ``logprob`` is the cumulative log2 probability.
    """

    open_children: tuple = ()
    n_words: int = 0
    streak: int = 0
    done: bool = False
    budget: Optional[int] = None
    history: tuple = ()
    logprob: float = 0.0
    cache: Any = field(default=None, compare=False, repr=False)

    @property
    def n_open(self) -> int:
        return len(self.open_children)

    @property
    def words_left(self) -> Optional[int]:
        return None if self.budget is None else self.budget - self.n_words


class TransitionSystem:
    """Action inventory ``[REDUCE, NT(x)..., GEN(w)...]`` plus validity rules.

    ``max_depth`` bounds the number of open constituents; ``max_streak`` bounds
    consecutive structural actions between words (trailing reductions after
    the last word of a known-length sentence are exempt).
    """

    def __init__(self, nonterminals: Sequence[str], vocab: Vocabulary,
                 max_depth: int = DEFAULT_MAX_DEPTH, max_streak: int = DEFAULT_MAX_STREAK):
        if max_streak < 1 or max_depth < 1:
            raise ValueError("max_depth and max_streak must be >= 1")
        self.nonterminals = list(nonterminals)
        self.vocab = vocab
        self.max_depth = max_depth
        self.max_streak = max_streak
        self.nt_offset = 1
        self.gen_offset = 1 + len(self.nonterminals)
        self.n_actions = self.gen_offset + len(vocab)
        self._nt_index = {x: i for i, x in enumerate(self.nonterminals)}
        self._gen_ok = np.ones(len(vocab), dtype=bool)
        if EOS in vocab:
            self._gen_ok[vocab.index(EOS)] = False

    # -- action <-> id --------------------------------------------------------

    def action_id(self, action: Action) -> int:
        if action.kind == "REDUCE":
            return 0
        if action.kind == "NT":
            try:
                return self.nt_offset + self._nt_index[action.arg]
            except KeyError:
                raise KeyError(f"unknown nonterminal {action.arg!r}") from None
        if action.kind == "GEN":
            return self.gen_offset + self.vocab.index(action.arg)
        raise ValueError(f"unknown action {action!r}")

    def action(self, action_id: int) -> Action:
        if action_id == 0:
            return REDUCE
        if action_id < self.gen_offset:
            return NT(self.nonterminals[action_id - self.nt_offset])
        return GEN(self.vocab.itos[action_id - self.gen_offset])

    def kind(self, action_id: int) -> str:
        if action_id == 0:
            return "REDUCE"
        return "NT" if action_id < self.gen_offset else "GEN"

    def gen_id(self, word: str) -> int:
        return self.gen_offset + self.vocab.index(word)

    def nt_id(self, label: str) -> int:
        return self.nt_offset + self._nt_index[label]

    def describe(self) -> dict:
        return {"nonterminals": self.nonterminals, "max_depth": self.max_depth,
                "max_streak": self.max_streak}

    # -- validity ---------------------------------------------------------------

    def initial(self, budget: Optional[int] = None) -> ParserState:
        return ParserState(budget=budget)

    def valid_mask(self, state: ParserState) -> np.ndarray:
        if state.done:
            raise ValueError("terminal state has no valid actions")
        mask = np.zeros(self.n_actions, dtype=bool)
        left = state.words_left
        words_remain = left is None or left > 0
        n_open = state.n_open
        under_streak = state.streak < self.max_streak
        if words_remain and under_streak and n_open < self.max_depth and (n_open > 0 or state.n_words == 0):
            mask[self.nt_offset:self.gen_offset] = True
        if n_open > 0 and words_remain:
            mask[self.gen_offset:] = self._gen_ok
        if n_open > 0 and state.open_children[-1] >= 1:
            finishing = left == 0
            if (under_streak or finishing) and (n_open > 1 or left is None or finishing):
                mask[0] = True
        return mask

    def is_valid(self, state: ParserState, action_id: int) -> bool:
        return bool(self.valid_mask(state)[action_id])

    def apply(self, state: ParserState, action_id: int, logprob: float = 0.0, cache=None) -> ParserState:
        """Successor state; raises ``InvalidActionSequence`` for a masked action."""
        if state.done or not self.valid_mask(state)[action_id]:
            raise InvalidActionSequence(f"{self.action(action_id)} is not valid here")
        kind = self.kind(action_id)
        oc = state.open_children
        if kind == "NT":
            if oc:
                oc = oc[:-1] + (oc[-1] + 1,)
            new = replace(state, open_children=oc + (0,), streak=state.streak + 1)
        elif kind == "GEN":
            new = replace(state, open_children=oc[:-1] + (oc[-1] + 1,), n_words=state.n_words + 1, streak=0)
        else:
            oc = oc[:-1]
            new = replace(state, open_children=oc, streak=state.streak + 1, done=not oc)
        return replace(new, history=state.history + (action_id,), logprob=state.logprob + logprob, cache=cache)

    def oracle_masks(self, action_ids: Sequence[int], budget: Optional[int] = None) -> np.ndarray:
        """Validity mask before each action of a gold sequence; also validates it."""
        state = self.initial(budget)
        masks = np.zeros((len(action_ids), self.n_actions), dtype=bool)
        for k, a in enumerate(action_ids):
            masks[k] = self.valid_mask(state)
            if not masks[k, a]:
                raise InvalidActionSequence(
                    f"action {k} ({self.action(a)}) violates the transition constraints")
            state = self.apply(state, a)
        if not state.done:
            raise InvalidActionSequence("sequence does not close the root")
        return masks

    def encode(self, actions: Iterable[Action]) -> list[int]:
        return [self.action_id(a) for a in actions]

    def decode(self, action_ids: Iterable[int]) -> list[Action]:
        return [self.action(a) for a in action_ids]


def nonterminal_inventory(trees: Iterable[Tree]) -> list[str]:
    labels = set()
    for t in trees:
        for sub in t.subtrees():
            if not sub.is_leaf:
                labels.add(sub.label)
    return sorted(labels)
