import numpy as np
import pytest
from hypothesis import given, strategies as st

from coordlm.syntax.actions import (GEN, NT, REDUCE, InvalidActionSequence, TransitionSystem, actions_to_tree,
                                    nonterminal_inventory, tree_to_actions)
from coordlm.treebank import Tree, leaf, parse_bracketed
from coordlm.wordlm import Vocabulary

from _toys import toy_system


def P(s):
    return parse_bracketed(s)


def stripped_trees(max_leaves=10):
    words = st.sampled_from(["the", "door", "opens", "and", "é"])
    labels = st.sampled_from(["S", "NP", "VP", "PP"])
    return st.recursive(
        st.builds(lambda l, ws: Tree(l, tuple(leaf(w) for w in ws)), labels, st.lists(words, min_size=1, max_size=3)),
        lambda kids: st.builds(lambda l, cs: Tree(l, tuple(cs)), labels, st.lists(kids, min_size=1, max_size=3)),
        max_leaves=max_leaves,
    )


def test_linearize_example():
    t = Tree("S", (Tree("NP", (leaf("the"), leaf("door"))), Tree("VP", (leaf("opens"),))))
    assert tree_to_actions(t) == [NT("S"), NT("NP"), GEN("the"), GEN("door"), REDUCE, NT("VP"), GEN("opens"),
                                  REDUCE, REDUCE]
    assert actions_to_tree(tree_to_actions(t)) == t


def test_linearize_single_leaf():
    t = Tree("NP", (leaf("door"),))
    assert tree_to_actions(t) == [NT("NP"), GEN("door"), REDUCE]
    assert actions_to_tree([NT("NP"), GEN("door"), REDUCE]) == t


def test_action_str():
    assert [str(a) for a in (NT("S"), GEN("x"), REDUCE)] == ["NT(S)", "GEN(x)", "REDUCE"]


@pytest.mark.parametrize("seq,msg", [
    ([REDUCE], "no open constituent"),
    ([NT("S"), GEN("a")], "left open"),
    ([GEN("a")], "before any NT"),
    ([NT("S"), REDUCE], "empty"),
    ([NT("S"), GEN("a"), REDUCE, NT("S")], "follows the completed tree"),
    ([], "empty action sequence"),
])
def test_decode_errors(seq, msg):
    with pytest.raises(InvalidActionSequence, match=msg):
        actions_to_tree(seq)


@given(stripped_trees())
def test_linearization_bijection(t):
    acts = tree_to_actions(t)
    assert actions_to_tree(acts) == t
    assert tree_to_actions(actions_to_tree(acts)) == acts
    assert [a.arg for a in acts if a.kind == "GEN"] == t.leaves()


# -- transition system -----------------------------------------------------------


def test_action_ids_layout():
    s = toy_system(("A", "B"), ("x", "y"))
    assert s.n_actions == 1 + 2 + 4
    assert s.action_id(REDUCE) == 0
    assert s.action_id(NT("B")) == 2
    assert s.action_id(GEN("x")) == 5 and s.action_id(GEN("zzz")) == 3  # OOV -> <unk>
    assert [s.action(i) for i in range(s.n_actions)] == [
        REDUCE, NT("A"), NT("B"), GEN("<unk>"), GEN("<eos>"), GEN("x"), GEN("y")]
    with pytest.raises(KeyError):
        s.action_id(NT("C"))


def test_initial_state_only_nt():
    s = toy_system()
    m = s.valid_mask(s.initial())
    assert list(np.flatnonzero(m)) == [1, 2]


def test_only_reduce_when_budget_exhausted():
    s = toy_system()
    st_ = s.initial(budget=1)
    for a in (s.nt_id("A"), s.gen_id("x")):
        st_ = s.apply(st_, a)
    assert list(np.flatnonzero(s.valid_mask(st_))) == [0]


def test_eos_never_generated():
    s = toy_system()
    st_ = s.apply(s.initial(), s.nt_id("A"))
    assert not s.valid_mask(st_)[s.gen_id("<eos>")]
    assert s.valid_mask(st_)[s.gen_id("<unk>")]


def test_depth_and_streak_limits():
    s = TransitionSystem(["A"], Vocabulary(["x"]), max_depth=2, max_streak=3)
    st_ = s.apply(s.apply(s.initial(), 1), 1)
    assert not s.valid_mask(st_)[1]  # depth 2 reached
    s = TransitionSystem(["A"], Vocabulary(["x"]), max_depth=10, max_streak=3)
    st_ = s.initial()
    for _ in range(3):
        st_ = s.apply(st_, 1)
    assert not s.valid_mask(st_)[1]
    assert s.valid_mask(st_)[s.gen_id("x")]


def test_single_root_and_no_reduce_on_empty():
    s = toy_system()
    st_ = s.apply(s.initial(), 1)
    assert not s.valid_mask(st_)[0]  # open constituent has no child yet
    st_ = s.apply(s.apply(st_, s.gen_id("x")), 0)
    assert st_.done
    with pytest.raises(ValueError, match="terminal"):
        s.valid_mask(st_)
    # after the first word, NT is not allowed at the top level once the root has closed -> done


def test_known_length_root_close_only_at_end():
    s = toy_system()
    st_ = s.apply(s.apply(s.initial(budget=2), 1), s.gen_id("x"))
    assert not s.valid_mask(st_)[0]
    st_ = s.apply(st_, s.gen_id("y"))
    assert s.valid_mask(st_)[0] and not s.valid_mask(st_)[1]


def test_apply_rejects_invalid():
    s = toy_system()
    with pytest.raises(InvalidActionSequence, match="not valid"):
        s.apply(s.initial(), 0)


def test_oracle_masks():
    s = toy_system()
    ids = s.encode([NT("A"), NT("B"), GEN("x"), REDUCE, GEN("y"), REDUCE])
    m = s.oracle_masks(ids)
    assert m.shape == (6, s.n_actions) and all(m[k, a] for k, a in enumerate(ids))
    with pytest.raises(InvalidActionSequence, match="close the root"):
        s.oracle_masks(ids[:-1])
    with pytest.raises(InvalidActionSequence, match="violates"):
        s.oracle_masks(s.encode([NT("A"), NT("A"), NT("A"), GEN("x"), REDUCE, REDUCE, REDUCE]))


def test_nonterminal_inventory():
    trees = [P("(S (NP the door) (VP opens))"), P("(NP (PP a))")]
    assert nonterminal_inventory(trees) == ["NP", "PP", "S", "VP"]
