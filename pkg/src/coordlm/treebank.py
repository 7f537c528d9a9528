"""Bracketed phrase-structure trees: reading, writing, coordination relabeling
and agreement-pattern counts.

Trees are immutable.  A leaf is a ``Tree`` with no children whose label is the
word form; a preterminal is an internal node whose only child is a leaf, so
``(NN door)`` is the node ``NN`` over the leaf ``door``.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

COORDINATORS = {"en": ("and", "or"), "fr": ("et", "ou")}
ALL_COORDINATORS = frozenset(w for ws in COORDINATORS.values() for w in ws)
COORD_LABEL = "NP-COORD"


class TreeParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Tree:
    label: str
    children: tuple = ()

    def __post_init__(self):
        if not self.label or any(ch.isspace() or ch in "()" for ch in self.label):
            raise ValueError(f"invalid tree label {self.label!r}")
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and self.children[0].is_leaf

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.label]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def pos(self) -> list[tuple[str, Optional[str]]]:
        """(word, tag) pairs; tag is None for words without a preterminal."""
        out: list[tuple[str, Optional[str]]] = []

        def walk(node: Tree) -> None:
            for child in node.children:
                if child.is_leaf:
                    out.append((child.label, None))
                elif child.is_preterminal:
                    out.append((child.children[0].label, child.label))
                else:
                    walk(child)

        if self.is_leaf:
            return [(self.label, None)]
        if self.is_preterminal:
            return [(self.children[0].label, self.label)]
        walk(self)
        return out

    def subtrees(self) -> Iterator["Tree"]:
        yield self
        for child in self.children:
            yield from child.subtrees()

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(child.depth() for child in self.children)

    def __str__(self) -> str:
        return serialize(self)


def leaf(word: str) -> Tree:
    return Tree(word)


def base_label(label: str) -> str:
    """Strip function tags: ``NP-SBJ`` -> ``NP``.  Labels such as ``-NONE-`` are kept."""
    if label.startswith("-"):
        return label
    return label.split("-", 1)[0].split("=", 1)[0]


def _tokenize(text: str) -> Iterator[tuple[str, int]]:
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], i
            i = j


def parse_bracketed(text: str) -> Tree:
    """Parse one S-expression such as ``(S (NP (DT the) (NN door)))``."""
    tokens = list(_tokenize(text))
    end = len(text)
    if not tokens:
        raise TreeParseError("empty input", 0)
    pos = 0

    def parse_node() -> Tree:
        nonlocal pos
        tok, off = tokens[pos]
        if tok != "(":
            raise TreeParseError(f"expected '(' but found {tok!r}", off)
        pos += 1
        if pos >= len(tokens):
            raise TreeParseError("unbalanced parentheses", end)
        label, loff = tokens[pos]
        if label in "()":
            raise TreeParseError("empty label", loff)
        pos += 1
        children = []
        while True:
            if pos >= len(tokens):
                raise TreeParseError("unbalanced parentheses", end)
            tok, off = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                children.append(parse_node())
            else:
                children.append(Tree(tok))
                pos += 1
        if not children:
            raise TreeParseError(f"node {label!r} has no children", loff)
        return Tree(label, tuple(children))

    tree = parse_node()
    if pos != len(tokens):
        raise TreeParseError("trailing garbage", tokens[pos][1])
    return tree


def serialize(tree: Tree) -> str:
    if tree.is_leaf:
        return tree.label
    return "(" + tree.label + " " + " ".join(serialize(c) for c in tree.children) + ")"


def read_treebank(path) -> list[Tree]:
    """One tree per line; blank lines and ``#`` comments are skipped."""
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                trees.append(parse_bracketed(line))
            except TreeParseError as exc:
                raise TreeParseError(f"{path}:{lineno}: {exc}", exc.offset) from None
    return trees


def write_treebank(trees: Iterable[Tree], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tree in trees:
            fh.write(serialize(tree) + "\n")


def strip_preterminals(tree: Tree) -> Tree:
    """Replace every preterminal by its word, e.g. ``(NP (DT the) (NN door))`` -> ``(NP the door)``."""
    if tree.is_leaf:
        return tree
    if tree.is_preterminal:
        raise ValueError("cannot strip a bare preterminal; it has no parent")
    return Tree(tree.label, tuple(
        c.children[0] if c.is_preterminal else strip_preterminals(c) for c in tree.children
    ))


# -- coordination ----------------------------------------------------------


def _is_coordinator(node: Tree, coordinators) -> bool:
    if node.is_leaf:
        return node.label.lower() in coordinators
    if node.is_preterminal:
        return node.children[0].label.lower() in coordinators
    return False


def _coord_parts(node: Tree, coordinators) -> Optional[list[Tree]]:
    """Conjunct NPs of a coordinated NP, or None if ``node`` is not one.

    Flat PTB style ``(NP (NP ..) (CC and) (NP ..))`` and FTB style
    ``(NP (NP ..) (COORD (CC et) (NP ..)))`` are both recognised.  In the FTB
    shape ``(NP (DET les) (NC prix) (COORD ..))`` the material before COORD
    forms the first conjunct, returned as a detached NP.
    """
    if node.is_leaf or node.is_preterminal or base_label(node.label) != "NP":
        return None
    conjuncts: list[Tree] = []
    found = False
    for k, child in enumerate(node.children):
        if _is_coordinator(child, coordinators):
            found = True
        elif not child.is_leaf and base_label(child.label) == "NP":
            conjuncts.append(child)
        elif not child.is_leaf and base_label(child.label) == "COORD":
            inner = [g for g in child.children if _is_coordinator(g, coordinators)]
            if inner:
                found = True
                head = node.children[:k]
                if not conjuncts and head and all(
                        not h.is_leaf and h.is_preterminal and base_label(h.label) != "NP" for h in head):
                    conjuncts.append(Tree(node.label, tuple(head)))
                conjuncts.extend(
                    g for g in child.children
                    if not g.is_leaf and base_label(g.label) == "NP"
                )
    return conjuncts if found else None


def to_coord_annotation(tree: Tree, coordinators=ALL_COORDINATORS) -> Tree:
    """Relabel the conjunct NPs of every coordinated NP as ``NP-COORD``."""
    coordinators = frozenset(w.lower() for w in coordinators)

    def relabel(node: Tree, is_conjunct: bool) -> Tree:
        if node.is_leaf:
            return node
        conj_ids = set()
        parts = _coord_parts(node, coordinators)
        detached: Optional[Tree] = None
        if parts is not None:
            conj_ids = {id(p) for p in parts}
            child_ids = {id(c) for c in node.children}
            detached = next((p for p in parts if id(p) not in child_ids and node.children[0] is p.children[0]), None)
        new_children = []
        if detached is not None:
            # FTB bare first conjunct: wrap the material before COORD
            new_children.append(Tree(COORD_LABEL, tuple(relabel(c, False) for c in detached.children)))
        for child in node.children[len(detached.children) if detached is not None else 0:]:
            if not child.is_leaf and base_label(child.label) == "COORD" and parts is not None:
                new_children.append(Tree(child.label, tuple(
                    relabel(g, id(g) in conj_ids) for g in child.children
                )))
            else:
                new_children.append(relabel(child, id(child) in conj_ids))
        label = COORD_LABEL if is_conjunct else node.label
        return Tree(label, tuple(new_children))

    return relabel(tree, False)


# -- agreement pattern statistics -----------------------------------------

NUMBER_VALUES = ("sg", "pl")
GENDER_VALUES = ("m", "f")


class FeatureTagger:
    """Maps ``(word, tag)`` leaves to grammatical features.

    ``noun_number`` / ``noun_gender`` / ``verb_number`` / ``predicate_gender``
    return a feature value, None for a word of the wrong category, or raise
    ``UnknownTag`` for tags the tagger cannot interpret.
    """

    language = "en"

    def is_noun(self, word: str, tag: Optional[str]) -> bool:
        raise NotImplementedError

    def is_verb(self, word: str, tag: Optional[str]) -> bool:
        raise NotImplementedError

    def is_adjective(self, word: str, tag: Optional[str]) -> bool:
        raise NotImplementedError

    def noun_number(self, word, tag):
        raise NotImplementedError

    def verb_number(self, word, tag):
        raise NotImplementedError

    def noun_gender(self, word, tag):
        raise NotImplementedError

    def predicate_gender(self, word, tag):
        raise NotImplementedError


class UnknownTag(LookupError):
    pass


class EnglishTagger(FeatureTagger):
    """PTB tags.  ``was``/``were`` are resolved by form since VBD is number-neutral."""

    language = "en"
    NOUN_TAGS = {"NN": "sg", "NNP": "sg", "NNS": "pl", "NNPS": "pl"}
    VERB_TAGS = {"VBZ": "sg", "VBP": "pl"}
    PAST_BE = {"was": "sg", "were": "pl"}

    def is_noun(self, word, tag):
        return tag is not None and tag.startswith("NN")

    def is_verb(self, word, tag):
        return tag is not None and (tag.startswith("VB") or tag == "MD")

    def is_adjective(self, word, tag):
        return tag is not None and tag.startswith("JJ")

    def noun_number(self, word, tag):
        if tag not in self.NOUN_TAGS:
            raise UnknownTag(tag)
        return self.NOUN_TAGS[tag]

    def verb_number(self, word, tag):
        if tag in self.VERB_TAGS:
            return self.VERB_TAGS[tag]
        if word.lower() in self.PAST_BE:
            return self.PAST_BE[word.lower()]
        raise UnknownTag(tag)

    def noun_gender(self, word, tag):
        raise UnknownTag("English nouns carry no gender")

    def predicate_gender(self, word, tag):
        raise UnknownTag("English adjectives carry no gender")


class LexiconTagger(FeatureTagger):
    """Features looked up by word form in a lexicon (``stimuli.Lexicon.entries``).

    Category is decided by tag prefix (``N``, ``V``, ``ADJ``/``A``), features by form.
    """

    def __init__(self, entries, language: str = "fr"):
        self.language = language
        self.features: dict[str, dict] = {}
        for e in entries:
            if e.language != language:
                continue
            feats = self.features.setdefault(e.form, {})
            feats.setdefault("role", set()).add(e.role)
            if e.number:
                feats.setdefault("number", set()).add(e.number)
            if e.gender:
                feats.setdefault("gender", set()).add(e.gender)

    def is_noun(self, word, tag):
        return tag is not None and (tag.startswith("N") and not tag.startswith("NP"))

    def is_verb(self, word, tag):
        return tag is not None and tag.startswith("V") and tag != "VN"

    def is_adjective(self, word, tag):
        return tag is not None and tag.startswith("A") and not tag.startswith("AP") and tag != "ADV"

    def _lookup(self, word, key):
        vals = self.features.get(word, {}).get(key)
        if not vals or len(vals) != 1:
            raise UnknownTag(f"{word!r} has no unique {key}")
        return next(iter(vals))

    def noun_number(self, word, tag):
        return self._lookup(word, "number")

    def verb_number(self, word, tag):
        return self._lookup(word, "number")

    def noun_gender(self, word, tag):
        return self._lookup(word, "gender")

    def predicate_gender(self, word, tag):
        return self._lookup(word, "gender")


@dataclass
class AgreementPatternTable:
    """Counts keyed by ``(feature1, coordinator, feature2)``.

    ``outcomes`` are ``("sg", "pl")`` in number mode or ``("m", "f")`` in gender
    mode.  ``unclassified`` counts detected pairs whose predicate could not be
    classified; ``total`` includes them.
    """

    mode: str = "number"
    coordinators: tuple = ("and", "or")
    counts: dict = field(default_factory=dict)
    diagnostics: Counter = field(default_factory=Counter)

    def __post_init__(self):
        values = NUMBER_VALUES if self.mode == "number" else GENDER_VALUES
        for coord in self.coordinators:
            for a in values:
                for b in values:
                    self.counts.setdefault((a, coord, b), Counter())

    @property
    def outcomes(self) -> tuple:
        return NUMBER_VALUES if self.mode == "number" else GENDER_VALUES

    def add(self, key, outcome: Optional[str]) -> None:
        self.counts[key][outcome if outcome is not None else "unclassified"] += 1

    def row(self, key) -> dict:
        c = self.counts[key]
        row = {o: c[o] for o in self.outcomes}
        row["unclassified"] = c["unclassified"]
        row["total"] = sum(c.values())
        return row

    def rows(self) -> list[tuple]:
        # conventional ordering: pl_and_pl, sg_and_pl, pl_and_sg, sg_and_sg, then or.
        a, b = self.outcomes[::-1] if self.mode == "number" else self.outcomes
        order = [(a, a), (b, a), (a, b), (b, b)]
        keys = []
        for coord in self.coordinators:
            keys.extend((x, coord, y) for x, y in order)
        return [(k, self.row(k)) for k in keys]

    def merge(self, other: "AgreementPatternTable") -> "AgreementPatternTable":
        out = AgreementPatternTable(self.mode, self.coordinators)
        for src in (self, other):
            for k, c in src.counts.items():
                out.counts.setdefault(k, Counter()).update(c)
            out.diagnostics.update(src.diagnostics)
        return out

    def to_csv(self, path):
        prefix = "n" if self.mode == "number" else "g"
        o1, o2 = self.outcomes
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{prefix}1", "coord", f"{prefix}2", f"outcome_{o1}", f"outcome_{o2}",
                        "unclassified", "total"])
            for (x, coord, y), row in self.rows():
                w.writerow([x, coord, y, row[o1], row[o2], row["unclassified"], row["total"]])
        return path


CLAUSE_LABELS = frozenset({"S", "SINV", "SQ", "SENT", "Ssub", "Sint", "Srel"})
VERB_PHRASE_LABELS = frozenset({"VP", "VN"})
PREDICATE_LABELS = frozenset({"ADJP", "AP"})


def _head_noun(np_node: Tree, tagger: FeatureTagger) -> Optional[tuple[str, str]]:
    """Rightmost noun preterminal directly under the NP, else the head of its first NP child."""
    for child in reversed(np_node.children):
        if child.is_preterminal and tagger.is_noun(child.children[0].label, child.label):
            return child.children[0].label, child.label
    for child in np_node.children:
        if not child.is_leaf and not child.is_preterminal and base_label(child.label) == "NP":
            return _head_noun(child, tagger)
    return None


def _first_leaf_where(node: Tree, pred) -> Optional[tuple[str, str]]:
    for sub in node.subtrees():
        if sub.is_preterminal and pred(sub.children[0].label, sub.label):
            return sub.children[0].label, sub.label
    return None


def _predicate(clause: Tree, subj_index: int, tagger: FeatureTagger, mode: str):
    """Verb (number mode) or predicative adjective (gender mode) following the subject."""
    for sib in clause.children[subj_index + 1:]:
        if sib.is_leaf or base_label(sib.label) not in VERB_PHRASE_LABELS | PREDICATE_LABELS:
            continue
        if mode == "number":
            if base_label(sib.label) in VERB_PHRASE_LABELS:
                return _first_leaf_where(sib, tagger.is_verb)
        else:
            if base_label(sib.label) in PREDICATE_LABELS:
                return _first_leaf_where(sib, tagger.is_adjective)
            for sub in sib.subtrees():
                if not sub.is_leaf and base_label(sub.label) in PREDICATE_LABELS:
                    return _first_leaf_where(sub, tagger.is_adjective)
    return None


def count_agreement_patterns(corpus: Iterable[Tree], tagger: FeatureTagger,
                             mode: str = "number",
                             coordinators: Optional[Sequence[str]] = None) -> AgreementPatternTable:
    """Tabulate subject CoordNP / predicate agreement.

    A pair is counted when a clause's leftmost NP child is a two-conjunct
    coordinated NP and a verb (number) or predicative adjective (gender)
    follows it in the clause.  Pairs with unclassifiable conjuncts are skipped
    and tallied in ``diagnostics``; unclassifiable predicates go to the
    ``unclassified`` column.
    """
    if mode not in ("number", "gender"):
        raise ValueError(f"mode must be 'number' or 'gender', not {mode!r}")
    coordinators = tuple(coordinators or COORDINATORS.get(tagger.language, ("and", "or")))
    table = AgreementPatternTable(mode, coordinators)
    cset = frozenset(coordinators)
    conj_feature = tagger.noun_number if mode == "number" else tagger.noun_gender
    pred_feature = tagger.verb_number if mode == "number" else tagger.predicate_gender
    for tree in corpus:
        for clause in tree.subtrees():
            if clause.is_leaf or base_label(clause.label) not in CLAUSE_LABELS:
                continue
            subj_index = next((i for i, c in enumerate(clause.children)
                               if not c.is_leaf and not c.is_preterminal
                               and base_label(c.label) == "NP"), None)
            if subj_index is None:
                continue
            subj = clause.children[subj_index]
            parts = _coord_parts(subj, cset)
            if parts is None:
                continue
            if len(parts) != 2:
                table.diagnostics["not_two_conjuncts"] += 1
                continue
            coord = _coordinator_between(subj, cset)
            heads = [_head_noun(p, tagger) for p in parts]
            if any(h is None for h in heads):
                table.diagnostics["conjunct_without_noun"] += 1
                continue
            try:
                feats = [conj_feature(w, t) for w, t in heads]
            except UnknownTag:
                table.diagnostics["unknown_conjunct_tag"] += 1
                continue
            pred = _predicate(clause, subj_index, tagger, mode)
            if pred is None:
                table.diagnostics["no_predicate"] += 1
                continue
            try:
                outcome = pred_feature(*pred)
            except UnknownTag:
                table.diagnostics["unknown_predicate_tag"] += 1
                outcome = None
            table.add((feats[0], coord, feats[1]), outcome)
    return table


def _coordinator_between(np_node: Tree, cset) -> str:
    for child in np_node.children:
        if _is_coordinator(child, cset):
            return (child if child.is_leaf else child.children[0]).label.lower()
        if not child.is_leaf and base_label(child.label) == "COORD":
            for g in child.children:
                if _is_coordinator(g, cset):
                    return (g if g.is_leaf else g.children[0]).label.lower()
    raise ValueError("no coordinator")
