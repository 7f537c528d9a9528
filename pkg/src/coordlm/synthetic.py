"""Hand-written probabilistic grammars that emit tagged phrase-structure trees.

In both languages an ``and``/``et`` coordination of two subjects is plural
(and masculine in French unless both conjuncts are feminine) while
``or``/``ou`` agrees with the closer conjunct.  Word forms come from the
sample lexicons so generated corpora and stimuli share a vocabulary.  Noun
pairs used by the Exp-2 stimuli can be held out of training coordinations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .stimuli import DEFAULT_ITEMS, Lexicon, _Templates, _gender_quads, _number_pairs
from .treebank import Tree, leaf, strip_preterminals


def _pt(tag: str, word: str) -> Tree:
    return Tree(tag, (leaf(word),))


def _cap_first(tree: Tree) -> Tree:
    """Capitalise the first word of a tree."""
    if tree.is_leaf:
        return leaf(tree.label[:1].upper() + tree.label[1:])
    return Tree(tree.label, (_cap_first(tree.children[0]),) + tree.children[1:])


@dataclass(frozen=True)
class GrammarConfig:
    p_coord: float = 0.45  # subject is a coordination
    p_or: float = 0.4  # share of coordinations using or/ou
    p_embed: float = 0.15  # clause embedded under a sentential-complement frame
    p_object: float = 0.1  # transitive frame with an NP object (optionally + a second clause)
    p_question: float = 0.05  # verb-first question
    p_past: float = 0.5  # English past tense


def held_out_pairs(language: str, lexicon: Optional[Lexicon] = None,
                   n_items: Optional[int] = None) -> set[frozenset]:
    """Unordered noun pairs coordinated in the Exp-2/3 stimuli for ``language``."""
    lex = lexicon or Lexicon.sample(language)
    t = _Templates(lex, language)
    pairs = {frozenset(p) for p in _number_pairs(t, n_items)}
    if language == "fr":
        n = DEFAULT_ITEMS["fr"] if n_items is None else n_items
        for m1, f1, m2, f2 in _gender_quads(lex, n):
            pairs |= {frozenset(p) for p in ((m1, m2), (m1, f2), (f1, m2), (f1, f2))}
    return pairs


class _Sampler:
    def __init__(self, language: str, lexicon: Optional[Lexicon], cfg: GrammarConfig, seed: int,
                 held_out: Iterable[frozenset]):
        self.lang = language
        self.lex = lexicon or Lexicon.sample(language)
        self.t = _Templates(self.lex, language)
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.nouns = self.lex.lemmas(language, "noun")
        if len(self.nouns) < 3:
            raise ValueError("the grammar needs at least three nouns")
        self.held_out = set(held_out)

    def choice(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def coin(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def number(self) -> str:
        return "pl" if self.coin(0.5) else "sg"

    def coord_nouns(self) -> tuple[str, str]:
        while True:
            a, b = self.choice(self.nouns), self.choice(self.nouns)
            if a != b and frozenset((a, b)) not in self.held_out:
                return a, b


class _English(_Sampler):
    NOUN_TAG = {"sg": "NN", "pl": "NNS"}
    VERB_TAG = {"sg": "VBZ", "pl": "VBP"}

    def np(self, noun: str, num: str) -> Tree:
        return Tree("NP", (_pt("DT", self.t.det(num)), _pt(self.NOUN_TAG[num], self.lex.form("en", "noun", noun, num))))

    def subject(self) -> tuple[Tree, str]:
        if not self.coin(self.cfg.p_coord):
            num = self.number()
            return self.np(self.choice(self.nouns), num), num
        (a, b), na, nb = self.coord_nouns(), self.number(), self.number()
        coord = "or" if self.coin(self.cfg.p_or) else "and"
        agree = "pl" if coord == "and" else nb
        return Tree("NP", (self.np(a, na), _pt("CC", self.t.coordinator(coord)), self.np(b, nb))), agree

    def be(self, num: str) -> Tree:
        if self.coin(self.cfg.p_past):
            return _pt("VBD", self.lex.form("en", "verb", self.t.verb_lemma(1), num))
        return _pt(self.VERB_TAG[num], self.lex.form("en", "verb", self.t.verb_lemma(0), num))

    def adjp(self) -> Tree:
        return Tree("ADJP", (_pt("JJ", self.choice(self.lex.lemmas("en", "adj"))),))

    def clause(self) -> Tree:
        subj, num = self.subject()
        return Tree("S", (subj, Tree("VP", (self.be(num), self.adjp()))))

    def frame(self, role: str) -> tuple[str, str, list[str]]:
        words = self.choice(self.lex.forms("en", role)).split()
        return words[0], words[1], words[2:]

    def sentence(self) -> Tree:
        r = self.rng.random()
        c = self.cfg
        if r < c.p_embed:
            pron, verb, comp = self.frame("frame-control")
            sbar = Tree("SBAR", tuple(_pt("IN", w) for w in comp) + (self.clause(),))
            body = (Tree("NP", (_pt("PRP", pron),)), Tree("VP", (_pt("VBP", verb), sbar)))
            tree = Tree("S", body + (_pt(".", "."),))
        elif r < c.p_embed + c.p_object:
            pron, verb, _ = self.frame("frame-critical")
            obj = self.np(self.choice(self.nouns), self.number())
            first = Tree("S", (Tree("NP", (_pt("PRP", pron),)), Tree("VP", (_pt("VBD", verb), obj))))
            if self.coin(0.5):
                second = self.clause()
                tree = Tree("S", (first, _pt("CC", self.t.coordinator("and")), second, _pt(".", ".")))
            else:
                tree = Tree("S", first.children + (_pt(".", "."),))
        elif r < c.p_embed + c.p_object + c.p_question:
            subj, num = self.subject()
            wh = self.lex.forms("en", "frame-wh")[0]
            sq = Tree("SQ", (_pt(self.VERB_TAG[num], self.lex.form("en", "verb", self.t.verb_lemma(0), num)), subj))
            tree = Tree("SBARQ", (Tree("WHNP", (_pt("WP", wh),)), sq, _pt(".", "?")))
        else:
            tree = Tree("S", self.clause().children + (_pt(".", "."),))
        return _cap_first(tree)


class _French(_Sampler):
    INFINITIVES = ("augmenter", "baisser", "changer")

    def np(self, noun: str, num: str) -> list[Tree]:
        g = self.lex.gender_of("fr", noun)
        return [_pt("DET", self.t.det(num, g)), _pt("NC", self.lex.form("fr", "noun", noun, num))]

    def subject(self) -> tuple[Tree, str, str]:
        if not self.coin(self.cfg.p_coord):
            noun, num = self.choice(self.nouns), self.number()
            return Tree("NP", tuple(self.np(noun, num))), num, self.lex.gender_of("fr", noun)
        (a, b), na, nb = self.coord_nouns(), self.number(), self.number()
        ga, gb = self.lex.gender_of("fr", a), self.lex.gender_of("fr", b)
        coord = "or" if self.coin(self.cfg.p_or) else "and"
        if coord == "and":
            num, gen = "pl", ("f" if ga == gb == "f" else "m")
        else:
            num, gen = nb, gb
        second = Tree("NP", tuple(self.np(b, nb)))
        sub = Tree("COORD", (_pt("CC", self.t.coordinator(coord)), second))
        return Tree("NP", tuple(self.np(a, na)) + (sub,)), num, gen

    def predicate(self, num: str, gen: str, verb_lemma: str) -> list[Tree]:
        if verb_lemma == self.t.verb_lemma(0) and self.coin(0.5):
            v = _pt("V", self.lex.form("fr", "verb", verb_lemma, num))
            return [Tree("VN", (v,)), Tree("VPinf", (Tree("VN", (_pt("VINF", self.choice(self.INFINITIVES)),)),))]
        copula = self.t.verb_lemma(1) if verb_lemma == self.t.verb_lemma(0) else verb_lemma
        v = _pt("V", self.lex.form("fr", "verb", copula, num))
        adj = self.lex.form("fr", "adj", self.choice(self.lex.lemmas("fr", "adj")), num, gen)
        return [Tree("VN", (v,)), Tree("AP", (_pt("ADJ", adj),))]

    def clause(self, label: str, verb_lemma: str) -> list[Tree]:
        subj, num, gen = self.subject()
        return [subj] + self.predicate(num, gen, verb_lemma)

    def frame(self, role: str) -> list[str]:
        return self.choice(self.lex.forms("fr", role)).split()

    def sentence(self) -> Tree:
        r = self.rng.random()
        c = self.cfg
        dot = _pt("PONCT", ".")
        if r < c.p_embed:
            w = self.frame("frame-control")
            vn = Tree("VN", (_pt("CLS", w[0]), _pt("V", w[1])))
            ssub = Tree("Ssub", (_pt("CS", w[2]),) + tuple(self.clause("Ssub", self.t.verb_lemma(2))))
            tree = Tree("SENT", (vn, ssub, dot))
        elif r < c.p_embed + c.p_object:
            w = self.frame("frame-critical")
            vn = Tree("VN", (_pt("CLS", w[0]), _pt("V", w[1]), _pt("VPP", w[2])))
            obj = Tree("NP", tuple(self.np(self.choice(self.nouns), self.number())))
            if self.coin(0.5):
                second = Tree("Sint", tuple(self.clause("Sint", self.t.verb_lemma(2))))
                tree = Tree("SENT", (vn, obj, Tree("COORD", (_pt("CC", self.t.coordinator("and")), second)), dot))
            else:
                tree = Tree("SENT", (vn, obj, dot))
        elif r < c.p_embed + c.p_object + c.p_question:
            w = self.lex.forms("fr", "frame-wh")[0].split()
            subj, num, _ = self.subject()
            verb = _pt("V", self.lex.form("fr", "verb", self.t.verb_lemma(0), num))
            inner = Tree("Ssub", (_pt("ADVWH", w[-1]), Tree("VN", (verb,)), subj))
            vn = Tree("VN", (_pt("CLS", w[0]), _pt("CLR", w[1]), _pt("V", w[2])))
            tree = Tree("SENT", (vn, inner, dot))
        else:
            tree = Tree("SENT", tuple(self.clause("SENT", self.t.verb_lemma(0))) + (dot,))
        return _cap_first(tree)


def generate_treebank(language: str, n: int, seed: int = 0, lexicon: Optional[Lexicon] = None,
                      config: GrammarConfig = GrammarConfig(),
                      held_out: Optional[Iterable[frozenset]] = None) -> list[Tree]:
    """``n`` tagged trees.  ``held_out`` defaults to the stimulus noun pairs."""
    cls = {"en": _English, "fr": _French}.get(language)
    if cls is None:
        raise ValueError(f"unsupported language {language!r}")
    if held_out is None:
        held_out = held_out_pairs(language, lexicon)
    sampler = cls(language, lexicon, config, seed, held_out)
    return [sampler.sentence() for _ in range(n)]


def sentences(trees: Sequence[Tree]) -> list[list[str]]:
    return [list(t.leaves()) for t in trees]


def toy_treebank(n: int = 200, seed: int = 0, language: str = "en") -> list[Tree]:
    """Small preterminal-stripped bank for quick syntactic-LM training."""
    return [strip_preterminals(t) for t in generate_treebank(language, n, seed)]
