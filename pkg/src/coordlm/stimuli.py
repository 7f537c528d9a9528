"""Coordination-agreement stimulus suites built from feature-annotated lexicons.

A lexicon is a UTF-8 TSV with columns ``language, lemma, number, gender,
form, role``.  Roles used by the templates: ``noun``, ``det``, ``verb``,
``adj``, ``coord``, ``frame-control``, ``frame-critical``, ``frame-wh``.
Empty or ``-`` number/gender cells mean "unspecified".

Every generator returns ``StimulusItem`` objects; an item is one
(item id, condition, measure region) cell with a shared prefix and the
continuations to score after it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

LEXICON_COLUMNS = ("language", "lemma", "number", "gender", "form", "role")
STIMULUS_COLUMNS = ("experiment", "item_id", "condition", "prefix", "continuation",
                    "continuation_class", "measure_region")

NUMBERS = ("sg", "pl")
GENDERS = ("m", "f")

# condition inventories, in table order
EXP1_NUMBER = ("Npl", "Nsg")
EXP1_GENDER = ("Nm", "Nf")
EXP2_NUMBER = ("pl_and_pl", "sg_and_pl", "pl_and_sg", "sg_and_sg",
               "pl_or_pl", "sg_or_pl", "pl_or_sg", "sg_or_sg")
EXP2_GENDER = ("m_and_m", "f_and_m", "m_and_f", "f_and_f",
               "m_or_m", "f_or_m", "m_or_f", "f_or_f")
EXP3_NUMBER = EXP2_NUMBER[:4]
EXP3_GENDER = EXP2_GENDER[:4]
EXP4 = ("Vpl_Npl", "Vpl_Nsg", "Vsg_Nsg")

DEFAULT_ITEMS = {"en": 37, "fr": 24}


class LexiconError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class LexiconEntry:
    language: str
    lemma: str
    number: str
    gender: str
    form: str
    role: str


def _norm(cell: str) -> str:
    cell = cell.strip()
    return "" if cell == "-" else cell


class Lexicon:
    def __init__(self, entries: Iterable[LexiconEntry] = ()):
        self.entries = list(entries)
        self._cells: dict = {}
        for e in self.entries:
            key = (e.language, e.role, e.lemma, e.number, e.gender)
            self._cells.setdefault(key, e.form)
        for lang in {e.language for e in self.entries if e.language == "fr"}:
            for lemma in self.lemmas(lang, "noun"):
                genders = {e.gender for e in self.entries
                           if e.language == lang and e.role == "noun" and e.lemma == lemma}
                if len(genders) != 1 or not genders <= set(GENDERS):
                    raise LexiconError(f"French noun {lemma!r} must carry exactly one gender, got {sorted(genders)}")

    @classmethod
    def from_tsv(cls, path) -> "Lexicon":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_text(fh.read(), str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<lexicon>") -> "Lexicon":
        reader = csv.reader(io.StringIO(text), delimiter="\t")
        header = next(reader, None)
        if header is None:
            return cls()
        if tuple(h.strip() for h in header) != LEXICON_COLUMNS:
            raise SchemaError(f"{source}: expected columns {LEXICON_COLUMNS}, got {tuple(header)}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(LEXICON_COLUMNS):
                raise SchemaError(f"{source}:{lineno}: expected {len(LEXICON_COLUMNS)} fields, got {len(row)}")
            lang, lemma, num, gen, form, role = (_norm(c) for c in row)
            entries.append(LexiconEntry(lang, lemma, num, gen, form, role))
        return cls(entries)

    @classmethod
    def sample(cls, language: str) -> "Lexicon":
        """The bundled sample lexicon for ``language`` ("en" or "fr")."""
        res = resources.files("coordlm.data").joinpath(f"lexicon_{language}.tsv")
        if not res.is_file():
            raise FileNotFoundError(f"no sample lexicon for language {language!r}")
        return cls.from_text(res.read_text(encoding="utf-8"), f"lexicon_{language}.tsv")

    def __len__(self) -> int:
        return len(self.entries)

    def lemmas(self, language: str, role: str, gender: Optional[str] = None) -> list[str]:
        """Lemmas with ``role`` in file order (deduplicated)."""
        seen: dict = {}
        for e in self.entries:
            if e.language == language and e.role == role and (gender is None or e.gender == gender):
                seen.setdefault(e.lemma, None)
        return list(seen)

    def forms(self, language: str, role: str) -> list[str]:
        return [e.form for e in self.entries if e.language == language and e.role == role]

    def gender_of(self, language: str, noun: str) -> str:
        for e in self.entries:
            if e.language == language and e.role == "noun" and e.lemma == noun:
                return e.gender
        raise LexiconError(f"unknown noun {noun!r}")

    def form(self, language: str, role: str, lemma: str, number: str = "", gender: str = "") -> str:
        """Surface form of a cell; nouns ignore ``gender`` since they carry their own."""
        if role == "noun":
            gender = self.gender_of(language, lemma)
        for n in dict.fromkeys((number, "")):
            for g in dict.fromkeys((gender, "")):
                f = self._cells.get((language, role, lemma, n, g))
                if f:
                    return f
        cell = "/".join(x for x in (number, gender) if x) or "bare"
        raise LexiconError(f"lexicon has no {role} form for {lemma!r} in cell {cell} ({language})")


@dataclass(frozen=True)
class Continuation:
    text: str
    cls: str  # sg/pl, m/f, or "coord"


@dataclass(frozen=True)
class StimulusItem:
    experiment: str
    item_id: int
    condition: str
    prefix: str
    continuations: tuple
    measure_region: str

    def strings(self) -> list[str]:
        return [f"{self.prefix} {c.text}" for c in self.continuations]


def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


# -- per-language template pieces -------------------------------------------


class _Templates:
    def __init__(self, lexicon: Lexicon, language: str):
        if language not in DEFAULT_ITEMS:
            raise ValueError(f"unsupported language {language!r}")
        self.lex = lexicon
        self.lang = language

    def det(self, number: str, gender: str = "") -> str:
        lemmas = self.lex.lemmas(self.lang, "det")
        if not lemmas:
            raise LexiconError(f"lexicon has no determiner ({self.lang})")
        return self.lex.form(self.lang, "det", lemmas[0], number, gender)

    def np(self, noun: str, number: str) -> str:
        g = self.lex.gender_of(self.lang, noun)
        return f"{self.det(number, g)} {self.lex.form(self.lang, 'noun', noun, number)}"

    def verb_pair(self, lemma: str) -> tuple:
        return tuple(Continuation(self.lex.form(self.lang, "verb", lemma, n), n) for n in NUMBERS)

    def adj_pair(self, lemma: str) -> tuple:
        return tuple(Continuation(self.lex.form(self.lang, "adj", lemma, "pl", g), g) for g in GENDERS)

    def coordinator(self, which: str) -> str:
        coords = self.lex.forms(self.lang, "coord")
        idx = {"and": 0, "or": 1}[which]
        if len(coords) <= idx:
            raise LexiconError(f"lexicon lacks the {which!r} coordinator ({self.lang})")
        return coords[idx]

    def frame(self, role: str, i: int) -> str:
        frames = self.lex.forms(self.lang, role)
        if not frames:
            raise LexiconError(f"lexicon has no {role} entries ({self.lang})")
        return frames[i % len(frames)]

    def verb_lemma(self, k: int = 0) -> str:
        lemmas = self.lex.lemmas(self.lang, "verb")
        if len(lemmas) <= k:
            raise LexiconError(f"lexicon needs at least {k + 1} verb lemma(s) ({self.lang})")
        return lemmas[k]

    def adj_lemma(self) -> str:
        lemmas = self.lex.lemmas(self.lang, "adj")
        if not lemmas:
            raise LexiconError(f"lexicon has no adjectives ({self.lang})")
        return lemmas[0]


# Which verb lemma (by position in the lexicon's verb list) each French/English
# template uses.  en: be, be-past.  fr: aller, être, être-imparfait.
_VERBS = {
    "en": {"present": 0, "past": 1},
    "fr": {"number": 0, "copula": 1, "imperfect": 2},
}


def _pairs(nouns: Sequence[str], n_items: int) -> list[tuple[str, str]]:
    """Round-robin pairing of distinct nouns; deterministic in lexicon order."""
    k = len(nouns)
    if k < 2:
        return []
    out = []
    for j in range(n_items):
        first = j % k
        offset = 1 + (j // k) % (k - 1)
        out.append((nouns[first], nouns[(first + offset) % k]))
    return out


def _number_pairs(t: _Templates, n_items: Optional[int]) -> list[tuple[str, str]]:
    n_items = DEFAULT_ITEMS[t.lang] if n_items is None else n_items
    if t.lang == "en":
        return _pairs(t.lex.lemmas("en", "noun"), n_items)
    # French: both nouns share gender; alternate masculine and feminine items
    masc = _pairs(t.lex.lemmas("fr", "noun", "m"), (n_items + 1) // 2)
    fem = _pairs(t.lex.lemmas("fr", "noun", "f"), n_items // 2)
    if not masc or (n_items > 1 and not fem):
        return []
    return [masc[j // 2] if j % 2 == 0 else fem[j // 2] for j in range(n_items)]


def _split(cond: str) -> tuple[str, str, str]:
    a, coord, b = cond.split("_")
    return a, coord, b


# -- generators ------------------------------------------------------------------


def generate_exp1(lexicon: Lexicon, language: str, mode: str = "number",
                  n_items: Optional[int] = None) -> list[StimulusItem]:
    """Single-noun subjects.  Number mode: one item per noun; gender mode: one (m, f) noun pair per item."""
    t = _Templates(lexicon, language)
    out: list[StimulusItem] = []
    if mode == "number":
        nouns = lexicon.lemmas(language, "noun")
        if not nouns:
            return []
        exp = f"exp1-number-{language}"
        verbs = t.verb_pair(t.verb_lemma(0))
        for j, noun in enumerate(nouns[:n_items] if n_items is not None else nouns):
            for cond in EXP1_NUMBER:
                num = cond[1:]
                out.append(StimulusItem(exp, j, cond, _cap(t.np(noun, num)), verbs, "verb"))
        return out
    if mode != "gender":
        raise ValueError(f"mode must be 'number' or 'gender', got {mode!r}")
    if language != "fr":
        raise ValueError("gender mode is only defined for French")
    masc, fem = lexicon.lemmas("fr", "noun", "m"), lexicon.lemmas("fr", "noun", "f")
    if not masc or not fem:
        return []
    n = max(len(masc), len(fem)) if n_items is None else n_items
    copula = t.lex.form("fr", "verb", t.verb_lemma(1), "pl")
    adjs = t.adj_pair(t.adj_lemma())
    for j in range(n):
        for cond, noun in zip(EXP1_GENDER, (masc[j % len(masc)], fem[j % len(fem)])):
            prefix = _cap(f"{t.np(noun, 'pl')} {copula}")
            out.append(StimulusItem("exp1-gender-fr", j, cond, prefix, adjs, "adj"))
    return out


def _coord_np(t: _Templates, n1: str, num1: str, coord: str, n2: str, num2: str) -> str:
    return f"{t.np(n1, num1)} {t.coordinator(coord)} {t.np(n2, num2)}"


def generate_exp2_number(lexicon: Lexicon, language: str, n_items: Optional[int] = None) -> list[StimulusItem]:
    """8 coordination conditions per item; English crosses them with present/past tense."""
    t = _Templates(lexicon, language)
    pairs = _number_pairs(t, n_items)
    if not pairs:
        return []
    exp = f"exp2-number-{language}"
    if language == "en":
        tenses = [("verb:present", t.verb_pair(t.verb_lemma(_VERBS["en"]["present"]))),
                  ("verb:past", t.verb_pair(t.verb_lemma(_VERBS["en"]["past"])))]
    else:
        tenses = [("verb", t.verb_pair(t.verb_lemma(_VERBS["fr"]["number"])))]
    out = []
    for j, (n1, n2) in enumerate(pairs):
        for cond in EXP2_NUMBER:
            a, coord, b = _split(cond)
            prefix = _cap(_coord_np(t, n1, a, coord, n2, b))
            for region, verbs in tenses:
                out.append(StimulusItem(exp, j, cond, prefix, verbs, region))
    return out


def _gender_quads(lexicon: Lexicon, n_items: int) -> list[tuple[str, str, str, str]]:
    """(first m, first f, second m, second f) nouns per item."""
    mp = _pairs(lexicon.lemmas("fr", "noun", "m"), n_items)
    fp = _pairs(lexicon.lemmas("fr", "noun", "f"), n_items)
    if not mp or not fp:
        return []
    return [(mp[j][0], fp[j][0], mp[j][1], fp[j][1]) for j in range(n_items)]


def _gender_subject(t: _Templates, quad, cond: str) -> str:
    g1, coord, g2 = _split(cond)
    m1, f1, m2, f2 = quad
    first = m1 if g1 == "m" else f1
    second = m2 if g2 == "m" else f2
    return _coord_np(t, first, "pl", coord, second, "pl")


def generate_exp2_gender(lexicon: Lexicon, n_items: Optional[int] = None) -> list[StimulusItem]:
    t = _Templates(lexicon, "fr")
    quads = _gender_quads(lexicon, DEFAULT_ITEMS["fr"] if n_items is None else n_items)
    if not quads:
        return []
    copula = lexicon.form("fr", "verb", t.verb_lemma(_VERBS["fr"]["copula"]), "pl")
    adjs = t.adj_pair(t.adj_lemma())
    out = []
    for j, quad in enumerate(quads):
        for cond in EXP2_GENDER:
            prefix = _cap(f"{_gender_subject(t, quad, cond)} {copula}")
            out.append(StimulusItem("exp2-gender-fr", j, cond, prefix, adjs, "adj"))
    return out


def generate_exp3(lexicon: Lexicon, language: str, variant: str = "control", mode: str = "number",
                  n_items: Optional[int] = None) -> list[StimulusItem]:
    """``and``-coordinations embedded under a matrix frame.

    ``control`` frames take a sentential complement; ``critical`` frames take
    only an NP object.  Item ids and nouns match the Exp-2 items.
    """
    if variant not in ("control", "critical"):
        raise ValueError(f"variant must be 'control' or 'critical', got {variant!r}")
    t = _Templates(lexicon, language)
    role = f"frame-{variant}"
    out = []
    if mode == "number":
        pairs = _number_pairs(t, n_items)
        if not pairs:
            return []
        exp = f"exp3-{variant}-number-{language}"
        verb_lemma = t.verb_lemma(_VERBS["en"]["present"] if language == "en" else _VERBS["fr"]["number"])
        verbs = t.verb_pair(verb_lemma)
        for j, (n1, n2) in enumerate(pairs):
            frame = t.frame(role, j)
            for cond in EXP3_NUMBER:
                a, coord, b = _split(cond)
                prefix = _cap(f"{frame} {_coord_np(t, n1, a, coord, n2, b)}")
                out.append(StimulusItem(exp, j, cond, prefix, verbs, "verb"))
        return out
    if mode != "gender":
        raise ValueError(f"mode must be 'number' or 'gender', got {mode!r}")
    if language != "fr":
        raise ValueError("gender mode is only defined for French")
    quads = _gender_quads(lexicon, DEFAULT_ITEMS["fr"] if n_items is None else n_items)
    if not quads:
        return []
    verb = lexicon.form("fr", "verb", t.verb_lemma(_VERBS["fr"]["imperfect"]), "pl")
    adjs = t.adj_pair(t.adj_lemma())
    exp = f"exp3-{variant}-gender-fr"
    for j, quad in enumerate(quads):
        frame = t.frame(role, j)
        for cond in EXP3_GENDER:
            prefix = _cap(f"{frame} {_gender_subject(t, quad, cond)} {verb}")
            out.append(StimulusItem(exp, j, cond, prefix, adjs, "adj"))
    return out


def generate_exp4(lexicon: Lexicon, language: str, n_items: Optional[int] = None) -> list[StimulusItem]:
    """Verb-before-subject questions; the coordinator is the only continuation."""
    t = _Templates(lexicon, language)
    nouns = lexicon.lemmas(language, "noun")
    if not nouns:
        return []
    n = DEFAULT_ITEMS[language] if n_items is None else n_items
    wh = t.frame("frame-wh", 0)
    verb_lemma = t.verb_lemma(0)
    coord = (Continuation(t.coordinator("and"), "coord"),)
    exp = f"exp4-{language}"
    out = []
    for j in range(n):
        noun = nouns[j % len(nouns)]
        for cond in EXP4:
            vnum, nnum = cond[1:3], cond[5:]
            verb = lexicon.form(language, "verb", verb_lemma, vnum)
            prefix = _cap(f"{wh} {verb} {t.np(noun, nnum)}")
            out.append(StimulusItem(exp, j, cond, prefix, coord, "coordinator"))
    return out


def generate_all(lexicon: Lexicon, language: str, n_items: Optional[int] = None) -> list[StimulusItem]:
    """Every suite defined for ``language``, in a fixed order."""
    items = generate_exp1(lexicon, language, "number", n_items)
    if language == "fr":
        items += generate_exp1(lexicon, language, "gender", n_items)
    items += generate_exp2_number(lexicon, language, n_items)
    if language == "fr":
        items += generate_exp2_gender(lexicon, n_items)
    for variant in ("control", "critical"):
        items += generate_exp3(lexicon, language, variant, "number", n_items)
        if language == "fr":
            items += generate_exp3(lexicon, language, variant, "gender", n_items)
    items += generate_exp4(lexicon, language, n_items)
    return items


# -- CSV I/O ------------------------------------------------------------------------


def emit_items(items: Iterable[StimulusItem], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STIMULUS_COLUMNS)
        for it in items:
            for c in it.continuations:
                w.writerow([it.experiment, it.item_id, it.condition, it.prefix, c.text, c.cls, it.measure_region])
    return path


def load_items(path) -> list[StimulusItem]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != STIMULUS_COLUMNS:
            raise SchemaError(f"{path}: expected header {','.join(STIMULUS_COLUMNS)}, got {header}")
        groups: dict = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(STIMULUS_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected {len(STIMULUS_COLUMNS)} fields, got {len(row)}")
            exp, item_id, cond, prefix, text, cls, region = row
            try:
                iid = int(item_id)
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: item_id {item_id!r} is not an integer") from None
            key = (exp, iid, cond, prefix, region)
            groups.setdefault(key, []).append(Continuation(text, cls))
    return [StimulusItem(e, i, c, p, tuple(conts), r) for (e, i, c, p, r), conts in groups.items()]
