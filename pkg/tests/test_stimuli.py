import csv
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from coordlm.stimuli import (EXP2_GENDER, EXP2_NUMBER, EXP4, STIMULUS_COLUMNS, Lexicon, LexiconError, SchemaError,
                             StimulusItem, emit_items, generate_all, generate_exp1, generate_exp2_gender,
                             generate_exp2_number, generate_exp3, generate_exp4, load_items)

GOLDENS = Path(__file__).parent / "data" / "goldens" / "surface_goldens.tsv"
EN, FR = Lexicon.sample("en"), Lexicon.sample("fr")


def read_goldens():
    lines = [l for l in GOLDENS.read_text(encoding="utf-8").splitlines() if l and not l.startswith("#")]
    return [tuple(l.split("\t")) for l in lines]


def render(item: StimulusItem) -> str:
    return f"{item.prefix} {'/'.join(c.text for c in item.continuations)}"


def index(items):
    # English Exp-2 has a present and a past row per key; the tables show the present one
    out = {}
    for it in items:
        out.setdefault((it.experiment, it.item_id, it.condition), it)
    return out


ALL = {**index(generate_all(EN, "en")), **index(generate_all(FR, "fr"))}


@pytest.mark.parametrize("design,exp,item_id,cond,sentence", read_goldens(), ids=lambda v: str(v))
def test_golden_surface_strings(design, exp, item_id, cond, sentence):
    assert render(ALL[(exp, int(item_id), cond)]) == sentence


def test_english_exp2_has_both_tenses():
    items = generate_exp2_number(EN, "en")
    assert len(items) == 37 * 8 * 2
    cells = Counter((it.condition, it.measure_region) for it in items)
    assert len(cells) == 16 and set(cells.values()) == {37}
    past = [it for it in items if it.measure_region == "verb:past"][0]
    assert [c.text for c in past.continuations] == ["was", "were"]
    assert [it.condition for it in items[:16:2]] == list(EXP2_NUMBER)


def test_french_exp2_counts_and_gender_balance():
    items = generate_exp2_number(FR, "fr")
    assert len(items) == 24 * 8
    first_nouns = {it.prefix.split()[1] for it in items if it.condition == "pl_and_pl"}
    genders = Counter(FR.gender_of("fr", n) for n in
                      (l for l in FR.lemmas("fr", "noun") if FR.form("fr", "noun", l, "pl") in first_nouns))
    assert genders["m"] == genders["f"]
    # within an item both nouns share a gender
    for it in items:
        if it.condition == "pl_and_pl":
            w = it.prefix.split()
            pl = {FR.form("fr", "noun", l, "pl"): l for l in FR.lemmas("fr", "noun")}
            assert FR.gender_of("fr", pl[w[1]]) == FR.gender_of("fr", pl[w[4]])


def test_french_gender_design():
    items = generate_exp2_gender(FR)
    assert len(items) == 24 * 8 and [it.condition for it in items[:8]] == list(EXP2_GENDER)
    assert {c.cls for it in items for c in it.continuations} == {"m", "f"}


def test_exp3_and_exp4_designs():
    for variant in ("control", "critical"):
        items = generate_exp3(EN, "en", variant)
        assert len(items) == 37 * 4 and {it.condition for it in items} == set(EXP2_NUMBER[:4])
        assert len({it.prefix.split()[1] for it in items}) > 1  # frames rotate across items
    items = generate_exp4(EN, "en")
    assert len(items) == 37 * 3 and tuple(it.condition for it in items[:3]) == EXP4
    assert all(len(it.continuations) == 1 and it.continuations[0].cls == "coord" for it in items)
    fr = generate_exp4(FR, "fr")
    assert len(fr) == 24 * 3 and fr[0].continuations[0].text == "et"


def test_item_ids_shared_between_exp2_and_exp3():
    e2 = {(it.item_id, it.prefix) for it in generate_exp2_number(EN, "en") if it.condition == "pl_and_pl"}
    e3 = {(it.item_id, it.prefix.split(" ", 3)[3]) for it in generate_exp3(EN, "en") if it.condition == "pl_and_pl"}
    assert {(i, p[0].lower() + p[1:]) for i, p in e2} == e3


def test_generation_deterministic():
    assert generate_all(FR, "fr") == generate_all(FR, "fr")


def test_n_items_override():
    assert len(generate_exp2_number(EN, "en", 3)) == 3 * 16
    assert len(generate_exp1(FR, "fr", "gender", 2)) == 4


def test_mode_errors():
    with pytest.raises(ValueError):
        generate_exp1(EN, "en", "gender")
    with pytest.raises(ValueError):
        generate_exp3(EN, "en", "other")
    with pytest.raises(ValueError):
        generate_exp1(EN, "en", "case")


def test_empty_lexicon_gives_no_items():
    empty = Lexicon()
    assert generate_exp1(empty, "en") == []
    assert generate_exp2_number(empty, "en") == []
    assert generate_exp4(empty, "en") == []


def test_missing_form_names_lemma():
    lex = Lexicon.from_text("language\tlemma\tnumber\tgender\tform\trole\n"
                            "en\tdoor\tsg\t-\tdoor\tnoun\n")
    with pytest.raises(LexiconError, match="'door'.*pl"):
        lex.form("en", "noun", "door", "pl")


def test_lexicon_schema_and_gender_checks():
    with pytest.raises(SchemaError):
        Lexicon.from_text("lang\tlemma\n")
    with pytest.raises(SchemaError, match=":2:"):
        Lexicon.from_text("language\tlemma\tnumber\tgender\tform\trole\nfr\tprix\n")
    with pytest.raises(LexiconError, match="exactly one gender"):
        Lexicon.from_text("language\tlemma\tnumber\tgender\tform\trole\n"
                          "fr\tprix\tsg\tm\tprix\tnoun\nfr\tprix\tpl\tf\tprix\tnoun\n")
    assert len(Lexicon.from_text("")) == 0


def test_emit_load_roundtrip_utf8(tmp_path):
    items = generate_all(FR, "fr")
    path = emit_items(items, tmp_path / "s.csv")
    raw = path.read_bytes()
    assert "dépenses".encode("utf-8") in raw and "coût".encode("utf-8") in raw
    assert raw.splitlines()[0].decode() == ",".join(STIMULUS_COLUMNS)
    assert load_items(path) == items


def test_load_schema_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("item_id,condition\n1,a\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="header"):
        load_items(p)
    p.write_text(",".join(STIMULUS_COLUMNS) + "\nexp,x,c,p,is,sg,verb\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="not an integer"):
        load_items(p)


@given(st.sampled_from(["en", "fr"]), st.integers(1, 30))
@settings(max_examples=10)
def test_minimal_pairs_differ_only_in_measured_word(lang, n):
    lex = EN if lang == "en" else FR
    for it in generate_all(lex, lang, n):
        strings = it.strings()
        if len(strings) == 2:
            a, b = (s.split() for s in strings)
            assert a[:-1] == b[:-1] and a[-1] != b[-1]
