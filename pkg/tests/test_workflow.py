import math

from coordlm.analysis import ExpectationSummary
from coordlm.beam import BeamConfig
from coordlm.stimuli import Lexicon, generate_exp2_number
from coordlm.syntax.training import SyntaxLMConfig
from coordlm.synthetic import generate_treebank
from coordlm.workflow import SCHEMES, compare_annotation_schemes


def test_compare_annotation_schemes():
    bank = generate_treebank("en", 60, seed=9)
    items = generate_exp2_number(Lexicon.sample("en"), "en", 3)
    items = [it for it in items if it.measure_region == "verb:present"]
    res = compare_annotation_schemes(bank, items, SyntaxLMConfig(dim=6, layers=1, epochs=1, seed=2),
                                     BeamConfig(8, 4, 2, 6))
    assert tuple(res) == SCHEMES
    a, b = res["control"], res["np-coord"]
    assert [s.condition for s in a.summaries] == [s.condition for s in b.summaries]
    assert len(a.summaries) == 8
    assert all(isinstance(s, ExpectationSummary) and math.isfinite(s.mean) for s in a.summaries + b.summaries)
    assert a.final_action_ppl != b.final_action_ppl
