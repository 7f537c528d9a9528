"""Control vs explicit-conjunct annotation: train one RNNG per scheme and compare.

Both models share the seed, hyper-parameters and stimuli; only the treebank
labels differ (``to_coord_annotation`` relabels conjunct NPs as NP-COORD).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .analysis import ExpectationSummary, classify_behavior, records_from_surprisals, summarize
from .beam import BeamConfig
from .evaluation import score_items
from .stimuli import StimulusItem
from .syntax.training import SyntaxLMConfig, train_syntax_lm
from .treebank import Tree, to_coord_annotation

SCHEMES = ("control", "np-coord")


@dataclass
class SchemeResult:
    scheme: str
    summaries: list[ExpectationSummary]
    behavior: Optional[str]
    final_action_ppl: float


def compare_annotation_schemes(treebank: Sequence[Tree], items: Sequence[StimulusItem],
                               config: SyntaxLMConfig, beam: BeamConfig = BeamConfig(),
                               variant: str = "rnng") -> dict[str, SchemeResult]:
    banks = {"control": list(treebank), "np-coord": [to_coord_annotation(t) for t in treebank]}
    out = {}
    for scheme in SCHEMES:
        model = train_syntax_lm(banks[scheme], config, variant)
        summaries = summarize(records_from_surprisals(score_items(model, items, beam)))
        try:
            behavior = classify_behavior(summaries)
        except ValueError:
            behavior = None
        out[scheme] = SchemeResult(scheme, summaries, behavior, model.history[-1]["train_ppl"])
    return out
