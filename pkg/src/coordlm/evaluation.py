"""Score stimulus items with a word LM or a syntactic LM and write surprisal tables."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .analysis import SURPRISAL_COLUMNS
from .beam import BeamConfig, beam_continuation_surprisal, decode_prefix
from .nn.checkpoint import load_checkpoint
from .stimuli import StimulusItem
from .syntax.models import SyntaxLM
from .syntax.training import load_syntax_lm
from .wordlm import WordLM, surprisal_profile

BEAM_COLUMNS = ("beam_Ka", "beam_Kw", "mass_bits")

Model = Union[WordLM, SyntaxLM]


def load_model(path) -> Model:
    meta, _ = load_checkpoint(path)
    if meta["kind"] == WordLM.kind:
        return WordLM.load(path)
    if meta["kind"] == "syntax-lm":
        return load_syntax_lm(path)
    raise ValueError(f"{path}: unknown checkpoint kind {meta['kind']!r}")


def _fmt(x: float) -> str:
    return repr(float(x))


def score_items(model: Model, items: Sequence[StimulusItem], beam: Optional[BeamConfig] = None) -> list[dict]:
    """One row per continuation token.  Syntactic models are scored by beam search."""
    rows = []
    is_syntax = isinstance(model, SyntaxLM)
    beam = beam or BeamConfig()
    prefix_cache: dict = {}
    for it in items:
        prefix = it.prefix.split()
        conts = [c.text.split() for c in it.continuations]
        if is_syntax:
            key = tuple(prefix)
            if key not in prefix_cache:
                prefix_cache = {key: decode_prefix(model, prefix, beam)}  # items arrive grouped by prefix
            results = beam_continuation_surprisal(model, prefix, conts, beam, decoded=prefix_cache[key])
            scored = [(r.profile.surprisals, r.masses) for r in results]
        else:
            scored = []
            for toks in conts:
                prof = surprisal_profile(model, prefix + toks, eos=False)
                scored.append((prof.surprisals[len(prefix):], None))
        for c, toks, (surps, masses) in zip(it.continuations, conts, scored):
            for k, (tok, s) in enumerate(zip(toks, surps)):
                row = {"experiment": it.experiment, "item_id": it.item_id, "condition": it.condition,
                       "position": len(prefix) + k, "token": tok, "surprisal_bits": _fmt(s),
                       "continuation_class": c.cls, "measure_region": it.measure_region}
                if is_syntax:
                    row.update(beam_Ka=beam.action_width, beam_Kw=beam.word_width, mass_bits=_fmt(masses[k]))
                rows.append(row)
    return rows


_worker_model: Optional[Model] = None


def _init_worker(path: str) -> None:
    global _worker_model
    _worker_model = load_model(path)


def _score_chunk(args) -> list[dict]:
    items, beam = args
    return score_items(_worker_model, items, beam)


def score_checkpoint(path, items: Sequence[StimulusItem], beam: Optional[BeamConfig] = None,
                     workers: int = 1) -> list[dict]:
    """``score_items`` on a checkpoint, optionally split across worker processes.

    Output order matches ``items`` regardless of ``workers``.
    """
    if workers <= 1 or len(items) < 2:
        return score_items(load_model(path), items, beam)
    # keep items that share a prefix together so each prefix is decoded once
    chunks: list[list] = []
    for it in items:
        if chunks and chunks[-1][-1].prefix == it.prefix:
            chunks[-1].append(it)
        else:
            chunks.append([it])
    per = max(1, len(chunks) // (workers * 4))
    jobs = [([it for ch in chunks[i:i + per] for it in ch], beam) for i in range(0, len(chunks), per)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(str(path),)) as ex:
        parts = list(ex.map(_score_chunk, jobs))
    return [row for part in parts for row in part]


def write_surprisal_csv(rows: Iterable[dict], path, with_beam: bool = False) -> Path:
    path = Path(path)
    cols = SURPRISAL_COLUMNS + (BEAM_COLUMNS if with_beam else ())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="raise")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path
