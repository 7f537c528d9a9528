"""Expectation metrics, per-condition summaries and behaviour labels."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .stimuli import EXP2_GENDER, EXP2_NUMBER, SchemaError

SURPRISAL_COLUMNS = ("experiment", "item_id", "condition", "position", "token", "surprisal_bits",
                     "continuation_class", "measure_region")
SUMMARY_COLUMNS = ("experiment", "condition", "n", "mean_bits", "ci_low", "ci_high")

PERCOLATION = "percolation-like"
LINEAR = "linear-combination-like"
INCONSISTENT = "inconsistent"


def plural_expectation(s_sg: float, s_pl: float) -> float:
    """Positive when the plural continuation is the less surprising one."""
    return s_sg - s_pl


def gender_expectation(s_f: float, s_m: float) -> float:
    """Positive when the masculine continuation is the less surprising one."""
    return s_f - s_m


@dataclass(frozen=True)
class ExpectationRecord:
    experiment: str
    item_id: int
    condition: str
    value: float
    kind: str  # plural, gender or raw-surprisal


@dataclass(frozen=True)
class ExpectationSummary:
    experiment: str
    condition: str
    n: int
    mean: float
    ci_low: float
    ci_high: float

    def overlaps(self, other: "ExpectationSummary") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high


def kind_of(experiment: str) -> str:
    if experiment.startswith("exp4"):
        return "raw-surprisal"
    if "gender" in experiment:
        return "gender"
    if "number" in experiment:
        return "plural"
    raise ValueError(f"cannot infer the measure for experiment {experiment!r}")


def records_from_surprisals(rows: Iterable[Mapping]) -> list[ExpectationRecord]:
    """Collapse scored continuations into one record per (experiment, item, condition).

    Rows are summed over tokens within a continuation.  When an item carries
    several measure regions (the two English tenses) the per-region
    expectations are averaged so each item contributes once.
    """
    cells: dict = defaultdict(lambda: defaultdict(float))
    order: list = []
    for r in rows:
        key = (r["experiment"], int(r["item_id"]), r["condition"], r["measure_region"])
        if key not in cells:
            order.append(key)
        cells[key][r["continuation_class"]] += float(r["surprisal_bits"])
    per_item: dict = defaultdict(list)
    for key in order:
        exp, item, cond, _ = key
        by_cls = cells[key]
        kind = kind_of(exp)
        if kind != "raw-surprisal":
            needed = {"sg", "pl"} if kind == "plural" else {"m", "f"}
            if not needed <= set(by_cls):
                raise ValueError(f"{exp} item {item} {cond}: missing continuation classes {sorted(needed - set(by_cls))}")
        if kind == "plural":
            value = plural_expectation(by_cls["sg"], by_cls["pl"])
        elif kind == "gender":
            value = gender_expectation(by_cls["f"], by_cls["m"])
        else:
            if len(by_cls) != 1:
                raise ValueError(f"{exp} item {item}: expected one continuation class, got {sorted(by_cls)}")
            value = next(iter(by_cls.values()))
        per_item[(exp, item, cond)].append(value)
    out = []
    for (exp, item, cond), vals in per_item.items():
        v = float(np.mean(vals))
        if not math.isfinite(v):
            raise ValueError(f"non-finite expectation for {exp} item {item} {cond}")
        out.append(ExpectationRecord(exp, item, cond, v, kind_of(exp)))
    return out


def read_surprisal_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header[:len(SURPRISAL_COLUMNS)] != SURPRISAL_COLUMNS:
            raise SchemaError(f"{path}: expected header starting {','.join(SURPRISAL_COLUMNS)}, got {header}")
        return list(reader)


def t_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    """(mean, low, high) two-sided Student-t interval; a single value gets an infinite interval."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no values")
    mean = float(x.mean())
    if x.size == 1:
        return mean, -math.inf, math.inf
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        return mean, mean, mean
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 1)) * sd / math.sqrt(x.size)
    return mean, mean - half, mean + half


def summarize(records: Iterable[ExpectationRecord],
              conditions: Optional[Sequence[str]] = None) -> list[ExpectationSummary]:
    """Across-item mean and 95% CI per (experiment, condition).

    Output is sorted by experiment then condition order of first appearance
    among the sorted records, so permuting the input does not change it.
    ``conditions`` lists conditions that must be present.
    """
    groups: dict = defaultdict(list)
    for r in records:
        groups[(r.experiment, r.condition)].append((r.item_id, r.value))
    if conditions is not None:
        exps = {e for e, _ in groups} or {""}
        for e in exps:
            for c in conditions:
                if (e, c) not in groups:
                    raise ValueError(f"condition {c!r} of {e or 'experiment'} has no records")
    out = []
    for (exp, cond) in sorted(groups, key=_summary_order):
        vals = [v for _, v in sorted(groups[(exp, cond)])]
        mean, lo, hi = t_interval(vals)
        out.append(ExpectationSummary(exp, cond, len(vals), mean, lo, hi))
    return out


_KNOWN_ORDER = {c: i for i, c in enumerate(
    ("Npl", "Nsg", "Nm", "Nf") + EXP2_NUMBER + EXP2_GENDER + ("Vpl_Npl", "Vpl_Nsg", "Vsg_Nsg"))}


def _summary_order(key):
    exp, cond = key
    return (exp, _KNOWN_ORDER.get(cond, len(_KNOWN_ORDER)), cond)


# -- conjunct weights and behaviour -----------------------------------------------


@dataclass(frozen=True)
class LinearFit:
    w1: float  # first conjunct
    w2: float  # second conjunct
    w_coord: float  # or = 1, and = 0
    intercept: float
    residual_norm: float
    coding: str = "n1,n2 in {sg:0, pl:1} (gender: m:1, f:0); coord in {and:0, or:1}"

    @property
    def second_dominates(self) -> bool:
        return self.w2 > self.w1


_FEATURE = {"sg": 0.0, "pl": 1.0, "f": 0.0, "m": 1.0}


def _design_row(cond: str) -> list[float]:
    a, coord, b = cond.split("_")
    if coord not in ("and", "or") or a not in _FEATURE or b not in _FEATURE:
        raise ValueError(f"not a coordination condition: {cond!r}")
    return [_FEATURE[a], _FEATURE[b], 1.0 if coord == "or" else 0.0, 1.0]


def fit_conjunct_weights(summaries: Sequence[ExpectationSummary] | Mapping[str, float]) -> LinearFit:
    """Least-squares fit of condition means on (n1, n2, coordinator, 1)."""
    means = summaries if isinstance(summaries, Mapping) else {s.condition: s.mean for s in summaries}
    conds = [c for c in EXP2_NUMBER if c in means] or [c for c in EXP2_GENDER if c in means]
    expected = EXP2_NUMBER if conds and conds[0] in EXP2_NUMBER else EXP2_GENDER
    missing = [c for c in expected if c not in means]
    if missing:
        raise ValueError(f"missing condition means: {missing}")
    X = np.array([_design_row(c) for c in expected])
    y = np.array([float(means[c]) for c in expected])
    if not np.all(np.isfinite(y)):
        raise ValueError("condition means must be finite")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise np.linalg.LinAlgError("rank-deficient design")
    resid = float(np.linalg.norm(X @ coef - y))
    return LinearFit(*(float(c) for c in coef), resid)


def classify_behavior(summaries: Sequence[ExpectationSummary]) -> str:
    """Label the four and-conditions as percolation-like, linear-combination-like or inconsistent."""
    by = {s.condition: s for s in summaries}
    names = [c for c in ("pl_and_pl", "sg_and_pl", "pl_and_sg", "sg_and_sg") if c in by]
    if len(names) != 4:
        names = [c for c in ("m_and_m", "f_and_m", "m_and_f", "f_and_f") if c in by]
    if len(names) != 4:
        raise ValueError("need summaries for all four and-conditions")
    rows = [by[c] for c in names]
    if all(s.ci_low > 0 for s in rows) and all(a.overlaps(b) for i, a in enumerate(rows) for b in rows[i + 1:]):
        return PERCOLATION
    # ordered by number of plural (masculine) conjuncts: 2, 1, 1, 0
    top, mids, bottom = rows[0], rows[1:3], rows[3]
    if all(top.mean > m.mean > bottom.mean for m in mids) and bottom.ci_high < top.ci_low:
        return LINEAR
    return INCONSISTENT


@dataclass(frozen=True)
class Contrast:
    difference: float
    overlap: bool


def contrast(a: ExpectationSummary, b: ExpectationSummary) -> Contrast:
    return Contrast(a.mean - b.mean, a.overlaps(b))


# -- output ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_summary_csv(summaries: Iterable[ExpectationSummary], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow([s.experiment, s.condition, s.n, _fmt(s.mean), _fmt(s.ci_low), _fmt(s.ci_high)])
    return path


def read_summary_csv(path) -> list[ExpectationSummary]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SUMMARY_COLUMNS:
            raise SchemaError(f"{path}: expected header {','.join(SUMMARY_COLUMNS)}, got {header}")
        return [ExpectationSummary(e, c, int(n), float(m), float(lo), float(hi)) for e, c, n, m, lo, hi in reader]


_FIGURE_OF = (
    ("exp1-", "exp1"), ("exp2-number", "exp2-number"), ("exp2-gender", "exp2-gender"),
    ("exp3-control", "exp3-control"), ("exp3-critical", "exp3-critical"), ("exp4", "exp4"),
)


def plot_data(summaries: Sequence[ExpectationSummary]) -> dict:
    """Summaries grouped by figure, then experiment; conditions on x, bits on y."""
    figs: dict = {}
    for s in summaries:
        fig = next((name for prefix, name in _FIGURE_OF if s.experiment.startswith(prefix)), s.experiment)
        panel = figs.setdefault(fig, {}).setdefault(s.experiment, {
            "measure": kind_of(s.experiment), "x": [], "y": [], "ci_low": [], "ci_high": [], "n": []})
        panel["x"].append(s.condition)
        panel["y"].append(s.mean)
        panel["ci_low"].append(s.ci_low if math.isfinite(s.ci_low) else None)
        panel["ci_high"].append(s.ci_high if math.isfinite(s.ci_high) else None)
        panel["n"].append(s.n)
    return figs


def analysis_report(summaries: Sequence[ExpectationSummary]) -> dict:
    """Per-experiment behaviour labels and linear fits where the design allows them."""
    report: dict = {}
    by_exp: dict = defaultdict(list)
    for s in summaries:
        by_exp[s.experiment].append(s)
    for exp, ss in sorted(by_exp.items()):
        entry: dict = {}
        conds = {s.condition for s in ss}
        if set(EXP2_NUMBER) <= conds or set(EXP2_GENDER) <= conds:
            try:
                entry["linear_fit"] = asdict(fit_conjunct_weights(ss))
            except np.linalg.LinAlgError as exc:
                entry["linear_fit"] = {"error": str(exc)}
        if set(EXP2_NUMBER[:4]) <= conds or set(EXP2_GENDER[:4]) <= conds:
            entry["behavior"] = classify_behavior(ss)
        if exp.startswith("exp4") and {"Vpl_Npl", "Vpl_Nsg", "Vsg_Nsg"} <= conds:
            by = {s.condition: s for s in ss}
            entry["contrasts"] = {
                f"{a}-{b}": asdict(contrast(by[a], by[b]))
                for a, b in (("Vpl_Nsg", "Vpl_Npl"), ("Vpl_Nsg", "Vsg_Nsg"), ("Vsg_Nsg", "Vpl_Npl"))}
        if entry:
            report[exp] = entry
    return report


def write_plot_json(summaries: Sequence[ExpectationSummary], path) -> Path:
    path = Path(path)
    payload = {"figures": plot_data(summaries), "report": analysis_report(summaries)}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path
