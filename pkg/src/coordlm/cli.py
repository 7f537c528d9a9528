"""Command-line entry point: ``coordlm <command> [options]``.

Every option can come from an INI file (``--config``); precedence is
flag > config file > built-in default.  Each command writes into a fresh
``--out`` directory, leaves a ``manifest.json`` (config hash, input hashes,
versions) and a ``run.log`` with timestamps.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata, resources
from pathlib import Path
from typing import Any, Callable, Optional

log = logging.getLogger("coordlm")

COMMANDS = ("train", "gen-stimuli", "eval", "analyze", "corpus-stats", "transform")
EXPERIMENTS = ("exp1", "exp2", "exp3", "exp4")


class CliError(Exception):
    """A failure reported to the user as one JSON object on stderr."""

    def __init__(self, message: str, path: Optional[str] = None, kind: str = "error", code: int = 1):
        super().__init__(message)
        self.path = path
        self.kind = kind
        self.code = code

    def payload(self) -> dict:
        out = {"error": self.kind, "message": str(self)}
        if self.path is not None:
            out["path"] = self.path
        return out


# -- option table ---------------------------------------------------------------
# dest: (config section, type, default, help)

def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _pos_int(v) -> int:
    i = int(v)
    if i <= 0:
        raise ValueError(f"must be positive, got {i}")
    return i


def _nonneg_int(v) -> int:
    i = int(v)
    if i < 0:
        raise ValueError(f"must be >= 0, got {i}")
    return i


def _pos_float(v) -> float:
    f = float(v)
    if not f > 0:
        raise ValueError(f"must be positive, got {f}")
    return f


OPTIONS: dict[str, tuple[str, Callable, Any, str]] = {
    "seed": ("run", int, None, "random seed (required for train)"),
    "language": ("run", str, "en", "en or fr"),
    "workers": ("run", _pos_int, 1, "worker processes for eval"),
    "model": ("model", str, "word", "word, actionlstm or rnng"),
    "dim": ("model", _pos_int, None, "hidden/embedding size (word: 64, syntactic: 32)"),
    "layers": ("model", _pos_int, 2, "LSTM layers"),
    "epochs": ("train", _nonneg_int, 10, "training epochs"),
    "lr": ("train", _pos_float, 1.0, "initial SGD learning rate"),
    "lr_decay": ("train", _pos_float, 0.5, "learning-rate decay factor"),
    "decay_start": ("train", _pos_int, 4, "first epoch with a decayed rate"),
    "batch_size": ("train", _pos_int, 32, "sentences per minibatch"),
    "clip": ("train", _pos_float, 5.0, "global gradient-norm clip"),
    "min_count": ("train", _pos_int, None, "vocabulary frequency threshold (word: 2, syntactic: 1)"),
    "max_depth": ("train", _pos_int, 12, "max open nonterminals"),
    "max_streak": ("train", _pos_int, 8, "max structural actions between words"),
    "keep_tags": ("train", _bool, False, "keep preterminal tags as nonterminals"),
    "corpus": ("data", str, None, "bracketed treebank (default: bundled synthetic corpus)"),
    "lexicon": ("data", str, None, "lexicon TSV (default: bundled sample lexicon)"),
    "experiments": ("data", str, "all", "comma list of exp1..exp4, or all"),
    "items": ("data", _pos_int, None, "items per experiment (default 37 en / 24 fr)"),
    "checkpoint": ("data", str, None, "model checkpoint (.npz)"),
    "stimuli": ("data", str, None, "stimulus CSV"),
    "surprisals": ("data", str, None, "surprisal CSV"),
    "treebank": ("data", str, None, "bracketed treebank"),
    "mode": ("data", str, "number", "number or gender"),
    "action_width": ("beam", _pos_int, 100, "beam K_a"),
    "word_width": ("beam", _pos_int, 10, "beam K_w"),
    "fast_track": ("beam", _nonneg_int, 5, "beam K_f"),
    "max_structural": ("beam", _pos_int, 8, "structural actions per word in the beam"),
}

COMMAND_OPTIONS = {
    "train": ("seed", "language", "model", "dim", "layers", "epochs", "lr", "lr_decay", "decay_start",
              "batch_size", "clip", "min_count", "max_depth", "max_streak", "keep_tags", "corpus"),
    "gen-stimuli": ("language", "lexicon", "experiments", "items"),
    "eval": ("checkpoint", "stimuli", "workers", "action_width", "word_width", "fast_track", "max_structural"),
    "analyze": ("surprisals",),
    "corpus-stats": ("treebank", "language", "mode", "lexicon"),
    "transform": ("treebank",),
}


def _flag(dest: str) -> str:
    return "--" + dest.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coordlm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr as well")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="INI file with [run]/[model]/[train]/[data]/[beam] sections")
        p.add_argument("--out", help="output directory (created; must not hold files)")
        names = COMMAND_OPTIONS[cmd]
        for dest in ("seed", "workers"):
            if dest not in names:
                p.add_argument(_flag(dest), dest=dest, default=None, help=OPTIONS[dest][3])
        for dest in names:
            p.add_argument(_flag(dest), dest=dest, default=None, help=OPTIONS[dest][3])
    return parser


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags, validating every value."""
    cfg = configparser.ConfigParser()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError("config file not found", str(path), "config", 2)
        try:
            cfg.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise CliError(f"unreadable config: {exc}", str(path), "config", 2) from None
    names = COMMAND_OPTIONS[command] + ("seed", "workers")
    out: dict = {}
    for dest in dict.fromkeys(names):
        section, conv, default, _ = OPTIONS[dest]
        raw = getattr(args, dest, None)
        source = "flag"
        if raw is None and cfg.has_option(section, dest):
            raw, source = cfg.get(section, dest), f"[{section}] {dest}"
        if raw is None:
            out[dest] = default
            continue
        try:
            out[dest] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid value for {dest} ({source}): {exc}", args.config, "config", 2) from None
    out["out"] = args.out if args.out is not None else (cfg.get("run", "out") if cfg.has_option("run", "out") else None)
    if out["out"] is None:
        raise CliError("an output directory is required (--out or [run] out)", None, "config", 2)
    if out.get("language") not in (None, "en", "fr"):
        raise CliError(f"unsupported language {out['language']!r}", None, "config", 2)
    if command == "train":
        if out["seed"] is None:
            raise CliError("a seed is required for training (--seed or [run] seed)", None, "config", 2)
        if out["model"] not in ("word", "actionlstm", "rnng"):
            raise CliError(f"unknown model {out['model']!r}; expected word, actionlstm or rnng", None, "config", 2)
    for dest in ("checkpoint", "stimuli", "surprisals", "treebank", "corpus", "lexicon"):
        if out.get(dest) is not None and not Path(out[dest]).is_file():
            raise CliError(f"{dest} not found", out[dest], "missing-input")
    return out


# -- helpers --------------------------------------------------------------------------


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require_file(path: Optional[str], what: str) -> Path:
    if path is None:
        raise CliError(f"missing required input: {what}", None, "config", 2)
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found", str(p), "missing-input")
    return p


def _bundled(name: str) -> tuple[str, bytes]:
    res = resources.files("coordlm.data").joinpath(name)
    return f"<bundled>/{name}", res.read_bytes()


def _prepare_out(path: str) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise CliError("output path exists and is not a directory", str(out), "output")
        if any(out.iterdir()):
            raise CliError("refusing to overwrite a non-empty output directory", str(out), "output")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _versions() -> dict:
    import numpy
    import scipy
    v = {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__}
    try:
        v["coordlm"] = metadata.version("coordlm")
    except metadata.PackageNotFoundError:
        v["coordlm"] = "unknown"
    try:
        import numba
        v["numba"] = numba.__version__
    except ImportError:
        v["numba"] = None
    from .nn._kernels import kernels
    v["kernels"] = kernels.backend
    return v


class Run:
    """Output directory, log file and manifest bookkeeping for one command."""

    def __init__(self, command: str, options: dict, verbose: bool = False):
        self.command = command
        self.options = options
        self.inputs: dict = {}
        self.outputs: list[Path] = []
        self.dir = _prepare_out(options["out"])
        self._handler = logging.FileHandler(self.dir / "run.log", encoding="utf-8")
        self._handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root = logging.getLogger("coordlm")
        root.setLevel(logging.INFO)
        root.addHandler(self._handler)
        self._stderr = None
        if verbose:
            self._stderr = logging.StreamHandler(sys.stderr)
            root.addHandler(self._stderr)
        log.info("command %s options %s", command, json.dumps(options, sort_keys=True))

    def add_input(self, label: str, path: Optional[Path] = None, data: Optional[bytes] = None) -> None:
        self.inputs[label] = _sha256_file(path) if path is not None else _sha256_bytes(data or b"")

    def output(self, name: str) -> Path:
        p = self.dir / name
        self.outputs.append(p)
        return p

    def finish(self) -> Path:
        settings = {k: v for k, v in self.options.items() if k not in ("out", "workers")}
        canon = json.dumps(settings, sort_keys=True, separators=(",", ":"))
        manifest = {
            "command": self.command,
            "config": settings,
            "config_hash": _sha256_bytes(canon.encode()),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {p.name: _sha256_file(p) for p in self.outputs},
            "versions": _versions(),
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        log.info("wrote %s", ", ".join(p.name for p in self.outputs))
        self.close()
        return path

    def close(self) -> None:
        root = logging.getLogger("coordlm")
        for h in (self._handler, self._stderr):
            if h is not None:
                root.removeHandler(h)
                h.close()


def _load_trees(run: Run, path: Optional[str], language: str, label: str):
    from .treebank import TreeParseError, parse_bracketed
    if path is None:
        name, data = _bundled(f"synthetic_{language}.mrg")
        run.add_input(label, data=data)
        text, source = data.decode("utf-8"), name
    else:
        p = _require_file(path, label)
        run.add_input(label, p)
        text, source = p.read_text(encoding="utf-8"), str(p)
    trees = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            trees.append(parse_bracketed(line))
        except TreeParseError as exc:
            raise CliError(f"line {lineno}: {exc}", source, "parse") from None
    if not trees:
        raise CliError("treebank is empty", source, "parse")
    return trees


def _load_lexicon(run: Run, path: Optional[str], language: str):
    from .stimuli import Lexicon
    if path is None:
        name, data = _bundled(f"lexicon_{language}.tsv")
        run.add_input("lexicon", data=data)
        return Lexicon.from_text(data.decode("utf-8"), name)
    p = _require_file(path, "lexicon")
    run.add_input("lexicon", p)
    return Lexicon.from_tsv(p)


# -- commands ---------------------------------------------------------------------------


def cmd_train(run: Run) -> Path:
    from .syntax.training import SyntaxLMConfig, save_syntax_lm, train_syntax_lm
    from .wordlm import WordLMConfig, train_word_lm

    o = run.options
    trees = _load_trees(run, o["corpus"], o["language"], "corpus")
    common = dict(layers=o["layers"], epochs=o["epochs"], lr=o["lr"], lr_decay=o["lr_decay"],
                  decay_start=o["decay_start"], batch_size=o["batch_size"], clip=o["clip"], seed=o["seed"])
    ckpt = run.output("model.npz")
    if o["model"] == "word":
        cfg = WordLMConfig(dim=o["dim"] or 64, min_count=o["min_count"] or 2, **common)
        model = train_word_lm([t.leaves() for t in trees], cfg)
        model.save(ckpt)
    else:
        cfg = SyntaxLMConfig(dim=o["dim"] or 32, min_count=o["min_count"] or 1, max_depth=o["max_depth"],
                             max_streak=o["max_streak"], keep_tags=o["keep_tags"], **common)
        model = train_syntax_lm(trees, cfg, o["model"])
        save_syntax_lm(model, ckpt)
    hist = run.output("history.json")
    hist.write_text(json.dumps(model.history, indent=2) + "\n", encoding="utf-8")
    return ckpt


def _selected_items(lexicon, language: str, experiments: str, n_items):
    from . import stimuli as st
    wanted = EXPERIMENTS if experiments.strip() == "all" else tuple(e.strip() for e in experiments.split(","))
    bad = [e for e in wanted if e not in EXPERIMENTS]
    if bad:
        raise CliError(f"unknown experiment(s) {bad}; choose from {EXPERIMENTS} or 'all'", None, "config", 2)
    items = []
    if "exp1" in wanted:
        items += st.generate_exp1(lexicon, language, "number", n_items)
        if language == "fr":
            items += st.generate_exp1(lexicon, language, "gender", n_items)
    if "exp2" in wanted:
        items += st.generate_exp2_number(lexicon, language, n_items)
        if language == "fr":
            items += st.generate_exp2_gender(lexicon, n_items)
    if "exp3" in wanted:
        for variant in ("control", "critical"):
            items += st.generate_exp3(lexicon, language, variant, "number", n_items)
            if language == "fr":
                items += st.generate_exp3(lexicon, language, variant, "gender", n_items)
    if "exp4" in wanted:
        items += st.generate_exp4(lexicon, language, n_items)
    return items


def cmd_gen_stimuli(run: Run) -> Path:
    from .stimuli import emit_items
    o = run.options
    lexicon = _load_lexicon(run, o["lexicon"], o["language"])
    items = _selected_items(lexicon, o["language"], o["experiments"], o["items"])
    return emit_items(items, run.output("stimuli.csv"))


def cmd_eval(run: Run) -> Path:
    from .beam import BeamConfig
    from .evaluation import score_checkpoint, write_surprisal_csv
    from .nn.checkpoint import load_checkpoint
    from .stimuli import load_items

    o = run.options
    ckpt = _require_file(o["checkpoint"], "checkpoint")
    stim = _require_file(o["stimuli"], "stimuli")
    run.add_input("checkpoint", ckpt)
    run.add_input("stimuli", stim)
    try:
        beam = BeamConfig(o["action_width"], o["word_width"], o["fast_track"], o["max_structural"])
    except ValueError as exc:
        raise CliError(f"invalid beam settings: {exc}", None, "config", 2) from None
    meta, _ = load_checkpoint(ckpt)
    items = load_items(stim)
    rows = score_checkpoint(ckpt, items, beam, o["workers"])
    return write_surprisal_csv(rows, run.output("surprisals.csv"), with_beam=meta["kind"] == "syntax-lm")


def cmd_analyze(run: Run) -> Path:
    from .analysis import (read_surprisal_csv, records_from_surprisals, summarize, write_plot_json,
                           write_summary_csv)
    src = _require_file(run.options["surprisals"], "surprisals")
    run.add_input("surprisals", src)
    summaries = summarize(records_from_surprisals(read_surprisal_csv(src)))
    out = write_summary_csv(summaries, run.output("summary.csv"))
    write_plot_json(summaries, run.output("plot_data.json"))
    return out


def cmd_corpus_stats(run: Run) -> Path:
    from .treebank import EnglishTagger, LexiconTagger, count_agreement_patterns
    o = run.options
    trees = _load_trees(run, o["treebank"], o["language"], "treebank")
    if o["mode"] not in ("number", "gender"):
        raise CliError(f"mode must be number or gender, got {o['mode']!r}", None, "config", 2)
    if o["language"] == "en" and o["lexicon"] is None:
        if o["mode"] == "gender":
            raise CliError("gender statistics need a French treebank", None, "config", 2)
        tagger = EnglishTagger()
    else:
        tagger = LexiconTagger(_load_lexicon(run, o["lexicon"], o["language"]).entries, o["language"])
    table = count_agreement_patterns(trees, tagger, o["mode"])
    out = table.to_csv(run.output("patterns.csv"))
    diag = run.output("diagnostics.json")
    diag.write_text(json.dumps(dict(sorted(table.diagnostics.items())), indent=2) + "\n", encoding="utf-8")
    return out


def cmd_transform(run: Run) -> Path:
    from .treebank import to_coord_annotation, write_treebank
    src = _require_file(run.options["treebank"], "treebank")
    trees = _load_trees(run, str(src), "en", "treebank")
    out = run.output("treebank.mrg")
    write_treebank([to_coord_annotation(t) for t in trees], out)
    return out


HANDLERS = {
    "train": cmd_train, "gen-stimuli": cmd_gen_stimuli, "eval": cmd_eval,
    "analyze": cmd_analyze, "corpus-stats": cmd_corpus_stats, "transform": cmd_transform,
}


def _classify(exc: BaseException) -> CliError:
    from .nn.checkpoint import CheckpointError
    from .stimuli import LexiconError, SchemaError
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, FileNotFoundError):
        return CliError("file not found", exc.filename or str(exc), "missing-input")
    if isinstance(exc, SchemaError):
        return CliError(str(exc), None, "schema")
    if isinstance(exc, CheckpointError):
        return CliError(str(exc), None, "checkpoint")
    if isinstance(exc, LexiconError):
        return CliError(str(exc), None, "lexicon")
    return CliError(f"{type(exc).__name__}: {exc}", None, "runtime")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    run = None
    try:
        options = resolve_options(args.command, args)
        run = Run(args.command, options, args.verbose)
        result = HANDLERS[args.command](run)
        run.finish()
        print(result)
        return 0
    except Exception as exc:  # every failure becomes one structured line on stderr
        err = _classify(exc)
        if run is not None:
            log.error("%s", json.dumps(err.payload(), sort_keys=True))
            run.close()
        print(json.dumps(err.payload(), sort_keys=True, ensure_ascii=False), file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
