"""Command line: ``prepare``, ``train``, ``eval`` and ``restore``.

Errors end the process with one JSON line on stderr,
``{"error": <kind>, "message": <text>}``, and exit code 1 (usage or
config), 2 (data) or 3 (numeric failure).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import checkpoint
from .autodiff import NumericError
from .corpus import (
    DEFAULT_MAX_LEN,
    SENTENCE_END,
    CapLabel,
    DatasetFormatError,
    PuncLabel,
    canonical_cap,
    format_stats,
    label_counts,
    normalize_and_label,
    read_dataset,
    restore,
    segment,
    split_corpus,
    write_dataset,
)
from .evaluation import format_report
from .model import ModelConfig, Variant, build_variant
from .tokenizer import DEFAULT_VOCAB_SIZE, train_vocab
from .training import TrainConfig, evaluate_model, make_rng, predict, train

logger = logging.getLogger("capunc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind, self.code = kind, code


def usage_error(msg: str) -> CliError:
    return CliError("usage", msg, EXIT_USAGE)


def data_error(msg: str) -> CliError:
    return CliError("data", msg, EXIT_DATA)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Everything ``train`` needs; keys of the JSON config file match the field names."""

    train: Optional[str] = None
    valid: Optional[str] = None
    out: str = "model.cnpc"
    metrics: Optional[str] = None
    seed: int = 0
    max_len: int = DEFAULT_MAX_LEN
    vocab_size: int = DEFAULT_VOCAB_SIZE
    # model
    variant: str = Variant.JOINT.value
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    d_cap: int = 256
    max_positions: int = 512
    init_std: float = 0.02
    dropout: float = 0.0
    position_init: str = "sinusoidal"
    punc_reduction: str = "word"
    # optimisation
    lr: float = 5e-5
    mixture: float = 0.15
    batch_size: int = 32
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    clip_norm: Optional[float] = None

    def model_config(self, vocab_size: int) -> ModelConfig:
        keys = {f.name for f in fields(ModelConfig)} - {"vocab_size", "n_cap", "n_punc"}
        return ModelConfig(vocab_size=vocab_size, **{k: getattr(self, k) for k in keys})

    def train_config(self) -> TrainConfig:
        keys = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in keys})


# config-file aliases for the command-line spelling
_ALIASES = {"lambda": "mixture"}


def load_run_config(path: Optional[str], overrides: Dict[str, object]) -> RunConfig:
    values: Dict[str, object] = {}
    errors: List[str] = []
    known = {f.name: f for f in fields(RunConfig)}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise usage_error(f"cannot read config {path}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise usage_error(f"config {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise usage_error(f"config {path} must hold a JSON object")
        for key, value in raw.items():
            name = _ALIASES.get(key, key)
            if name not in known:
                errors.append(f"unknown key {key!r}")
            else:
                values[name] = value
    values.update({k: v for k, v in overrides.items() if v is not None})
    for name, value in list(values.items()):
        default = known[name].default
        try:
            if isinstance(default, bool) or value is None:
                continue
            if isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError
                values[name] = int(value)
            elif isinstance(default, float) or name == "clip_norm":
                values[name] = float(value)
            elif isinstance(default, str) or name in ("train", "valid", "metrics"):
                values[name] = str(value)
        except (TypeError, ValueError):
            errors.append(f"{name}: bad value {value!r}")
    if "variant" in values and values["variant"] not in Variant.__members__:
        errors.append(f"variant: unknown variant {values['variant']!r}")
    if errors:
        raise usage_error("invalid config: " + "; ".join(errors))
    cfg = RunConfig(**values)
    try:
        cfg.train_config()
        cfg.model_config(8)
    except ValueError as exc:
        raise usage_error(f"invalid config: {exc}")
    if cfg.max_len < 1:
        raise usage_error("invalid config: max_len must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# commands


def read_documents(paths: Sequence[str]) -> List[str]:
    """Blank-line separated documents from UTF-8 text files."""
    docs: List[str] = []
    for p in paths:
        try:
            text = Path(p).read_text(encoding="utf-8")
        except OSError as exc:
            raise data_error(f"cannot read {p}: {exc.strerror}")
        except UnicodeDecodeError:
            raise data_error(f"{p} is not UTF-8 text")
        block: List[str] = []
        for line in text.splitlines():
            if line.strip():
                block.append(line.strip())
            elif block:
                docs.append(" ".join(block))
                block = []
        if block:
            docs.append(" ".join(block))
    return docs


def parse_ratios(text: str):
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise usage_error(f"--ratios must be three comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise usage_error(f"--ratios must be three comma-separated numbers, got {text!r}")
    return parts


def cmd_prepare(args) -> int:
    ratios = parse_ratios(args.ratios)
    docs = read_documents(args.inputs)
    labelled = [toks for toks in (normalize_and_label(d) for d in docs) if toks]
    if not labelled:
        raise data_error("empty corpus: no labelled words in the inputs")
    try:
        splits = split_corpus(labelled, ratios, args.seed)
    except ValueError as exc:
        raise usage_error(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = {}
    for name, part in zip(("train", "valid", "test"), splits):
        segs = [s for toks in part for s in segment(toks, args.max_len)]
        write_dataset(out / f"{name}.tsv", segs)
        stats[name] = label_counts(segs)
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    table = format_stats(stats)
    (out / "stats.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def _read(path: str):
    try:
        return read_dataset(path)
    except OSError as exc:
        raise data_error(f"cannot read dataset {path}: {exc.strerror}")
    except DatasetFormatError as exc:
        raise data_error(str(exc))


def cmd_train(args) -> int:
    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "mixture": args.mixture,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "max_len": args.max_len,
        "out": args.out,
        "train": args.train,
        "valid": args.valid,
        "metrics": args.metrics,
    }
    cfg = load_run_config(args.config, overrides)
    if not cfg.train or not cfg.valid:
        raise usage_error("train: both training and validation datasets are required (--train/--valid or config)")
    train_segs, valid_segs = _read(cfg.train), _read(cfg.valid)
    if not train_segs or not valid_segs:
        raise data_error("train: training and validation datasets must be non-empty")
    words = [t.text for s in train_segs for t in s.tokens]
    try:
        vocab = train_vocab(words, cfg.vocab_size)
    except ValueError as exc:
        raise usage_error(str(exc))
    rng = make_rng(cfg.seed)
    model = build_variant(cfg.model_config(len(vocab)), rng)
    metrics_path = cfg.metrics or cfg.out + ".metrics.jsonl"
    lines: List[str] = []

    def log_epoch(entry):
        line = json.dumps(entry, sort_keys=True)
        lines.append(line)
        print(line, file=sys.stderr)

    result = train(model, vocab, train_segs, valid_segs, cfg.train_config(), rng, on_epoch=log_epoch)
    lines.append(json.dumps({"selected_epoch": result.best_epoch, "config": dataclasses.asdict(cfg)}, sort_keys=True))
    Path(metrics_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    digest = checkpoint.save(cfg.out, result.model, vocab)
    print(json.dumps({"checkpoint": cfg.out, "sha256": digest, "selected_epoch": result.best_epoch}))
    return EXIT_OK


def _load_checkpoint(path: str):
    try:
        return checkpoint.load(path)
    except OSError as exc:
        raise data_error(f"cannot read checkpoint {path}: {exc.strerror}")
    except checkpoint.CheckpointError as exc:
        raise data_error(f"{path}: {exc}")


def cmd_eval(args) -> int:
    model, vocab = _load_checkpoint(args.checkpoint)
    segs = _read(args.dataset)
    report = evaluate_model(model, vocab, segs)
    print(format_report(report, title=f"{args.dataset} ({model.variant.value})"), end="")
    out = args.out or args.dataset + ".eval.json"
    Path(out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def restore_words(model, vocab, words: Sequence[str], max_len: int = DEFAULT_MAX_LEN):
    """Label a word stream window by window, cutting after predicted sentence ends.

    Returns ``(word, cap, punc)`` triples with casing labels canonicalised,
    so that re-labelling the restored text gives exactly these labels back.
    """
    out = []
    pos, n = 0, len(words)
    maxpos = model.config.max_positions
    while pos < n:
        size = min(max_len, n - pos)
        while size > 1 and sum(len(vocab.encode_word(w)) for w in words[pos : pos + size]) > maxpos:
            size -= 1
        window = list(words[pos : pos + size])
        caps, puncs = predict(model, vocab, [window])
        cap = caps[0] or [0] * size
        punc = puncs[0] or [0] * size
        take = size
        if pos + size < n:
            ends = [i for i, p in enumerate(punc) if PuncLabel(p) in SENTENCE_END]
            if ends:
                take = ends[-1] + 1
        for i in range(take):
            out.append((window[i], canonical_cap(window[i], CapLabel(cap[i])), PuncLabel(punc[i])))
        pos += take
    return out


def _conform(line: str) -> List[str]:
    words = line.split()
    normalised = [t.text for t in normalize_and_label(line)]
    if normalised != words:
        logger.warning("input is not lowercase punctuation-free text; normalising it")
    return normalised


def cmd_restore(args) -> int:
    model, vocab = _load_checkpoint(args.checkpoint)
    if args.input and args.input != "-":
        try:
            text = Path(args.input).read_text(encoding="utf-8")
        except OSError as exc:
            raise data_error(f"cannot read {args.input}: {exc.strerror}")
    else:
        text = sys.stdin.read()
    lines_out = []
    for line in text.splitlines():
        words = _conform(line)
        lines_out.append(restore(restore_words(model, vocab, words, args.max_len)) if words else "")
    result = "\n".join(lines_out) + ("\n" if lines_out else "")
    if args.out and args.out != "-":
        Path(args.out).write_text(result, encoding="utf-8")
    else:
        sys.stdout.write(result)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise usage_error(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capunc", description="Joint capitalization and punctuation restoration.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="label raw text and write train/valid/test files")
    p.add_argument("inputs", nargs="+", help="UTF-8 text files; blank lines separate documents")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ratios", default="0.5,0.2,0.3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model and write the best checkpoint")
    p.add_argument("--config")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--lambda", dest="mixture", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset file")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--out", help="structured report path (default: <dataset>.eval.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("restore", help="restore casing and punctuation of lowercase text")
    p.add_argument("checkpoint")
    p.add_argument("input", nargs="?", help="input file (default: stdin)")
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--out")
    p.set_defaults(func=cmd_restore)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if getattr(args, "max_len", 1) is not None and getattr(args, "max_len", 1) < 1:
            raise usage_error("--max-len must be >= 1")
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except (NumericError, FloatingPointError) as exc:
        return _fail("numeric", str(exc), EXIT_NUMERIC)
    except (DatasetFormatError, UnicodeDecodeError) as exc:
        return _fail("data", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
