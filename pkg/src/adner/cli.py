"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/training error.
Diagnostics go to stderr; machine-readable output to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus
from .checkpoint import load_checkpoint, save_checkpoint
from .config import format_config, load_config
from .errors import AdnerError, DataError
from .metrics import score
from .model import predict_batch
from .synth import generate
from .train import train

log = logging.getLogger("adner")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def _write(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e


def _overrides(pairs):
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# -- data ---------------------------------------------------------------------


def cmd_convert(args):
    text = _read(args.inp)
    dataset = corpus.parse_conll(text, labeled=True, strict=args.from_scheme == "iob2")
    _write(args.out, corpus.serialize_conll(dataset))
    return EXIT_OK


def cmd_validate(args):
    problems = corpus.lint_conll(_read(args.inp))
    for p in problems:
        print(p, file=sys.stderr)
    return EXIT_DATA if problems else EXIT_OK


def cmd_stats(args):
    text = _read(args.inp)
    dataset = corpus.parse_conll(text, labeled=not args.unlabeled)
    print(json.dumps(corpus.corpus_stats(dataset), indent=2))
    return EXIT_OK


def cmd_synth(args):
    cfg = load_config(args.config, _overrides(args.set))
    out = Path(args.out_dir)
    source, target, test_in, test_shift = generate(cfg.synth)
    _write(out / "source.conll", corpus.serialize_conll(source))
    _write(out / "target.txt", corpus.serialize_conll(target))
    _write(out / "test_in.conll", corpus.serialize_conll(test_in))
    _write(out / "test_shift.conll", corpus.serialize_conll(test_shift))
    _write(out / "config.resolved", format_config(cfg))
    return EXIT_OK


# -- train / eval / predict ---------------------------------------------------


def cmd_train(args):
    overrides = _overrides(args.set)
    if args.adapt is not None:
        overrides["train.adapt"] = "true" if args.adapt else "false"
    if args.out_dir:
        overrides["data.out_dir"] = args.out_dir
    cfg = load_config(args.config, overrides)
    if "data.source" not in cfg.data:
        raise UsageError("data.source is required (config file or --set)")
    out = Path(cfg.data.get("data.out_dir", "."))

    source = corpus.read_conll(cfg.data["data.source"])
    target = None
    if cfg.data.get("data.target"):
        target = corpus.read_conll(cfg.data["data.target"], labeled=False)
    splits = corpus.split_dataset(source, cfg.train.seed)

    _write(out / "config.resolved", format_config(cfg))
    result = train(cfg.model, cfg.train, splits, target)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, result.model_config, result.vocab, result.tag_index, out / "model.ckpt")
    _write(out / "history.json", result.history.to_json())
    _write(out / "tag_index.tsv", corpus.format_tag_index(result.tag_index))

    test = splits[2]
    pred = predict_batch(result.params, result.model_config, list(test.sentences), result.vocab, result.tag_index)
    report = score(test, pred)
    _write(out / "test_report.json", report.to_json())
    _write(out / "test_report.txt", report.to_text())
    log.info("best epoch %d; held-out source F1 %.3f", result.history.best_epoch, report.f1)
    return EXIT_OK


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    gold = corpus.read_conll(args.data)
    pred = predict_batch(ckpt.params, ckpt.model_config, list(gold.sentences), ckpt.vocab, ckpt.tag_index)
    report = score(gold, pred)
    report_path = Path(args.report)
    _write(report_path, report.to_json())
    _write(report_path.with_suffix(".txt"), report.to_text())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    text = _read(args.inp)
    if args.format == "text":
        data = corpus.parse_text(text)
    else:
        data = corpus.parse_conll(text, labeled=False)
    sentences = list(data.sentences)
    tags = predict_batch(ckpt.params, ckpt.model_config, sentences, ckpt.vocab, ckpt.tag_index)
    tagged = corpus.LabeledDataset(tuple(corpus.Sentence(s.tokens, t) for s, t in zip(sentences, tags)))
    _write(args.out, corpus.serialize_conll(tagged))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="adner", description="Adversarial domain adaptation for NER.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    data = sub.add_parser("data", help="corpus utilities")
    dsub = data.add_subparsers(dest="data_command", required=True, parser_class=_Parser)

    c = dsub.add_parser("convert", help="convert tags to IOB2 and canonicalise a CoNLL file")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--from", dest="from_scheme", choices=("iob1", "iob2"), default="iob1",
                   help="input scheme; iob2 rejects sequences that need repair")
    c.set_defaults(func=cmd_convert)

    c = dsub.add_parser("validate", help="exit 0 iff the file is valid IOB2 CoNLL")
    c.add_argument("--in", dest="inp", required=True)
    c.set_defaults(func=cmd_validate)

    c = dsub.add_parser("stats", help="sentence, token and class counts as JSON")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--unlabeled", action="store_true")
    c.set_defaults(func=cmd_stats)

    c = dsub.add_parser("synth", help="write synthetic source/target/test corpora")
    c.add_argument("--config")
    c.add_argument("--out-dir", required=True)
    c.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    c.set_defaults(func=cmd_synth)

    c = sub.add_parser("train", help="train a tagger, optionally adapting to a target corpus")
    c.add_argument("--config")
    c.add_argument("--adapt", dest="adapt", action="store_true", default=None)
    c.add_argument("--no-adapt", dest="adapt", action="store_false")
    c.add_argument("--out-dir")
    c.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    c.set_defaults(func=cmd_train)

    c = sub.add_parser("eval", help="score a checkpoint on a labeled CoNLL file")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--report", required=True)
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("predict", help="tag an unlabeled file")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--format", choices=("conll", "text"), default="conll",
                   help="conll: one token per line; text: one sentence per line")
    c.set_defaults(func=cmd_predict)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except AdnerError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUN


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
