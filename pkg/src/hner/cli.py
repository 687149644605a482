"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from . import config as cfgmod
from . import experiment as exp
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError
from .data import REFERENCE_SPLIT_SIZES, ConllError, Sentence, corpus_stats, parse_conll, write_conll
from .gradcheck import check_gradients
from .model import count_parameters
from .tokenizer import Vocabulary, VocabularyError, tokenize_sentence
from .trainer import TrainingError, evaluate, fit, predict

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
GRADCHECK_TOLERANCE = 1e-4

log = logging.getLogger("hner")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _load_values(args) -> dict:
    values = cfgmod.load_config(args.config) if args.config else cfgmod.defaults()
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _prepare(args, values: dict):
    train = parse_conll(args.train, repair=args.repair)
    dev = parse_conll(args.dev, repair=args.repair) if args.dev else None
    vocab = Vocabulary.load(args.vocab) if args.vocab else exp.vocabulary_for(train, values["vocab.min_count"])
    scheme = exp.merged_scheme(train, dev)
    train_ex = exp.make_examples(train.sentences, vocab, scheme)
    dev_ex = exp.make_examples(dev.sentences, vocab, scheme) if dev else None
    return vocab, scheme, train_ex, dev_ex


def cmd_train(args) -> int:
    values = _load_values(args)
    vocab, scheme, train_ex, dev_ex = _prepare(args, values)
    model = exp.build_model(values, len(vocab), len(scheme))
    sink = open(args.log, "w", encoding="utf-8") if args.log else sys.stdout
    try:
        def on_epoch(rec):
            sink.write(json.dumps(rec) + "\n")
            sink.flush()

        result = fit(model, train_ex, dev_ex, scheme, cfgmod.train_config(values), on_epoch)
    finally:
        if sink is not sys.stdout:
            sink.close()
    best = result.best
    meta = {
        "epoch": best.epoch,
        "dev_f1": best.dev_f1 if dev_ex else None,
        "selected_by": ("ema" if values["ema.enabled"] else "live") if dev_ex else "train_loss",
        "seed": values["seed"],
        "config": values,
    }
    save_checkpoint(args.out, exp.to_checkpoint(model, vocab, scheme, best.snapshot, meta))
    log.info("saved epoch %d checkpoint to %s", best.epoch, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    loaded = exp.from_checkpoint(load_checkpoint(args.model))
    corpus = parse_conll(args.data, repair=args.repair)
    examples = exp.make_examples(corpus.sentences, loaded.vocab, None)
    which = args.params or ("ema" if loaded.ema_params is not None else "live")
    report = evaluate(loaded.model, examples, loaded.scheme, loaded.params_for(which))
    report.averages = ("micro", "macro") if args.average == "both" else (args.average,)
    if args.format == "text":
        print(report.to_text())
    else:
        _emit({"params": which, **report.as_dict()})
    return EXIT_OK


def cmd_predict(args) -> int:
    loaded = exp.from_checkpoint(load_checkpoint(args.model))
    corpus = parse_conll(args.input, repair=True, require_tags=False)
    sentences = [tokenize_sentence(s.words, loaded.vocab) for s in corpus.sentences]
    which = args.params or ("ema" if loaded.ema_params is not None else "live")
    tags = predict(loaded.model, sentences, loaded.scheme, loaded.params_for(which))
    out = [Sentence(s.words, t) for s, t in zip(corpus.sentences, tags)]
    write_conll(out, args.output)
    return EXIT_OK


def cmd_ablate(args) -> int:
    values = _load_values(args)
    vocab, scheme, train_ex, dev_ex = _prepare(args, values)
    arms = {}
    for mode in args.mode:
        v = exp.ablation_values(values, mode)
        model = exp.build_model(v, len(vocab), len(scheme))
        arm = {"parameters": count_parameters(model.params), "word_layer": v["word_layer.kind"],
               "encoder_layers": v["encoder.layers"]}
        if not args.count_only:
            result = fit(model, train_ex, dev_ex, scheme, cfgmod.train_config(v))
            rec = result.log[result.best.epoch - 1]
            arm.update(best_epoch=result.best.epoch, dev_f1_live=rec["dev_f1_live"],
                       dev_f1_ema=rec["dev_f1_ema"])
        arms[mode] = arm
    _emit({"seed": values["seed"], "arms": arms})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kinds = ("transformer", "bilstm") if args.kind == "both" else (args.kind,)
    groups = {}
    for kind in kinds:
        for g, err in check_gradients(args.seed, args.eps, kind).items():
            key = f"word_layer[{kind}]" if g == "word_layer" else g
            groups[key] = max(groups.get(key, 0.0), err)
    worst = max(groups.values())
    _emit({"seed": args.seed, "eps": args.eps, "max_relative_error": worst, "groups": groups})
    return EXIT_OK if worst < GRADCHECK_TOLERANCE else EXIT_DATA


def cmd_stats(args) -> int:
    stats = [dict(file=str(p), **corpus_stats(parse_conll(p, repair=args.repair))) for p in args.data]
    result = {"splits": stats}
    status = EXIT_OK
    if args.expect:
        expected = [n for n in REFERENCE_SPLIT_SIZES[args.expect] if n is not None]
        found = [s["sentences"] for s in stats]
        result["expected_sentences"] = expected
        result["matches_reference"] = found == expected
        if found != expected:
            status = EXIT_DATA
    _emit(result)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hner", description="Hierarchical BIO tagger with a CRF head.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(q, train_required=True):
        q.add_argument("--config", help="key=value config file")
        q.add_argument("--train", required=train_required)
        q.add_argument("--dev", help="dev split; without it selection uses training loss")
        q.add_argument("--seed", type=int)
        q.add_argument("--vocab", help="vocabulary file (one subword per line)")
        q.add_argument("--repair", action="store_true", help="rewrite stray I-t tags to B-t")

    q = sub.add_parser("train", help="train a model and save the selected checkpoint")
    data_args(q)
    q.add_argument("--out", required=True)
    q.add_argument("--log", help="write the JSON-lines epoch log here instead of stdout")
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("eval", help="evaluate a checkpoint on tagged data")
    q.add_argument("--model", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--average", choices=("micro", "macro", "both"), default="both")
    q.add_argument("--params", choices=("live", "ema"))
    q.add_argument("--format", choices=("json", "text"), default="json")
    q.add_argument("--repair", action="store_true")
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("predict", help="tag a token-per-line file")
    q.add_argument("--model", required=True)
    q.add_argument("--input", required=True)
    q.add_argument("--output", required=True)
    q.add_argument("--params", choices=("live", "ema"))
    q.set_defaults(func=cmd_predict)

    q = sub.add_parser("ablate", help="train word / subword / lstm variants")
    data_args(q)
    q.add_argument("--mode", nargs="+", choices=("word", "subword", "lstm"), required=True)
    q.add_argument("--count-only", action="store_true", help="report parameter counts only")
    q.set_defaults(func=cmd_ablate)

    q = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--eps", type=float, default=1e-5)
    q.add_argument("--kind", choices=("transformer", "bilstm", "both"), default="both")
    q.set_defaults(func=cmd_gradcheck)

    q = sub.add_parser("stats", help="corpus statistics")
    q.add_argument("--data", nargs="+", required=True)
    q.add_argument("--expect", choices=sorted(REFERENCE_SPLIT_SIZES),
                   help="compare sentence counts with the published split sizes")
    q.add_argument("--repair", action="store_true")
    q.set_defaults(func=cmd_stats)
    return p


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code (never raises SystemExit)."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConllError, ConfigError, CheckpointError, VocabularyError, TrainingError,
            OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_DATA


def main() -> int:
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
