"""Command-line entry point: ``rnnqe {preprocess,train,predict,eval,gradcheck}``.

Every option can also come from a flat ``key = value`` file given with
``--config``; keys are the long option names without the leading dashes
(``train-tokens = data/train.mt``).  Command-line flags win over the file.
The effective configuration is written to ``<out>/config.txt``.

Exit codes: 0 success, 1 usage/configuration error, 2 data validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import gradcheck as gc
from .cells import CELL_KINDS
from .corpus import (CorpusError, Vocabulary, apply_sublabels, build_vocab, format_phrase_line, invert_sublabels,
                     parse_corpus, parse_phrases, read_lines, write_lines)
from .evaluation import ShapeMismatchError, phrase_labels, score_phrases, score_words, write_report
from .numeric import NumericalError
from .serialize import ModelFormatError, read_model, write_model
from .tagger import ConfigError, TaggerConfig, build_model, predict, train

log = logging.getLogger("rnnqe")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


# name -> (type, default, help); flags are --name, booleans are switches
OPTIONS: dict[str, tuple[Callable[[str], Any], Any, str]] = {
    "config": (str, None, "flat key = value configuration file"),
    "out": (str, None, "output directory"),
    "cell": (str, "lstm", "recurrent cell: " + ", ".join(CELL_KINDS)),
    "bilingual": (_bool, False, "concatenate restructured-source context to the target context"),
    "sublabels": (_bool, False, "train on OK_B/OK_I/OK_E/BAD instead of OK/BAD"),
    "sublabel-scheme": (str, "sentence", "sub-label placement rule (only 'sentence' is implemented)"),
    "embeddings": (str, None, "pretrained target embeddings (word2vec text format)"),
    "src-embeddings": (str, None, "pretrained source embeddings (word2vec text format)"),
    "window": (int, 5, "context window size (odd)"),
    "hidden": (int, 100, "hidden layer size"),
    "hidden2": (int, None, "upper layer size for deep-lstm (default: --hidden)"),
    "embed-dim": (int, 100, "embedding dimensionality"),
    "bptt": (int, 7, "truncated BPTT depth"),
    "epochs": (int, 50, "training epochs"),
    "seed": (int, 0, "random seed"),
    "rho": (float, 0.95, "Adadelta decay"),
    "epsilon": (float, 1e-6, "Adadelta epsilon"),
    "no-shuffle": (_bool, False, "visit training sentences in file order"),
    "min-count": (int, 1, "minimum token frequency for the vocabulary"),
    "tokens": (str, None, "target (MT output) tokens file"),
    "tags": (str, None, "OK/BAD tags file"),
    "source": (str, None, "source tokens file (restructured if --align is absent)"),
    "align": (str, None, "alignment file of source-target i-j pairs"),
    "phrases": (str, None, "phrase segmentation file of start:end spans"),
    "train-tokens": (str, None, "training target tokens"),
    "train-tags": (str, None, "training tags"),
    "train-source": (str, None, "training source tokens"),
    "train-align": (str, None, "training alignments"),
    "dev-tokens": (str, None, "development target tokens"),
    "dev-tags": (str, None, "development tags"),
    "dev-source": (str, None, "development source tokens"),
    "dev-align": (str, None, "development alignments"),
    "model": (str, None, "model file"),
    "gold": (str, None, "gold tags file"),
    "pred": (str, None, "predicted tags file"),
}

TAGGER_OPTS = ["cell", "bilingual", "sublabels", "sublabel-scheme", "embeddings", "src-embeddings", "window",
               "hidden", "hidden2", "embed-dim", "bptt", "epochs", "seed", "rho", "epsilon", "no-shuffle",
               "min-count"]

COMMANDS: dict[str, tuple[str, list[str]]] = {
    "preprocess": ("restructure source, apply sub-labels and build vocabularies",
                   ["tokens", "tags", "source", "align", "bilingual", "sublabels", "sublabel-scheme", "min-count"]),
    "train": ("train a tagger",
              ["train-tokens", "train-tags", "train-source", "train-align",
               "dev-tokens", "dev-tags", "dev-source", "dev-align"] + TAGGER_OPTS),
    "predict": ("tag a corpus with a trained model", ["model", "tokens", "source", "align", "phrases"]),
    "eval": ("score predicted tags against gold tags", ["gold", "pred", "phrases"]),
    "gradcheck": ("verify analytic gradients against central differences", []),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rnnqe", description="Recurrent word-level quality estimation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for opt in ["config", "out"] + opts:
            typ, default, text = OPTIONS[opt]
            if typ is _bool:
                p.add_argument(f"--{opt}", action="store_const", const=True, default=None, help=text)
            else:
                p.add_argument(f"--{opt}", type=typ, default=None, metavar=opt.upper().replace("-", "_"),
                               help=f"{text} (default: {default})" if default is not None else text)
    return parser


def read_config_file(path: str | Path) -> dict[str, str]:
    values = {}
    for k, line in enumerate(read_lines(path), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{k}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def resolve(args: argparse.Namespace, opts: Sequence[str]) -> dict[str, Any]:
    """Merge built-in defaults, the --config file and command-line flags."""
    file_values = {}
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        file_values = read_config_file(args.config)
        allowed = set(opts) | {"out"}
        unknown = sorted(set(file_values) - allowed)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys for '{args.command}': {', '.join(unknown)}")
    config = {}
    for opt in ["out"] + list(opts):
        typ, default, _ = OPTIONS[opt]
        cli_value = getattr(args, opt.replace("-", "_"))
        if cli_value is not None:
            config[opt] = cli_value
        elif opt in file_values:
            try:
                config[opt] = typ(file_values[opt])
            except ValueError as exc:
                raise UsageError(f"{args.config}: bad value for {opt}: {exc}") from None
        else:
            config[opt] = default
    return config


def write_effective_config(config: dict[str, Any], out: Path) -> None:
    lines = [f"{k} = {v}" for k, v in sorted(config.items()) if v is not None and k != "out"]
    write_lines(out / "config.txt", lines)


def _require(config: dict, *keys: str) -> None:
    missing = [k for k in keys if not config.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k for k in missing))
    for k in keys:
        if not Path(config[k]).exists():
            raise UsageError(f"--{k}: file not found: {config[k]}")


def _check_paths(config: dict, *keys: str) -> None:
    for k in keys:
        if config.get(k) and not Path(config[k]).exists():
            raise UsageError(f"--{k}: file not found: {config[k]}")


def _out_dir(config: dict) -> Path:
    if not config.get("out"):
        raise UsageError("missing required option: --out")
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_scheme(config: dict) -> None:
    if config.get("sublabel-scheme") not in (None, "sentence"):
        raise UsageError(f"unsupported --sublabel-scheme {config['sublabel-scheme']!r}; only 'sentence' exists")


def cmd_preprocess(config: dict) -> int:
    _check_scheme(config)
    _require(config, "tokens")
    if config["bilingual"]:
        _require(config, "source", "align")
    if config["sublabels"]:
        _require(config, "tags")
    _check_paths(config, "tags", "source", "align")
    out = _out_dir(config)
    sentences = parse_corpus(config["tokens"], config["tags"], config["source"] if config["bilingual"] else None,
                             config["align"] if config["bilingual"] else None)
    build_vocab((s.target_tokens for s in sentences), config["min-count"]).save(out / "vocab.target")
    if config["bilingual"]:
        write_lines(out / "source.restructured", (" ".join(s.source_restructured) for s in sentences))
        build_vocab((s.source_restructured for s in sentences), config["min-count"]).save(out / "vocab.source")
    if config["sublabels"]:
        write_lines(out / "tags.sub", (" ".join(apply_sublabels(invert_sublabels(s.gold_labels)))
                                       for s in sentences))
    write_effective_config(config, out)
    return EXIT_OK


def _load_split(config: dict, prefix: str, bilingual: bool, required: bool):
    tokens, tags = config[f"{prefix}-tokens"], config[f"{prefix}-tags"]
    if not required and not tokens:
        return None
    _require(config, f"{prefix}-tokens", f"{prefix}-tags")
    source, align = config[f"{prefix}-source"], config[f"{prefix}-align"]
    if bilingual:
        _require(config, f"{prefix}-source")
        _check_paths(config, f"{prefix}-align")
    elif source or align:
        raise UsageError(f"--{prefix}-source/--{prefix}-align given without --bilingual")
    return parse_corpus(tokens, tags, source, align)


def tagger_config(config: dict) -> TaggerConfig:
    try:
        return TaggerConfig(
            window=config["window"], embed_dim=config["embed-dim"], hidden=config["hidden"],
            hidden2=config["hidden2"], cell=config["cell"], bilingual=config["bilingual"],
            sublabels=config["sublabels"], bptt_depth=config["bptt"], epochs=config["epochs"],
            seed=config["seed"], rho=config["rho"], epsilon=config["epsilon"],
            shuffle=not config["no-shuffle"], min_count=config["min-count"],
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(config: dict) -> int:
    _check_scheme(config)
    cfg = tagger_config(config)
    if config["src-embeddings"] and not cfg.bilingual:
        raise UsageError("--src-embeddings requires --bilingual")
    _check_paths(config, "embeddings", "src-embeddings")
    corpus = _load_split(config, "train", cfg.bilingual, required=True)
    dev = _load_split(config, "dev", cfg.bilingual, required=False)
    out = _out_dir(config)
    write_effective_config(config, out)

    target_vocab = build_vocab((s.target_tokens for s in corpus), cfg.min_count)
    source_vocab = build_vocab((s.source_restructured for s in corpus), cfg.min_count) if cfg.bilingual else None
    model, coverage = build_model(cfg, target_vocab, source_vocab, config["embeddings"], config["src-embeddings"])
    if coverage:
        write_lines(out / "embeddings.txt", (f"{side}: {c.found}/{c.words} covered ({c.coverage:.4f})"
                                             for side, c in sorted(coverage.items())))

    with open(out / "train.log", "w", encoding="utf-8", newline="\n") as fh:
        def on_epoch(record):
            fh.write(record.format() + "\n")
            fh.flush()

        try:
            result = train(model, corpus, dev, on_epoch)
        except NumericalError as exc:
            fh.write(f"aborted: {exc}\n")
            raise
    write_model(result.final, out / "model.qetm")
    if result.best is not None:
        write_model(result.best, out / "model.best.qetm")
        write_lines(out / "best_epoch.txt", [str(result.best_epoch)])
    return EXIT_OK


def cmd_predict(config: dict) -> int:
    _require(config, "model", "tokens")
    _check_paths(config, "source", "align", "phrases")
    model = read_model(config["model"])
    if model.config.bilingual and not config["source"]:
        raise UsageError("the model is bilingual: --source (and --align unless pre-restructured) is required")
    if not model.config.bilingual and (config["source"] or config["align"]):
        raise UsageError("the model is monolingual: --source/--align must not be given")
    sentences = parse_corpus(config["tokens"], None, config["source"], config["align"])
    out = _out_dir(config)
    predictions = [predict(model, s) for s in sentences]
    write_lines(out / "predictions.tags", (" ".join(p) for p in predictions))
    if config["phrases"]:
        seg = parse_phrases(config["phrases"], [len(s) for s in sentences])
        write_lines(out / "predictions.phrases",
                    (" ".join(phrase_labels(p, spans)) for p, spans in zip(predictions, seg)))
    write_effective_config(config, out)
    return EXIT_OK


def _read_tags(path) -> list[list[str]]:
    return [invert_sublabels(line.split()) for line in read_lines(path)]


def cmd_eval(config: dict) -> int:
    _require(config, "gold", "pred")
    _check_paths(config, "phrases")
    out = _out_dir(config)
    gold, pred = _read_tags(config["gold"]), _read_tags(config["pred"])
    if len(gold) != len(pred):
        raise ShapeMismatchError(f"{config['gold']} has {len(gold)} lines, {config['pred']} has {len(pred)}")
    reports = [score_words(gold, pred)]
    if config["phrases"]:
        seg = parse_phrases(config["phrases"], [len(g) for g in gold])
        reports.append(score_phrases(gold, pred, seg))
    for report in reports:
        write_report(report, out)
        sys.stdout.write(report.to_table())
    write_effective_config(config, out)
    return EXIT_OK


def cmd_gradcheck(config: dict) -> int:
    results = gc.run_suite()
    lines = [r.format() for r in results]
    failed = [r for r in results if not r.passed]
    lines.append(f"{len(results)} parameter groups checked, worst relative error {gc.worst(results):.3e}, "
                 f"{len(failed)} above {gc.TOLERANCE:g}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if config.get("out"):
        out = _out_dir(config)
        (out / "gradcheck.txt").write_text(text, encoding="utf-8")
    return EXIT_NUMERIC if failed else EXIT_OK


HANDLERS = {"preprocess": cmd_preprocess, "train": cmd_train, "predict": cmd_predict,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        config = resolve(args, COMMANDS[args.command][1])
        return HANDLERS[args.command](config)
    except UsageError as exc:
        print(f"rnnqe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, ShapeMismatchError, ModelFormatError) as exc:
        print(f"rnnqe: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"rnnqe: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rnnqe: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
