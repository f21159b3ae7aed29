"""Command line entry point: ``hebprep <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 configuration error.  Data goes to
files or stdout; progress and reports go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from contextlib import contextmanager
from dataclasses import fields
from pathlib import Path

from .cleaner import CharTrigramScorer, Document, FilterConfig, clean_corpus
from .metrics import QaPrediction, accuracy, mset_f1, qa_em_f1, token_prf
from .mlm import BuilderConfig, build
from .morph import MorphScheme, MorphTagger, render_analysis
from .proclitic import DEFAULT_GRAMMAR, ProcliticGrammar, decode, result_to_dict
from .wordpiece import Vocabulary, WordPieceTokenizer, count_words, train_vocab

logger = logging.getLogger("hebprep")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2

_FILTER_KEYS = {f.name for f in fields(FilterConfig)}
_BUILDER_KEYS = {f.name for f in fields(BuilderConfig)}
CONFIG_KEYS = _FILTER_KEYS | _BUILDER_KEYS | {"vocab", "grammar", "scheme", "threads", "vocab_size",
                                              "min_char_freq", "max_word_len", "strict_abbreviations"}


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def resolve(args, cfg: dict, key: str, default=None):
    """Flag beats config file beats default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


@contextmanager
def open_in(path: str | None):
    if path in (None, "-"):
        yield sys.stdin
        return
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise InputError(str(e)) from e
    with fh:
        yield fh


@contextmanager
def open_out(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yield fh


def read_jsonl(path: str | None) -> list:
    out = []
    with open_in(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except ValueError as e:
                raise InputError(f"{path}:{n}: bad JSON ({e})") from e
    return out


def iter_texts(path: str | None):
    """Texts from a JSONL document file or a plain text file (one per line)."""
    with open_in(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError:
                obj = None
            yield obj["text"] if isinstance(obj, dict) and isinstance(obj.get("text"), str) else line


def write_report(report: dict, path: str | None) -> None:
    text = json.dumps(report, ensure_ascii=False, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text, file=sys.stderr)


def _load_vocab(args, cfg) -> Vocabulary:
    path = resolve(args, cfg, "vocab")
    if not path:
        raise ConfigError("--vocab is required")
    try:
        return Vocabulary.load(path)
    except (OSError, ValueError) as e:
        raise InputError(f"cannot load vocabulary {path}: {e}") from e


def _load_grammar(args, cfg) -> ProcliticGrammar:
    path = resolve(args, cfg, "grammar")
    if not path:
        return DEFAULT_GRAMMAR
    try:
        return ProcliticGrammar.load(path)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"bad grammar file {path}: {e}") from e


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_tokenizer_train(args, cfg) -> int:
    counts = count_words(iter_texts(args.input), bool(resolve(args, cfg, "strict_abbreviations", False)))
    try:
        vocab = train_vocab(None, resolve(args, cfg, "vocab_size", 128_000),
                            min_char_freq=resolve(args, cfg, "min_char_freq", 10),
                            max_word_len=resolve(args, cfg, "max_word_len", 100), word_counts=counts)
    except ValueError as e:
        raise InputError(str(e)) from e
    vocab.save(args.output)
    logger.info("wrote %d tokens to %s", len(vocab), args.output)
    return EXIT_OK


def cmd_encode(args, cfg) -> int:
    tok = WordPieceTokenizer(vocab=_load_vocab(args, cfg),
                             strict_abbreviations=bool(resolve(args, cfg, "strict_abbreviations", False))).fit()
    with open_out(args.output) as out:
        for text in iter_texts(args.input):
            enc = tok.encode(text)
            out.write(json.dumps({
                "ids": enc.ids,
                "tokens": tok.vocab_.convert_ids(enc.ids),
                "word_index": enc.word_index,
                "is_first": enc.is_first,
            }, ensure_ascii=False) + "\n")
    return EXIT_OK


def _filter_config(args, cfg) -> FilterConfig:
    kw = {k: cfg[k] for k in _FILTER_KEYS if k in cfg}
    for k in ("min_words", "max_foreign_char_ratio", "max_repeat_run", "entropy_low", "entropy_high",
              "min_letter_ratio", "scorer_threshold"):
        v = getattr(args, k, None)
        if v is not None:
            kw[k] = v
    for name in args.disable or ():
        kw[f"enable_{name}"] = False
    try:
        return FilterConfig(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def cmd_clean(args, cfg) -> int:
    config = _filter_config(args, cfg)
    scorer = None
    if args.scorer_reference:
        scorer = CharTrigramScorer().fit(list(iter_texts(args.scorer_reference)))
    parse_errors = 0

    def documents(fh):
        nonlocal parse_errors
        for line in fh:
            if not line.strip():
                continue
            try:
                yield Document.from_json(line)
            except ValueError:
                parse_errors += 1

    with open_in(args.input) as fh:
        kept, report = clean_corpus(documents(fh), config, scorer, threads=resolve(args, cfg, "threads", 1))
        with open_out(args.output) as out:
            for doc in kept:
                out.write(doc.to_json() + "\n")
    report.parse_error = parse_errors
    write_report(report.to_dict(), args.report)
    return EXIT_OK


def _builder_config(args, cfg) -> BuilderConfig:
    kw = {k: cfg[k] for k in _BUILDER_KEYS if k in cfg}
    for flag, key in (("max_len", "max_len"), ("mask_rate", "mask_rate"), ("blank_prob", "blank_instance_prob"),
                      ("blank_mode", "blank_mode"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    if "replace_probs" in kw:
        kw["replace_probs"] = tuple(kw["replace_probs"])
    try:
        return BuilderConfig(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def cmd_build_mlm(args, cfg) -> int:
    config = _builder_config(args, cfg)
    vocab = _load_vocab(args, cfg)
    tok = WordPieceTokenizer(vocab=vocab).fit()
    try:
        with open_in(args.input) as fh:
            lines = (line for line in fh if line.strip())
            instances, report = build(lines, tok, config, threads=resolve(args, cfg, "threads", 1))
            with open_out(args.output) as out:
                for inst in instances:
                    out.write(inst.to_json() + "\n")
    except ValueError as e:
        raise ConfigError(str(e)) from e
    write_report(report.to_dict(), args.report)
    return EXIT_OK


def cmd_seg_decode(args, cfg) -> int:
    grammar = _load_grammar(args, cfg)
    records = read_jsonl(args.input)
    with open_out(args.output) as out:
        for n, rec in enumerate(records, 1):
            try:
                res = decode(rec["word"], rec["probs"], grammar)
            except (KeyError, TypeError, ValueError) as e:
                raise InputError(f"record {n}: {e}") from e
            out.write(json.dumps(result_to_dict(res), ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_morph_decode(args, cfg) -> int:
    grammar = _load_grammar(args, cfg)
    scheme_path = resolve(args, cfg, "scheme")
    scheme = None
    if scheme_path:
        try:
            scheme = MorphScheme.from_dict(json.loads(Path(scheme_path).read_text(encoding="utf-8")))
        except (OSError, ValueError) as e:
            raise ConfigError(f"bad scheme file {scheme_path}: {e}") from e
    tagger = MorphTagger(grammar, scheme).fit()
    records = read_jsonl(args.input)
    with open_out(args.output) as out:
        for n, rec in enumerate(records, 1):
            sent = rec if isinstance(rec, list) else [rec]
            try:
                pairs = [(w["word"], w["bundle"]) for w in sent]
                analysis = tagger.predict([pairs])[0]
            except (KeyError, TypeError, ValueError) as e:
                raise InputError(f"sentence {n}: {e}") from e
            out.write(render_analysis(analysis) + "\n")
    return EXIT_OK


def _eval_scores(task: str, gold: list, pred: list) -> dict:
    if len(gold) != len(pred):
        raise InputError(f"gold has {len(gold)} records, predictions {len(pred)}")
    try:
        if task == "morph":
            p, r, f = mset_f1([g["morphemes"] for g in gold], [x["morphemes"] for x in pred])
            return {"precision": p, "recall": r, "f1": f}
        if task == "ner":
            p, r, f = token_prf([g["labels"] for g in gold], [x["labels"] for x in pred])
            return {"precision": p, "recall": r, "f1": f}
        if task == "qa":
            items = [QaPrediction(x["prediction"], g["answers"]) for g, x in zip(gold, pred)]
            em, f1 = qa_em_f1(items)
            return {"exact_match": em, "f1": f1}
        return {"accuracy": accuracy([g["label"] for g in gold], [x["label"] for x in pred])}
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(str(e)) from e


def cmd_eval(args, cfg) -> int:
    scores = _eval_scores(args.task, read_jsonl(args.gold), read_jsonl(args.pred))
    print(json.dumps({"task": args.task, **scores}, sort_keys=True))
    return EXIT_OK


def cmd_stats(args, cfg) -> int:
    vocab = _load_vocab(args, cfg) if resolve(args, cfg, "vocab") else None
    n = tokens = masked = blanks = longest = 0
    for rec in read_jsonl(args.input):
        try:
            n += 1
            tokens += len(rec["token_ids"])
            longest = max(longest, len(rec["token_ids"]))
            blanks += bool(rec["has_blank"])
            masked += len(rec["mlm_positions"]) - bool(rec["has_blank"])
            if vocab is not None and vocab.unk_id in rec["token_ids"]:
                raise InputError(f"instance {n} contains [UNK]")
        except (KeyError, TypeError) as e:
            raise InputError(f"instance {n}: {e}") from e
    stats = {
        "instances": n,
        "tokens": tokens,
        "mean_length": tokens / n if n else 0.0,
        "max_length": longest,
        "masked_positions": masked,
        "blank_instances": blanks,
        "blank_rate": blanks / n if n else 0.0,
    }
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _finite(kind):
    def conv(s):
        v = kind(s)
        if isinstance(v, float) and math.isnan(v):
            raise argparse.ArgumentTypeError("NaN not allowed")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hebprep", description="Hebrew corpus preparation, tokenization and model-output decoding.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.set_defaults(func=func)
        return sp

    sp = add("tokenizer-train", cmd_tokenizer_train, "train a WordPiece vocabulary")
    sp.add_argument("--input", help="JSONL documents or plain text (default stdin)")
    sp.add_argument("--output", required=True, help="vocabulary file to write")
    sp.add_argument("--vocab-size", dest="vocab_size", type=int)
    sp.add_argument("--min-char-freq", dest="min_char_freq", type=int)
    sp.add_argument("--max-word-len", dest="max_word_len", type=int)
    sp.add_argument("--strict-abbreviations", dest="strict_abbreviations", action="store_true", default=None)

    sp = add("encode", cmd_encode, "encode text lines to word-piece ids")
    sp.add_argument("--vocab")
    sp.add_argument("--input")
    sp.add_argument("--output")
    sp.add_argument("--strict-abbreviations", dest="strict_abbreviations", action="store_true", default=None)

    sp = add("clean", cmd_clean, "filter a JSONL corpus")
    sp.add_argument("--input")
    sp.add_argument("--output")
    sp.add_argument("--report", help="write the JSON report here too")
    sp.add_argument("--min-words", dest="min_words", type=int)
    sp.add_argument("--max-foreign-ratio", dest="max_foreign_char_ratio", type=_finite(float))
    sp.add_argument("--max-repeat-run", dest="max_repeat_run", type=int)
    sp.add_argument("--entropy-low", dest="entropy_low", type=_finite(float))
    sp.add_argument("--entropy-high", dest="entropy_high", type=_finite(float))
    sp.add_argument("--min-letter-ratio", dest="min_letter_ratio", type=_finite(float))
    sp.add_argument("--scorer-reference", dest="scorer_reference",
                    help="fit a character-trigram scorer on this text file")
    sp.add_argument("--scorer-threshold", dest="scorer_threshold", type=_finite(float))
    sp.add_argument("--disable", action="append", choices=["min_words", "script_ratio", "gibberish", "scorer"])
    sp.add_argument("--threads", type=int)

    sp = add("build-mlm", cmd_build_mlm, "build masked-LM training instances")
    sp.add_argument("--vocab")
    sp.add_argument("--input")
    sp.add_argument("--output")
    sp.add_argument("--report")
    sp.add_argument("--max-len", dest="max_len", type=int)
    sp.add_argument("--mask-rate", dest="mask_rate", type=_finite(float))
    sp.add_argument("--blank-prob", dest="blank_prob", type=_finite(float))
    sp.add_argument("--blank-mode", dest="blank_mode", choices=["mask", "intruder"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)

    sp = add("seg-decode", cmd_seg_decode, "decode proclitic functions from probabilities")
    sp.add_argument("--grammar")
    sp.add_argument("--input")
    sp.add_argument("--output")

    sp = add("morph-decode", cmd_morph_decode, "decode morphological analyses from classifier scores")
    sp.add_argument("--grammar")
    sp.add_argument("--scheme", help="JSON label inventories")
    sp.add_argument("--input")
    sp.add_argument("--output")

    sp = add("eval", cmd_eval, "score predictions against gold")
    sp.add_argument("--task", required=True, choices=["morph", "ner", "qa", "sentiment"])
    sp.add_argument("--gold", required=True)
    sp.add_argument("--pred", required=True)

    sp = add("stats", cmd_stats, "summarize a build-mlm output file")
    sp.add_argument("--input")
    sp.add_argument("--vocab", help="also check that no instance holds [UNK]")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
