"""Command-line surface: key management, watermarked generation, detection,
n-gram training, edit attacks, and the CSV experiment runners.

Single runs print JSON to stdout; experiments write CSV files.  Exit codes:
0 success (and, for detect, a "watermarked" decision), 1 a "not watermarked"
decision, 2 usage or I/O errors.  A JSON config file may supply any flag's
value; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import experiments, textlab, watermark
from .decode import RandomSource
from .experiments import EXPERIMENT_IDS
from .prf import WatermarkKey, load_key_file, save_key_file
from .watermark import SCHEME_KINDS, WatermarkScheme

EXIT_OK = 0
EXIT_NOT_WATERMARKED = 1
EXIT_ERROR = 2


class CliError(Exception):
    pass


def _load_model(spec: str):
    if spec.startswith("fixed:"):
        logits = [float(v) for v in spec[len("fixed:"):].split(",") if v]
        if not logits:
            raise CliError("fixed model needs at least one logit, e.g. fixed:3,0")
        return textlab.FixedLogitsModel(np.asarray(logits))
    if spec.startswith("ngram:"):
        return textlab.load_model(spec[len("ngram:"):])
    raise CliError(f"bad --model {spec!r}: expected fixed:<logits,...> or ngram:<path>")


def _parse_tokens(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise CliError(f"bad token list: {exc}") from None


def _read_tokens(args) -> list[int]:
    if getattr(args, "tokens", None):
        return _parse_tokens(args.tokens)
    if getattr(args, "infile", None):
        with open(args.infile, "r", encoding="utf-8") as fh:
            return _parse_tokens(fh.read())
    raise CliError("supply --tokens or --in")


def _scheme_from(args) -> WatermarkScheme:
    return WatermarkScheme(
        kind=args.scheme,
        m=args.m,
        temperature=args.temperature,
        kgw_delta=args.kgw_delta,
        kgw_gamma=args.kgw_gamma,
    )


def cmd_keygen(args) -> int:
    key = WatermarkKey.generate()
    save_key_file(key, args.out, force=args.force)
    print(json.dumps({"key_file": str(args.out)}))
    return EXIT_OK


def cmd_generate(args) -> int:
    model = _load_model(args.model)
    key = load_key_file(args.key)
    scheme = _scheme_from(args)
    if args.prompt_tokens:
        prompt = _parse_tokens(args.prompt_tokens)
    elif args.prompt is not None:
        tok = model.tokenizer() if hasattr(model, "tokenizer") else None
        if tok is None:
            raise CliError("--prompt text needs an ngram model; use --prompt-tokens")
        prompt = tok.tokenize(args.prompt, extend=False)
    else:
        raise CliError("supply --prompt or --prompt-tokens")
    rng = RandomSource(args.seed) if args.scheme == "kgw" else None
    record = watermark.generate(model, prompt, key, scheme, args.length, rng=rng)
    payload = {"tokens": record.output}
    if hasattr(model, "tokenizer"):
        payload["text"] = model.tokenizer().detokenize(record.output)
    out = json.dumps(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    print(out)
    return EXIT_OK


def cmd_detect(args) -> int:
    key = load_key_file(args.key)
    scheme = _scheme_from(args)
    tokens = _read_tokens(args)
    report = watermark.detect(tokens, key, scheme, args.alpha, dedup=args.dedup)
    print(report.to_json())
    return EXIT_OK if report.decision == "watermarked" else EXIT_NOT_WATERMARKED


def cmd_train_ngram(args) -> int:
    with open(args.corpus, "r", encoding="utf-8") as fh:
        corpus = fh.read()
    model = textlab.train_ngram(corpus, order=args.order, smoothing=args.smoothing,
                                tokenizer=args.tokenizer)
    textlab.save_model(model, args.out)
    print(json.dumps({
        "model_file": str(args.out),
        "order": model.order,
        "vocab_size": model.vocab_size,
        "contexts": len(model.counts),
    }))
    return EXIT_OK


def cmd_attack(args) -> int:
    tokens = _read_tokens(args)
    rng = RandomSource(args.seed)
    out = watermark.attack_text(tokens, args.kind, args.rate, rng,
                                vocab_size=args.vocab_size)
    print(json.dumps({"tokens": out}))
    return EXIT_OK


def cmd_experiment(args) -> int:
    kwargs = {}
    if args.id in ("power", "attacks", "type1") and args.trials:
        kwargs["n_runs" if args.id != "type1" else "n_texts"] = args.trials
    experiments.run_experiment(args.id, args.out, seed=args.seed, **kwargs)
    print(json.dumps({"experiment": args.id, "csv": str(args.out)}))
    return EXIT_OK


def _apply_config(parser: argparse.ArgumentParser,
                  subparsers: dict[str, argparse.ArgumentParser],
                  argv: list[str]) -> argparse.Namespace:
    # Parse once to find --config, seed the subcommand's defaults from it,
    # then reparse so explicit flags override config values.
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise CliError("config file must hold a JSON object")
        sub = subparsers[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(config) - known
        if unknown:
            raise CliError(f"config has unknown keys: {sorted(unknown)}")
        sub.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def _add_scheme_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=SCHEME_KINDS, default="pf")
    p.add_argument("--m", type=int, default=4, help="context width")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--kgw-delta", dest="kgw_delta", type=float, default=2.0)
    p.add_argument("--kgw-gamma", dest="kgw_gamma", type=float, default=0.5)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="permuteflip",
        description="Permute-and-flip decoding and keyed text watermarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def add_parser(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        registry[name] = p
        return p

    p = add_parser("keygen", help="write a fresh 64-hex-char key file")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing file")
    p.set_defaults(func=cmd_keygen)

    p = add_parser("generate", help="emit watermarked tokens as JSON")
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--model", required=True, help="fixed:<logits,...> or ngram:<path>")
    p.add_argument("--key", required=True)
    p.add_argument("--prompt", help="prompt text (ngram models)")
    p.add_argument("--prompt-tokens", dest="prompt_tokens", help="prompt token ids")
    p.add_argument("--length", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_scheme_flags(p)
    p.set_defaults(func=cmd_generate)

    p = add_parser("detect", help="score a suspect text and print the report")
    p.add_argument("--config", help="JSON file of flag defaults")
    p.add_argument("--key", required=True)
    p.add_argument("--tokens", help="token ids, comma or space separated")
    p.add_argument("--in", dest="infile", help="file of token ids")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--dedup", action="store_true",
                   help="score each unique (context, token) pair once")
    _add_scheme_flags(p)
    p.set_defaults(func=cmd_detect)

    p = add_parser("train-ngram", help="train and save an n-gram model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--smoothing", type=float, default=0.01)
    p.add_argument("--tokenizer", choices=("byte", "whitespace"), default="byte")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ngram)

    p = add_parser("attack", help="randomly edit a token sequence")
    p.add_argument("--kind", choices=("delete", "substitute", "insert"), required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--tokens")
    p.add_argument("--in", dest="infile")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.set_defaults(func=cmd_attack)

    p = add_parser("experiment", help="run an experiment and write CSV")
    p.add_argument("--id", choices=EXPERIMENT_IDS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, help="override the trial count")
    p.set_defaults(func=cmd_experiment)

    return parser, registry


def main(argv=None) -> int:
    parser, registry = build_parser()
    try:
        args = _apply_config(parser, registry, list(sys.argv[1:] if argv is None else argv))
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_ERROR if exc.code else EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
