"""Command-line entry point: ``haw-translit SUBCOMMAND [flags]``.

Every subcommand also takes ``--config FILE`` (``key = value`` lines naming
flags, with ``#`` comments) and ``--seed``. Flags given on the command line
override the config file. Data goes to stdout or ``--out``; logs go to
stderr.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 model mismatch, 5 decode failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import rnnlm
from .decoder import BeamConfig, DecodeError, decode_fst, decode_hybrid
from .evaluation import (FIXTURES, SplitSpec, corpus_cerr, load_fixture, load_sample_corpus,
                         make_synthetic, read_pairs, split_lines, write_pairs)
from .ngram import SMOOTHINGS, NgramModel, count_ngrams, estimate
from .orthography import RuleSet, backward_map, build_c, build_c_wb, default_symbols, normalize
from .wfst import EmptyLanguageError

log = logging.getLogger("haw_translit")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH, EXIT_DECODE = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# I/O helpers


def _read_lines(path: str | None) -> list[str]:
    if path in (None, "-"):
        text = sys.stdin.read()
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [normalize(line) for line in text.splitlines()]


def _read_corpus(path: str | None) -> list[str]:
    if path is None:
        return load_sample_corpus()
    return [line for line in _read_lines(path) if line.strip() and not line.startswith("#")]


def _write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _rules(spec: str, insertion_penalty: float):
    syms = default_symbols()
    if spec == "c":
        return build_c(syms=syms, insertion_penalty=insertion_penalty)
    if spec == "c_wb":
        return build_c_wb(syms=syms, insertion_penalty=insertion_penalty)
    try:
        extra = RuleSet.read(spec)
    except ValueError as exc:
        raise CliError(f"bad rules file {spec}: {exc}", EXIT_USAGE) from None
    return build_c(syms=syms, extra=extra, insertion_penalty=insertion_penalty)


def _load_ngram(path: str) -> NgramModel:
    try:
        return NgramModel.read_arpa(path, default_symbols())
    except ValueError as exc:
        raise CliError(f"language model {path} does not match the symbol table: {exc}", EXIT_MISMATCH) from None


def _load_rnn(path: str) -> rnnlm.LstmParams:
    try:
        params = rnnlm.LstmParams.load(path)
        rnnlm.check_symbols(params, default_symbols())
    except ValueError as exc:
        raise CliError(f"RNN model {path}: {exc}", EXIT_MISMATCH) from None
    return params


# Decoding shared by transliterate and evaluate

_WORKER: dict = {}


def _init_worker(args_dict: dict) -> None:
    _WORKER.clear()
    _WORKER["decoder"] = _Decoder(argparse.Namespace(**args_dict))


class _Decoder:
    def __init__(self, args):
        self.rules = _rules(args.rules, args.insertion_penalty)
        self.model = args.model
        if args.model == "fst-ngram":
            if not args.lm:
                raise CliError("--model fst-ngram needs --lm ARPA", EXIT_USAGE)
            self.lm = _load_ngram(args.lm).to_wfst()
        else:
            if not args.rnn:
                raise CliError("--model hybrid needs --rnn MODEL", EXIT_USAGE)
            self.lm = _load_rnn(args.rnn)
            self.beam = BeamConfig(width=args.beam, eos_scoring=args.eos)

    def __call__(self, line: str) -> str:
        if self.model == "fst-ngram":
            return decode_fst(line, self.rules, self.lm)[0]
        return decode_hybrid(line, self.rules, self.lm, self.beam)[0]


def _decode_one(line: str) -> str:
    return _WORKER["decoder"](line)


def _decode_all(args, lines: list[str], decoder: _Decoder | None = None) -> list[str]:
    decoder = decoder or _Decoder(args)  # fails fast on bad models before forking
    try:
        if args.jobs <= 1 or len(lines) < 2:
            return [decoder(line) for line in lines]
        with ProcessPoolExecutor(args.jobs, initializer=_init_worker, initargs=(vars(args),)) as pool:
            return list(pool.map(_decode_one, lines, chunksize=max(1, len(lines) // (4 * args.jobs))))
    except (DecodeError, EmptyLanguageError) as exc:
        raise CliError(f"decode failed: {exc}", EXIT_DECODE) from None


# Subcommands


def cmd_normalize(args) -> None:
    lines = _read_lines(args.input)
    if args.missionary:
        lines = [backward_map(line) for line in lines]
    _write_text(args.out, "".join(line + "\n" for line in lines))


def cmd_simulate(args) -> None:
    lines = _read_corpus(args.corpus)
    spec = SplitSpec(args.train_frac, args.valid_frac, args.test_frac, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "valid", "test"), split_lines(lines, spec)):
        (out / f"{name}.txt").write_text("".join(line + "\n" for line in part), encoding="utf-8")
        write_pairs(out / f"{name}.tsv", make_synthetic(part))
        log.info("%s: %d lines", name, len(part))


def cmd_train_ngram(args) -> None:
    lines = _read_corpus(args.corpus)
    syms = default_symbols()
    model = estimate(count_ngrams(lines, args.order, syms), args.smoothing)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.write_arpa(out / "lm.arpa")
    model.to_wfst().write(out / "lm.fst.txt")
    syms.write(out / "syms.txt")
    log.info("wrote %s (%d contexts)", out, len(model.probs))


def cmd_train_rnn(args) -> None:
    syms = default_symbols()
    train_ids = [syms.encode(line) for line in _read_corpus(args.corpus)]
    valid_ids = [syms.encode(line) for line in _read_corpus(args.valid)] if args.valid else None
    lstm_config = rnnlm.LstmConfig(len(syms), args.layers, args.hidden, args.dropout)
    train_config = rnnlm.TrainConfig(args.batch, args.lr, args.tbptt, args.clip_norm or None,
                                     args.epochs, args.seed)
    history: list[dict] = []

    def on_epoch(epoch, loss, params):
        ppl = rnnlm.perplexity(params, valid_ids) if valid_ids else None
        history.append({"epoch": epoch, "loss": loss, "valid_ppl": ppl})
        if ppl is not None:
            log.info("epoch %d: validation perplexity %.4f", epoch, ppl)

    params = rnnlm.train(train_ids, lstm_config, train_config, syms.symbols(), on_epoch=on_epoch)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params.save(out)
    rows = ["epoch\tloss\tvalid_ppl"]
    for h in history:
        ppl = "" if h["valid_ppl"] is None else f"{h['valid_ppl']:.6f}"
        rows.append(f"{h['epoch']}\t{h['loss']:.6f}\t{ppl}")
    log_path = out.with_suffix(".log.tsv")
    log_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    if history and not args.no_plot:
        from .plotting import plot_training
        plot_training(history, out.with_suffix(".training.png"))
    log.info("wrote %s and %s", out, log_path)


def cmd_build_fst(args) -> None:
    fst = _rules(args.rules, args.insertion_penalty)
    _write_text(args.out, fst.to_text())
    if args.syms_out:
        fst.isyms.write(args.syms_out)


def cmd_transliterate(args) -> None:
    decoder = _Decoder(args)
    lines = _read_lines(args.input)
    _write_text(args.out, "".join(p + "\n" for p in _decode_all(args, lines, decoder)))


def cmd_perplexity(args) -> None:
    lines = [line for line in _read_lines(args.input) if line]
    if not lines:
        raise CliError("no lines to score", EXIT_USAGE)
    if bool(args.lm) == bool(args.rnn):
        raise CliError("give exactly one of --lm and --rnn", EXIT_USAGE)
    if args.lm:
        ppl = _load_ngram(args.lm).perplexity(lines)
    else:
        syms = default_symbols()
        ppl = rnnlm.perplexity(_load_rnn(args.rnn), [syms.encode(line) for line in lines])
    _write_text(args.out, f"lines={len(lines)}\nperplexity={ppl:.6f}\n")


def cmd_evaluate(args) -> None:
    if bool(args.pairs) == bool(args.fixture):
        raise CliError("give exactly one of --pairs and --fixture", EXIT_USAGE)
    if args.fixture:
        names = FIXTURES if args.fixture == "all" else (args.fixture,)
        pairs = [p for name in names for p in load_fixture(name)]
    else:
        try:
            pairs = read_pairs(args.pairs)
        except ValueError as exc:
            raise CliError(f"bad pairs file {args.pairs}: {exc}", EXIT_USAGE) from None
    if args.predictions:
        preds = _read_lines(args.predictions)
        while preds and len(preds) > len(pairs) and preds[-1] == "":
            preds.pop()
        if len(preds) != len(pairs):
            raise CliError(f"{len(preds)} predictions for {len(pairs)} pairs", EXIT_USAGE)
        pairs = [p.with_prediction(x) for p, x in zip(pairs, preds)]
    elif all(p.prediction is not None for p in pairs):
        pass
    else:
        decoded = _decode_all(args, [p.input for p in pairs])
        pairs = [p.with_prediction(x) for p, x in zip(pairs, decoded)]
    report = corpus_cerr(pairs)
    _write_text(args.out, report.to_text())
    if args.out not in (None, "-"):
        out = Path(args.out)
        write_pairs(out.with_suffix(".pairs.tsv"), pairs)
        if not args.no_plot:
            from .plotting import plot_cerr
            plot_cerr(report.per_pair, report.corpus_cerr, out.with_suffix(".png"))


# Parser


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _decode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("fst-ngram", "hybrid"), default="fst-ngram")
    p.add_argument("--rules", default="c", help="c, c_wb, or a rules file added to C")
    p.add_argument("--insertion-penalty", type=float, default=0.0, help="cost of each inserted ʻokina or space")
    p.add_argument("--lm", help="ARPA n-gram model (fst-ngram)")
    p.add_argument("--rnn", help="LSTM model file (hybrid)")
    p.add_argument("--beam", type=_positive_int, default=64, help="beam width K (hybrid)")
    p.add_argument("--eos", action="store_true", help="score end of sentence in the hybrid decoder")
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file of flag defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="haw-translit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("normalize", parents=[common], help="NFC-normalise text and map ` to ʻ")
    p.add_argument("--input", help="input file (default stdin)")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--missionary", action="store_true", help="also strip ʻokina and kahakō")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("simulate", parents=[common], help="split a modern corpus and make synthetic pairs")
    p.add_argument("--corpus", help="modern-orthography text, one sentence per line (default: bundled)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--valid-frac", type=float, default=0.1)
    p.add_argument("--test-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train-ngram", parents=[common], help="train a character n-gram LM")
    p.add_argument("--corpus", help="training text (default: bundled)")
    p.add_argument("--order", type=_positive_int, default=7)
    p.add_argument("--smoothing", choices=SMOOTHINGS, default="kn_interpolated")
    p.add_argument("--out-dir", required=True, help="receives lm.arpa, lm.fst.txt, syms.txt")
    p.set_defaults(func=cmd_train_ngram)

    p = sub.add_parser("train-rnn", parents=[common], help="train an LSTM character LM")
    p.add_argument("--corpus", help="training text (default: bundled)")
    p.add_argument("--valid", help="validation text for per-epoch perplexity")
    p.add_argument("--out", required=True, help="model file; log and figure are written beside it")
    p.add_argument("--layers", type=_positive_int, default=3)
    p.add_argument("--hidden", type=_positive_int, default=200)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--batch", type=_positive_int, default=30)
    p.add_argument("--lr", type=float, default=10.0)
    p.add_argument("--tbptt", type=_positive_int, default=45)
    p.add_argument("--clip-norm", type=float, default=1.0, help="0 disables renormalisation")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train_rnn)

    p = sub.add_parser("build-fst", parents=[common], help="write an orthography transducer as AT&T text")
    p.add_argument("--rules", default="c", help="c, c_wb, or a rules file added to C")
    p.add_argument("--insertion-penalty", type=float, default=0.0)
    p.add_argument("--out", help="FST text (default stdout)")
    p.add_argument("--syms-out", help="also write the symbol table")
    p.set_defaults(func=cmd_build_fst)

    p = sub.add_parser("transliterate", parents=[common], help="convert missionary text to modern spelling")
    p.add_argument("--input", help="input file (default stdin)")
    p.add_argument("--out", help="output file (default stdout)")
    _decode_flags(p)
    p.set_defaults(func=cmd_transliterate)

    p = sub.add_parser("perplexity", parents=[common], help="per-character perplexity of a text")
    p.add_argument("--input", help="text file (default stdin)")
    p.add_argument("--lm", help="ARPA n-gram model")
    p.add_argument("--rnn", help="LSTM model file")
    p.add_argument("--out", help="report file (default stdout)")
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("evaluate", parents=[common], help="CERR report for predictions against ground truth")
    p.add_argument("--pairs", help="input<TAB>truth[<TAB>prediction] file")
    p.add_argument("--fixture", choices=FIXTURES + ("all",), help="bundled newspaper fixture")
    p.add_argument("--predictions", help="one prediction per line; if absent and pairs lack them, decode")
    p.add_argument("--out", help="report file; pairs and a figure are written beside it")
    p.add_argument("--no-plot", action="store_true")
    _decode_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def read_config(path: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"config {path} line {lineno}: expected key = value", EXIT_USAGE)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise CliError(f"unknown config key {key!r}", EXIT_USAGE)
        if action.nargs == 0:  # store_true flags
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise CliError(f"config key {key!r} needs a boolean", EXIT_USAGE)
            defaults[key] = value.lower() in ("true", "1", "yes")
        else:
            # argparse converts string defaults with the action's type
            if action.choices is not None and value not in action.choices:
                raise CliError(f"config key {key!r}: {value!r} not in {list(action.choices)}", EXIT_USAGE)
            defaults[key] = value
    sub.set_defaults(**defaults)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, read_config(args.config))
        args = parser.parse_args(argv)
    return args


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CliError as exc:
        print(f"haw-translit: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"haw-translit: error: {exc}", file=sys.stderr)
        return EXIT_IO
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"haw-translit: error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"haw-translit: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"haw-translit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(run())
