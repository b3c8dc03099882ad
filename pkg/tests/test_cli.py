import io
import subprocess
import sys

import pytest

from haw_translit import cli
from haw_translit.evaluation import load_fixture, read_pairs
from haw_translit.orthography import build_c, default_symbols
from haw_translit.wfst import accepts, chain_acceptor, compose

SUBCOMMANDS = ["normalize", "simulate", "train-ngram", "train-rnn", "build-fst",
               "transliterate", "perplexity", "evaluate"]

TRAIN = "E aʻo aʻe ʻoe iā ia\nAloha ʻoe\nHawaiʻi ponoʻī\nka ʻāina\nnā pua o ka ʻāina\n"


def run(*argv, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    return cli.run([str(a) for a in argv])


@pytest.fixture(scope="module")
def lm_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("lm")
    (d / "train.txt").write_text(TRAIN, encoding="utf-8")
    assert cli.run(["train-ngram", "--corpus", str(d / "train.txt"), "--order", "4", "--out-dir", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def rnn_model(tmp_path_factory):
    d = tmp_path_factory.mktemp("rnn")
    (d / "train.txt").write_text(TRAIN, encoding="utf-8")
    model = d / "m.lstm"
    code = cli.run(["train-rnn", "--corpus", str(d / "train.txt"), "--valid", str(d / "train.txt"),
                    "--out", str(model), "--layers", "1", "--hidden", "8", "--batch", "2", "--lr", "1",
                    "--tbptt", "10", "--epochs", "2"])
    assert code == 0
    return model


# Help and flags


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_lists_every_flag(command, capsys):
    assert run(command, "--help") == 0
    text = capsys.readouterr().out
    sub = cli.build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_unknown_flags_are_rejected(command, capsys):
    assert run(command, "--no-such-flag") == cli.EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "haw_translit", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for command in SUBCOMMANDS:
        assert command in proc.stdout


# normalize and build-fst


def test_normalize(tmp_path, capsys, monkeypatch):
    assert run("normalize", stdin="Ali`i Māla\n", monkeypatch=monkeypatch) == 0
    assert capsys.readouterr().out == "Aliʻi Māla\n"
    assert run("normalize", "--missionary", stdin="ʻĀina\n", monkeypatch=monkeypatch) == 0
    assert capsys.readouterr().out == "Aina\n"


def test_build_fst_writes_c(tmp_path):
    assert run("build-fst", "--rules", "c_wb", "--out", tmp_path / "c.txt", "--syms-out", tmp_path / "s.txt") == 0
    assert (tmp_path / "c.txt").read_text(encoding="utf-8") == cli._rules("c_wb", 0.0).to_text()
    assert (tmp_path / "s.txt").exists()


def test_build_fst_with_rules_file(tmp_path):
    (tmp_path / "r.tsv").write_text("r\tl\t1.0\n", encoding="utf-8")
    assert run("build-fst", "--rules", tmp_path / "r.tsv", "--out", tmp_path / "c.txt") == 0
    (tmp_path / "bad.tsv").write_text("r\tl\n", encoding="utf-8")
    assert run("build-fst", "--rules", tmp_path / "bad.tsv") == cli.EXIT_USAGE


# transliterate


def test_transliterate_gives_a_c_output(lm_dir, tmp_path):
    (tmp_path / "in.txt").write_text("E ao ae oe ia ia\n", encoding="utf-8")
    assert run("transliterate", "--input", tmp_path / "in.txt", "--lm", lm_dir / "lm.arpa",
               "--rules", "c", "--out", tmp_path / "out.txt") == 0
    out = (tmp_path / "out.txt").read_text(encoding="utf-8").rstrip("\n")
    syms = default_symbols()
    lattice = compose(compose(chain_acceptor("E ao ae oe ia ia", syms), build_c(syms=syms)),
                      chain_acceptor(out, syms))
    assert accepts(lattice)
    assert out == "E aʻo aʻe ʻoe iā ia"


def test_transliterate_hybrid(rnn_model, tmp_path, capsys, monkeypatch):
    assert run("transliterate", "--model", "hybrid", "--rnn", rnn_model, "--beam", "4", "--eos",
               stdin="aina\n", monkeypatch=monkeypatch) == 0
    out = capsys.readouterr().out
    assert out.count("\n") == 1
    assert out.replace("ʻ", "").replace("ā", "a").replace("ī", "i") == "aina\n"


def test_parallel_jobs_preserve_order(lm_dir, tmp_path):
    lines = ["aina", "E ao ae oe ia ia", "Hawaii", "na pua", "x", "Aloha oe", ""]
    (tmp_path / "in.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    outs = []
    for jobs in ("1", "3"):
        out = tmp_path / f"out{jobs}.txt"
        assert run("transliterate", "--input", tmp_path / "in.txt", "--lm", lm_dir / "lm.arpa",
                   "--jobs", jobs, "--out", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].decode().splitlines()) == len(lines)


def test_model_flags_are_checked(lm_dir):
    assert run("transliterate", "--model", "hybrid", "--lm", lm_dir / "lm.arpa") == cli.EXIT_USAGE
    assert run("transliterate", "--beam", "0") == cli.EXIT_USAGE


# Exit codes


def test_missing_input_is_an_io_error(lm_dir, tmp_path):
    assert run("transliterate", "--input", tmp_path / "nope.txt", "--lm", lm_dir / "lm.arpa") == cli.EXIT_IO


def test_bad_utf8_is_an_io_error(tmp_path):
    (tmp_path / "bad.txt").write_bytes(b"\xff\xfe\n")
    assert run("normalize", "--input", tmp_path / "bad.txt") == cli.EXIT_IO


def test_foreign_lm_is_a_mismatch(tmp_path):
    (tmp_path / "lm.arpa").write_text("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\tж\n\n\\end\\\n", encoding="utf-8")
    assert run("transliterate", "--lm", tmp_path / "lm.arpa", stdin=None) == cli.EXIT_MISMATCH


def test_corrupt_rnn_model_is_a_mismatch(tmp_path):
    (tmp_path / "m.lstm").write_bytes(b"not a model")
    assert run("transliterate", "--model", "hybrid", "--rnn", tmp_path / "m.lstm") == cli.EXIT_MISMATCH


def test_undecodable_input_is_a_decode_failure(tmp_path, monkeypatch):
    # a unigram model that can only emit "a" has no path for "k"
    arpa = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\ta\n-0.3\t</s>\n\n\\end\\\n"
    (tmp_path / "lm.arpa").write_text(arpa, encoding="utf-8")
    assert run("transliterate", "--lm", tmp_path / "lm.arpa", stdin="k\n", monkeypatch=monkeypatch) == cli.EXIT_DECODE


# evaluate and simulate


def test_evaluate_perfect_predictions(tmp_path, capsys):
    pairs = load_fixture("newspaper1")
    (tmp_path / "pred.txt").write_text("".join(p.truth + "\n" for p in pairs), encoding="utf-8")
    assert run("evaluate", "--fixture", "newspaper1", "--predictions", tmp_path / "pred.txt", "--no-plot") == 0
    assert "corpus_cerr=0.000000" in capsys.readouterr().out.splitlines()


def test_simulate_then_identity_predictions_score_one(tmp_path):
    assert run("simulate", "--out-dir", tmp_path, "--seed", "5") == 0
    test_pairs = read_pairs(tmp_path / "test.tsv")
    (tmp_path / "pred.txt").write_text("".join(p.input + "\n" for p in test_pairs), encoding="utf-8")
    report = tmp_path / "report.txt"
    assert run("evaluate", "--pairs", tmp_path / "test.tsv", "--predictions", tmp_path / "pred.txt",
               "--out", report) == 0
    assert "corpus_cerr=1.000000" in report.read_text().splitlines()
    assert report.with_suffix(".pairs.tsv").exists()
    assert report.with_suffix(".png").exists()


def test_simulate_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--out-dir", tmp_path / d, "--seed", "2") == 0
    for name in ("train.txt", "valid.txt", "test.txt", "test.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evaluate_decodes_when_predictions_are_missing(lm_dir, tmp_path):
    report = tmp_path / "r.txt"
    assert run("evaluate", "--fixture", "all", "--rules", "c_wb", "--lm", lm_dir / "lm.arpa",
               "--out", report, "--no-plot") == 0
    values = dict(line.split("=") for line in report.read_text().splitlines())
    assert values["pairs"] == "20"
    assert 0 <= float(values["corpus_cerr"])


def test_evaluate_prediction_count_must_match(tmp_path):
    (tmp_path / "pred.txt").write_text("one line\n", encoding="utf-8")
    assert run("evaluate", "--fixture", "newspaper1", "--predictions", tmp_path / "pred.txt") == cli.EXIT_USAGE


# perplexity and training outputs


def test_perplexity_with_ngram_and_rnn(lm_dir, rnn_model, tmp_path, capsys):
    (tmp_path / "t.txt").write_text("Aloha ʻoe\n", encoding="utf-8")
    assert run("perplexity", "--input", tmp_path / "t.txt", "--lm", lm_dir / "lm.arpa") == 0
    assert run("perplexity", "--input", tmp_path / "t.txt", "--rnn", rnn_model) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "lines=1" and lines[1].startswith("perplexity=")
    assert run("perplexity", "--input", tmp_path / "t.txt") == cli.EXIT_USAGE


def test_train_ngram_outputs(lm_dir):
    for name in ("lm.arpa", "lm.fst.txt", "syms.txt"):
        assert (lm_dir / name).stat().st_size > 0


def test_train_rnn_outputs_and_determinism(rnn_model, tmp_path):
    log_lines = rnn_model.with_suffix(".log.tsv").read_text().splitlines()
    assert log_lines[0].split("\t") == ["epoch", "loss", "valid_ppl"]
    assert len(log_lines) == 3
    assert rnn_model.with_suffix(".training.png").exists()
    again = tmp_path / "again.lstm"
    (tmp_path / "train.txt").write_text(TRAIN, encoding="utf-8")
    assert cli.run(["train-rnn", "--corpus", str(tmp_path / "train.txt"), "--valid", str(tmp_path / "train.txt"),
                    "--out", str(again), "--layers", "1", "--hidden", "8", "--batch", "2", "--lr", "1",
                    "--tbptt", "10", "--epochs", "2", "--no-plot"]) == 0
    assert again.read_bytes() == rnn_model.read_bytes()


# Config files


def test_config_file_supplies_defaults_and_flags_win(lm_dir, tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "job.cfg"
    cfg.write_text(f"# job\nlm = {lm_dir / 'lm.arpa'}\nrules = c_wb\ninsertion_penalty = 0.5\n", encoding="utf-8")
    assert run("transliterate", "--config", cfg, stdin="alaila\n", monkeypatch=monkeypatch) == 0
    from_config = capsys.readouterr().out
    assert run("transliterate", "--config", cfg, "--rules", "c", stdin="alaila\n", monkeypatch=monkeypatch) == 0
    overridden = capsys.readouterr().out
    assert " " not in overridden.strip()
    assert from_config.strip() and overridden.strip()


@pytest.mark.parametrize("body", ["no_such_key = 1\n", "rules = xyz\nmodel = neural\n", "eos = maybe\n", "oops\n"])
def test_bad_config_files(body, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(body, encoding="utf-8")
    assert run("transliterate", "--config", cfg) == cli.EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert run("transliterate", "--config", tmp_path / "none.cfg") == cli.EXIT_IO
