"""Edit distance, CERR, synthetic parallel corpora and bundled fixtures."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .orthography import backward_map, normalize

log = logging.getLogger(__name__)

FIXTURES = ("newspaper1", "newspaper2")


@dataclass(frozen=True)
class ParallelPair:
    input: str
    truth: str
    prediction: str | None = None

    def __post_init__(self):
        if not self.truth:
            raise ValueError("ground truth must be non-empty")

    def with_prediction(self, prediction: str) -> "ParallelPair":
        return ParallelPair(self.input, self.truth, prediction)


class AlreadyModernError(ValueError):
    """Input and truth are identical, so CERR is undefined."""


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cerr(pair: ParallelPair) -> float:
    """d(prediction, truth) / d(input, truth)."""
    if pair.prediction is None:
        raise ValueError("pair has no prediction")
    denom = levenshtein(pair.input, pair.truth)
    if denom == 0:
        raise AlreadyModernError("already modern: input equals ground truth")
    return levenshtein(pair.prediction, pair.truth) / denom


@dataclass
class CerrReport:
    pairs: int
    scored: int
    excluded: int
    prediction_distance: int
    input_distance: int
    per_pair: list[float | None]

    @property
    def corpus_cerr(self) -> float:
        if self.input_distance == 0:
            return float("nan")
        return self.prediction_distance / self.input_distance

    @property
    def mean_pair_cerr(self) -> float:
        vals = [v for v in self.per_pair if v is not None]
        return sum(vals) / len(vals) if vals else float("nan")

    def lines(self) -> list[str]:
        return [
            f"pairs={self.pairs}",
            f"scored_pairs={self.scored}",
            f"excluded_already_modern={self.excluded}",
            f"prediction_distance={self.prediction_distance}",
            f"input_distance={self.input_distance}",
            f"corpus_cerr={self.corpus_cerr:.6f}",
            f"mean_pair_cerr={self.mean_pair_cerr:.6f}",
        ]

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def corpus_cerr(pairs: Iterable[ParallelPair]) -> CerrReport:
    """Micro-averaged CERR: summed prediction distances over summed input distances.

    Pairs whose input already equals the truth are left out and counted.
    """
    pairs = list(pairs)
    pred_total = input_total = excluded = 0
    per_pair: list[float | None] = []
    for pair in pairs:
        if pair.prediction is None:
            raise ValueError("every pair needs a prediction")
        denom = levenshtein(pair.input, pair.truth)
        if denom == 0:
            excluded += 1
            per_pair.append(None)
            continue
        num = levenshtein(pair.prediction, pair.truth)
        pred_total += num
        input_total += denom
        per_pair.append(num / denom)
    if excluded:
        log.info("excluded %d already-modern pairs", excluded)
    return CerrReport(len(pairs), len(pairs) - excluded, excluded, pred_total, input_total, per_pair)


def make_synthetic(lines: Iterable[str]) -> list[ParallelPair]:
    """Pair each modern line with its missionary reduction (no word splitting)."""
    return [ParallelPair(backward_map(line), line) for line in lines if line]


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    valid: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.valid, self.test)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("split fractions must be non-negative and sum to 1")


def split_lines(lines: Sequence[str], spec: SplitSpec = SplitSpec()) -> tuple[list[str], list[str], list[str]]:
    """Seeded line-level split; each part keeps the original line order."""
    idx = list(range(len(lines)))
    random.Random(spec.seed).shuffle(idx)
    n_train = round(spec.train * len(lines))
    n_valid = round(spec.valid * len(lines))
    parts = (idx[:n_train], idx[n_train:n_train + n_valid], idx[n_train + n_valid:])
    return tuple([lines[i] for i in sorted(part)] for part in parts)


# Parallel corpus files: input<TAB>truth[<TAB>prediction]


def parse_pairs(text: str) -> list[ParallelPair]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise ValueError(f"pair line {lineno}: expected 2 or 3 tab-separated fields")
        fields = [normalize(f) for f in fields]
        pairs.append(ParallelPair(fields[0], fields[1], fields[2] if len(fields) == 3 else None))
    return pairs


def read_pairs(path) -> list[ParallelPair]:
    with open(path, encoding="utf-8") as fh:
        return parse_pairs(fh.read())


def format_pairs(pairs: Iterable[ParallelPair]) -> str:
    out = []
    for p in pairs:
        fields = [p.input, p.truth] + ([p.prediction] if p.prediction is not None else [])
        if any("\t" in f or "\n" in f for f in fields):
            raise ValueError("pair fields may not contain tabs or newlines")
        out.append("\t".join(fields))
    return "\n".join(out) + ("\n" if out else "")


def write_pairs(path, pairs: Iterable[ParallelPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_pairs(pairs))


# Fixtures transcribed with TeX macron escapes and backtick ʻokina.

_TEX_MACRON = re.compile(r"\\=\{?(\\i\{\}|\\i|[A-Za-z])\}?")


def detex(text: str) -> str:
    def sub(m):
        base = m.group(1)
        base = "i" if base.startswith("\\i") else base
        return normalize(base + "\u0304")

    return normalize(_TEX_MACRON.sub(sub, text))


def fixture_path(name: str):
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return resources.files("haw_translit") / "data" / "fixtures" / f"{name}.tsv"


def load_fixture(name: str) -> list[ParallelPair]:
    path = fixture_path(name)
    try:
        raw = path.read_text(encoding="utf-8")
    except (FileNotFoundError, UnicodeDecodeError) as exc:
        raise ValueError(f"fixture {name} missing or unreadable: {exc}") from None
    pairs = []
    for lineno, line in enumerate(raw.splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ValueError(f"fixture {name} line {lineno} is corrupt")
        pairs.append(ParallelPair(normalize(fields[0]), detex(fields[1])))
    if not pairs:
        raise ValueError(f"fixture {name} is empty")
    return pairs


def sample_corpus_path():
    return resources.files("haw_translit") / "data" / "corpus" / "modern_sample.txt"


def load_sample_corpus() -> list[str]:
    text = sample_corpus_path().read_text(encoding="utf-8")
    return [normalize(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]
