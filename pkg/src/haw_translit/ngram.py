"""Character n-gram language models.

Three estimators share one backoff representation: every stored context
holds explicit probabilities for the characters seen after it plus a
backoff weight routing the remaining mass to the next-shorter context.
The unigram level is always interpolated with a uniform distribution over
the vocabulary, so every character (and ``<unk>``) has non-zero mass.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .wfst import BOS_TOKEN, EOS_TOKEN, UNK, UNK_TOKEN, SymbolTable, Wfst, EPSILON
from .orthography import default_symbols

log = logging.getLogger(__name__)

SMOOTHINGS = ("katz", "kn_interpolated", "kn_backoff")
KATZ_THRESHOLD = 5
ARPA_LOG_ZERO = -99.0

Gram = tuple[str, ...]


def tokenize(line: str, syms: SymbolTable) -> list[str]:
    return [ch if ch in syms else UNK_TOKEN for ch in line]


@dataclass
class NgramCounts:
    order: int
    syms: SymbolTable
    # counts[k - 1] holds the k-grams
    counts: list[Counter] = field(default_factory=list)

    def __getitem__(self, k: int) -> Counter:
        return self.counts[k - 1]

    def total(self) -> int:
        return sum(sum(c.values()) for c in self.counts)


def count_ngrams(corpus: Iterable[str], order: int, syms: SymbolTable | None = None) -> NgramCounts:
    """Count all k-grams, k <= order, over BOS-padded, EOS-terminated lines."""
    if order < 1:
        raise ValueError("order must be >= 1")
    syms = default_symbols() if syms is None else syms
    counts = [Counter() for _ in range(order)]
    pad = [BOS_TOKEN] * (order - 1)
    for line in corpus:
        seq = pad + tokenize(line, syms) + [EOS_TOKEN]
        for i in range(order - 1, len(seq)):
            for k in range(1, order + 1):
                counts[k - 1][tuple(seq[i - k + 1:i + 1])] += 1
        # padding-only grams (all-BOS) are context material, never events
        for k in range(1, order):
            for j in range(k - 1, order - 1):
                counts[k - 1][tuple(seq[j - k + 1:j + 1])] += 1
    return NgramCounts(order, syms, counts)


def _count_of_counts(table: dict[Gram, dict[str, int]], upto: int) -> list[int]:
    n = [0] * (upto + 2)
    for followers in table.values():
        for c in followers.values():
            if c <= upto + 1:
                n[c] += 1
    return n


def _kn_discount(table, level: int) -> float:
    n = _count_of_counts(table, 2)
    if n[1] == 0 or n[2] == 0:
        log.warning("degenerate count-of-counts at order %d (n1=%d, n2=%d); using D=0.5",
                    level, n[1], n[2])
        return 0.5
    return n[1] / (n[1] + 2 * n[2])


def _katz_discounts(table, level: int, k: int = KATZ_THRESHOLD) -> dict[int, float]:
    """Good-Turing discount ratios d_r for 1 <= r <= k (empty if unusable)."""
    n = _count_of_counts(table, k)
    if any(n[r] == 0 for r in range(1, k + 2)):
        log.info("Good-Turing disabled at order %d: missing count-of-counts", level)
        return {}
    common = (k + 1) * n[k + 1] / n[1]
    if common >= 1:
        return {}
    d = {}
    for r in range(1, k + 1):
        d[r] = ((r + 1) * n[r + 1] / (r * n[r]) - common) / (1 - common)
        if not 0 < d[r] <= 1:
            log.info("Good-Turing disabled at order %d: d_%d = %.3f", level, r, d[r])
            return {}
    return d


class NgramModel:
    """Backoff-form character n-gram model.

    ``probs[h][t]`` is the explicit probability of token ``t`` after context
    ``h`` and ``backoff[h]`` its backoff weight (plain probabilities, not
    logs). Contexts are tuples of tokens; the empty context lists the whole
    vocabulary explicitly.
    """

    def __init__(self, order: int, probs: dict[Gram, dict[str, float]],
                 backoff: dict[Gram, float], syms: SymbolTable | None = None,
                 smoothing: str = "custom", vocab: list[str] | None = None):
        self.order = order
        self.probs = probs
        self.backoff = backoff
        self.syms = default_symbols() if syms is None else syms
        self.smoothing = smoothing
        self.vocab = list(vocab) if vocab is not None else prediction_vocab(self.syms)

    def __repr__(self) -> str:
        return f"NgramModel(order={self.order}, smoothing={self.smoothing!r}, contexts={len(self.probs)})"

    def contexts(self) -> list[Gram]:
        return list(self.probs)

    def prob(self, context: Iterable[str], token: str) -> float:
        h = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        scale = 1.0
        while True:
            table = self.probs.get(h)
            if table is not None:
                p = table.get(token)
                if p is not None:
                    return scale * p
                scale *= self.backoff.get(h, 1.0)
            if not h:
                return 0.0
            h = h[1:]

    def logprob(self, context: Iterable[str], token: str) -> float:
        p = self.prob(context, token)
        return math.log(p) if p > 0 else -math.inf

    def start_context(self) -> Gram:
        return (BOS_TOKEN,) * (self.order - 1)

    def next_context(self, context: Gram, token: str) -> Gram:
        if self.order == 1:
            return ()
        return (tuple(context) + (token,))[-(self.order - 1):]

    def line_logprob(self, line: str) -> tuple[float, int]:
        """Natural-log probability of a line including EOS, and the event count."""
        h = self.start_context()
        total = 0.0
        tokens = tokenize(line, self.syms) + [EOS_TOKEN]
        for tok in tokens:
            total += self.logprob(h, tok)
            h = self.next_context(h, tok)
        return total, len(tokens)

    def perplexity(self, lines: Iterable[str]) -> float:
        return perplexity(self, lines)

    def distribution_sum(self, context: Gram) -> float:
        return math.fsum(self.prob(context, t) for t in self.vocab)

    def to_wfst(self) -> Wfst:
        return to_wfst(self)

    # ARPA text

    def write_arpa(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_arpa())

    def to_arpa(self) -> str:
        by_len: dict[int, dict[Gram, list]] = defaultdict(dict)
        for h, table in self.probs.items():
            for tok, p in table.items():
                by_len[len(h) + 1][h + (tok,)] = [math.log10(p) if p > 0 else ARPA_LOG_ZERO, None]
        for h, b in self.backoff.items():
            entry = by_len[len(h)].setdefault(h, [ARPA_LOG_ZERO, None])
            entry[1] = math.log10(b) if b > 0 else ARPA_LOG_ZERO
        lines = ["\\data\\"]
        for k in range(1, self.order + 1):
            lines.append(f"ngram {k}={len(by_len.get(k, {}))}")
        lines.append("")
        for k in range(1, self.order + 1):
            lines.append(f"\\{k}-grams:")
            for gram in sorted(by_len.get(k, {})):
                lp, bo = by_len[k][gram]
                text = " ".join(_arpa_token(t) for t in gram)
                lines.append(f"{lp!r}\t{text}" + (f"\t{bo!r}" if bo is not None else ""))
            lines.append("")
        lines.append("\\end\\")
        return "\n".join(lines) + "\n"

    @classmethod
    def read_arpa(cls, path, syms: SymbolTable | None = None, smoothing: str = "arpa") -> "NgramModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_arpa(fh.read(), syms, smoothing)

    @classmethod
    def from_arpa(cls, text: str, syms: SymbolTable | None = None, smoothing: str = "arpa") -> "NgramModel":
        syms = default_symbols() if syms is None else syms
        probs: dict[Gram, dict[str, float]] = {}
        backoff: dict[Gram, float] = {}
        order = 0
        section = None
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("\\"):
                if line == "\\data\\" or line == "\\end\\":
                    section = "data" if line == "\\data\\" else None
                elif line.endswith("-grams:"):
                    section = int(line[1:-len("-grams:")])
                    order = max(order, section)
                else:
                    raise ValueError(f"ARPA line {lineno}: unknown section {line!r}")
                continue
            if section == "data":
                if not line.startswith("ngram "):
                    raise ValueError(f"ARPA line {lineno}: bad header {line!r}")
                order = max(order, int(line.split("=")[0].split()[1]))
                continue
            if not isinstance(section, int):
                raise ValueError(f"ARPA line {lineno}: entry outside an n-gram section")
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise ValueError(f"ARPA line {lineno}: expected logprob<TAB>gram[<TAB>backoff]")
            gram = tuple(_arpa_untoken(t) for t in fields[1].split(" "))
            if len(gram) != section:
                raise ValueError(f"ARPA line {lineno}: {len(gram)}-gram in {section}-gram section")
            for tok in gram:
                if tok not in (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN) and tok not in syms:
                    raise ValueError(f"ARPA line {lineno}: symbol {tok!r} not in symbol table")
            lp = float(fields[0])
            if lp > ARPA_LOG_ZERO:
                probs.setdefault(gram[:-1], {})[gram[-1]] = 10.0 ** lp
            if len(fields) == 3:
                bo = float(fields[2])
                backoff[gram] = 10.0 ** bo if bo > ARPA_LOG_ZERO else 0.0
        probs.setdefault((), {})
        for h in backoff:
            probs.setdefault(h, {})
        return cls(order, probs, backoff, syms, smoothing)


def _arpa_token(tok: str) -> str:
    return "<space>" if tok == " " else tok


def _arpa_untoken(tok: str) -> str:
    return " " if tok == "<space>" else tok


def prediction_vocab(syms: SymbolTable) -> list[str]:
    """Every predictable token: characters, ``</s>`` and ``<unk>``."""
    return [EOS_TOKEN, UNK_TOKEN] + syms.symbols()[UNK + 1:]


def _level_tables(counts: NgramCounts, continuation: bool) -> dict[int, dict[Gram, dict[str, int]]]:
    """Per-level follower counts, dropping events that predict BOS.

    With ``continuation`` set, levels below the top use the number of
    distinct left extensions, except for grams that begin with BOS (which
    cannot be extended) where the raw count is kept.
    """
    n = counts.order
    tables: dict[int, dict[Gram, dict[str, int]]] = {}
    for k in range(1, n + 1):
        if continuation and k < n:
            cc: Counter = Counter()
            for gram in counts[k + 1]:
                cc[gram[1:]] += 1
            source = {g: (c if g[0] == BOS_TOKEN else cc[g]) for g, c in counts[k].items()}
        else:
            source = counts[k]
        table: dict[Gram, dict[str, int]] = defaultdict(dict)
        for gram, c in source.items():
            if gram[-1] == BOS_TOKEN or c <= 0:
                continue
            table[gram[:-1]][gram[-1]] = c
        tables[k] = dict(table)
    return tables


def estimate(counts: NgramCounts, smoothing: str = "kn_interpolated") -> NgramModel:
    if smoothing not in SMOOTHINGS:
        raise ValueError(f"unknown smoothing {smoothing!r}; choose from {SMOOTHINGS}")
    tables = _level_tables(counts, continuation=smoothing != "katz")
    vocab = prediction_vocab(counts.syms)
    uniform = 1.0 / len(vocab)
    probs: dict[Gram, dict[str, float]] = {}
    backoff: dict[Gram, float] = {}
    leftover: dict[Gram, float] = {}

    for level in range(1, counts.order + 1):
        table = tables.get(level, {})
        if smoothing == "katz":
            gt = _katz_discounts(table, level)
        else:
            disc = _kn_discount(table, level) if table else 0.5
        for h, followers in sorted(table.items()):
            total = sum(followers.values())
            if smoothing == "katz":
                explicit = {t: gt.get(c, 1.0) * c / total for t, c in followers.items()}
                mass = math.fsum((1.0 - gt.get(c, 1.0)) * c for c in followers.values()) / total
                if mass < 0.5 / total:
                    # Keep a half count in reserve so unseen events stay possible.
                    scale = (1.0 - 0.5 / total) / (1.0 - mass)
                    explicit = {t: p * scale for t, p in explicit.items()}
                    mass = 0.5 / total
            else:
                explicit = {t: max(c - disc, 0.0) / total for t, c in followers.items()}
                mass = disc * len(followers) / total
            if level == 1:
                probs[h] = {t: explicit.get(t, 0.0) + mass * uniform for t in vocab}
                leftover[h] = 0.0
                continue
            lower = h[1:]
            if smoothing == "kn_interpolated":
                probs[h] = {t: p + mass * _prob(probs, backoff, lower, t) for t, p in explicit.items()}
                backoff[h] = mass
            else:
                probs[h] = explicit
                unseen = _unseen_mass(probs, leftover, lower, followers)
                backoff[h] = mass / unseen if unseen > 0 else 0.0
            leftover[h] = mass
    if () not in probs:
        probs[()] = {t: uniform for t in vocab}
    return NgramModel(counts.order, probs, backoff, counts.syms, smoothing, vocab)


def _prob(probs, backoff, h: Gram, token: str) -> float:
    scale = 1.0
    while True:
        table = probs.get(h)
        if table is not None:
            p = table.get(token)
            if p is not None:
                return scale * p
            scale *= backoff.get(h, 1.0)
        if not h:
            return 0.0
        h = h[1:]


def _unseen_mass(probs, leftover, h: Gram, seen: dict) -> float:
    """Mass that context ``h`` gives to tokens outside ``seen``.

    Summed from positive terms (explicit tokens of ``h`` not in ``seen``
    plus the leftover of ``h``) rather than as ``1 - sum(seen)``, which
    cancels badly when the seen set carries almost all the mass.
    """
    table = probs[h]
    return math.fsum([p for t, p in table.items() if t not in seen] + [leftover.get(h, 0.0)])


def perplexity(model: NgramModel, lines: Iterable[str]) -> float:
    """exp of the mean negative log probability per predicted token (EOS included)."""
    total = 0.0
    events = 0
    for line in lines:
        lp, n = model.line_logprob(line)
        if lp == -math.inf:
            raise ValueError(f"zero-probability event in line {line!r}")
        total += lp
        events += n
    if events == 0:
        raise ValueError("no events to score")
    return math.exp(-total / events)


def to_wfst(model: NgramModel) -> Wfst:
    """Compile to a weighted acceptor with epsilon backoff arcs.

    One state per stored context. Character arcs carry ``-ln p(c|h)`` to the
    longest stored suffix of the extended history; backoff arcs carry
    ``-ln backoff(h)``; the final weight of ``h`` is ``-ln p(</s>|h)``, or
    zero for models whose vocabulary has no end-of-sentence event. Backoff
    weights above one give negative arc weights; the compiled graph has no
    cycles without a character arc, so shortest paths remain well defined.
    """
    syms = model.syms
    fst = Wfst(syms)
    contexts = sorted(model.probs, key=lambda h: (len(h), h))
    state = {h: fst.add_state() for h in contexts}

    def stored_suffix(h: Gram) -> Gram:
        while h not in state:
            h = h[1:]
        return h

    def label(tok: str) -> int:
        return UNK if tok == UNK_TOKEN else syms.find(tok)

    fst.set_start(state[stored_suffix(model.start_context())])
    has_eos = EOS_TOKEN in model.vocab
    for h in contexts:
        src = state[h]
        for tok, p in sorted(model.probs[h].items()):
            if tok == EOS_TOKEN or p <= 0:
                continue
            lab = label(tok)
            dst = state[stored_suffix(model.next_context(h, tok))]
            fst.add_arc(src, lab, lab, -math.log(p), dst)
        if h:
            b = model.backoff.get(h, 1.0)
            if b > 0:
                fst.add_arc(src, EPSILON, EPSILON, -math.log(b), state[stored_suffix(h[1:])])
        if has_eos:
            p_end = model.prob(h, EOS_TOKEN)
            if p_end > 0:
                fst.set_final(src, -math.log(p_end))
        else:
            fst.set_final(src, 0.0)
    return fst
