"""Decoding missionary text into modern orthography.

``decode_fst`` takes the exact best path through input ∘ rules ∘ G.
``decode_hybrid`` searches input ∘ rules with a beam, scoring each emitted
character with a neural (or any stepwise) language model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol, Sequence

import numpy as np

from . import rnnlm
from .ngram import NgramModel
from .wfst import EOS, EOS_TOKEN, EPSILON, UNK, UNK_TOKEN, SymbolTable, Wfst, chain_acceptor, compose, shortest_path, trim


class DecodeError(RuntimeError):
    pass


def render(syms: SymbolTable, labels: Sequence[int], text: str) -> str:
    """Output labels as text, restoring the input's unknown characters in order."""
    unknown = iter(ch for ch in text if ch not in syms)
    out = []
    for lab in labels:
        if lab == EPSILON:
            continue
        if lab == UNK:
            out.append(next(unknown, "�"))
        else:
            out.append(syms.find(lab))
    return "".join(out)


def search_graph(text: str, rules: Wfst, lm: Wfst | None = None) -> Wfst:
    graph = compose(chain_acceptor(text, rules.isyms), rules)
    if lm is not None:
        graph = compose(graph, lm)
    return trim(graph)


def decode_fst(text: str, rules: Wfst, lm: Wfst) -> tuple[str, float]:
    """Best path through ``chain(text) ∘ rules ∘ lm``; cost includes G's final weight."""
    graph = search_graph(text, rules, lm)
    if graph.is_empty():
        raise DecodeError("empty search graph")
    _, olabels, cost = shortest_path(graph)
    return render(rules.osyms, olabels, text), cost


class StepScorer(Protocol):
    """Stepwise language model used by the beam search."""

    def initial(self) -> tuple[Any, np.ndarray]:
        """State after BOS and its log-distribution over symbol ids."""

    def advance(self, states: list, symbols: list[int]) -> list[tuple[Any, np.ndarray]]:
        """Feed one symbol to each state."""


class LstmScorer:
    def __init__(self, params: rnnlm.LstmParams):
        self.params = params

    def initial(self):
        return rnnlm.initial(self.params)

    def advance(self, states, symbols):
        if not states:
            return []
        batch = rnnlm.RnnState(
            tuple(np.stack([s.h[k] for s in states]) for k in range(self.params.config.layers)),
            tuple(np.stack([s.c[k] for s in states]) for k in range(self.params.config.layers)),
        )
        new, logp = rnnlm.step_batch(self.params, batch, np.asarray(symbols))
        return [
            (rnnlm.RnnState(tuple(h[j] for h in new.h), tuple(c[j] for c in new.c)), logp[j])
            for j in range(len(states))
        ]


class NgramScorer:
    """Exact backoff n-gram probabilities exposed through the stepwise API."""

    def __init__(self, model: NgramModel):
        self.model = model
        self.syms = model.syms
        self._cache: dict[tuple, np.ndarray] = {}

    def _dist(self, h):
        dist = self._cache.get(h)
        if dist is None:
            dist = np.full(len(self.syms), -np.inf)
            dist[EOS] = self.model.logprob(h, EOS_TOKEN)
            dist[UNK] = self.model.logprob(h, UNK_TOKEN)
            for i in range(UNK + 1, len(self.syms)):
                dist[i] = self.model.logprob(h, self.syms.find(i))
            self._cache[h] = dist
        return dist

    def initial(self):
        h = self.model.start_context()
        return h, self._dist(h)

    def advance(self, states, symbols):
        out = []
        for h, sym in zip(states, symbols):
            tok = UNK_TOKEN if sym == UNK else self.syms.find(sym)
            nh = self.model.next_context(h, tok)
            out.append((nh, self._dist(nh)))
        return out


@dataclass(frozen=True)
class BeamConfig:
    width: int = 64
    eos_scoring: bool = False
    max_iterations: int | None = None

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("beam width must be >= 1")


@dataclass
class BeamElement:
    fst_state: int
    rnn_state: Any
    tokens: tuple[int, ...]
    score: float
    logp: np.ndarray  # predictive distribution at rnn_state

    def key(self):
        return (self.score, self.tokens, self.fst_state)


def _as_scorer(lm) -> StepScorer:
    if isinstance(lm, rnnlm.LstmParams):
        return LstmScorer(lm)
    if isinstance(lm, NgramModel):
        return NgramScorer(lm)
    return lm


def beam_search(graph: Wfst, lm, beam: BeamConfig = BeamConfig(),
                trace: list | None = None) -> BeamElement:
    """Approximate best path through ``graph`` composed with ``lm``.

    Each iteration expands every non-final element along every arc. A
    non-epsilon output ``c`` costs the arc weight plus ``-log p(c | prefix)``
    from the element's current predictive distribution, after which the
    LM state advances on ``c``. Landing in a final state adds its final
    weight, and with ``eos_scoring`` also ``-log p(EOS | tokens)``. Children
    and the carried-over final elements are merged by (fst state, tokens)
    keeping the cheaper one, and the ``width`` best by (score, tokens,
    state) survive.

    ``trace``, if given, receives the surviving keys of every iteration.
    """
    if graph.is_empty():
        raise DecodeError("empty search graph")
    scorer = _as_scorer(lm)
    limit = beam.max_iterations or graph.num_states + 1
    state0, logp0 = scorer.initial()
    first = BeamElement(graph.start, state0, (), 0.0, logp0)
    if graph.is_final(graph.start):
        first.score = graph.final(graph.start) - (float(logp0[EOS]) if beam.eos_scoring else 0.0)
    elements = [first]
    iteration = 0
    while any(not graph.is_final(b.fst_state) for b in elements):
        iteration += 1
        if iteration > limit:
            raise DecodeError("non-consuming cycle: iteration limit exceeded")
        children = []
        for b in elements:
            if graph.is_final(b.fst_state):
                continue
            for arc in graph.arcs(b.fst_state):
                score = b.score + arc.weight
                tokens = b.tokens
                if arc.olabel != EPSILON:
                    score -= float(b.logp[arc.olabel])
                    tokens = tokens + (arc.olabel,)
                if graph.is_final(arc.nextstate):
                    score += graph.final(arc.nextstate)
                children.append(_Child(arc.nextstate, tokens, score, b, arc.olabel))
        if beam.eos_scoring:
            landed = [ch for ch in children if graph.is_final(ch.state)]
            _advance(scorer, landed)
            for ch in landed:
                ch.score -= float(ch.lm[1][EOS])

        merged: dict[tuple[int, tuple[int, ...]], _Child] = {}
        for b in elements:
            if graph.is_final(b.fst_state):
                merged[(b.fst_state, b.tokens)] = _Child(b.fst_state, b.tokens, b.score, b, EPSILON,
                                                         (b.rnn_state, b.logp))
        for ch in children:
            cur = merged.get((ch.state, ch.tokens))
            if cur is None or ch.score < cur.score:
                merged[(ch.state, ch.tokens)] = ch
        kept = sorted(merged.values(), key=_Child.key)[:beam.width]
        _advance(scorer, kept)
        elements = [BeamElement(ch.state, ch.lm[0], ch.tokens, ch.score, ch.lm[1]) for ch in kept]
        if trace is not None:
            trace.append([b.key() for b in elements])
    return min(elements, key=BeamElement.key)


class _Child:
    __slots__ = ("state", "tokens", "score", "parent", "label", "lm")

    def __init__(self, state, tokens, score, parent, label, lm=None):
        self.state = state
        self.tokens = tokens
        self.score = score
        self.parent = parent
        self.label = label
        self.lm = lm
        if lm is None and label == EPSILON:
            self.lm = (parent.rnn_state, parent.logp)

    def key(self):
        return (self.score, self.tokens, self.state)


def _advance(scorer, children) -> None:
    """Fill in the LM state of children that emitted a symbol (one batch)."""
    todo = [ch for ch in children if ch.lm is None]
    results = scorer.advance([ch.parent.rnn_state for ch in todo], [ch.label for ch in todo])
    for ch, res in zip(todo, results):
        ch.lm = res


def decode_hybrid(text: str, rules: Wfst, lm, beam: BeamConfig = BeamConfig()) -> tuple[str, float]:
    """Beam-search decode of ``chain(text) ∘ rules`` under a stepwise LM."""
    graph = search_graph(text, rules)
    if graph.is_empty():
        raise DecodeError("empty search graph")
    best = beam_search(graph, lm, beam)
    return render(rules.osyms, best.tokens, text), best.score


def rescore(arcs: Sequence[tuple[int, float]], final_weight: float, lm,
            eos_scoring: bool = False) -> float:
    """Cost of one path, given as ``(olabel, weight)`` arcs, scored from scratch."""
    scorer = _as_scorer(lm)
    state, logp = scorer.initial()
    total = 0.0
    for olabel, weight in arcs:
        total += weight
        if olabel != EPSILON:
            total -= float(logp[olabel])
            ((state, logp),) = scorer.advance([state], [olabel])
    total += final_weight
    if eos_scoring:
        total -= float(logp[EOS])
    return total
