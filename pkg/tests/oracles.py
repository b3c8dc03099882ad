"""Brute-force reference implementations used as test oracles.

Nothing here calls the algorithms under test; each oracle enumerates
or recurses directly over the definitions.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from functools import lru_cache

import numpy as np

from haw_translit.wfst import EPSILON, SymbolTable, Wfst

# Arc weights are multiples of 0.25 in [MIN_WEIGHT, 3], so float sums are
# exact and any path costing at most COST_BOUND has at most
# COST_BOUND / MIN_WEIGHT = 8 arcs.
MIN_WEIGHT = 0.75
COST_BOUND = 6.0
MAX_ARCS = 8


def small_symbols(n: int = 3) -> SymbolTable:
    return SymbolTable("abcdefgh"[:n])


def random_wfst(rng: random.Random, syms: SymbolTable, max_states: int = 4,
                max_arcs_per_state: int = 3, eps_prob: float = 0.25,
                acceptor: bool = False) -> Wfst:
    """Random (possibly cyclic) transducer with 0.25-grid weights >= MIN_WEIGHT."""
    n = rng.randint(1, max_states)
    labels = list(range(4, len(syms)))
    fst = Wfst(syms)
    for _ in range(n):
        fst.add_state()
    fst.set_start(0)

    def label():
        return EPSILON if rng.random() < eps_prob else rng.choice(labels)

    for s in range(n):
        for _ in range(rng.randint(0, max_arcs_per_state)):
            i = label()
            o = i if acceptor else label()
            if acceptor and i == EPSILON:
                continue
            w = rng.randint(int(MIN_WEIGHT * 4), 12) / 4
            fst.add_arc(s, i, o, w, rng.randrange(n))
        if rng.random() < 0.5 or s == n - 1:
            fst.set_final(s, rng.randint(0, 4) / 4)
    return fst


def enumerate_paths(fst: Wfst, max_arcs: int = MAX_ARCS):
    """Every accepting path with at most ``max_arcs`` arcs.

    Yields (input string, output string, cost) with epsilons dropped.
    """
    if fst.start < 0:
        return
    stack = [(fst.start, (), (), 0.0, 0)]
    while stack:
        s, ins, outs, cost, depth = stack.pop()
        if fst.is_final(s):
            yield ins, outs, cost + fst.final(s)
        if depth == max_arcs:
            continue
        for arc in fst.arcs(s):
            stack.append((arc.nextstate,
                          ins + ((arc.ilabel,) if arc.ilabel else ()),
                          outs + ((arc.olabel,) if arc.olabel else ()),
                          cost + arc.weight, depth + 1))


def relation(fst: Wfst, bound: float = COST_BOUND, max_arcs: int = MAX_ARCS) -> dict:
    """(input, output) -> min cost over enumerated paths costing <= bound."""
    best: dict = {}
    for i, o, c in enumerate_paths(fst, max_arcs):
        if c <= bound and c < best.get((i, o), math.inf):
            best[(i, o)] = c
    return best


def joined_relation(a: Wfst, b: Wfst, bound: float = COST_BOUND, max_arcs: int = MAX_ARCS) -> dict:
    """Composition by definition: join a's outputs against b's inputs."""
    by_middle = defaultdict(list)
    for (i, o), c in relation(b, bound, max_arcs).items():
        by_middle[i].append((o, c))
    best: dict = {}
    for (i, m), ca in relation(a, bound, max_arcs).items():
        for o, cb in by_middle.get(m, ()):
            c = ca + cb
            if c <= bound and c < best.get((i, o), math.inf):
                best[(i, o)] = c
    return best


def path_multiset(fst: Wfst, bound: float = COST_BOUND) -> dict:
    """(input, output, cost) -> number of accepting paths costing <= bound."""
    counts: dict = defaultdict(int)
    for i, o, c in enumerate_paths(fst, MAX_ARCS):
        if c <= bound:
            counts[(i, o, c)] += 1
    return dict(counts)


def joined_multiset(a: Wfst, b: Wfst, bound: float = COST_BOUND) -> dict:
    """Count pairs of component paths whose middle strings agree."""
    counts: dict = defaultdict(int)
    b_paths = defaultdict(list)
    for i, o, c in enumerate_paths(b, MAX_ARCS):
        b_paths[i].append((o, c))
    for i, m, ca in enumerate_paths(a, MAX_ARCS):
        for o, cb in b_paths.get(m, ()):
            if ca + cb <= bound:
                counts[(i, o, ca + cb)] += 1
    return dict(counts)


def edit_distance(a: str, b: str) -> int:
    """Textbook recursive Levenshtein distance, memoised."""

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def label_paths(fst: Wfst, max_arcs: int = 64):
    """Accepting paths as lists of (olabel, weight) plus the final weight."""
    out = []
    stack = [(fst.start, [], 0)]
    while stack:
        s, arcs, depth = stack.pop()
        if fst.is_final(s):
            out.append((list(arcs), fst.final(s)))
        if depth == max_arcs:
            continue
        for arc in fst.arcs(s):
            stack.append((arc.nextstate, arcs + [(arc.olabel, arc.weight)], depth + 1))
    return out


def lstm_reference_step(params, h, c, symbol):
    """Plain per-layer LSTM step written from the gate equations."""

    def sigmoid(x):
        return 1.0 / (1.0 + np.exp(-x))

    H = params.config.hidden
    x = params.embed[symbol]
    new_h, new_c = [], []
    for k in range(params.config.layers):
        z = x @ params.W[k] + h[k] @ params.U[k] + params.b[k]
        i, f, g, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sigmoid(z[3 * H:])
        ck = f * c[k] + i * g
        hk = o * np.tanh(ck)
        new_h.append(hk)
        new_c.append(ck)
        x = hk
    logits = x @ params.out_W + params.out_b
    logits = logits - logits.max()
    return new_h, new_c, logits - np.log(np.exp(logits).sum())


def random_dag(rng: random.Random, syms: SymbolTable, n_states: int = 5,
               max_out: int = 3, eps_prob: float = 0.3) -> Wfst:
    """Random acyclic transducer (arcs only go to higher-numbered states).

    Weights are arbitrary non-negative floats; the last state is always final.
    """
    labels = list(range(4, len(syms)))
    fst = Wfst(syms)
    for _ in range(n_states):
        fst.add_state()
    fst.set_start(0)
    for s in range(n_states - 1):
        for _ in range(rng.randint(1, max_out)):
            o = EPSILON if rng.random() < eps_prob else rng.choice(labels)
            fst.add_arc(s, rng.choice(labels), o, rng.uniform(0, 2), rng.randint(s + 1, n_states - 1))
        if rng.random() < 0.2:
            fst.set_final(s, rng.uniform(0, 1))
    fst.set_final(n_states - 1, rng.uniform(0, 1))
    return fst
