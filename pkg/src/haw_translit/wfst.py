"""Weighted finite-state transducers over the tropical semiring.

Weights are costs (negative log probabilities): ``plus`` is ``min``,
``times`` is ``+``, the semiring one is ``0.0`` and the zero is ``inf``.
Only the handful of operations needed for decoding live here: chain
acceptors, composition with an epsilon-sequencing filter, trimming and
single-best shortest path.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from typing import Iterable, Iterator, NamedTuple, Sequence

EPSILON = 0
BOS = 1
EOS = 2
UNK = 3

EPS_TOKEN = "<eps>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
RESERVED = (EPS_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

ZERO = math.inf
ONE = 0.0


def plus(a: float, b: float) -> float:
    return a if a <= b else b


def times(a: float, b: float) -> float:
    return a + b


class SymbolTable:
    """Dense bijection between integer ids and symbols.

    Ids 0-3 are reserved for epsilon, BOS, EOS and UNK. Every other symbol
    is a single Unicode character.
    """

    def __init__(self, symbols: Iterable[str] = ()):
        self._symbols: list[str] = list(RESERVED)
        self._ids: dict[str, int] = {s: i for i, s in enumerate(RESERVED)}
        for sym in symbols:
            self.add(sym)

    def add(self, symbol: str) -> int:
        if symbol in self._ids:
            return self._ids[symbol]
        if len(symbol) != 1:
            raise ValueError(f"symbols must be single characters, got {symbol!r}")
        self._ids[symbol] = len(self._symbols)
        self._symbols.append(symbol)
        return self._ids[symbol]

    def __len__(self) -> int:
        return len(self._symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._ids

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymbolTable):
            return NotImplemented
        return self._symbols == other._symbols

    def __hash__(self) -> int:
        return hash(tuple(self._symbols))

    def __repr__(self) -> str:
        return f"SymbolTable({len(self)} symbols)"

    def find(self, key):
        """Id for a symbol, or symbol for an id (KeyError/IndexError if absent)."""
        if isinstance(key, str):
            return self._ids[key]
        return self._symbols[key]

    def id_of(self, char: str) -> int:
        """Id for ``char``, with unknown characters mapped to UNK."""
        return self._ids.get(char, UNK)

    def encode(self, text: str) -> list[int]:
        return [self._ids.get(ch, UNK) for ch in text]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if i == EPSILON:
                continue
            if i < len(RESERVED):
                raise ValueError(f"reserved symbol {RESERVED[i]} has no text form")
            out.append(self._symbols[i])
        return "".join(out)

    def symbols(self) -> list[str]:
        return list(self._symbols)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def to_text(self) -> str:
        return "".join(f"{_escape(s)}\t{i}\n" for i, s in enumerate(self._symbols))

    @classmethod
    def from_text(cls, text: str) -> "SymbolTable":
        table = cls()
        entries = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            try:
                sym, idx = line.rsplit("\t", 1)
                entries.append((int(idx), _unescape(sym)))
            except ValueError:
                raise ValueError(f"bad symbol table line {lineno}: {line!r}") from None
        entries.sort()
        for expect, (idx, sym) in enumerate(entries):
            if idx != expect:
                raise ValueError(f"symbol ids are not dense at {idx}")
            if idx < len(RESERVED):
                if sym != RESERVED[idx]:
                    raise ValueError(f"reserved id {idx} must be {RESERVED[idx]}")
                continue
            table.add(sym)
        return table

    @classmethod
    def read(cls, path) -> "SymbolTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# The AT&T text format is whitespace-delimited, so a literal space or tab
# symbol needs a name.
_ESCAPES = {" ": "<space>", "\t": "<tab>"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


def _escape(sym: str) -> str:
    return _ESCAPES.get(sym, sym)


def _unescape(tok: str) -> str:
    return _UNESCAPES.get(tok, tok)


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    nextstate: int


class Wfst:
    """Mutable-while-building FST with a single start state.

    Algorithms never modify their inputs, so a finished FST can be shared.
    """

    def __init__(self, isyms: SymbolTable, osyms: SymbolTable | None = None):
        self.isyms = isyms
        self.osyms = isyms if osyms is None else osyms
        self._arcs: list[list[Arc]] = []
        self.finals: dict[int, float] = {}
        self.start: int = -1
        self._index = None

    def add_state(self) -> int:
        self._arcs.append([])
        return len(self._arcs) - 1

    def add_arc(self, src: int, ilabel: int, olabel: int, weight: float, dst: int) -> None:
        if not (0 <= dst < len(self._arcs)):
            raise IndexError(f"arc target {dst} is not a state")
        self._arcs[src].append(Arc(ilabel, olabel, float(weight), dst))
        self._index = None

    def set_start(self, state: int) -> None:
        if not (0 <= state < len(self._arcs)):
            raise IndexError(f"start {state} is not a state")
        self.start = state

    def set_final(self, state: int, weight: float = ONE) -> None:
        if weight == ZERO:
            self.finals.pop(state, None)
        else:
            self.finals[state] = float(weight)

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, state: int) -> list[Arc]:
        return self._arcs[state]

    def final(self, state: int) -> float:
        return self.finals.get(state, ZERO)

    def is_final(self, state: int) -> bool:
        return state in self.finals

    def input_index(self) -> list[dict[int, list[Arc]]]:
        """Per-state arcs grouped by input label (cached)."""
        if self._index is None:
            index = []
            for arcs in self._arcs:
                by_label: dict[int, list[Arc]] = {}
                for arc in arcs:
                    by_label.setdefault(arc.ilabel, []).append(arc)
                index.append(by_label)
            self._index = index
        return self._index

    def copy(self) -> "Wfst":
        out = Wfst(self.isyms, self.osyms)
        out._arcs = [list(a) for a in self._arcs]
        out.finals = dict(self.finals)
        out.start = self.start
        return out

    def is_empty(self) -> bool:
        return self.start < 0 or not self.finals

    def __repr__(self) -> str:
        return f"Wfst({self.num_states} states, {self.num_arcs()} arcs)"

    # AT&T text serialisation

    def to_text(self) -> str:
        """AT&T text; the first line's source state is the start state.

        A start state with no arcs and no final weight cannot be written that
        way; such a machine accepts nothing and is written as empty text.
        """
        if self.start >= 0 and not self._arcs[self.start] and self.start not in self.finals:
            return ""
        lines = []
        order = [self.start] + [s for s in self.states() if s != self.start] if self.start >= 0 else []
        for s in order:
            for arc in self._arcs[s]:
                ilab = _escape(self.isyms.find(arc.ilabel))
                olab = _escape(self.osyms.find(arc.olabel))
                lines.append(f"{s}\t{arc.nextstate}\t{ilab}\t{olab}\t{arc.weight!r}")
            if s in self.finals:
                lines.append(f"{s}\t{self.finals[s]!r}")
        return "\n".join(lines) + ("\n" if lines else "")

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, isyms: SymbolTable, osyms: SymbolTable | None = None) -> "Wfst":
        fst = cls(isyms, osyms)
        first = True
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            fields = line.split("\t")
            try:
                src = int(fields[0])
                while fst.num_states <= src:
                    fst.add_state()
                if first:
                    fst.set_start(src)
                    first = False
                if len(fields) in (1, 2):
                    fst.set_final(src, float(fields[1]) if len(fields) == 2 else ONE)
                elif len(fields) in (4, 5):
                    dst = int(fields[1])
                    while fst.num_states <= dst:
                        fst.add_state()
                    ilab = fst.isyms.find(_unescape(fields[2]))
                    olab = fst.osyms.find(_unescape(fields[3]))
                    weight = float(fields[4]) if len(fields) == 5 else ONE
                    fst.add_arc(src, ilab, olab, weight, dst)
                else:
                    raise ValueError("wrong field count")
            except (ValueError, KeyError) as exc:
                raise ValueError(f"bad FST line {lineno}: {line!r} ({exc})") from None
        return fst

    @classmethod
    def read(cls, path, isyms: SymbolTable, osyms: SymbolTable | None = None) -> "Wfst":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), isyms, osyms)


def chain_acceptor(text: str | Sequence[int], syms: SymbolTable) -> Wfst:
    """Linear acceptor for exactly ``text``; unknown characters become UNK."""
    labels = syms.encode(text) if isinstance(text, str) else list(text)
    fst = Wfst(syms)
    prev = fst.add_state()
    fst.set_start(prev)
    for label in labels:
        nxt = fst.add_state()
        fst.add_arc(prev, label, label, ONE, nxt)
        prev = nxt
    fst.set_final(prev, ONE)
    return fst


def compose(a: Wfst, b: Wfst) -> Wfst:
    """Composition restricted to states reachable from the start.

    Epsilons are handled with a two-state sequencing filter: after ``b``
    moves alone on an input epsilon, ``a`` may not move alone on an output
    epsilon until a matching move happens. Each pair of component paths is
    therefore realised by exactly one composed path.
    """
    if a.osyms != b.isyms:
        raise ValueError("symbol table mismatch: a.osyms != b.isyms")
    c = Wfst(a.isyms, b.osyms)
    if a.start < 0 or b.start < 0:
        return c
    b_index = b.input_index()
    state_ids: dict[tuple[int, int, int], int] = {}
    queue: deque[tuple[int, int, int]] = deque()

    def state_of(triple):
        sid = state_ids.get(triple)
        if sid is None:
            sid = c.add_state()
            state_ids[triple] = sid
            queue.append(triple)
        return sid

    c.set_start(state_of((a.start, b.start, 0)))
    while queue:
        triple = queue.popleft()
        qa, qb, filt = triple
        src = state_ids[triple]
        b_arcs = b_index[qb]
        for arc in a.arcs(qa):
            if arc.olabel == EPSILON:
                if filt == 0:
                    dst = state_of((arc.nextstate, qb, 0))
                    c.add_arc(src, arc.ilabel, EPSILON, arc.weight, dst)
                continue
            for barc in b_arcs.get(arc.olabel, ()):
                dst = state_of((arc.nextstate, barc.nextstate, 0))
                c.add_arc(src, arc.ilabel, barc.olabel, arc.weight + barc.weight, dst)
        for barc in b_arcs.get(EPSILON, ()):
            dst = state_of((qa, barc.nextstate, 1))
            c.add_arc(src, EPSILON, barc.olabel, barc.weight, dst)
        if qa in a.finals and qb in b.finals:
            c.set_final(src, a.finals[qa] + b.finals[qb])
    return c


def _accessible(f: Wfst) -> set[int]:
    if f.start < 0:
        return set()
    seen = {f.start}
    stack = [f.start]
    while stack:
        s = stack.pop()
        for arc in f.arcs(s):
            if arc.nextstate not in seen:
                seen.add(arc.nextstate)
                stack.append(arc.nextstate)
    return seen


def _coaccessible(f: Wfst) -> set[int]:
    reverse: list[list[int]] = [[] for _ in f.states()]
    for s in f.states():
        for arc in f.arcs(s):
            reverse[arc.nextstate].append(s)
    seen = set(f.finals)
    stack = list(seen)
    while stack:
        s = stack.pop()
        for p in reverse[s]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def trim(f: Wfst) -> Wfst:
    """Drop states that are not on some start-to-final path.

    Surviving states keep their relative order. If nothing survives, the
    result has no states and no start.
    """
    keep = sorted(_accessible(f) & _coaccessible(f))
    out = Wfst(f.isyms, f.osyms)
    if f.start not in keep:
        return out
    remap = {}
    for s in keep:
        remap[s] = out.add_state()
    for s in keep:
        for arc in f.arcs(s):
            if arc.nextstate in remap:
                out.add_arc(remap[s], arc.ilabel, arc.olabel, arc.weight, remap[arc.nextstate])
        if s in f.finals:
            out.set_final(remap[s], f.finals[s])
    out.set_start(remap[f.start])
    return out


class EmptyLanguageError(ValueError):
    pass


class _Labels:
    """Persistent output-label list; compared lexicographically on demand."""

    __slots__ = ("label", "parent", "length")

    def __init__(self, label=None, parent=None):
        self.label = label
        self.parent = parent
        self.length = 0 if parent is None else parent.length + 1

    def push(self, label: int) -> "_Labels":
        return self if label == EPSILON else _Labels(label, self)

    def to_tuple(self) -> tuple[int, ...]:
        out = []
        node = self
        while node.parent is not None:
            out.append(node.label)
            node = node.parent
        return tuple(reversed(out))

    def __lt__(self, other: "_Labels") -> bool:
        return self is not other and self.to_tuple() < other.to_tuple()

    def __eq__(self, other: object) -> bool:
        return self is other or (isinstance(other, _Labels) and self.to_tuple() == other.to_tuple())

    __hash__ = None


def _topological_order(f: Wfst, reachable: set[int]) -> list[int] | None:
    indegree = dict.fromkeys(reachable, 0)
    for s in reachable:
        for arc in f.arcs(s):
            indegree[arc.nextstate] += 1
    ready = deque(sorted(s for s, d in indegree.items() if d == 0))
    order = []
    while ready:
        s = ready.popleft()
        order.append(s)
        for arc in f.arcs(s):
            indegree[arc.nextstate] -= 1
            if indegree[arc.nextstate] == 0:
                ready.append(arc.nextstate)
    return order if len(order) == len(reachable) else None


def shortest_path(f: Wfst) -> tuple[list[int], list[int], float]:
    """Single best path as ``(ilabels, olabels, cost)``.

    Cost includes the final weight and is accumulated left to right along
    the path. Among equal-cost candidates the one whose (epsilon-free)
    output labels compare smallest at the point of relaxation wins.

    Acyclic FSTs are relaxed in topological order, which tolerates negative
    arc weights (n-gram backoff arcs can carry them). Cyclic FSTs use
    Dijkstra and must have non-negative weights.
    """
    reachable = _accessible(f)
    if not reachable or not f.finals:
        raise EmptyLanguageError("empty language")
    order = _topological_order(f, reachable)
    if order is None:
        for s in reachable:
            if any(arc.weight < 0 for arc in f.arcs(s)):
                raise ValueError("negative weight on a cyclic FST")
    root = _Labels()
    # best[s] = (cost, labels, backpointer)
    best: dict[int, tuple[float, _Labels, tuple[int, Arc] | None]] = {f.start: (0.0, root, None)}

    def relax(s, arc):
        cost, labels, _ = best[s]
        cand = (cost + arc.weight, labels.push(arc.olabel))
        cur = best.get(arc.nextstate)
        if cur is None or cand < cur[:2]:
            best[arc.nextstate] = (cand[0], cand[1], (s, arc))
            return True
        return False

    if order is not None:
        for s in order:
            if s in best:
                for arc in f.arcs(s):
                    relax(s, arc)
    else:
        heap = [(0.0, root, f.start)]
        done = set()
        while heap:
            cost, labels, s = heapq.heappop(heap)
            if s in done or best[s][:2] != (cost, labels):
                continue
            done.add(s)
            for arc in f.arcs(s):
                if arc.nextstate not in done and relax(s, arc):
                    c, lab, _ = best[arc.nextstate]
                    heapq.heappush(heap, (c, lab, arc.nextstate))

    winner = None
    for s, fw in f.finals.items():
        if s not in best:
            continue
        cost, labels, _ = best[s]
        cand = (cost + fw, labels, s)
        if winner is None or cand[:2] < winner[:2]:
            winner = cand
    if winner is None:
        raise EmptyLanguageError("empty language")
    total, _, s = winner
    arcs = []
    while best[s][2] is not None:
        prev, arc = best[s][2]
        arcs.append(arc)
        s = prev
    arcs.reverse()
    return [a.ilabel for a in arcs], [a.olabel for a in arcs], total


def paths(f: Wfst, max_length: int) -> Iterator[tuple[tuple[int, ...], tuple[int, ...], float]]:
    """Enumerate accepting paths with at most ``max_length`` arcs.

    Yields ``(ilabels, olabels, cost)`` with epsilons removed from both
    label sequences. Exponential; intended for small machines and tests.
    """
    if f.start < 0:
        return

    def walk(s, ins, outs, cost, depth):
        if s in f.finals:
            yield tuple(ins), tuple(outs), cost + f.finals[s]
        if depth == max_length:
            return
        for arc in f.arcs(s):
            if arc.ilabel:
                ins.append(arc.ilabel)
            if arc.olabel:
                outs.append(arc.olabel)
            yield from walk(arc.nextstate, ins, outs, cost + arc.weight, depth + 1)
            if arc.olabel:
                outs.pop()
            if arc.ilabel:
                ins.pop()

    yield from walk(f.start, [], [], 0.0, 0)


def output_strings(f: Wfst, max_length: int) -> dict[str, float]:
    """Best cost for each output string reachable within ``max_length`` arcs."""
    out: dict[str, float] = {}
    for _, olabels, cost in paths(f, max_length):
        text = f.osyms.decode(olabels)
        if cost < out.get(text, ZERO):
            out[text] = cost
    return out


def accepts(f: Wfst) -> bool:
    return not trim(f).is_empty()
