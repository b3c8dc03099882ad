"""Hawaiian alphabet, text normalisation, and the orthography transducers.

``build_c`` maps missionary-era spelling to every modern spelling that
differs only by kahakō (macron) and ʻokina placement. ``build_c_wb`` adds
optional word boundaries after vowels.
"""

from __future__ import annotations

import string
import unicodedata
from dataclasses import dataclass, field

from .wfst import EPSILON, EPS_TOKEN, UNK, SymbolTable, Wfst

OKINA = "ʻ"
SPACE = " "


@dataclass(frozen=True)
class Alphabet:
    short_vowels: str = "aeiouAEIOU"
    long_vowels: str = "āēīōūĀĒĪŌŪ"
    native_consonants: str = "hklmnpwHKLMNPW"
    okina: str = OKINA
    foreign_consonants: str = "bcdfgjqrstvxyzBCDFGJQRSTVXYZ"
    digits: str = string.digits
    # Backtick is excluded: normalize() turns it into an ʻokina.
    punctuation: str = string.punctuation.replace("`", "")
    space: str = SPACE
    _lengthen: dict = field(init=False, repr=False, compare=False)
    _shorten: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.short_vowels) != len(self.long_vowels):
            raise ValueError("short and long vowels must pair up")
        pairs = dict(zip(self.short_vowels, self.long_vowels))
        for short, long in pairs.items():
            if short.isupper() != long.isupper():
                raise ValueError(f"vowel pair {short}/{long} changes case")
        object.__setattr__(self, "_lengthen", pairs)
        object.__setattr__(self, "_shorten", {v: k for k, v in pairs.items()})

    def lengthen(self, vowel: str) -> str:
        return self._lengthen[vowel]

    def shorten(self, vowel: str) -> str:
        return self._shorten.get(vowel, vowel)

    def is_vowel(self, ch: str) -> bool:
        return ch in self._lengthen or ch in self._shorten

    @property
    def consonants(self) -> str:
        return self.native_consonants + self.foreign_consonants

    @property
    def passthrough(self) -> str:
        """Symbols the orthography FSTs copy unchanged."""
        return self.consonants + self.digits + self.punctuation + self.space

    def characters(self) -> str:
        return (self.short_vowels + self.long_vowels + self.native_consonants
                + self.okina + self.foreign_consonants + self.digits
                + self.punctuation + self.space)

    def symbol_table(self) -> SymbolTable:
        return SymbolTable(self.characters())


DEFAULT_ALPHABET = Alphabet()


def default_symbols() -> SymbolTable:
    return DEFAULT_ALPHABET.symbol_table()


def normalize(text: str | bytes) -> str:
    """NFC-normalise and map backtick ʻokina spellings to U+02BB."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return unicodedata.normalize("NFC", text).replace("`", OKINA)


def backward_map(modern: str, alphabet: Alphabet = DEFAULT_ALPHABET) -> str:
    """Reduce modern spelling to missionary spelling.

    Deletes every ʻokina and shortens every long vowel; nothing else changes.
    """
    return "".join(alphabet.shorten(ch) for ch in modern if ch != alphabet.okina)


@dataclass(frozen=True)
class Rule:
    source: str  # "" for epsilon
    target: str
    weight: float = 0.0
    guard_vowel: bool = False

    def __post_init__(self):
        if not self.source and not self.target:
            raise ValueError("a rule may not map epsilon to epsilon")
        if self.weight < 0:
            raise ValueError("rule weights must be non-negative")
        if not self.source and not self.guard_vowel:
            # Unguarded insertions would put an input-epsilon cycle on the hub.
            raise ValueError("insertion rules need guard=vowel")


@dataclass
class RuleSet:
    rules: list[Rule] = field(default_factory=list)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    @classmethod
    def parse(cls, text: str) -> "RuleSet":
        rules = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise ValueError(f"rule line {lineno}: expected FROM<TAB>TO<TAB>WEIGHT[<TAB>guard=vowel]")
            src, dst = (normalize(f) if f != EPS_TOKEN else "" for f in fields[:2])
            if len(src) > 1 or len(dst) > 1:
                raise ValueError(f"rule line {lineno}: rules rewrite single characters")
            guard = False
            if len(fields) == 4:
                if fields[3].strip() != "guard=vowel":
                    raise ValueError(f"rule line {lineno}: unknown guard {fields[3]!r}")
                guard = True
            try:
                rules.append(Rule(src, dst, float(fields[2]), guard))
            except ValueError as exc:
                raise ValueError(f"rule line {lineno}: {exc}") from None
        return cls(rules)

    @classmethod
    def read(cls, path) -> "RuleSet":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


def _label(syms: SymbolTable, ch: str) -> int:
    if not ch:
        return EPSILON
    if ch not in syms:
        raise ValueError(f"character {ch!r} is not in the symbol table")
    return syms.find(ch)


def _build(alphabet: Alphabet, syms: SymbolTable | None, extra: RuleSet | None,
           insertion_penalty: float, word_boundaries: bool) -> Wfst:
    syms = alphabet.symbol_table() if syms is None else syms
    fst = Wfst(syms)
    hub = fst.add_state()
    guard = fst.add_state()  # just emitted an ʻokina: a vowel must follow
    fst.set_start(hub)
    fst.set_final(hub)
    if word_boundaries:
        after_vowel = fst.add_state()
        after_space = fst.add_state()  # inserted a space: must consume a non-space
        fst.set_final(after_vowel)
        free_states = (hub, after_vowel, after_space)
    else:
        after_vowel = hub
        after_space = None
        free_states = (hub,)

    okina = _label(syms, alphabet.okina)
    space = _label(syms, alphabet.space)
    vowel_arcs = []
    for ch in alphabet.short_vowels:
        v = _label(syms, ch)
        vowel_arcs.append((v, v))
        vowel_arcs.append((v, _label(syms, alphabet.lengthen(ch))))
    for ch in alphabet.long_vowels:
        # Already-modern input is copied through.
        v = _label(syms, ch)
        vowel_arcs.append((v, v))
    copies = [_label(syms, ch) for ch in alphabet.passthrough] + [UNK]

    for src in (guard,) + free_states:
        for ilab, olab in vowel_arcs:
            fst.add_arc(src, ilab, olab, 0.0, after_vowel)
    for src in free_states:
        for lab in copies:
            if lab == space and src == after_space:
                continue
            fst.add_arc(src, lab, lab, 0.0, hub)
        fst.add_arc(src, EPSILON, okina, insertion_penalty, guard)
        fst.add_arc(src, okina, okina, 0.0, guard)
        for rule in extra or ():
            dst = guard if rule.guard_vowel else hub
            if src == after_space and rule.source == alphabet.space:
                continue
            fst.add_arc(src, _label(syms, rule.source), _label(syms, rule.target), rule.weight, dst)
    if word_boundaries:
        fst.add_arc(after_vowel, EPSILON, space, insertion_penalty, after_space)
    return fst


def build_c(alphabet: Alphabet = DEFAULT_ALPHABET, extra: RuleSet | None = None, *,
            syms: SymbolTable | None = None, insertion_penalty: float = 0.0) -> Wfst:
    """Orthography transducer: optional lengthening and ʻokina insertion.

    A single hub state is start and final. ʻokina insertion leads to a guard
    state that can only be left by consuming a vowel, so every cycle
    consumes input.
    """
    return _build(alphabet, syms, extra, insertion_penalty, word_boundaries=False)


def build_c_wb(alphabet: Alphabet = DEFAULT_ALPHABET, extra: RuleSet | None = None, *,
               syms: SymbolTable | None = None, insertion_penalty: float = 0.0) -> Wfst:
    """Like :func:`build_c`, plus an optional space after any emitted vowel."""
    return _build(alphabet, syms, extra, insertion_penalty, word_boundaries=True)


def identity_fst(syms: SymbolTable) -> Wfst:
    """One-state transducer copying every non-reserved symbol."""
    fst = Wfst(syms)
    s = fst.add_state()
    fst.set_start(s)
    fst.set_final(s)
    for i in range(UNK, len(syms)):
        fst.add_arc(s, i, i, 0.0, s)
    return fst
