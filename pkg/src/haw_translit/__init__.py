"""Restore ʻokina and kahakō to Hawaiian text written in missionary-era spelling."""

from .decoder import BeamConfig, DecodeError, beam_search, decode_fst, decode_hybrid
from .evaluation import ParallelPair, corpus_cerr, levenshtein, load_fixture, load_sample_corpus, make_synthetic
from .ngram import NgramModel, count_ngrams, estimate
from .orthography import backward_map, build_c, build_c_wb, default_symbols, normalize
from .wfst import SymbolTable, Wfst, compose, shortest_path, trim

__version__ = "0.1.0"

__all__ = [
    "BeamConfig", "DecodeError", "NgramModel", "ParallelPair", "SymbolTable", "Wfst",
    "backward_map", "beam_search", "build_c", "build_c_wb", "compose", "corpus_cerr", "count_ngrams",
    "decode_fst", "decode_hybrid", "default_symbols", "estimate", "levenshtein", "load_fixture",
    "load_sample_corpus", "make_synthetic", "normalize", "shortest_path", "trim",
]
