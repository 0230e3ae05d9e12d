"""Word segmentation of symbol sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aernn import AernnScorer
from .core import DurationPenalty, Segmentation, SegmentationError, dpdp_segment

DEFAULT_MAX_SYMBOLS = 50


@dataclass
class SymbolSequence:
    symbols: list[int]
    alphabet_size: int
    utterance_id: str = ""

    def __post_init__(self):
        self.symbols = [int(s) for s in self.symbols]
        if not self.symbols:
            raise ValueError(f"{self.utterance_id}: empty symbol sequence")
        if min(self.symbols) < 1 or max(self.symbols) > self.alphabet_size:
            raise ValueError(f"{self.utterance_id}: symbol outside 1..{self.alphabet_size}")

    def __len__(self):
        return len(self.symbols)


@dataclass
class SymbolicSegConfig:
    """Duration setup for word segmentation.

    ``linear``: ``w_dur(l) = -l + 1`` weighted by ``lam`` (default 3).
    ``hsmm``: truncated-gamma duration log-probabilities with a geometric
    segment-count prior; the weight is fixed at 1.
    """

    variant: str = "linear"
    lam: float = 3.0
    gamma_shape: float = 7.0
    gamma_scale: float = 1.0
    truncation: int = 50
    geometric_p: float = 0.5
    max_seg_len: int = DEFAULT_MAX_SYMBOLS

    def __post_init__(self):
        if self.variant not in ("linear", "hsmm"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "hsmm":
            self.lam = 1.0

    @property
    def penalty(self) -> DurationPenalty:
        if self.variant == "linear":
            return DurationPenalty.linear(self.lam)
        return DurationPenalty.hsmm(self.gamma_shape, self.gamma_scale, self.truncation, self.geometric_p)

    @property
    def span_limit(self) -> int:
        if self.variant == "hsmm":
            return min(self.max_seg_len, self.truncation)
        return self.max_seg_len


def _symbols(seq) -> list[int]:
    return seq.symbols if isinstance(seq, SymbolSequence) else [int(s) for s in seq]


class AernnCost:
    """Segment cost provider backed by a frozen scorer.

    Costs are cached per ``(sequence, a, b)`` for the lifetime of the provider,
    which is one segmentation call; spans longer than ``max_seg_len`` cost ``inf``.
    """

    def __init__(self, scorer: AernnScorer, max_seg_len: int = DEFAULT_MAX_SYMBOLS):
        self.scorer = scorer
        self.max_seg_len = max_seg_len
        self._cache: dict[tuple, float] = {}

    def cost(self, seq, a: int, b: int) -> float:
        syms = _symbols(seq)
        if not 1 <= a <= b <= len(syms):
            raise IndexError(f"span ({a}, {b}) outside 1..{len(syms)}")
        if b - a + 1 > self.max_seg_len:
            return float("inf")
        key = (tuple(syms), a, b)
        if key not in self._cache:
            self._cache[key] = self.scorer.span_cost(syms[a - 1:b])
        return self._cache[key]

    def cost_table(self, seq, max_seg_len: int) -> np.ndarray:
        syms = _symbols(seq)
        L = min(max_seg_len, self.max_seg_len)
        table = np.full((len(syms), max_seg_len), np.inf)
        table[:, :L] = self.scorer.cost_tables([syms], L)[0]
        return table


def aernn_segment_cost(scorer: AernnScorer, seq, a: int, b: int,
                       max_seg_len: int = DEFAULT_MAX_SYMBOLS) -> float:
    return AernnCost(scorer, max_seg_len).cost(seq, a, b)


def segment_symbols(scorer: AernnScorer, seq, config: SymbolicSegConfig | None = None) -> Segmentation:
    config = config or SymbolicSegConfig()
    syms = _symbols(seq)
    if not syms:
        raise SegmentationError("empty input")
    provider = AernnCost(scorer, config.span_limit)
    return dpdp_segment(syms, provider, config.penalty, config.span_limit)


def segment_corpus(scorer: AernnScorer, seqs: Sequence, config: SymbolicSegConfig | None = None,
                   chunk_spans: int = 20000) -> list[Segmentation]:
    """Segment many sequences, batching the scorer across utterances."""
    config = config or SymbolicSegConfig()
    all_syms = [_symbols(s) for s in seqs]
    L = config.span_limit
    tables = scorer.cost_tables(all_syms, L, chunk_spans=chunk_spans)
    pen = config.penalty
    return [dpdp_segment(syms, None, pen, L, seg_table=table) for syms, table in zip(all_syms, tables)]


class TransitionModel:
    """Forward transition probabilities ``P(next | current)`` with add-one smoothing."""

    def __init__(self, corpus: Sequence, alphabet_size: int | None = None):
        seqs = [_symbols(s) for s in corpus]
        if not seqs:
            raise ValueError("empty corpus")
        K = alphabet_size or max(max(s) for s in seqs if s)
        counts = np.ones((K + 1, K + 1))
        for s in seqs:
            if len(s) > 1:
                np.add.at(counts, (s[:-1], s[1:]), 1.0)
        counts[0, :] = 0.0
        counts[:, 0] = 0.0
        self.alphabet_size = K
        self.probs = counts / np.maximum(counts.sum(1, keepdims=True), 1.0)

    def transition_probs(self, seq) -> np.ndarray:
        s = np.asarray(_symbols(seq))
        return self.probs[s[:-1], s[1:]]

    def segment(self, seq) -> Segmentation:
        """Boundary after position ``t`` where the transition ``t -> t+1`` is a strict local minimum.

        A missing neighbour at the utterance edge counts as ``+inf``; with a
        single transition there is nothing to compare, so no boundary.
        """
        syms = _symbols(seq)
        if not syms:
            raise SegmentationError("empty input")
        T = len(syms)
        tp = self.transition_probs(syms) if T > 1 else np.zeros(0)
        ends = []
        if T > 2:
            padded = np.concatenate([[np.inf], tp, [np.inf]])
            for i in range(len(tp)):
                if padded[i + 1] < padded[i] and padded[i + 1] < padded[i + 2]:
                    ends.append(i + 1)
        return Segmentation.from_ends(ends + [T], float("nan"))


def transition_prob_segment(corpus: Sequence, seq, alphabet_size: int | None = None) -> Segmentation:
    return TransitionModel(corpus, alphabet_size).segment(seq)
