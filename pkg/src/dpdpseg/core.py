"""Duration-penalized dynamic programming over exact-cover segmentations.

Spans are 1-based and inclusive throughout: ``(a, b)`` covers elements
``a..b`` of a length-``T`` sequence. A segment cost provider is either a plain
callable ``cost(seq, a, b)`` or an object exposing ``cost(seq, a, b)`` and,
optionally, ``cost_table(seq, max_seg_len)`` returning a ``(T, max_seg_len)``
array whose entry ``[a - 1, l - 1]`` is the cost of the span starting at ``a``
with length ``l`` (``inf`` where the span runs past ``T``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "SegmentationError",
    "Segmentation",
    "DurationPenalty",
    "SegmentCostProvider",
    "span_cost_table",
    "dpdp_segment",
    "brute_force_segment",
    "constrained_k_segment",
    "BRUTE_FORCE_LIMIT",
]

BRUTE_FORCE_LIMIT = 16


class SegmentationError(ValueError):
    pass


class SegmentCostProvider(Protocol):
    def cost(self, seq, a: int, b: int) -> float: ...


@dataclass(frozen=True)
class Segmentation:
    spans: tuple[tuple[int, int], ...]
    total_cost: float

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple((int(a), int(b)) for a, b in self.spans))

    def __len__(self):
        return len(self.spans)

    @property
    def ends(self) -> list[int]:
        return [b for _, b in self.spans]

    @property
    def lengths(self) -> list[int]:
        return [b - a + 1 for a, b in self.spans]

    def validate(self, T: int) -> None:
        """Raise ``SegmentationError`` unless the spans exactly cover ``1..T``."""
        if not self.spans:
            raise SegmentationError("empty segmentation")
        if self.spans[0][0] != 1 or self.spans[-1][1] != T:
            raise SegmentationError(f"spans do not cover 1..{T}: {self.spans}")
        for (a, b), (c, _) in zip(self.spans, self.spans[1:]):
            if c != b + 1:
                raise SegmentationError(f"gap or overlap between spans ending {b} and starting {c}")
        for a, b in self.spans:
            if b < a:
                raise SegmentationError(f"reversed span ({a}, {b})")

    @classmethod
    def from_ends(cls, ends: Sequence[int], total_cost: float = float("nan")) -> "Segmentation":
        spans, start = [], 1
        for e in ends:
            spans.append((start, int(e)))
            start = int(e) + 1
        return cls(tuple(spans), total_cost)


@dataclass(frozen=True)
class DurationPenalty:
    """Length penalty ``w_dur(l)`` weighted by ``lam`` plus a per-segment constant.

    ``linear`` gives ``-l + 1``; ``gamma_pmf`` gives ``-log p(l)`` for a gamma
    density discretized on ``1..truncation`` (``inf`` beyond); ``none`` gives 0.
    ``segment_constant`` is added once per segment and is not scaled by ``lam``.
    """

    kind: str = "linear"
    lam: float = 1.0
    gamma_shape: float = 7.0
    gamma_scale: float = 1.0
    truncation: int = 50
    segment_constant: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "gamma_pmf", "none"):
            raise ValueError(f"unknown duration penalty kind {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.kind == "gamma_pmf":
            if self.gamma_shape <= 0 or self.gamma_scale <= 0:
                raise ValueError("gamma shape and scale must be positive")
            if self.truncation < 1:
                raise ValueError("truncation must be a positive integer")

    @classmethod
    def linear(cls, lam: float) -> "DurationPenalty":
        return cls(kind="linear", lam=lam)

    @classmethod
    def none(cls) -> "DurationPenalty":
        return cls(kind="none", lam=0.0)

    @classmethod
    def hsmm(cls, shape: float = 7.0, scale: float = 1.0, truncation: int = 50,
             geometric_p: float = 0.5) -> "DurationPenalty":
        """Truncated-gamma durations with a geometric prior on the segment count.

        Under a geometric count prior ``P(N) = (1 - p)^(N - 1) p`` each extra
        segment costs ``-log(1 - p)``; the constant ``-log p`` term is dropped.
        """
        if not 0.0 < geometric_p < 1.0:
            raise ValueError("geometric_p must lie in (0, 1)")
        return cls(kind="gamma_pmf", lam=1.0, gamma_shape=shape, gamma_scale=scale,
                   truncation=truncation, segment_constant=-math.log1p(-geometric_p))

    def gamma_log_pmf(self) -> np.ndarray:
        lengths = np.arange(1, self.truncation + 1, dtype=float)
        dens = stats.gamma.pdf(lengths, a=self.gamma_shape, scale=self.gamma_scale)
        total = dens.sum()
        if not total > 0:
            raise ValueError("gamma density vanishes on 1..truncation")
        with np.errstate(divide="ignore"):
            return np.log(dens / total)

    def w_dur(self, lengths) -> np.ndarray:
        """Unweighted duration penalty for an array of lengths (all >= 1)."""
        lengths = np.asarray(lengths, dtype=int)
        if self.kind == "linear":
            return 1.0 - lengths.astype(float)
        if self.kind == "none":
            return np.zeros(lengths.shape)
        logp = self.gamma_log_pmf()
        out = np.full(lengths.shape, np.inf)
        ok = lengths <= self.truncation
        out[ok] = -logp[lengths[ok] - 1]
        return out

    def combined(self, lengths) -> np.ndarray:
        """``lam * w_dur(l) + segment_constant``; a zero weight never turns ``inf`` into nan."""
        w = self.w_dur(lengths)
        if self.lam == 0:
            w = np.where(np.isinf(w), w, 0.0)
        else:
            w = self.lam * w
        return w + self.segment_constant


def _length(seq) -> int:
    return seq.shape[0] if hasattr(seq, "shape") else len(seq)


def _cost_fn(cost) -> Callable:
    return cost.cost if hasattr(cost, "cost") else cost


def span_cost_table(seq, cost, max_seg_len: int) -> np.ndarray:
    """Segment costs ``w_seg`` for every start and length up to ``max_seg_len``."""
    T = _length(seq)
    if hasattr(cost, "cost_table"):
        table = np.asarray(cost.cost_table(seq, max_seg_len), dtype=float)
        if table.shape != (T, max_seg_len):
            raise ValueError(f"cost_table returned shape {table.shape}, expected {(T, max_seg_len)}")
        return table
    fn = _cost_fn(cost)
    table = np.full((T, max_seg_len), np.inf)
    for a in range(1, T + 1):
        for length in range(1, min(max_seg_len, T - a + 1) + 1):
            table[a - 1, length - 1] = fn(seq, a, a + length - 1)
    return table


def _span_total(spans, seg_table: np.ndarray, dur: np.ndarray) -> float:
    # Left-to-right accumulation, the same order the forward recursion uses.
    total = 0.0
    for a, b in spans:
        length = b - a + 1
        total = total + (seg_table[a - 1, length - 1] + dur[length - 1])
    return float(total)


def _check_inputs(seq, max_seg_len: int) -> int:
    T = _length(seq)
    if T < 1:
        raise SegmentationError("empty input")
    if max_seg_len < 1:
        raise ValueError("max_seg_len must be >= 1")
    return T


def dpdp_segment(seq, cost, pen: DurationPenalty | None = None, max_seg_len: int = 50,
                 seg_table: np.ndarray | None = None) -> Segmentation:
    """Minimum-cost exact cover of ``seq`` under segment cost plus duration penalty.

    Forward recursion ``alpha[t] = min_j alpha[j] + w(j+1..t)`` with
    ``alpha[0] = 0``, then backtracking through the stored argmins. Ties go to
    the smallest ``j``, i.e. the longest final segment. A precomputed
    ``seg_table`` (see :func:`span_cost_table`) skips the provider entirely.
    """
    T = _check_inputs(seq, max_seg_len)
    pen = pen or DurationPenalty.none()
    L = min(max_seg_len, T)
    if seg_table is None:
        seg_table = span_cost_table(seq, cost, L)
    else:
        seg_table = np.asarray(seg_table, dtype=float)[:, :L]
    dur = pen.combined(np.arange(1, L + 1))

    # w[a-1, l-1] is the combined cost of span (a, a+l-1).
    w = seg_table + dur[None, :]
    alpha = np.full(T + 1, np.inf)
    alpha[0] = 0.0
    back = np.zeros(T + 1, dtype=int)
    for t in range(1, T + 1):
        jmin = max(0, t - L)
        js = np.arange(jmin, t)
        # Span (j+1, t) has length t - j.
        cand = alpha[jmin:t] + w[js, t - js - 1]
        i = int(np.argmin(cand))
        alpha[t] = cand[i]
        back[t] = js[i]
    if not np.isfinite(alpha[T]):
        raise SegmentationError("no feasible segmentation")

    ends = []
    t = T
    while t > 0:
        ends.append(t)
        t = back[t]
    ends.reverse()
    seg = Segmentation.from_ends(ends)
    return Segmentation(seg.spans, _span_total(seg.spans, seg_table, dur))


def brute_force_segment(seq, cost, pen: DurationPenalty | None = None,
                        max_seg_len: int = 50) -> Segmentation:
    """Exhaustive search over all ``2**(T-1)`` covers; a test oracle for small ``T``."""
    T = _check_inputs(seq, max_seg_len)
    if T > BRUTE_FORCE_LIMIT:
        raise SegmentationError("oracle size limit")
    pen = pen or DurationPenalty.none()
    L = min(max_seg_len, T)
    seg_table = span_cost_table(seq, cost, L)
    dur = pen.combined(np.arange(1, L + 1))

    best = None
    for mask in itertools.product((False, True), repeat=T - 1):
        ends = [t + 1 for t, cut in enumerate(mask) if cut] + [T]
        seg = Segmentation.from_ends(ends)
        if max(seg.lengths) > L:
            continue
        total = _span_total(seg.spans, seg_table, dur)
        if best is None or total < best.total_cost:
            best = Segmentation(seg.spans, total)
    if best is None or not math.isfinite(best.total_cost):
        raise SegmentationError("no feasible segmentation")
    return best


def constrained_k_segment(seq, cost, k: int, max_seg_len: int = 50) -> Segmentation:
    """Minimum total segment cost over covers with exactly ``k`` spans (no duration term)."""
    T = _check_inputs(seq, max_seg_len)
    if k < 1 or k > T or k * max_seg_len < T:
        raise SegmentationError("infeasible segment count")
    L = min(max_seg_len, T)
    seg_table = span_cost_table(seq, cost, L)

    # beta[n, t]: best cost of covering 1..t with exactly n spans.
    beta = np.full((k + 1, T + 1), np.inf)
    beta[0, 0] = 0.0
    back = np.zeros((k + 1, T + 1), dtype=int)
    for n in range(1, k + 1):
        for t in range(n, T + 1):
            jmin = max(n - 1, t - L)
            js = np.arange(jmin, t)
            cand = beta[n - 1, jmin:t] + seg_table[js, t - js - 1]
            i = int(np.argmin(cand))
            beta[n, t] = cand[i]
            back[n, t] = js[i]
    if not np.isfinite(beta[k, T]):
        raise SegmentationError("infeasible segment count")

    ends = []
    t = T
    for n in range(k, 0, -1):
        ends.append(t)
        t = back[n, t]
    ends.reverse()
    seg = Segmentation.from_ends(ends)
    zero = np.zeros(L)
    return Segmentation(seg.spans, _span_total(seg.spans, seg_table, zero))
