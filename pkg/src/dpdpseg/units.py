"""Acoustic unit discovery: K-means codebooks and duration-penalized VQ segmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DurationPenalty, Segmentation, SegmentationError, dpdp_segment

log = logging.getLogger(__name__)

DEFAULT_K = 50
DEFAULT_LAMBDA = 2.0
DEFAULT_LAMBDA_VQVAE = 3.0
DEFAULT_MAX_FRAMES = 100


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_period_s: float = 0.01
    utterance_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"{self.utterance_id}: features must be a nonempty T x D matrix, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError(f"{self.utterance_id}: non-finite feature values")
        if not self.frame_period_s > 0:
            raise ValueError("frame_period_s must be positive")
        self.frames = frames

    def __len__(self):
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def frame_interval(self, t: int) -> tuple[float, float]:
        """Time interval covered by 1-based frame ``t``."""
        return ((t - 1) * self.frame_period_s, t * self.frame_period_s)


@dataclass
class Codebook:
    codes: np.ndarray
    trained_on: str = ""
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.float64)
        if codes.ndim != 2 or codes.shape[0] < 1:
            raise ValueError(f"codebook must be a nonempty K x D matrix, got {codes.shape}")
        if _has_duplicate_rows(codes):
            raise ValueError("codebook contains duplicate code vectors")
        self.codes = codes

    @property
    def K(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]

    def check_dim(self, seq: FeatureSequence) -> None:
        if seq.dim != self.dim:
            raise ValueError(f"dimension mismatch: features have D={seq.dim}, codebook D={self.dim}")


def _has_duplicate_rows(a: np.ndarray) -> bool:
    return np.unique(a, axis=0).shape[0] < a.shape[0]


@dataclass
class UnitTokenization:
    codes: list[int]
    boundaries: list[int]
    utterance_id: str = ""

    def __post_init__(self):
        self.codes = [int(c) for c in self.codes]
        self.boundaries = [int(b) for b in self.boundaries]
        if len(self.codes) != len(self.boundaries):
            raise ValueError("codes and boundaries differ in length")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")

    def __len__(self):
        return len(self.codes)

    @property
    def n_frames(self) -> int:
        return self.boundaries[-1]

    @property
    def spans(self) -> list[tuple[int, int]]:
        return list(Segmentation.from_ends(self.boundaries).spans)

    def frame_codes(self) -> list[int]:
        out = []
        for code, (a, b) in zip(self.codes, self.spans):
            out.extend([code] * (b - a + 1))
        return out

    def validate(self, T: int, K: int | None = None) -> None:
        if not self.codes:
            raise ValueError("empty tokenization")
        Segmentation.from_ends(self.boundaries).validate(T)
        if K is not None and not all(1 <= c <= K for c in self.codes):
            raise ValueError("code index out of range")


def _sq_dists(x: np.ndarray, codes: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Exact squared distances from each row of ``x`` to each code."""
    out = np.empty((x.shape[0], codes.shape[0]))
    for i in range(0, x.shape[0], chunk):
        diff = x[i:i + chunk, None, :] - codes[None, :, :]
        out[i:i + chunk] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def kmeans_fit(features: Sequence[FeatureSequence], K: int = DEFAULT_K, iters: int = 50,
               seed: int = 0, trained_on: str = "") -> Codebook:
    """Lloyd's algorithm from ``K`` distinct randomly chosen frames.

    An emptied cluster is moved onto the frame currently farthest from its
    centroid. Stops early once assignments stop changing; the inertia after
    each assignment step is kept in ``Codebook.inertia_history``.
    """
    if K < 1 or iters < 1:
        raise ValueError("K and iters must be positive")
    x = np.concatenate([np.asarray(f.frames if isinstance(f, FeatureSequence) else f, dtype=np.float64)
                        for f in features])
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite features")
    if x.shape[0] < K:
        raise ValueError(f"only {x.shape[0]} frames for K={K} codes")
    distinct = np.unique(x, axis=0)
    if distinct.shape[0] < K:
        raise ValueError(f"only {distinct.shape[0]} distinct frames for K={K} codes")

    rng = np.random.default_rng(seed)
    codes = distinct[np.sort(rng.choice(distinct.shape[0], size=K, replace=False))].copy()
    history = []
    assign = None
    for it in range(iters):
        d2 = _sq_dists(x, codes)
        new_assign = d2.argmin(1)
        mins = d2[np.arange(x.shape[0]), new_assign]
        history.append(float(mins.sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=K)
        sums = np.zeros_like(codes)
        np.add.at(sums, assign, x)
        nonempty = counts > 0
        codes[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            order = np.argsort(-mins, kind="stable")
            for k, idx in zip(empty, order[: empty.size]):
                codes[k] = x[idx]
            log.debug("iteration %d: reseeded %d empty clusters", it, empty.size)
    return Codebook(codes, trained_on=trained_on, inertia_history=history)


class VQCost:
    """Segment cost ``min_k sum_t ||x_t - e_k||^2`` from cumulative statistics."""

    def __init__(self, codebook: Codebook):
        self.codebook = codebook
        self._e = codebook.codes
        self._e_sq = (self._e ** 2).sum(1)
        self._stats_for = None
        self._stats = None

    def _prefix(self, seq: FeatureSequence):
        if self._stats_for is not seq:
            self.codebook.check_dim(seq)
            x = seq.frames
            csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
            csq = np.concatenate([[0.0], np.cumsum((x ** 2).sum(1))])
            self._stats_for, self._stats = seq, (csum, csq)
        return self._stats

    def code_costs(self, seq: FeatureSequence, a: int, b: int) -> np.ndarray:
        """Per-code summed squared distance for span ``(a, b)``."""
        if not 1 <= a <= b <= len(seq):
            raise IndexError(f"span ({a}, {b}) outside 1..{len(seq)}")
        csum, csq = self._prefix(seq)
        s = csum[b] - csum[a - 1]
        q = csq[b] - csq[a - 1]
        return np.maximum(q - 2.0 * (self._e @ s) + (b - a + 1) * self._e_sq, 0.0)

    def cost(self, seq: FeatureSequence, a: int, b: int) -> float:
        return float(self.code_costs(seq, a, b).min())

    def best_code(self, seq: FeatureSequence, a: int, b: int) -> int:
        """1-based index of the code minimizing the span cost."""
        return int(self.code_costs(seq, a, b).argmin()) + 1

    def cost_table(self, seq: FeatureSequence, max_seg_len: int) -> np.ndarray:
        csum, csq = self._prefix(seq)
        T = len(seq)
        table = np.full((T, max_seg_len), np.inf)
        for length in range(1, min(max_seg_len, T) + 1):
            s = csum[length:] - csum[:-length]
            q = csq[length:] - csq[:-length]
            c = q[:, None] - 2.0 * (s @ self._e.T) + length * self._e_sq[None, :]
            table[: T - length + 1, length - 1] = np.maximum(c.min(1), 0.0)
        return table


def vq_segment_cost(seq: FeatureSequence, a: int, b: int, codebook: Codebook) -> float:
    return VQCost(codebook).cost(seq, a, b)


def naive_vq_segment_cost(seq: FeatureSequence, a: int, b: int, codebook: Codebook) -> float:
    codebook.check_dim(seq)
    seg = seq.frames[a - 1:b]
    return float(min(((seg - e) ** 2).sum() for e in codebook.codes))


def encode_utterance(seq: FeatureSequence, codebook: Codebook, lam: float = DEFAULT_LAMBDA,
                     max_seg_len: int = DEFAULT_MAX_FRAMES) -> UnitTokenization:
    """Jointly segment and quantize ``seq`` with a linear duration penalty."""
    codebook.check_dim(seq)
    provider = VQCost(codebook)
    seg = dpdp_segment(seq, provider, DurationPenalty.linear(lam), max_seg_len)
    codes = [provider.best_code(seq, a, b) for a, b in seg.spans]
    return UnitTokenization(codes, seg.ends, seq.utterance_id)


def nearest_codes(seq: FeatureSequence, codebook: Codebook) -> list[int]:
    codebook.check_dim(seq)
    return [int(k) + 1 for k in _sq_dists(seq.frames, codebook.codes).argmin(1)]


def merge_repeats(frame_codes: Sequence[int], utterance_id: str = "") -> UnitTokenization:
    """Run-length merge of per-frame code indices; a boundary at every run end."""
    if len(frame_codes) == 0:
        raise SegmentationError("empty input")
    codes, ends = [], []
    for t, c in enumerate(frame_codes, start=1):
        if codes and codes[-1] == c:
            ends[-1] = t
        else:
            codes.append(int(c))
            ends.append(t)
    return UnitTokenization(codes, ends, utterance_id)


def merge_encode(seq: FeatureSequence, codebook: Codebook) -> UnitTokenization:
    """Greedy nearest-code assignment followed by run-length merging."""
    return merge_repeats(nearest_codes(seq, codebook), seq.utterance_id)


def tokenization_cost(seq: FeatureSequence, tok: UnitTokenization, codebook: Codebook,
                      lam: float) -> float:
    """Value of the unit-discovery objective for an arbitrary tokenization."""
    provider = VQCost(codebook)
    pen = DurationPenalty.linear(lam)
    total = 0.0
    for a, b in tok.spans:
        total += provider.cost(seq, a, b) + float(pen.combined([b - a + 1])[0])
    return total
