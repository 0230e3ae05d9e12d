"""Boundary and token segmentation metrics.

Corpus-level scores sum counts over utterances before forming ratios.
Boundaries may be times or frame indices as long as the tolerance uses the
same unit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

EDGE_EPS = 1e-9


class MetricError(ValueError):
    pass


@dataclass
class TimedBoundarySet:
    boundaries: list[float]
    terminal: float
    utterance_id: str = ""

    def __post_init__(self):
        self.boundaries = [float(b) for b in self.boundaries]
        self.terminal = float(self.terminal)
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise MetricError(f"{self.utterance_id}: boundaries must be strictly increasing")
        if self.boundaries and (self.boundaries[0] <= 0 or self.boundaries[-1] > self.terminal + EDGE_EPS):
            raise MetricError(f"{self.utterance_id}: boundaries must lie in (0, terminal]")

    def internal(self) -> list[float]:
        """Boundaries with the utterance-final one removed."""
        return [b for b in self.boundaries if b < self.terminal - EDGE_EPS]

    def tokens(self) -> list[tuple[float, float]]:
        edges = [0.0] + self.internal() + [self.terminal]
        return list(zip(edges, edges[1:]))

    @classmethod
    def from_ends(cls, ends: Sequence[int], scale: float = 1.0, utterance_id: str = "") -> "TimedBoundarySet":
        """From 1-based inclusive end indices; ``scale`` converts to seconds."""
        return cls([e * scale for e in ends], ends[-1] * scale, utterance_id)


@dataclass
class ReferenceAlignment:
    tokens: list[tuple[float, float, str]]
    utterance_id: str = ""

    def __post_init__(self):
        self.tokens = [(float(s), float(e), str(lab)) for s, e, lab in self.tokens]
        if not self.tokens:
            raise MetricError(f"{self.utterance_id}: empty alignment")
        for s, e, _ in self.tokens:
            if not s < e:
                raise MetricError(f"{self.utterance_id}: token with start >= end")
        for (_, e1, _), (s2, _, _) in zip(self.tokens, self.tokens[1:]):
            if abs(s2 - e1) > 1e-6:
                raise MetricError(f"{self.utterance_id}: tokens are not contiguous at {e1}")

    @property
    def terminal(self) -> float:
        return self.tokens[-1][1]

    def boundary_set(self) -> TimedBoundarySet:
        return TimedBoundarySet([e for _, e, _ in self.tokens], self.terminal, self.utterance_id)


@dataclass
class MetricReport:
    precision: float = math.nan
    recall: float = math.nan
    f1: float = math.nan
    os: float = math.nan
    r_value: float = math.nan
    token_precision: float = math.nan
    token_recall: float = math.nan
    token_f1: float = math.nan
    n_ref: int = 0
    n_hyp: int = 0
    n_hit: int = 0
    n_ref_tokens: int = 0
    n_hyp_tokens: int = 0
    n_token_hit: int = 0

    def as_dict(self) -> dict:
        return asdict(self)

    def kv_lines(self) -> str:
        out = []
        for k, v in self.as_dict().items():
            out.append(f"{k} {v:.4f}" if isinstance(v, float) else f"{k} {v}")
        return "\n".join(out) + "\n"

    def table(self, name: str = "") -> str:
        head = f"{'Model':<24}{'Prec.':>8}{'Rec.':>8}{'F1':>8}{'OS':>9}{'R-val.':>9}{'Tok.F1':>8}"
        row = (f"{name:<24}{self.precision:8.1f}{self.recall:8.1f}{self.f1:8.1f}"
               f"{self.os:9.1f}{self.r_value:9.1f}{self.token_f1:8.1f}")
        return head + "\n" + row + "\n"


def _ratio(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def r_value(recall_pct: float, os_pct: float) -> float:
    """Composite of hit rate and over-segmentation; 100 at perfect recall and zero OS."""
    hr = recall_pct / 100.0
    os_ = os_pct / 100.0
    r1 = math.sqrt((1 - hr) ** 2 + os_ ** 2)
    r2 = (-os_ + hr - 1) / math.sqrt(2)
    return (1 - (abs(r1) + abs(r2)) / 2) * 100.0


def match_boundaries(hyp: Sequence[float], ref: Sequence[float], tol: float) -> int:
    """Size of a maximum one-to-one matching with ``|h - r| <= tol``.

    All windows share one width, so sweeping both sorted lists and pairing
    each reference with the earliest still-reachable hypothesis is optimal.
    The count is symmetric in ``hyp`` and ``ref``.
    """
    h = sorted(hyp)
    hits = i = 0
    for r in sorted(ref):
        while i < len(h) and h[i] < r - tol - EDGE_EPS:
            i += 1
        if i < len(h) and h[i] <= r + tol + EDGE_EPS:
            hits += 1
            i += 1
    return hits


def _check_pair(hyp: TimedBoundarySet, ref: TimedBoundarySet):
    if hyp.utterance_id != ref.utterance_id:
        raise MetricError(f"mismatched utterance: {hyp.utterance_id!r} vs {ref.utterance_id!r}")
    if abs(hyp.terminal - ref.terminal) > 1e-6 * max(1.0, abs(ref.terminal)):
        raise MetricError(f"{ref.utterance_id}: terminals differ ({hyp.terminal} vs {ref.terminal})")


def boundary_counts(hyp: TimedBoundarySet, ref: TimedBoundarySet, tol: float,
                    exclude_final: bool = True) -> tuple[int, int, int]:
    """``(n_ref, n_hyp, n_hit)`` for one utterance."""
    _check_pair(hyp, ref)
    h = hyp.internal() if exclude_final else hyp.boundaries
    r = ref.internal() if exclude_final else ref.boundaries
    return len(r), len(h), match_boundaries(h, r, tol)


def _fill_boundary(report: MetricReport, n_ref: int, n_hyp: int, n_hit: int) -> MetricReport:
    report.n_ref, report.n_hyp, report.n_hit = n_ref, n_hyp, n_hit
    report.precision = _ratio(n_hit, n_hyp)
    report.recall = _ratio(n_hit, n_ref)
    report.f1 = _f1(report.precision, report.recall)
    report.os = (n_hyp / n_ref - 1) * 100.0 if n_ref else math.nan
    report.r_value = r_value(report.recall, report.os) if n_ref else math.nan
    return report


def boundary_metrics(hyp: TimedBoundarySet, ref: TimedBoundarySet, tol: float,
                     exclude_final: bool = True) -> MetricReport:
    return _fill_boundary(MetricReport(), *boundary_counts(hyp, ref, tol, exclude_final))


def token_hits(hyp: TimedBoundarySet, ref: ReferenceAlignment, tol: float) -> tuple[list[bool], int]:
    """Which reference tokens are hit, and the number of hypothesis tokens.

    A reference token is hit when some unused hypothesis token has both edges
    within ``tol`` of the reference edges; consecutive hypothesis boundaries
    guarantee no proposal lies strictly inside it.
    """
    if hyp.utterance_id != ref.utterance_id:
        raise MetricError(f"mismatched utterance: {hyp.utterance_id!r} vs {ref.utterance_id!r}")
    htoks = hyp.tokens()
    used = [False] * len(htoks)
    hit = []
    for s, e, _ in ref.tokens:
        best, best_d = -1, math.inf
        for i, (hs, he) in enumerate(htoks):
            if used[i] or hs > e + tol:
                continue
            ds, de = abs(hs - s), abs(he - e)
            if ds <= tol + EDGE_EPS and de <= tol + EDGE_EPS and ds + de < best_d:
                best, best_d = i, ds + de
        if best >= 0:
            used[best] = True
        hit.append(best >= 0)
    return hit, len(htoks)


def _fill_token(report: MetricReport, n_ref: int, n_hyp: int, n_hit: int) -> MetricReport:
    report.n_ref_tokens, report.n_hyp_tokens, report.n_token_hit = n_ref, n_hyp, n_hit
    report.token_precision = _ratio(n_hit, n_hyp)
    report.token_recall = _ratio(n_hit, n_ref)
    report.token_f1 = _f1(report.token_precision, report.token_recall)
    return report


def token_f1(hyp: TimedBoundarySet, ref: ReferenceAlignment, tol: float) -> MetricReport:
    hits, n_hyp = token_hits(hyp, ref, tol)
    return _fill_token(MetricReport(), len(ref.tokens), n_hyp, sum(hits))


def evaluate_corpus(hyps: dict[str, TimedBoundarySet], refs: dict[str, ReferenceAlignment],
                    tol: float, exclude_final: bool = True) -> MetricReport:
    """Boundary and token scores over all utterances present in ``refs``."""
    missing = set(refs) - set(hyps)
    if missing:
        raise MetricError(f"no hypothesis for utterances: {sorted(missing)[:5]}")
    b = np.zeros(3, dtype=int)
    t = np.zeros(3, dtype=int)
    for utt in sorted(refs):
        ref = refs[utt]
        hyp = hyps[utt]
        b += boundary_counts(hyp, ref.boundary_set(), tol, exclude_final)
        hits, n_hyp = token_hits(hyp, ref, tol)
        t += (len(ref.tokens), n_hyp, sum(hits))
    report = _fill_boundary(MetricReport(), *map(int, b))
    return _fill_token(report, *map(int, t))


@dataclass
class TypeRecall:
    label: str
    recall: float
    count: int
    hits: int


@dataclass
class TypeRecallReport:
    types: list[TypeRecall]
    hit_duration_mean: float
    hit_duration_std: float
    n_hit_tokens: int = 0
    durations: list[float] = field(default_factory=list, repr=False)

    def sorted(self, min_count: int = 1, descending: bool = True) -> list[TypeRecall]:
        rows = [r for r in self.types if r.count >= min_count]
        return sorted(rows, key=lambda r: (-r.recall if descending else r.recall, r.label))

    def table(self, min_count: int = 1, top: int | None = None) -> str:
        rows = self.sorted(min_count)[:top]
        lines = [f"{'Type':<20}{'Recall':>8}{'Count':>7}"]
        lines += [f"{r.label:<20}{r.recall:8.1f}{r.count:7d}" for r in rows]
        lines.append(f"correct token duration {self.hit_duration_mean:.4f} +- {self.hit_duration_std:.4f}")
        return "\n".join(lines) + "\n"


def per_type_recall(pairs: Iterable[tuple[TimedBoundarySet, ReferenceAlignment]], tol: float,
                    min_count: int = 1) -> TypeRecallReport:
    """Token recall per reference label, plus duration statistics of correctly segmented tokens."""
    counts: dict[str, list[int]] = {}
    durations = []
    for hyp, ref in pairs:
        hits, _ = token_hits(hyp, ref, tol)
        for (s, e, label), h in zip(ref.tokens, hits):
            c = counts.setdefault(label, [0, 0])
            c[0] += 1
            c[1] += int(h)
            if h:
                durations.append(e - s)
    types = [TypeRecall(lab, 100.0 * h / n, n, h) for lab, (n, h) in counts.items() if n >= min_count]
    types.sort(key=lambda r: (-r.recall, r.label))
    mean = float(np.mean(durations)) if durations else math.nan
    std = float(np.std(durations)) if durations else math.nan
    return TypeRecallReport(types, mean, std, len(durations), durations)
