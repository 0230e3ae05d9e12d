import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpdpseg.core import (
    DurationPenalty,
    Segmentation,
    SegmentationError,
    brute_force_segment,
    constrained_k_segment,
    dpdp_segment,
    span_cost_table,
)


class TableCost:
    """Cost provider backed by a dense random table, addressed by (a, b)."""

    def __init__(self, table):
        self.table = table

    def cost(self, seq, a, b):
        return float(self.table[a - 1, b - 1])


def random_instance(rng, t_lo=2, t_hi=10):
    T = int(rng.integers(t_lo, t_hi + 1))
    table = rng.uniform(0, 1, size=(T, T))
    return list(range(T)), TableCost(table)


def seg_only_total(seg, cost, seq):
    total = 0.0
    for a, b in seg.spans:
        total = total + cost.cost(seq, a, b)
    return total


def test_single_element():
    seg = dpdp_segment([0], lambda s, a, b: 5.0, DurationPenalty.linear(2.0))
    assert seg.spans == ((1, 1),)


def test_figure_path_shape():
    # "alongtime": make the "along" and "time" spans the only cheap ones.
    seq = list("alongtime")
    cheap = {(1, 5): 0.0, (6, 9): 0.0}
    seg = dpdp_segment(seq, lambda s, a, b: cheap.get((a, b), 10.0), DurationPenalty.none())
    assert seg.spans == ((1, 5), (6, 9))
    assert seg.total_cost == 0.0


def test_empty_input():
    with pytest.raises(SegmentationError, match="empty input"):
        dpdp_segment([], lambda s, a, b: 0.0)


def test_infeasible_truncation():
    # Only spans of length >= 3 are finite, but the truncation forbids them.
    pen = DurationPenalty(kind="gamma_pmf", lam=1.0, truncation=2)
    with pytest.raises(SegmentationError, match="no feasible segmentation"):
        dpdp_segment(list(range(5)), lambda s, a, b: math.inf if b - a < 2 else 0.0, pen)


def test_brute_force_examples():
    seg = brute_force_segment([0, 0, 0], lambda s, a, b: float(b - a + 1), DurationPenalty.none())
    assert seg.total_cost == 3
    seg = brute_force_segment([0] * 4, lambda s, a, b: 0.0 if (a, b) == (1, 4) else 1.0,
                              DurationPenalty.none())
    assert seg.spans == ((1, 4),)
    assert seg.total_cost == 0
    with pytest.raises(SegmentationError, match="oracle size limit"):
        brute_force_segment([0] * 17, lambda s, a, b: 0.0)


def test_dp_matches_brute_force_random_suite():
    rng = np.random.default_rng(0)
    for _ in range(200):
        seq, cost = random_instance(rng)
        pen = DurationPenalty.linear(float(rng.uniform(0, 5)))
        dp = dpdp_segment(seq, cost, pen)
        bf = brute_force_segment(seq, cost, pen)
        assert dp.total_cost == bf.total_cost
        dp.validate(len(seq))


def test_dp_matches_brute_force_with_max_len_and_gamma():
    rng = np.random.default_rng(1)
    for _ in range(50):
        seq, cost = random_instance(rng, 3, 10)
        L = int(rng.integers(2, 5))
        pen = DurationPenalty(kind="gamma_pmf", lam=1.0, gamma_shape=3.0, truncation=L + 1,
                              segment_constant=float(rng.uniform(0, 2)))
        dp = dpdp_segment(seq, cost, pen, max_seg_len=L)
        bf = brute_force_segment(seq, cost, pen, max_seg_len=L)
        assert dp.total_cost == bf.total_cost
        assert max(dp.lengths) <= L


def test_total_cost_recomputes():
    rng = np.random.default_rng(2)
    seq, cost = random_instance(rng, 8, 8)
    pen = DurationPenalty.linear(0.7)
    seg = dpdp_segment(seq, cost, pen)
    recomputed = sum(cost.cost(seq, a, b) + 0.7 * (1 - (b - a + 1)) for a, b in seg.spans)
    assert seg.total_cost == pytest.approx(recomputed, rel=1e-9)


def test_tie_break_prefers_longest_final_segment():
    seg = dpdp_segment([0] * 4, lambda s, a, b: 0.0, DurationPenalty.none())
    assert seg.spans == ((1, 4),)


def test_constrained_k_edges():
    rng = np.random.default_rng(3)
    seq, cost = random_instance(rng, 6, 6)
    assert constrained_k_segment(seq, cost, 6).spans == tuple((i, i) for i in range(1, 7))
    assert constrained_k_segment(seq, cost, 1).spans == ((1, 6),)
    with pytest.raises(SegmentationError, match="infeasible segment count"):
        constrained_k_segment(seq, cost, 7)
    with pytest.raises(SegmentationError, match="infeasible segment count"):
        constrained_k_segment(seq, cost, 2, max_seg_len=2)


def test_constrained_k_matches_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(50):
        seq, cost = random_instance(rng, 2, 9)
        T = len(seq)
        k = int(rng.integers(1, T + 1))
        best = math.inf
        for cuts in itertools.combinations(range(1, T), k - 1):
            seg = Segmentation.from_ends(list(cuts) + [T])
            best = min(best, seg_only_total(seg, cost, seq))
        got = constrained_k_segment(seq, cost, k)
        assert len(got) == k
        assert got.total_cost == best


def test_duality_with_linear_penalty():
    rng = np.random.default_rng(5)
    for _ in range(100):
        seq, cost = random_instance(rng)
        pen = DurationPenalty.linear(float(rng.uniform(0, 5)))
        dp = dpdp_segment(seq, cost, pen)
        ck = constrained_k_segment(seq, cost, len(dp))
        assert ck.total_cost == seg_only_total(dp, cost, seq)


def test_over_segmentation_limit():
    # Every single element is strictly cheaper than any longer span.
    seg = dpdp_segment(list(range(7)), lambda s, a, b: 0.0 if a == b else 1.0 + (b - a),
                       DurationPenalty.linear(0.0))
    assert len(seg) == 7


def test_span_count_monotone_in_lambda():
    rng = np.random.default_rng(6)
    for _ in range(30):
        seq, cost = random_instance(rng, 4, 12)
        counts = [len(dpdp_segment(seq, cost, DurationPenalty.linear(lam)))
                  for lam in np.arange(0, 10.5, 0.5)]
        assert all(c1 >= c2 for c1, c2 in zip(counts, counts[1:]))


def test_gamma_penalty_values():
    pen = DurationPenalty(kind="gamma_pmf", lam=1.0, gamma_shape=3.0, gamma_scale=2.0, truncation=10)
    p = np.exp(-pen.w_dur(np.arange(1, 11)))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.isinf(pen.w_dur([11])[0])
    assert list(DurationPenalty.linear(1.0).w_dur([1, 2, 5])) == [0.0, -1.0, -4.0]
    assert list(DurationPenalty.none().w_dur([1, 9])) == [0.0, 0.0]


def test_hsmm_segment_constant():
    pen = DurationPenalty.hsmm(geometric_p=0.25)
    assert pen.lam == 1.0
    assert pen.segment_constant == pytest.approx(-math.log(0.75))


def test_precomputed_table_matches_provider():
    rng = np.random.default_rng(7)
    seq, cost = random_instance(rng, 9, 9)
    table = span_cost_table(seq, cost, 9)
    pen = DurationPenalty.linear(1.3)
    assert dpdp_segment(seq, cost, pen, max_seg_len=9) == dpdp_segment(seq, None, pen, 9, seg_table=table)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.floats(0, 5), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_cover_and_optimality_property(T, lam, max_len, seed):
    rng = np.random.default_rng(seed)
    cost = TableCost(rng.uniform(0, 1, size=(T, T)))
    seq = list(range(T))
    pen = DurationPenalty.linear(lam)
    seg = dpdp_segment(seq, cost, pen, max_seg_len=max_len)
    seg.validate(T)
    assert max(seg.lengths) <= max_len
    assert seg.total_cost == brute_force_segment(seq, cost, pen, max_seg_len=max_len).total_cost
