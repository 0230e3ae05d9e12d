import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpdpseg.aernn import AernnConfig, TrainConfig, train_aernn, uniform_scorer
from dpdpseg.core import brute_force_segment
from dpdpseg.metrics import ReferenceAlignment, TimedBoundarySet, evaluate_corpus
from dpdpseg.symbolic import (
    AernnCost,
    SymbolicSegConfig,
    SymbolSequence,
    TransitionModel,
    aernn_segment_cost,
    segment_corpus,
    segment_symbols,
    transition_prob_segment,
)
from dpdpseg.synth import SymbolicConfig, generate_synthetic_symbolic

SMALL = dict(d_emb=8, enc_hidden=32, enc_layers=1, d_lat=16, dec_hidden=32)


@pytest.fixture(scope="module")
def small_corpus():
    data = generate_synthetic_symbolic(SymbolicConfig(n_utterances=300, lexicon_size=10, word_len=(2, 4),
                                                      words_per_utt=(1, 4), seed=2))
    config = AernnConfig(n_symbols=data.alphabet_size, **SMALL)
    scorer = train_aernn(list(data.corpus.values()), config, TrainConfig(steps=200, learning_rate=5e-3))
    return data, scorer


def test_single_symbol():
    seg = segment_symbols(uniform_scorer(5), [3])
    assert seg.spans == ((1, 1),)


def test_uniform_cost_through_provider():
    seq = SymbolSequence([1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 10)
    assert aernn_segment_cost(uniform_scorer(10), seq, 2, 4) == pytest.approx(3 * np.log(10), abs=1e-4)


def test_span_limit_is_infinite():
    provider = AernnCost(uniform_scorer(3), max_seg_len=2)
    assert provider.cost([1, 2, 3], 1, 3) == np.inf
    assert np.isfinite(provider.cost([1, 2, 3], 2, 3))
    with pytest.raises(IndexError):
        provider.cost([1, 2, 3], 0, 2)


def test_symbol_sequence_validation():
    with pytest.raises(ValueError):
        SymbolSequence([], 3)
    with pytest.raises(ValueError):
        SymbolSequence([1, 4], 3)


def test_hsmm_forces_unit_weight():
    assert SymbolicSegConfig(variant="hsmm", lam=7.0).lam == 1.0
    with pytest.raises(ValueError):
        SymbolicSegConfig(variant="other")


def test_matches_brute_force(small_corpus):
    data, scorer = small_corpus
    seqs = [s for s in data.corpus.values() if len(s) <= 12][:50]
    assert len(seqs) == 50
    for variant in ("linear", "hsmm"):
        config = SymbolicSegConfig(variant=variant, gamma_shape=3.0)
        for seq in seqs[:25]:
            seg = segment_symbols(scorer, seq, config)
            seg.validate(len(seq))
            oracle = brute_force_segment(seq, AernnCost(scorer, config.span_limit), config.penalty,
                                         config.span_limit)
            assert seg.total_cost == pytest.approx(oracle.total_cost, rel=1e-9, abs=1e-9)


def test_batched_corpus_matches_per_utterance(small_corpus):
    data, scorer = small_corpus
    seqs = list(data.corpus.values())[:30]
    config = SymbolicSegConfig(lam=1.0)
    batched = segment_corpus(scorer, seqs, config)
    for seq, seg in zip(seqs, batched):
        single = segment_symbols(scorer, seq, config)
        assert seg.total_cost == pytest.approx(single.total_cost, rel=1e-5)
    again = segment_corpus(scorer, seqs, config)
    assert [s.spans for s in again] == [s.spans for s in batched]


def test_hsmm_respects_truncation():
    scorer = uniform_scorer(4)
    config = SymbolicSegConfig(variant="hsmm", truncation=5, max_seg_len=50)
    seg = segment_symbols(scorer, [1, 2, 3, 4] * 6, config)
    assert max(seg.lengths) <= 5


def test_hsmm_spans_below_fifty():
    seg = segment_symbols(uniform_scorer(4), [1, 2, 3, 4] * 30, SymbolicSegConfig(variant="hsmm", gamma_shape=45))
    assert max(seg.lengths) <= 50


def test_transition_no_boundary_inside_bound_pair():
    rng = np.random.default_rng(0)
    corpus = []
    for _ in range(20):
        utt = []
        for _ in range(int(rng.integers(2, 6))):
            utt += [1, 2] if rng.random() < 0.5 else [int(rng.integers(3, 6))]
        corpus.append(utt)
    model = TransitionModel(corpus, 5)
    for utt in corpus:
        ends = set(model.segment(utt).ends)
        for t in range(len(utt) - 1):
            if utt[t] == 1 and utt[t + 1] == 2:
                assert t + 1 not in ends


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_transition_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    corpus = [list(rng.integers(1, 6, size=int(rng.integers(1, 12)))) for _ in range(15)]
    perm = np.concatenate([[0], rng.permutation(5) + 1])
    relabeled = [[int(perm[s]) for s in u] for u in corpus]
    m1, m2 = TransitionModel(corpus, 5), TransitionModel(relabeled, 5)
    for u, v in zip(corpus, relabeled):
        assert m1.segment(u).spans == m2.segment(v).spans


def test_transition_edge_cases():
    assert transition_prob_segment([[1, 2, 1]], [2]).spans == ((1, 1),)
    assert TransitionModel([[1, 2]]).segment([1, 2]).spans == ((1, 2),)


def test_aernn_beats_transition_baseline(small_corpus):
    data, scorer = small_corpus
    utts = list(data.corpus)[:150]
    seqs = [data.corpus[u] for u in utts]
    refs = {u: ReferenceAlignment(data.alignments()[u], u) for u in utts}
    tm = TransitionModel(list(data.corpus.values()), data.alphabet_size)
    tp = {u: TimedBoundarySet.from_ends(tm.segment(s).ends, utterance_id=u) for u, s in zip(utts, seqs)}
    segs = segment_corpus(scorer, seqs, SymbolicSegConfig(variant="hsmm", gamma_shape=3.0))
    dp = {u: TimedBoundarySet.from_ends(g.ends, utterance_id=u) for u, g in zip(utts, segs)}
    assert evaluate_corpus(dp, refs, 0).f1 > evaluate_corpus(tp, refs, 0).f1
