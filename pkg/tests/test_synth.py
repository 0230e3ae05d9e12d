import numpy as np
import pytest
from scipy.stats import spearmanr

from dpdpseg.metrics import ReferenceAlignment, TimedBoundarySet, evaluate_corpus
from dpdpseg.symbolic import TransitionModel
from dpdpseg.synth import (
    SpeechlikeConfig,
    SymbolicConfig,
    generate_synthetic_speechlike,
    generate_synthetic_symbolic,
    zipf_probs,
)


def test_speechlike_deterministic():
    a = generate_synthetic_speechlike(SpeechlikeConfig(n_utterances=5, seed=4))
    b = generate_synthetic_speechlike(SpeechlikeConfig(n_utterances=5, seed=4))
    for k in a.features:
        assert a.features[k].tobytes() == b.features[k].tobytes()
    assert a.word_alignments == b.word_alignments


def test_speechlike_structure():
    data = generate_synthetic_speechlike(SpeechlikeConfig(n_utterances=10, seed=1))
    for utt, x in data.features.items():
        ends = data.unit_ends[utt]
        assert ends[-1] == len(x)
        lengths = np.diff([0] + ends)
        assert lengths.min() >= 5 and lengths.max() <= 20
        assert set(data.word_ends[utt]) <= set(ends)
        ReferenceAlignment(data.word_alignments[utt], utt)
        codes = [lab for _, _, lab in data.unit_alignments[utt]]
        assert all(c1 != c2 for c1, c2 in zip(codes, codes[1:]))


def test_symbolic_deterministic():
    a = generate_synthetic_symbolic(SymbolicConfig(n_utterances=50, seed=9))
    b = generate_synthetic_symbolic(SymbolicConfig(n_utterances=50, seed=9))
    assert a.corpus == b.corpus and a.word_ends == b.word_ends


@pytest.mark.parametrize("make", [
    lambda: generate_synthetic_speechlike(SpeechlikeConfig(n_utterances=2600, lexicon_size=50, dim=2, seed=0)),
    lambda: generate_synthetic_symbolic(SymbolicConfig(n_utterances=3000, seed=0)),
])
def test_zipf_rank_order(make):
    data = make()
    counts = np.bincount(data.word_tokens, minlength=50)
    assert counts.sum() >= 10_000
    rho, _ = spearmanr(counts, zipf_probs(50, 1.0))
    assert rho > 0.9


def test_single_word_lexicon():
    data = generate_synthetic_symbolic(SymbolicConfig(n_utterances=20, lexicon_size=1, seed=0))
    word = data.lexicon[0]
    for utt, syms in data.corpus.items():
        n = len(syms) // len(word)
        assert syms == list(word) * n
        ends = [len(word) * (i + 1) for i in range(n)]
        hyp = {utt: TimedBoundarySet.from_ends(ends, utterance_id=utt)}
        ref = {utt: ReferenceAlignment(data.alignments()[utt], utt)}
        assert evaluate_corpus(hyp, ref, 0).token_f1 == 100


def test_transition_baseline_beats_chance():
    data = generate_synthetic_symbolic(SymbolicConfig(n_utterances=500, seed=0))
    utts = list(data.corpus)
    refs = {u: ReferenceAlignment(data.alignments()[u], u) for u in utts}
    tm = TransitionModel(list(data.corpus.values()), data.alphabet_size)
    hyp = {u: TimedBoundarySet.from_ends(tm.segment(data.corpus[u]).ends, utterance_id=u) for u in utts}
    rate = sum(len(h.internal()) for h in hyp.values()) / sum(len(s) - 1 for s in data.corpus.values())
    rng = np.random.default_rng(0)
    chance = {}
    for u in utts:
        T = len(data.corpus[u])
        ends = [t for t in range(1, T) if rng.random() < rate] + [T]
        chance[u] = TimedBoundarySet.from_ends(ends, utterance_id=u)
    assert evaluate_corpus(hyp, refs, 0).f1 > evaluate_corpus(chance, refs, 0).f1


def test_invalid_configs():
    with pytest.raises(ValueError):
        generate_synthetic_speechlike(SpeechlikeConfig(n_codes=2, word_len=(3, 3), lexicon_size=10))
    with pytest.raises(ValueError):
        generate_synthetic_symbolic(SymbolicConfig(word_len=(3, 2)))
    with pytest.raises(ValueError):
        generate_synthetic_symbolic(SymbolicConfig(lexicon_size=10, word_len=(1, 1), n_consonants=1, n_vowels=1))
