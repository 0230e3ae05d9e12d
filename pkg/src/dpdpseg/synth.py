"""Synthetic corpora with known word and unit boundaries.

Two generators: ``generate_synthetic_speechlike`` renders a Zipfian artificial
language as noisy piecewise-constant feature frames, and
``generate_synthetic_symbolic`` emits the same kind of language directly as
symbol strings built from consonant-vowel syllables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def zipf_probs(n: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=float)
    p = ranks ** -exponent
    return p / p.sum()


@dataclass
class SpeechlikeConfig:
    n_utterances: int = 100
    n_codes: int = 20
    dim: int = 16
    lexicon_size: int = 20
    word_len: tuple[int, int] = (2, 4)
    words_per_utt: tuple[int, int] = (2, 6)
    frames_per_unit: tuple[int, int] = (5, 20)
    zipf_exponent: float = 1.0
    noise_sigma: float = 0.05
    frame_period_s: float = 0.01
    seed: int = 0

    def validate(self):
        lo, hi = self.word_len
        if self.n_utterances < 1 or self.n_codes < 2 or self.dim < 1 or self.lexicon_size < 1:
            raise ValueError("counts must be positive (and at least two codes)")
        if not 1 <= lo <= hi or not 1 <= self.words_per_utt[0] <= self.words_per_utt[1]:
            raise ValueError("invalid length range")
        if not 1 <= self.frames_per_unit[0] <= self.frames_per_unit[1]:
            raise ValueError("invalid frames_per_unit range")
        if self.noise_sigma < 0 or self.zipf_exponent < 0 or self.frame_period_s <= 0:
            raise ValueError("noise, exponent and frame period must be nonnegative/positive")
        # Distinct words without adjacent repeats need enough strings of length hi.
        if self.n_codes * (self.n_codes - 1) ** (hi - 1) < self.lexicon_size:
            raise ValueError("lexicon_size too large for n_codes and word_len")


@dataclass
class SyntheticSpeech:
    features: dict[str, np.ndarray]
    word_alignments: dict[str, list[tuple[float, float, str]]]
    unit_alignments: dict[str, list[tuple[float, float, str]]]
    unit_ends: dict[str, list[int]]
    word_ends: dict[str, list[int]]
    code_vectors: np.ndarray
    lexicon: list[tuple[int, ...]]
    frame_period_s: float
    word_tokens: list[int] = field(default_factory=list)


def _sample_lexicon(rng, n_words, n_symbols, length_range, no_repeats=True):
    lexicon, seen = [], set()
    lo, hi = length_range
    while len(lexicon) < n_words:
        length = int(rng.integers(lo, hi + 1))
        word = [int(rng.integers(n_symbols))]
        while len(word) < length:
            s = int(rng.integers(n_symbols))
            if no_repeats and s == word[-1]:
                continue
            word.append(s)
        word = tuple(word)
        if word not in seen:
            seen.add(word)
            lexicon.append(word)
    return lexicon


def _sample_word_sequence(rng, probs, n_words, lexicon, avoid_junction_repeat):
    words = []
    while len(words) < n_words:
        w = int(rng.choice(len(probs), p=probs))
        if avoid_junction_repeat and words and lexicon[words[-1]][-1] == lexicon[w][0]:
            continue
        words.append(w)
    return words


def generate_synthetic_speechlike(config: SpeechlikeConfig | None = None) -> SyntheticSpeech:
    """Render a Zipfian lexicon of code strings as noisy feature frames.

    Each code is held for ``frames_per_unit`` frames; adjacent units never
    share a code (within words by construction, across words by resampling
    the next word), so every reference unit boundary is observable.
    """
    cfg = config or SpeechlikeConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    code_vectors = rng.normal(size=(cfg.n_codes, cfg.dim))
    lexicon = _sample_lexicon(rng, cfg.lexicon_size, cfg.n_codes, cfg.word_len)
    probs = zipf_probs(cfg.lexicon_size, cfg.zipf_exponent)

    out = SyntheticSpeech({}, {}, {}, {}, {}, code_vectors, lexicon, cfg.frame_period_s)
    fp = cfg.frame_period_s
    for u in range(cfg.n_utterances):
        utt = f"utt{u:05d}"
        n_words = int(rng.integers(cfg.words_per_utt[0], cfg.words_per_utt[1] + 1))
        words = _sample_word_sequence(rng, probs, n_words, lexicon, avoid_junction_repeat=True)
        out.word_tokens.extend(words)
        frames, unit_ends, word_ends, units, wtoks = [], [], [], [], []
        t = 0
        for w in words:
            w_start = t
            for code in lexicon[w]:
                n = int(rng.integers(cfg.frames_per_unit[0], cfg.frames_per_unit[1] + 1))
                frames.append(np.repeat(code_vectors[code][None, :], n, axis=0))
                units.append((t * fp, (t + n) * fp, str(code + 1)))
                t += n
                unit_ends.append(t)
            wtoks.append((w_start * fp, t * fp, f"w{w}"))
            word_ends.append(t)
        x = np.concatenate(frames)
        if cfg.noise_sigma > 0:
            x = x + rng.normal(scale=cfg.noise_sigma, size=x.shape)
        out.features[utt] = x
        out.unit_alignments[utt] = units
        out.word_alignments[utt] = wtoks
        out.unit_ends[utt] = unit_ends
        out.word_ends[utt] = word_ends
    return out


@dataclass
class SymbolicConfig:
    n_utterances: int = 5000
    n_consonants: int = 10
    n_vowels: int = 5
    lexicon_size: int = 50
    word_len: tuple[int, int] = (2, 8)
    words_per_utt: tuple[int, int] = (1, 6)
    zipf_exponent: float = 1.0
    syllabic: bool = True
    seed: int = 0

    @property
    def alphabet_size(self) -> int:
        return self.n_consonants + self.n_vowels

    def validate(self):
        lo, hi = self.word_len
        if self.n_utterances < 1 or self.lexicon_size < 1:
            raise ValueError("counts must be positive")
        if self.n_consonants < 1 or self.n_vowels < 1:
            raise ValueError("need at least one consonant and one vowel")
        if not 1 <= lo <= hi or not 1 <= self.words_per_utt[0] <= self.words_per_utt[1]:
            raise ValueError("invalid length range")
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be nonnegative")


@dataclass
class SyntheticSymbolic:
    corpus: dict[str, list[int]]
    word_ends: dict[str, list[int]]
    word_labels: dict[str, list[str]]
    lexicon: list[tuple[int, ...]]
    alphabet_size: int
    word_tokens: list[int] = field(default_factory=list)

    def alignments(self) -> dict[str, list[tuple[float, float, str]]]:
        """Word tokens as (start, end, label) in symbol-index units."""
        out = {}
        for utt, ends in self.word_ends.items():
            starts = [0] + ends[:-1]
            out[utt] = [(float(s), float(e), lab)
                        for s, e, lab in zip(starts, ends, self.word_labels[utt])]
        return out


def _syllabic_word(rng, length, n_cons, n_vow):
    # Alternate consonants (1..n_cons) and vowels (n_cons+1..), starting with either.
    vowel = bool(rng.integers(2))
    word = []
    for _ in range(length):
        word.append(n_cons + 1 + int(rng.integers(n_vow)) if vowel else 1 + int(rng.integers(n_cons)))
        vowel = not vowel
    return tuple(word)


def generate_synthetic_symbolic(config: SymbolicConfig | None = None) -> SyntheticSymbolic:
    """Utterances of Zipf-distributed words whose symbols alternate consonant/vowel.

    Sharing the same syllable inventory across words makes symbol bigram
    statistics only weakly informative about word boundaries, as with
    phonemic transcriptions.
    """
    cfg = config or SymbolicConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    lexicon, seen = [], set()
    attempts = 0
    while len(lexicon) < cfg.lexicon_size:
        attempts += 1
        if attempts > 1000 * cfg.lexicon_size:
            raise ValueError("cannot draw enough distinct words; widen word_len or the alphabet")
        length = int(rng.integers(cfg.word_len[0], cfg.word_len[1] + 1))
        if cfg.syllabic:
            word = _syllabic_word(rng, length, cfg.n_consonants, cfg.n_vowels)
        else:
            word = tuple(1 + int(v) for v in rng.integers(cfg.alphabet_size, size=length))
        if word not in seen:
            seen.add(word)
            lexicon.append(word)
    probs = zipf_probs(cfg.lexicon_size, cfg.zipf_exponent)

    out = SyntheticSymbolic({}, {}, {}, lexicon, cfg.alphabet_size)
    for u in range(cfg.n_utterances):
        utt = f"utt{u:05d}"
        n_words = int(rng.integers(cfg.words_per_utt[0], cfg.words_per_utt[1] + 1))
        words = _sample_word_sequence(rng, probs, n_words, lexicon, avoid_junction_repeat=False)
        out.word_tokens.extend(words)
        syms, ends = [], []
        for w in words:
            syms.extend(lexicon[w])
            ends.append(len(syms))
        out.corpus[utt] = syms
        out.word_ends[utt] = ends
        out.word_labels[utt] = [f"w{w}" for w in words]
    return out
