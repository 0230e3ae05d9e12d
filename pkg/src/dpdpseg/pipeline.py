"""Chained speech segmentation: features -> units -> unit symbols -> words -> times."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import io as dio
from .aernn import AernnConfig, AernnScorer, TrainConfig, train_aernn
from .core import Segmentation
from .metrics import (
    MetricReport,
    ReferenceAlignment,
    TimedBoundarySet,
    TypeRecallReport,
    evaluate_corpus,
    per_type_recall,
)
from .symbolic import SymbolicSegConfig, segment_corpus
from .units import (
    Codebook,
    FeatureSequence,
    UnitTokenization,
    encode_utterance,
    kmeans_fit,
    merge_encode,
)

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, utterance_id: str | None = None):
        self.stage = stage
        self.utterance_id = utterance_id
        where = f" [{utterance_id}]" if utterance_id else ""
        super().__init__(f"stage {stage}{where}: {message}")


@dataclass
class PipelineConfig:
    features_dir: str = ""
    output_dir: str = "dpdp_out"
    codebook: str = ""
    alignments: str = ""
    unit_lambda: float = 2.0
    word_lambda: float = 3.0
    K: int = 50
    kmeans_iters: int = 50
    unit_mode: str = "dpdp"
    unit_max_len: int = 100
    word_variant: str = "linear"
    word_max_len: int = 50
    aernn_preset: str = "chained"
    aernn_steps: int = 1500
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    frame_period_s: float = 0.0
    tolerance_s: float = 0.02
    workers: int = 1

    def validate(self, check_paths: bool = True) -> None:
        for name in ("word_lambda", "unit_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("K", "kmeans_iters", "unit_max_len", "word_max_len", "aernn_steps",
                     "batch_size", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.tolerance_s < 0 or self.frame_period_s < 0:
            raise ValueError("learning_rate must be positive; tolerance and frame period nonnegative")
        if self.unit_mode not in ("dpdp", "merge"):
            raise ValueError("unit_mode must be 'dpdp' or 'merge'")
        if check_paths:
            for name in ("features_dir", "codebook", "alignments"):
                value = getattr(self, name)
                if value and not Path(value).exists():
                    raise FileNotFoundError(f"{name}: {value} does not exist")
            if not self.features_dir:
                raise ValueError("features_dir is required")

    def items(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        text = "".join(f"{k}={v}\n" for k, v in sorted(self.items().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        """Parse ``key value`` lines; non-None ``overrides`` win over the file."""
        values = dio.read_kv(path) if path else {}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, value in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kind = types[key]
            kwargs[key] = {"int": int, "float": float, "str": str}[kind](value)
        return cls(**kwargs)


@dataclass
class UtteranceWords:
    utterance_id: str
    word_spans: list[tuple[int, int]]
    word_codes: list[tuple[int, ...]]
    times: list[float]
    unit_times: list[float]


@dataclass
class PipelineResult:
    words: dict[str, UtteranceWords]
    units: dict[str, UnitTokenization]
    report: MetricReport | None = None
    type_recall: TypeRecallReport | None = None
    scorer: AernnScorer | None = None
    codebook: Codebook | None = None
    timings: dict[str, float] = field(default_factory=dict)


def write_manifest(path, command: str, config_items: dict, seed: int) -> None:
    digest = hashlib.sha256("".join(f"{k}={v}\n" for k, v in sorted(config_items.items())).encode())
    items = {
        "command": command,
        "config_sha256": digest.hexdigest(),
        "seed": seed,
        "dpdpseg_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    items.update({f"config.{k}": v for k, v in config_items.items()})
    dio.write_kv(path, items)


def _encode_one(args):
    seq, codebook, mode, lam, max_len = args
    if mode == "merge":
        return merge_encode(seq, codebook)
    return encode_utterance(seq, codebook, lam, max_len)


def encode_corpus(seqs: Sequence[FeatureSequence], codebook: Codebook, mode: str = "dpdp",
                  lam: float = 2.0, max_len: int = 100, workers: int = 1) -> list[UnitTokenization]:
    """Tokenize utterances in input order, optionally with a process pool."""
    jobs = [(s, codebook, mode, lam, max_len) for s in seqs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_encode_one, jobs, chunksize=8))
    return [_encode_one(j) for j in jobs]


def words_from_units(tokens: Sequence[UnitTokenization], scorer: AernnScorer,
                     seg_config: SymbolicSegConfig, frame_period_s: float) -> dict[str, UtteranceWords]:
    """Segment unit-symbol strings into words and map word ends to unit end times."""
    segs = segment_corpus(scorer, [t.codes for t in tokens], seg_config)
    return {tok.utterance_id: map_word_times(tok, seg, frame_period_s) for tok, seg in zip(tokens, segs)}


def map_word_times(tok: UnitTokenization, seg: Segmentation, frame_period_s: float) -> UtteranceWords:
    seg.validate(len(tok))
    unit_times = [b * frame_period_s for b in tok.boundaries]
    times = [unit_times[b - 1] for _, b in seg.spans]
    codes = [tuple(tok.codes[a - 1:b]) for a, b in seg.spans]
    return UtteranceWords(tok.utterance_id, list(seg.spans), codes, times, unit_times)


def hyp_boundaries(words: UtteranceWords, terminal: float | None = None) -> TimedBoundarySet:
    """Word boundary set; with ``terminal`` given, boundaries past it are dropped."""
    times = words.times
    if terminal is None:
        return TimedBoundarySet(times, times[-1], words.utterance_id)
    inner = [t for t in times if t < terminal - 1e-9]
    return TimedBoundarySet(inner + [terminal], terminal, words.utterance_id)


def evaluate_words(words: dict[str, UtteranceWords], alignments: dict, tol: float,
                   min_count: int = 1):
    refs = {u: ReferenceAlignment(toks, u) for u, toks in alignments.items() if u in words}
    if not refs:
        raise ValueError("no overlap between alignments and segmented utterances")
    hyps = {u: hyp_boundaries(words[u], refs[u].terminal) for u in refs}
    report = evaluate_corpus(hyps, refs, tol)
    types = per_type_recall(((hyps[u], refs[u]) for u in sorted(refs)), tol, min_count)
    return report, types


def write_words(path, words: dict[str, UtteranceWords]) -> None:
    """``utt<TAB>word end times<TAB>unit codes per word (words separated by '|')``."""
    lines = []
    for utt in sorted(words):
        w = words[utt]
        times = " ".join(f"{t:.6f}" for t in w.times)
        codes = " | ".join(" ".join(map(str, c)) for c in w.word_codes)
        lines.append(f"{utt}\t{times}\t{codes}\n")
    dio._atomic_write(Path(path), "".join(lines).encode())


def read_boundaries(path) -> dict[str, TimedBoundarySet]:
    """Read the first two columns of a words file as boundary sets (last time = terminal)."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        times = [float(t) for t in parts[1].split()]
        out[parts[0]] = TimedBoundarySet(times, times[-1], parts[0])
    return out


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        utt = getattr(exc, "utterance_id", None)
        raise PipelineError(name, f"{type(exc).__name__}: {exc}", utt) from exc


def run_pipeline(config: PipelineConfig, scorer: AernnScorer | None = None) -> PipelineResult:
    """Run every stage, persisting each stage's artifacts under ``output_dir``.

    A supplied ``scorer`` replaces the training stage.
    """
    _stage("config", config.validate)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.txt", "pipeline", config.items(), config.seed)
    timings = {}

    t = time.perf_counter()
    feats, fp = _stage("load", dio.read_feature_dir, config.features_dir, config.frame_period_s or None)
    seqs = []
    for utt, x in feats.items():
        try:
            seqs.append(FeatureSequence(x, fp, utt))
        except ValueError as exc:
            raise PipelineError("load", str(exc), utt) from exc
    timings["load"] = time.perf_counter() - t

    t = time.perf_counter()
    if config.codebook:
        codebook = Codebook(_stage("kmeans", dio.read_matrix, config.codebook), trained_on=config.codebook)
    else:
        codebook = _stage("kmeans", kmeans_fit, seqs, config.K, config.kmeans_iters, config.seed,
                          trained_on=config.features_dir)
        dio.write_matrix(out / "codebook.dpdpf", codebook.codes)
    timings["kmeans"] = time.perf_counter() - t

    t = time.perf_counter()
    tokens = []
    try:
        tokens = encode_corpus(seqs, codebook, config.unit_mode, config.unit_lambda,
                               config.unit_max_len, config.workers)
    except Exception as exc:
        bad = next((s.utterance_id for s in seqs if s.dim != codebook.dim), None)
        raise PipelineError("encode", f"{type(exc).__name__}: {exc}", bad) from exc
    dio.write_units(out / "units.txt", tokens)
    corpus = {tok.utterance_id: tok.codes for tok in tokens}
    dio.write_symbol_corpus(out / "unit_corpus.txt", corpus)
    timings["encode"] = time.perf_counter() - t

    t = time.perf_counter()
    if scorer is None:
        aconf = AernnConfig.preset(config.aernn_preset, codebook.K)
        tconf = TrainConfig(steps=config.aernn_steps, learning_rate=config.learning_rate,
                            batch_size=config.batch_size, seed=config.seed)
        scorer = _stage("train-aernn", train_aernn, list(corpus.values()), aconf, tconf)
        scorer.save(out / "aernn")
    timings["train-aernn"] = time.perf_counter() - t

    t = time.perf_counter()
    seg_config = SymbolicSegConfig(variant=config.word_variant, lam=config.word_lambda,
                                   max_seg_len=config.word_max_len)
    words = _stage("segment-words", words_from_units, tokens, scorer, seg_config, fp)
    write_words(out / "words.txt", words)
    timings["segment-words"] = time.perf_counter() - t

    report = types = None
    if config.alignments:
        t = time.perf_counter()
        alignments = _stage("eval", dio.read_alignments, config.alignments)
        report, types = _stage("eval", evaluate_words, words, alignments, config.tolerance_s)
        (out / "metrics.txt").write_text(report.kv_lines())
        (out / "report.txt").write_text(report.table("DPDP AE-RNN") + "\n" + types.table(min_count=1, top=15))
        timings["eval"] = time.perf_counter() - t
    log.info("pipeline timings: %s", timings)
    return PipelineResult(words, {t.utterance_id: t for t in tokens}, report, types, scorer, codebook, timings)
