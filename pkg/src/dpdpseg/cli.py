"""Command-line entry point: ``dpdpseg <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as dio

log = logging.getLogger("dpdpseg")


def _features(args):
    from .units import FeatureSequence

    feats, fp = dio.read_feature_dir(args.features, args.frame_period)
    return [FeatureSequence(x, fp, utt) for utt, x in feats.items()], fp


def cmd_kmeans(args):
    from .units import kmeans_fit

    seqs, _ = _features(args)
    cb = kmeans_fit(seqs, args.K, args.iters, args.seed, trained_on=str(args.features))
    dio.write_matrix(args.out, cb.codes)
    print(f"K {cb.K} D {cb.dim} iterations {len(cb.inertia_history)} inertia {cb.inertia_history[-1]:.6g}")


def _tokenize(args, mode):
    from .pipeline import encode_corpus
    from .units import Codebook

    seqs, _ = _features(args)
    cb = Codebook(dio.read_matrix(args.codebook), trained_on=str(args.codebook))
    lam = getattr(args, "lam", 0.0)
    max_len = getattr(args, "max_len", 100)
    tokens = encode_corpus(seqs, cb, mode, lam, max_len, args.workers)
    dio.write_units(args.out, tokens)
    n_units = sum(len(t) for t in tokens)
    n_frames = sum(t.n_frames for t in tokens)
    print(f"utterances {len(tokens)} units {n_units} frames {n_frames}")


def cmd_encode(args):
    _tokenize(args, "dpdp")


def cmd_merge(args):
    _tokenize(args, "merge")


def _symbol_corpus(args):
    if args.units:
        return {t.utterance_id: t.codes for t in dio.read_units(args.units)}
    return dio.read_symbol_corpus(args.corpus)


def cmd_train_aernn(args):
    from .aernn import AernnConfig, TrainConfig, train_aernn

    corpus = _symbol_corpus(args)
    K = args.alphabet_size or max(max(s) for s in corpus.values())
    aconf = AernnConfig.preset(args.preset, K, use_end=not args.no_end)
    tconf = TrainConfig(steps=args.steps, learning_rate=args.lr, batch_size=args.batch_size, seed=args.seed)
    scorer = train_aernn(list(corpus.values()), aconf, tconf)
    scorer.save(args.out)
    tl = scorer.training_log
    print(f"trained {tconf.steps} steps in {tl.seconds:.1f}s; probe loss {tl.initial_loss:.4f} -> {tl.final_loss:.4f}")


def _seg_config(args):
    from .symbolic import SymbolicSegConfig

    return SymbolicSegConfig(variant=args.variant, lam=args.lam, gamma_shape=args.gamma_shape,
                             gamma_scale=args.gamma_scale, geometric_p=args.geometric_p,
                             max_seg_len=args.max_len)


def cmd_segment_words(args):
    from .aernn import AernnScorer
    from .pipeline import words_from_units, write_words
    from .symbolic import segment_corpus

    scorer = AernnScorer.load(args.scorer)
    config = _seg_config(args)
    if args.units:
        tokens = dio.read_units(args.units)
        words = words_from_units(tokens, scorer, config, args.frame_period)
        write_words(args.out, words)
        print(f"utterances {len(words)} words {sum(len(w.times) for w in words.values())}")
        return
    corpus = dio.read_symbol_corpus(args.corpus)
    segs = segment_corpus(scorer, list(corpus.values()), config)
    lines = [f"{utt}\t{' '.join(str(e) for e in seg.ends)}\n" for utt, seg in zip(corpus, segs)]
    dio._atomic_write(Path(args.out), "".join(lines).encode())
    print(f"utterances {len(segs)} words {sum(len(s) for s in segs)}")


def cmd_pipeline(args):
    from .pipeline import PipelineConfig, run_pipeline

    overrides = {k: v for k, v in vars(args).items()
                 if k in PipelineConfig.__dataclass_fields__ and v is not None}
    config = PipelineConfig.from_file(args.config, **overrides)
    result = run_pipeline(config)
    print(f"wrote {config.output_dir}")
    if result.report is not None:
        print(result.report.table("DPDP AE-RNN"), end="")
        print(result.report.kv_lines(), end="")


def cmd_eval(args):
    from .metrics import ReferenceAlignment, evaluate_corpus, per_type_recall
    from .pipeline import read_boundaries

    hyps = read_boundaries(args.hyp)
    refs = {u: ReferenceAlignment(t, u) for u, t in dio.read_alignments(args.ref).items()}
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise ValueError(f"hypothesis missing {len(missing)} utterances, e.g. {missing[0]}")
    from .metrics import TimedBoundarySet

    clipped = {}
    for u, ref in refs.items():
        inner = [b for b in hyps[u].boundaries if b < ref.terminal - 1e-9]
        clipped[u] = TimedBoundarySet(inner + [ref.terminal], ref.terminal, u)
    report = evaluate_corpus(clipped, refs, args.tol)
    print(report.table(args.name), end="")
    print(report.kv_lines(), end="")
    if args.per_type:
        types = per_type_recall(((clipped[u], refs[u]) for u in sorted(refs)), args.tol)
        print(types.table(min_count=args.min_count, top=args.per_type), end="")


def cmd_gen_speechlike(args):
    from .synth import SpeechlikeConfig, generate_synthetic_speechlike

    cfg = SpeechlikeConfig(n_utterances=args.n, n_codes=args.codes, dim=args.dim,
                           lexicon_size=args.lexicon, word_len=tuple(args.word_len),
                           words_per_utt=tuple(args.words_per_utt), zipf_exponent=args.zipf,
                           noise_sigma=args.sigma,
                           frame_period_s=args.frame_period or 0.01, seed=args.seed)
    data = generate_synthetic_speechlike(cfg)
    out = Path(args.out)
    dio.write_feature_dir(out / "features", data.features, data.frame_period_s)
    dio.write_alignments(out / "words.txt", data.word_alignments)
    dio.write_alignments(out / "units.txt", data.unit_alignments)
    print(f"wrote {len(data.features)} utterances to {out}")


def cmd_gen_symbolic(args):
    from .synth import SymbolicConfig, generate_synthetic_symbolic

    cfg = SymbolicConfig(n_utterances=args.n, lexicon_size=args.lexicon, word_len=tuple(args.word_len),
                         zipf_exponent=args.zipf, syllabic=not args.random_words, seed=args.seed)
    data = generate_synthetic_symbolic(cfg)
    out = Path(args.out)
    dio.write_symbol_corpus(out / "corpus.txt", data.corpus)
    dio.write_alignments(out / "words.txt", data.alignments())
    print(f"wrote {len(data.corpus)} utterances over {data.alphabet_size} symbols to {out}")


def cmd_oracle_check(args):
    from .core import DurationPenalty, brute_force_segment, constrained_k_segment, dpdp_segment

    rng = np.random.default_rng(args.seed)
    bad_opt = bad_dual = 0
    for _ in range(args.n):
        T = int(rng.integers(2, args.max_T + 1))
        table = rng.uniform(0, 1, size=(T, T))

        def cost(seq, a, b, table=table):
            return float(table[a - 1, b - 1])

        seq = list(range(T))
        lam = float(rng.uniform(0, 5))
        pen = DurationPenalty.linear(lam)
        dp = dpdp_segment(seq, cost, pen)
        bad_opt += dp.total_cost != brute_force_segment(seq, cost, pen).total_cost
        seg_sum = 0.0
        for a, b in dp.spans:
            seg_sum += cost(seq, a, b)
        bad_dual += constrained_k_segment(seq, cost, len(dp)).total_cost != seg_sum
    print(f"optimality {'PASS' if not bad_opt else 'FAIL'} {args.n - bad_opt}/{args.n}")
    print(f"duality {'PASS' if not bad_dual else 'FAIL'} {args.n - bad_dual}/{args.n}")
    if bad_opt or bad_dual:
        raise RuntimeError("oracle mismatch")


def _add_seg_args(p):
    p.add_argument("--variant", choices=("linear", "hsmm"), default="linear")
    p.add_argument("--lam", type=float, default=3.0)
    p.add_argument("--gamma-shape", type=float, default=7.0)
    p.add_argument("--gamma-scale", type=float, default=1.0)
    p.add_argument("--geometric-p", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpdpseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def features_args(p):
        p.add_argument("--features", required=True, help="directory of per-utterance feature files")
        p.add_argument("--frame-period", type=float, default=None, help="seconds per frame")

    p = sub.add_parser("kmeans", help="fit a K-means codebook")
    features_args(p)
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kmeans)

    for name, fn in (("encode", cmd_encode), ("merge", cmd_merge)):
        p = sub.add_parser(name, help=f"{name} features into unit tokenizations")
        features_args(p)
        p.add_argument("--codebook", required=True)
        if name == "encode":
            p.add_argument("--lam", type=float, default=2.0)
            p.add_argument("--max-len", type=int, default=100)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("train-aernn", help="train the autoencoding scorer")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus")
    src.add_argument("--units")
    p.add_argument("--alphabet-size", type=int, default=None)
    p.add_argument("--preset", choices=("chained", "phonemic"), default="chained")
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--no-end", action="store_true", help="drop the end-of-segment symbol")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_aernn)

    p = sub.add_parser("segment-words", help="segment symbol or unit strings into words")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus")
    src.add_argument("--units")
    p.add_argument("--scorer", required=True)
    p.add_argument("--frame-period", type=float, default=0.01)
    _add_seg_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment_words)

    p = sub.add_parser("pipeline", help="run the chained system end to end")
    p.add_argument("--config", default=None, help="key-value config file")
    p.add_argument("--features-dir", dest="features_dir")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--codebook")
    p.add_argument("--alignments")
    p.add_argument("--unit-lambda", dest="unit_lambda", type=float)
    p.add_argument("--word-lambda", dest="word_lambda", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--unit-mode", dest="unit_mode", choices=("dpdp", "merge"))
    p.add_argument("--aernn-preset", dest="aernn_preset", choices=("chained", "phonemic"))
    p.add_argument("--aernn-steps", dest="aernn_steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--frame-period-s", dest="frame_period_s", type=float)
    p.add_argument("--tolerance-s", dest="tolerance_s", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="score word boundaries against reference alignments")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--tol", type=float, default=0.02)
    p.add_argument("--name", default="")
    p.add_argument("--per-type", type=int, default=0, metavar="N", help="show the N best-recalled types")
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-speechlike", help="generate synthetic features with alignments")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--codes", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--lexicon", type=int, default=20)
    p.add_argument("--word-len", type=int, nargs=2, default=(2, 4))
    p.add_argument("--words-per-utt", type=int, nargs=2, default=(2, 6))
    p.add_argument("--zipf", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--frame-period", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_speechlike)

    p = sub.add_parser("gen-symbolic", help="generate a synthetic symbol corpus")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--lexicon", type=int, default=50)
    p.add_argument("--word-len", type=int, nargs=2, default=(2, 8))
    p.add_argument("--zipf", type=float, default=1.0)
    p.add_argument("--random-words", action="store_true", help="unstructured instead of syllabic words")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_symbolic)

    p = sub.add_parser("oracle-check", help="compare the DP against brute force on random instances")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--max-T", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        stage = getattr(exc, "stage", args.command)
        msg = str(exc) if str(exc).startswith("stage ") else f"stage {stage}: {exc}"
        print(f"dpdpseg: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
