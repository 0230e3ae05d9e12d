"""Autoencoding GRU network used as a segment scorer.

The encoder reads a symbol span and projects its final hidden state to a
latent vector; the decoder starts from ``tanh`` of a projection of that
latent and reconstructs the span with teacher forcing. A span's cost is the
summed negative log-likelihood of its symbols (plus an end-of-span marker
when ``use_end`` is set).

Symbols are 1-based. Input embedding row 0 is the decoder start symbol. With
``use_end`` the output layer has ``n_symbols + 1`` classes, class 0 being the
end marker and class ``s`` symbol ``s``; without it class ``s - 1`` is symbol
``s``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as dio

log = logging.getLogger(__name__)

PRESETS = {
    # One 500-d encoder layer, 50-d latent; used on discovered units.
    "chained": dict(d_emb=10, enc_hidden=500, enc_layers=1, d_lat=50, dec_hidden=500),
    # Three 200-d encoder layers, 25-d latent; used on phonemic symbol strings.
    "phonemic": dict(d_emb=10, enc_hidden=200, enc_layers=3, d_lat=25, dec_hidden=200),
}


class TrainingError(RuntimeError):
    pass


@dataclass
class AernnConfig:
    n_symbols: int
    d_emb: int = 10
    enc_hidden: int = 500
    enc_layers: int = 1
    d_lat: int = 50
    dec_hidden: int = 500
    use_end: bool = True
    init_scale: float = 0.08

    @classmethod
    def preset(cls, name: str, n_symbols: int, **overrides) -> "AernnConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(n_symbols=n_symbols, **{**PRESETS[name], **overrides})

    @property
    def n_out(self) -> int:
        return self.n_symbols + 1 if self.use_end else self.n_symbols


@dataclass
class TrainConfig:
    steps: int = 1500
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 100


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(logits):
    m = logits.max(-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(-1, keepdims=True))


def _gru_forward(xp, mask, h, Wh, bh, keep=True):
    """Run a GRU over precomputed input projections ``xp`` (B, L, 3H).

    Masked steps carry the previous state forward unchanged. Returns the
    per-step states (B, L, H) and, if ``keep``, the per-step cache.
    """
    B, L, _ = xp.shape
    H = h.shape[1]
    states = np.empty((B, L, H), dtype=h.dtype)
    cache = []
    for t in range(L):
        hp = h @ Wh + bh
        x_t = xp[:, t]
        r = _sigmoid(x_t[:, :H] + hp[:, :H])
        z = _sigmoid(x_t[:, H:2 * H] + hp[:, H:2 * H])
        hpn = hp[:, 2 * H:]
        n = np.tanh(x_t[:, 2 * H:] + r * hpn)
        h_new = (1.0 - z) * n + z * h
        m = mask[:, t:t + 1]
        if keep:
            cache.append((h, r, z, n, hpn))
        h = m * h_new + (1.0 - m) * h
        states[:, t] = h
    return states, cache


def _gru_backward(d_states, mask, cache, Wh):
    """Backpropagate through :func:`_gru_forward`.

    Returns gradients w.r.t. the input projections, the initial state, ``Wh``
    and ``bh``.
    """
    B, L, H = d_states.shape
    dxp = np.empty((B, L, 3 * H), dtype=d_states.dtype)
    dWh = np.zeros_like(Wh)
    dbh = np.zeros(3 * H, dtype=d_states.dtype)
    dh = np.zeros((B, H), dtype=d_states.dtype)
    for t in range(L - 1, -1, -1):
        h_prev, r, z, n, hpn = cache[t]
        m = mask[:, t:t + 1]
        dh = dh + d_states[:, t]
        dh_new = m * dh
        dh = (1.0 - m) * dh + dh_new * z
        dn_pre = dh_new * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh_new * (h_prev - n) * z * (1.0 - z)
        dr_pre = dn_pre * hpn * r * (1.0 - r)
        dxp[:, t, :H] = dr_pre
        dxp[:, t, H:2 * H] = dz_pre
        dxp[:, t, 2 * H:] = dn_pre
        dhp = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
        dWh += h_prev.T @ dhp
        dbh += dhp.sum(0)
        dh = dh + dhp @ Wh.T
    return dxp, dh, dWh, dbh


def pad(seqs: Sequence[Sequence[int]], fill: int = 0):
    """Right-pad integer sequences; returns ``(ids (B, L), mask (B, L) float)``."""
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), fill, dtype=np.int64)
    mask = np.zeros((len(seqs), L))
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return ids, mask


class AernnModel:
    """Parameters plus forward/backward passes. Trained models are frozen into :class:`AernnScorer`."""

    def __init__(self, config: AernnConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c = config
        s = c.init_scale

        def u(*shape):
            return rng.uniform(-s, s, size=shape).astype(self.dtype)

        p = {"emb": u(c.n_symbols + 1, c.d_emb)}
        d_in = c.d_emb
        for layer in range(c.enc_layers):
            H = c.enc_hidden
            p[f"enc{layer}_Wx"] = u(d_in, 3 * H)
            p[f"enc{layer}_Wh"] = u(H, 3 * H)
            p[f"enc{layer}_bx"] = u(3 * H)
            p[f"enc{layer}_bh"] = u(3 * H)
            d_in = H
        p["lat_W"] = u(c.enc_hidden, c.d_lat)
        p["lat_b"] = u(c.d_lat)
        p["init_W"] = u(c.d_lat, c.dec_hidden)
        p["init_b"] = u(c.dec_hidden)
        p["dec_Wx"] = u(c.d_emb, 3 * c.dec_hidden)
        p["dec_Wh"] = u(c.dec_hidden, 3 * c.dec_hidden)
        p["dec_bx"] = u(3 * c.dec_hidden)
        p["dec_bh"] = u(3 * c.dec_hidden)
        p["out_W"] = u(c.dec_hidden, c.n_out)
        p["out_b"] = u(c.n_out)
        self.params = p

    def astype(self, dtype) -> "AernnModel":
        other = object.__new__(AernnModel)
        other.config = self.config
        other.dtype = np.dtype(dtype)
        other.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return other

    # -- symbol bookkeeping -------------------------------------------------

    def _check_symbols(self, seqs):
        K = self.config.n_symbols
        for s in seqs:
            if len(s) == 0:
                raise ValueError("empty sequence")
            if min(s) < 1 or max(s) > K:
                raise ValueError(f"symbol outside alphabet 1..{K}")

    def _decoder_io(self, seqs):
        """Decoder inputs (start + symbols) and targets (symbols [+ end])."""
        shift = 0 if self.config.use_end else 1
        inputs = [[0] + list(s) for s in seqs]
        if self.config.use_end:
            targets = [[int(v) for v in s] + [0] for s in seqs]
        else:
            inputs = [i[:-1] for i in inputs]
            targets = [[int(v) - shift for v in s] for s in seqs]
        return inputs, targets

    # -- forward / backward --------------------------------------------------

    def forward(self, seqs, keep=True):
        """Teacher-forced reconstruction; returns per-position NLL (B, Ld) masked, plus cache."""
        p, c = self.params, self.config
        ids, mask = pad(seqs)
        mask = mask.astype(self.dtype)
        B = ids.shape[0]
        x = p["emb"][ids]
        enc_cache = []
        for layer in range(c.enc_layers):
            xp = x @ p[f"enc{layer}_Wx"] + p[f"enc{layer}_bx"]
            h0 = np.zeros((B, c.enc_hidden), dtype=self.dtype)
            states, cache = _gru_forward(xp, mask, h0, p[f"enc{layer}_Wh"], p[f"enc{layer}_bh"], keep)
            enc_cache.append((x, cache))
            x = states
        h_enc = x[:, -1]
        lat = h_enc @ p["lat_W"] + p["lat_b"]
        h0 = np.tanh(lat @ p["init_W"] + p["init_b"])

        d_in, d_tg = self._decoder_io(seqs)
        in_ids, dmask = pad(d_in)
        tg_ids, _ = pad(d_tg)
        dmask = dmask.astype(self.dtype)
        dx = p["emb"][in_ids]
        xp = dx @ p["dec_Wx"] + p["dec_bx"]
        dstates, dcache = _gru_forward(xp, dmask, h0, p["dec_Wh"], p["dec_bh"], keep)
        logp = _log_softmax(dstates @ p["out_W"] + p["out_b"])
        nll = -np.take_along_axis(logp, tg_ids[..., None], axis=-1)[..., 0] * dmask
        cache = dict(ids=ids, mask=mask, enc_cache=enc_cache, h_enc=h_enc, lat=lat, h0=h0,
                     in_ids=in_ids, tg_ids=tg_ids, dmask=dmask, dx=dx, dstates=dstates,
                     dcache=dcache, logp=logp)
        return nll, cache

    def loss(self, seqs):
        """Summed NLL over all reconstructed positions, in at least double precision."""
        nll, _ = self.forward(seqs, keep=False)
        return nll.sum(dtype=np.promote_types(self.dtype, np.float64))

    def loss_and_grads(self, seqs, normalize: bool = False):
        """Summed (or per-position mean) NLL and its gradient for every parameter."""
        self._check_symbols(seqs)
        p, c = self.params, self.config
        nll, k = self.forward(seqs, keep=True)
        n_pos = float(k["dmask"].sum())
        scale = 1.0 / n_pos if normalize else 1.0
        loss = float(nll.sum(dtype=np.float64)) * scale
        g = {name: np.zeros_like(v) for name, v in p.items()}

        # Output layer.
        probs = np.exp(k["logp"])
        dlogits = probs
        B, Ld = k["tg_ids"].shape
        np.add.at(dlogits, (np.arange(B)[:, None], np.arange(Ld)[None, :], k["tg_ids"]), -1.0)
        dlogits *= (k["dmask"] * scale)[..., None]
        ds = k["dstates"]
        g["out_W"] = ds.reshape(-1, ds.shape[-1]).T @ dlogits.reshape(-1, c.n_out)
        g["out_b"] = dlogits.sum((0, 1))
        d_dstates = dlogits @ p["out_W"].T

        # Decoder GRU.
        dxp, dh0, g["dec_Wh"], g["dec_bh"] = _gru_backward(d_dstates, k["dmask"], k["dcache"], p["dec_Wh"])
        g["dec_Wx"] = k["dx"].reshape(-1, c.d_emb).T @ dxp.reshape(-1, dxp.shape[-1])
        g["dec_bx"] = dxp.sum((0, 1))
        d_demb = dxp @ p["dec_Wx"].T
        np.add.at(g["emb"], k["in_ids"], d_demb * k["dmask"][..., None])

        # Latent bridge.
        dpre = dh0 * (1.0 - k["h0"] ** 2)
        g["init_W"] = k["lat"].T @ dpre
        g["init_b"] = dpre.sum(0)
        dlat = dpre @ p["init_W"].T
        g["lat_W"] = k["h_enc"].T @ dlat
        g["lat_b"] = dlat.sum(0)
        dh_enc = dlat @ p["lat_W"].T

        # Encoder stack, top to bottom.
        L = k["ids"].shape[1]
        d_states = np.zeros((B, L, c.enc_hidden), dtype=self.dtype)
        d_states[:, -1] = dh_enc
        for layer in range(c.enc_layers - 1, -1, -1):
            x_in, cache = k["enc_cache"][layer]
            dxp, _, g[f"enc{layer}_Wh"], g[f"enc{layer}_bh"] = _gru_backward(
                d_states, k["mask"], cache, p[f"enc{layer}_Wh"])
            g[f"enc{layer}_Wx"] = x_in.reshape(-1, x_in.shape[-1]).T @ dxp.reshape(-1, dxp.shape[-1])
            g[f"enc{layer}_bx"] = dxp.sum((0, 1))
            d_states = dxp @ p[f"enc{layer}_Wx"].T
        np.add.at(g["emb"], k["ids"], d_states * k["mask"][..., None])
        return loss, g


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(params[k].dtype)


def _length_buckets(lengths: Sequence[int], batch_size: int) -> list[np.ndarray]:
    order = np.argsort(lengths, kind="stable")
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


@dataclass
class TrainingLog:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    initial_loss: float = math.nan
    final_loss: float = math.nan
    seconds: float = 0.0


def train_aernn(corpus: Sequence[Sequence[int]], config: AernnConfig, train: TrainConfig | None = None,
                dtype=np.float32) -> "AernnScorer":
    """Fit the autoencoder to reconstruct each full utterance, then freeze it.

    Utterances are bucketed by length into batches; each step draws one
    bucket at random and takes one Adam step on the mean per-position NLL.
    """
    train = train or TrainConfig()
    corpus = [list(map(int, s)) for s in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    model = AernnModel(config, seed=train.seed, dtype=dtype)
    model._check_symbols(corpus)
    rng = np.random.default_rng(train.seed + 1)
    buckets = _length_buckets([len(s) for s in corpus], train.batch_size)
    opt = Adam(model.params, train.learning_rate, train.beta1, train.beta2, train.eps)
    tlog = TrainingLog()
    t0 = time.perf_counter()
    probe = [corpus[i] for i in buckets[len(buckets) // 2]]
    tlog.initial_loss = float(model.loss(probe)) / sum(len(s) + int(config.use_end) for s in probe)
    for step in range(1, train.steps + 1):
        batch = [corpus[i] for i in buckets[rng.integers(len(buckets))]]
        loss, grads = model.loss_and_grads(batch, normalize=True)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss or gradient at step {step} (loss={loss}); "
                                f"batch lengths {[len(s) for s in batch]}")
        opt.step(model.params, grads)
        if step % train.log_every == 0 or step == train.steps:
            tlog.steps.append(step)
            tlog.losses.append(loss)
            log.info("step %d loss %.4f", step, loss)
    tlog.final_loss = float(model.loss(probe)) / sum(len(s) + int(config.use_end) for s in probe)
    tlog.seconds = time.perf_counter() - t0
    return AernnScorer(model, train, tlog)


class AernnScorer:
    """A frozen trained autoencoder used as a read-only segment cost provider."""

    def __init__(self, model: AernnModel, train: TrainConfig | None = None,
                 training_log: TrainingLog | None = None):
        self.model = model
        self.config = model.config
        self.train_config = train or TrainConfig()
        self.training_log = training_log or TrainingLog()
        for v in model.params.values():
            v.flags.writeable = False
        self._fingerprint = self.fingerprint()

    @property
    def params(self):
        return self.model.params

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for k in sorted(self.model.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.model.params[k]).tobytes())
        return h.hexdigest()

    # -- scoring --------------------------------------------------------------

    def position_nll(self, span: Sequence[int]) -> np.ndarray:
        """Per-position negative log-likelihoods for one span (debug trace)."""
        self.model._check_symbols([span])
        nll, _ = self.model.forward([list(span)], keep=False)
        return nll[0].astype(np.float64)

    def span_cost(self, span: Sequence[int]) -> float:
        return float(self.position_nll(span).sum())

    def reconstruct(self, span: Sequence[int]) -> list[int]:
        """Greedy free-running decode of ``span``'s latent, ``len(span)`` steps long."""
        self.model._check_symbols([span])
        p, shift = self.model.params, 0 if self.config.use_end else 1
        lat = self._encode_suffixes([list(span)])[:, len(span) - 1]
        h = np.tanh(lat @ p["init_W"] + p["init_b"])
        prev, out = 0, []
        for _ in range(len(span)):
            xp = (p["emb"][[prev]] @ p["dec_Wx"] + p["dec_bx"])[:, None]
            states, _ = _gru_forward(xp, np.ones((1, 1), dtype=h.dtype), h, p["dec_Wh"], p["dec_bh"], keep=False)
            h = states[:, 0]
            logits = h @ p["out_W"] + p["out_b"]
            if self.config.use_end:
                logits[:, 0] = -np.inf
            prev = int(logits.argmax()) + shift
            out.append(prev)
        return out

    def _decode_nll(self, lat, spans):
        """Summed NLL for equal-length spans given their latents."""
        p = self.model.params
        d_in, d_tg = self.model._decoder_io(spans)
        in_ids = np.asarray(d_in, dtype=np.int64)
        tg_ids = np.asarray(d_tg, dtype=np.int64)
        h = np.tanh(lat @ p["init_W"] + p["init_b"])
        xp = p["emb"][in_ids] @ p["dec_Wx"] + p["dec_bx"]
        mask = np.ones(in_ids.shape, dtype=self.model.dtype)
        states, _ = _gru_forward(xp, mask, h, p["dec_Wh"], p["dec_bh"], keep=False)
        logp = _log_softmax(states @ p["out_W"] + p["out_b"])
        nll = -np.take_along_axis(logp, tg_ids[..., None], axis=-1)[..., 0]
        return nll.astype(np.float64).sum(1)

    def _encode_suffixes(self, suffixes):
        """Latent vector after each prefix of each suffix: (N, Lmax, d_lat)."""
        p, c = self.model.params, self.config
        ids, mask = pad(suffixes)
        mask = mask.astype(self.model.dtype)
        x = p["emb"][ids]
        for layer in range(c.enc_layers):
            xp = x @ p[f"enc{layer}_Wx"] + p[f"enc{layer}_bx"]
            h0 = np.zeros((len(suffixes), c.enc_hidden), dtype=self.model.dtype)
            x, _ = _gru_forward(xp, mask, h0, p[f"enc{layer}_Wh"], p[f"enc{layer}_bh"], keep=False)
        return x @ p["lat_W"] + p["lat_b"]

    def cost_tables(self, seqs: Sequence[Sequence[int]], max_seg_len: int,
                    chunk_spans: int = 20000) -> list[np.ndarray]:
        """Span costs for every start and length up to ``max_seg_len``, per sequence.

        Encoder passes are shared across spans with a common start; decoder
        passes are batched across spans of equal length.
        """
        seqs = [list(map(int, s)) for s in seqs]
        self.model._check_symbols(seqs)
        tables = [np.full((len(s), max_seg_len), np.inf) for s in seqs]
        # Group utterances so each group holds roughly chunk_spans spans.
        groups, cur, n = [], [], 0
        for i, s in enumerate(seqs):
            cur.append(i)
            n += len(s) * min(len(s), max_seg_len)
            if n >= chunk_spans:
                groups.append(cur)
                cur, n = [], 0
        if cur:
            groups.append(cur)

        for group in groups:
            suffixes, owners = [], []
            for i in group:
                s = seqs[i]
                for a in range(len(s)):
                    suffixes.append(s[a:a + max_seg_len])
                    owners.append((i, a))
            lat = self._encode_suffixes(suffixes)
            by_len: dict[int, list[int]] = {}
            for j, suf in enumerate(suffixes):
                for length in range(1, len(suf) + 1):
                    by_len.setdefault(length, []).append(j)
            for length, js in by_len.items():
                js_arr = np.asarray(js)
                costs = self._decode_nll(lat[js_arr, length - 1], [suffixes[j][:length] for j in js])
                for j, cost in zip(js, costs):
                    i, a = owners[j]
                    tables[i][a, length - 1] = cost
        if self.fingerprint() != self._fingerprint:
            raise RuntimeError("scorer parameters changed during scoring")
        return tables

    # -- persistence -----------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        shapes = {}
        for name, v in self.model.params.items():
            dio.write_matrix(directory / f"{name}{dio.FEATURE_SUFFIX}", v.reshape(1, -1) if v.ndim == 1 else v)
            shapes[name] = list(v.shape)
        manifest = {
            "format": "dpdpseg-aernn/1",
            "config": asdict(self.config),
            "train": asdict(self.train_config),
            "shapes": shapes,
            "fingerprint": self.fingerprint(),
            "training_log": asdict(self.training_log),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, directory) -> "AernnScorer":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        config = AernnConfig(**manifest["config"])
        model = object.__new__(AernnModel)
        model.config = config
        model.dtype = np.dtype(np.float32)
        model.params = {}
        for name, shape in manifest["shapes"].items():
            model.params[name] = dio.read_matrix(directory / f"{name}{dio.FEATURE_SUFFIX}").reshape(shape).copy()
        tc = TrainConfig(**manifest["train"])
        tl = TrainingLog(**manifest.get("training_log", {}))
        return cls(model, tc, tl)


def uniform_scorer(n_symbols: int, use_end: bool = False, **config) -> AernnScorer:
    """A scorer whose decoder outputs the uniform distribution everywhere."""
    model = AernnModel(AernnConfig(n_symbols=n_symbols, use_end=use_end, **config), dtype=np.float64)
    model.params["out_W"][:] = 0.0
    model.params["out_b"][:] = 0.0
    return AernnScorer(model)
