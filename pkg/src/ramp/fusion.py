"""Fusing network (k-net + lambda-net), stage-2 training and the inference pipeline."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import SampleSet
from .datastore import Datastore
from .decoder import (
    BinScheme,
    Decoder,
    DecoderOutput,
    bins_of_clamped,
    confidence_features,
    decoder_forward,
    run_epochs,
    top_confidences,
)
from .nonparam import RetrievalProfile, batch_profiles, retrieval_profile
from .tensor import DimensionError, Mlp, softmax, softmax_backward

log = logging.getLogger(__name__)

N_TOP = 8


@dataclass
class FusingNets:
    k_net: Mlp
    lambda_net: Mlp
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.k_net.in_dim != self.K or self.k_net.out_dim != self.K:
            raise DimensionError(f"k-net must map {self.K} distances to {self.K} logits")
        if self.lambda_net.in_dim != self.K + N_TOP + 2 or self.lambda_net.out_dim != 2:
            raise DimensionError(f"lambda-net must map {self.K + N_TOP + 2} inputs to 2 logits")

    @classmethod
    def init(cls, K: int, hidden_dim: int = 32, seed: int = 0) -> "FusingNets":
        rng = np.random.default_rng(seed)
        return cls(
            Mlp.build([K, hidden_dim, K], rng),
            Mlp.build([K + N_TOP + 2, hidden_dim, 2], rng),
            K,
        )

    @property
    def models(self):
        return [self.k_net, self.lambda_net]

    def copy(self) -> "FusingNets":
        return FusingNets(self.k_net.copy(), self.lambda_net.copy(), self.K)

    def to_dict(self):
        return {"K": self.K, "k_net": self.k_net.to_dict(), "lambda_net": self.lambda_net.to_dict()}

    @classmethod
    def from_dict(cls, doc) -> "FusingNets":
        return cls(Mlp.from_dict(doc["k_net"]), Mlp.from_dict(doc["lambda_net"]), int(doc["K"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "FusingNets":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FusionOutput:
    p_knet: np.ndarray
    S_r: float
    w_p: float
    w_r: float
    S: float
    S_p: Optional[float]


@dataclass(frozen=True)
class Prediction:
    id: str
    system_id: str
    score: float
    parts: FusionOutput

    def to_record(self) -> dict:
        p = self.parts
        return {
            "id": self.id,
            "system": self.system_id,
            "score": self.score,
            "s_p": p.S_p,
            "s_r": p.S_r,
            "w_p": p.w_p,
            "w_r": p.w_r,
        }


def knet_forward(nets: FusingNets, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != nets.K:
        raise DimensionError(f"k-net expects {nets.K} distances, got {d.shape[-1]}")
    return softmax(nets.k_net.forward(d))


def aggregate_retrieved(p, profile: RetrievalProfile) -> float:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != profile.scores.shape:
        raise DimensionError(f"{len(p)} k-weights for {len(profile.scores)} retrieval scores")
    return float(_hull(p @ profile.scores, profile.scores))


def _hull(value, scores):
    """Clamp a convex combination of ``scores`` (last axis) back into their range."""
    return np.clip(value, scores.min(axis=-1), scores.max(axis=-1))


def lambda_input(d, c_top, c_Sr, c_Sp) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    c_top = np.asarray(c_top, dtype=np.float64)
    if c_top.shape[-1] != N_TOP:
        raise DimensionError(f"expected {N_TOP} top confidences, got {c_top.shape[-1]}")
    c_Sr = np.asarray(c_Sr, dtype=np.float64)[..., None]
    c_Sp = np.asarray(c_Sp, dtype=np.float64)[..., None]
    return np.concatenate([d, c_top, c_Sr, c_Sp], axis=-1)


def lambdanet_forward(nets: FusingNets, d, c_top, c_Sr, c_Sp):
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != nets.K:
        raise DimensionError(f"lambda-net expects {nets.K} distances, got {d.shape[-1]}")
    w = softmax(nets.lambda_net.forward(lambda_input(d, c_top, c_Sr, c_Sp)))
    return float(w[0]), float(w[1])


def _fuse(w_p, w_r, S_p, S_r):
    S = w_p * S_p + w_r * S_r
    # keep the convex-combination guarantee exact under rounding
    return np.clip(S, np.minimum(S_p, S_r), np.maximum(S_p, S_r))


def predict(embedding, decoder: Decoder, nets: FusingNets, store: Datastore, K: int | None = None,
            sample_id: str = "", system_id: str = "") -> Prediction:
    """Full inference flow for one embedding."""
    K = nets.K if K is None else K
    if K != nets.K:
        raise ValueError(f"K={K} but fusing nets were built for K={nets.K}")
    if store.dim != decoder.in_dim:
        raise DimensionError(f"datastore dim {store.dim} != decoder input dim {decoder.in_dim}")
    out = decoder_forward(decoder, embedding)
    profile = retrieval_profile(store.search(embedding, K), K)
    p = knet_forward(nets, profile.distances)
    S_r = aggregate_retrieved(p, profile)
    c_top, c_Sr, c_Sp = confidence_features(out, S_r, out.score, decoder.scheme)
    w_p, w_r = lambdanet_forward(nets, profile.distances, c_top, c_Sr, c_Sp)
    S = float(_fuse(w_p, w_r, out.score, S_r))
    return Prediction(sample_id, system_id, S, FusionOutput(p, S_r, w_p, w_r, S, out.score))


def predict_np(embedding, nets: FusingNets, store: Datastore, K: int | None = None,
               sample_id: str = "", system_id: str = "") -> Prediction:
    """Non-parametric-only variant: the k-net aggregated retrieval score."""
    K = nets.K if K is None else K
    if K != nets.K:
        raise ValueError(f"K={K} but fusing nets were built for K={nets.K}")
    profile = retrieval_profile(store.search(embedding, K), K)
    p = knet_forward(nets, profile.distances)
    S_r = aggregate_retrieved(p, profile)
    return Prediction(sample_id, system_id, S_r, FusionOutput(p, S_r, 0.0, 1.0, S_r, None))


@dataclass
class FusionInputs:
    """Frozen per-sample quantities fed to the fusing nets."""

    D: np.ndarray  # (n, K) neighbour distances
    S_rk: np.ndarray  # (n, K) per-k retrieval scores
    conf: np.ndarray  # (n, n_bins) decoder confidences
    S_p: np.ndarray  # (n,)
    c_top: np.ndarray  # (n, 8)
    c_Sp: np.ndarray  # (n,)

    def take(self, idx) -> "FusionInputs":
        return FusionInputs(*(a[idx] for a in (self.D, self.S_rk, self.conf, self.S_p, self.c_top, self.c_Sp)))


def fusion_inputs(embeddings, decoder: Decoder | None, store: Datastore, K: int,
                  exclude=None, scheme: BinScheme | None = None) -> FusionInputs:
    X = np.asarray(embeddings, dtype=np.float64)
    if X.shape[1] != store.dim:
        raise DimensionError(f"embedding dim {X.shape[1]} != datastore dim {store.dim}")
    D, S = batch_profiles(store, X, K, exclude)
    if decoder is None:
        n_bins = (scheme or BinScheme()).n_bins
        S_p = np.zeros(len(X))
        conf = np.full((len(X), n_bins), 1.0 / n_bins)
        scheme = scheme or BinScheme()
    else:
        S_p, conf = decoder.forward_batch(X)
        scheme = decoder.scheme
    c_top = top_confidences(conf, N_TOP)
    c_Sp = conf[np.arange(len(X)), bins_of_clamped(S_p, scheme)]
    return FusionInputs(D, S, conf, S_p, c_top, c_Sp)


def fuse_batch(nets: FusingNets, inp: FusionInputs, scheme: BinScheme, cache: bool = False):
    """Batched forward of the k-net, retrieval aggregation, lambda-net and final mix."""
    zk, kcache = nets.k_net.forward_cached(inp.D)
    p = softmax(zk)
    S_r = _hull(np.sum(p * inp.S_rk, axis=1), inp.S_rk)
    c_Sr = inp.conf[np.arange(len(S_r)), bins_of_clamped(S_r, scheme)]
    xl = lambda_input(inp.D, inp.c_top, c_Sr, inp.c_Sp)
    zl, lcache = nets.lambda_net.forward_cached(xl)
    w = softmax(zl)
    S = _fuse(w[:, 0], w[:, 1], inp.S_p, S_r)
    out = {"p": p, "S_r": S_r, "w": w, "S": S, "c_Sr": c_Sr}
    if cache:
        out["_cache"] = (kcache, lcache)
    return out


def stage2_batch_grads(nets: FusingNets, inp: FusionInputs, y, scheme: BinScheme):
    """Mean squared error of the fused score and its gradients for (k_net, lambda_net).

    Retrieval scores, distances and confidences are constants; the bin lookup
    behind the S_r confidence is piecewise constant and contributes no gradient.
    """
    f = fuse_batch(nets, inp, scheme, cache=True)
    kcache, lcache = f["_cache"]
    n = len(y)
    err = f["S"] - y
    loss = float(np.mean(err**2))
    gS = 2.0 * err / n
    w = f["w"]
    gw = np.stack([gS * inp.S_p, gS * f["S_r"]], axis=1)
    lgrads, _ = nets.lambda_net.backward(lcache, softmax_backward(w, gw))
    gSr = gS * w[:, 1]
    gp = gSr[:, None] * inp.S_rk
    kgrads, _ = nets.k_net.backward(kcache, softmax_backward(f["p"], gp))
    return loss, [kgrads, lgrads]


@dataclass
class Stage2Config:
    K: int = 60
    hidden_dim: int = 32
    learning_rate: float = 1e-4
    max_epochs: int = 1000
    patience: int = 20
    batch_size: int = 4
    accum_steps: int = 4
    seed: int = 0

    def __post_init__(self):
        if min(self.K, self.hidden_dim, self.max_epochs, self.batch_size, self.accum_steps) < 1:
            raise ValueError("K, hidden_dim, max_epochs, batch_size and accum_steps must be positive")
        if self.learning_rate <= 0 or self.patience < 0:
            raise ValueError("learning_rate must be positive and patience non-negative")


def train_stage2(train: SampleSet, dev: SampleSet, decoder: Decoder, store: Datastore, cfg: Stage2Config):
    """Fit k-net and lambda-net jointly on the fused-score MSE with the decoder frozen.

    Training queries never retrieve their own datastore entry (matched by id).
    Returns ``(nets, info)``.
    """
    if len(train) == 0 or len(dev) == 0:
        raise ValueError("stage-2 training needs non-empty train and dev sets")
    scheme = decoder.scheme
    exclude = [store.index_of(i) for i in train.ids]
    tr = fusion_inputs(train.embeddings, decoder, store, cfg.K, exclude)
    dv = fusion_inputs(dev.embeddings, decoder, store, cfg.K)
    y, yd = train.scores, dev.scores
    nets = FusingNets.init(cfg.K, cfg.hidden_dim, cfg.seed)

    def batch_grads(idx):
        return stage2_batch_grads(nets, tr.take(idx), y[idx], scheme)

    def dev_loss():
        return float(np.mean((fuse_batch(nets, dv, scheme)["S"] - yd) ** 2))

    def snapshot():
        return [p.copy() for m in nets.models for p in m.parameters()]

    def restore(state):
        for p, saved in zip([p for m in nets.models for p in m.parameters()], state):
            p[...] = saved

    epochs, best, history = run_epochs(nets.models, batch_grads, len(train), dev_loss, cfg, snapshot, restore)
    log.info("stage 2: %d epochs, best dev MSE %.6f", epochs, best)
    return nets, {"epochs": epochs, "best_dev_mse": best, "history": history}


def predict_batch(sset: SampleSet, decoder: Decoder | None, nets: FusingNets, store: Datastore,
                  np_only: bool = False) -> list[Prediction]:
    """Vectorised :func:`predict` / :func:`predict_np` over a sample set."""
    if np_only:
        decoder_used = None
    else:
        if decoder is None:
            raise ValueError("a decoder is required unless np_only is set")
        if decoder.in_dim != store.dim:
            raise DimensionError(f"datastore dim {store.dim} != decoder input dim {decoder.in_dim}")
        decoder_used = decoder
    scheme = decoder.scheme if decoder is not None else BinScheme()
    inp = fusion_inputs(sset.embeddings, decoder_used, store, nets.K, scheme=scheme)
    f = fuse_batch(nets, inp, scheme)
    preds = []
    for i, s in enumerate(sset):
        p = f["p"][i]
        S_r = float(f["S_r"][i])
        if np_only:
            parts = FusionOutput(p, S_r, 0.0, 1.0, S_r, None)
        else:
            w_p, w_r = float(f["w"][i, 0]), float(f["w"][i, 1])
            S_p = float(inp.S_p[i])
            S = float(_fuse(w_p, w_r, S_p, S_r))
            parts = FusionOutput(p, S_r, w_p, w_r, S, S_p)
        preds.append(Prediction(s.id, s.system_id, parts.S, parts))
    return preds


def write_predictions(preds, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_record()) + "\n")


def read_predictions(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed prediction ({exc.msg})") from None
    return out
