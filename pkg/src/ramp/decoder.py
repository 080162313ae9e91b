"""Parametric decoder: shared ReLU trunk, regression head and score-bin classifier."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import SCORE_MAX, SCORE_MIN, SampleSet
from .tensor import (
    Adam,
    AdamConfig,
    DenseLayer,
    DimensionError,
    Mlp,
    cross_entropy_logits_grad,
    cross_entropy_loss,
    mse_loss,
    softmax,
    EPS_LOG,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BinScheme:
    score_min: float = SCORE_MIN
    score_max: float = SCORE_MAX
    bin_width: float = 0.25

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.n_bins < 2:
            raise ValueError("a bin scheme needs at least 2 bins")

    @property
    def n_bins(self) -> int:
        return int(math.ceil((self.score_max - self.score_min) / self.bin_width - 1e-12))

    def to_dict(self):
        return {"score_min": self.score_min, "score_max": self.score_max, "bin_width": self.bin_width}


def bin_of(score: float, scheme: BinScheme) -> int:
    if not scheme.score_min <= score <= scheme.score_max:
        raise ValueError(f"score {score} outside [{scheme.score_min}, {scheme.score_max}]")
    b = int(math.floor((score - scheme.score_min) / scheme.bin_width))
    return min(max(b, 0), scheme.n_bins - 1)


def bins_of_clamped(scores, scheme: BinScheme) -> np.ndarray:
    s = np.clip(np.asarray(scores, dtype=np.float64), scheme.score_min, scheme.score_max)
    b = np.floor((s - scheme.score_min) / scheme.bin_width).astype(np.int64)
    return np.clip(b, 0, scheme.n_bins - 1)


@dataclass(frozen=True)
class DecoderOutput:
    score: float
    confidences: np.ndarray


@dataclass
class Decoder:
    trunk: Mlp
    reg_head: Mlp
    cls_head: Mlp
    scheme: BinScheme = field(default_factory=BinScheme)

    def __post_init__(self):
        if self.trunk.out_dim != self.reg_head.in_dim or self.trunk.out_dim != self.cls_head.in_dim:
            raise DimensionError("trunk output does not feed both heads")
        if self.reg_head.out_dim != 1:
            raise DimensionError("regression head must output one value")
        if self.cls_head.out_dim != self.scheme.n_bins:
            raise DimensionError(
                f"classification head outputs {self.cls_head.out_dim} logits for {self.scheme.n_bins} bins"
            )

    @classmethod
    def init(cls, in_dim: int, hidden_dim: int, scheme: BinScheme, seed: int) -> "Decoder":
        rng = np.random.default_rng(seed)
        return cls(
            Mlp([DenseLayer.glorot(in_dim, hidden_dim, rng, "relu")]),
            Mlp([DenseLayer.glorot(hidden_dim, 1, rng)]),
            Mlp([DenseLayer.glorot(hidden_dim, scheme.n_bins, rng)]),
            scheme,
        )

    @property
    def in_dim(self) -> int:
        return self.trunk.in_dim

    @property
    def models(self):
        return [self.trunk, self.reg_head, self.cls_head]

    def forward_batch(self, X):
        """Scores (n,) and confidences (n, n_bins) for a batch of embeddings."""
        h = self.trunk.forward(X)
        return self.reg_head.forward(h)[..., 0], softmax(self.cls_head.forward(h))

    def copy(self) -> "Decoder":
        return Decoder(self.trunk.copy(), self.reg_head.copy(), self.cls_head.copy(), self.scheme)

    def to_dict(self):
        return {
            "trunk": self.trunk.to_dict(),
            "reg_head": self.reg_head.to_dict(),
            "cls_head": self.cls_head.to_dict(),
            "bin_scheme": self.scheme.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc) -> "Decoder":
        return cls(
            Mlp.from_dict(doc["trunk"]),
            Mlp.from_dict(doc["reg_head"]),
            Mlp.from_dict(doc["cls_head"]),
            BinScheme(**doc["bin_scheme"]),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Decoder":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def decoder_forward(decoder: Decoder, embedding) -> DecoderOutput:
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("decoder_forward takes a single embedding vector")
    score, conf = decoder.forward_batch(x)
    return DecoderOutput(float(score), conf)


def stage1_loss(out: DecoderOutput, target_score: float, scheme: BinScheme, alpha: float) -> float:
    return mse_loss(out.score, target_score) + alpha * cross_entropy_loss(
        out.confidences, bin_of(target_score, scheme)
    )


def stage1_batch_grads(decoder: Decoder, X, y, bins, alpha: float):
    """Mean multi-task loss over a batch and its gradients for (trunk, reg_head, cls_head)."""
    n = len(y)
    h, tcache = decoder.trunk.forward_cached(X)
    reg, rcache = decoder.reg_head.forward_cached(h)
    logits, ccache = decoder.cls_head.forward_cached(h)
    probs = softmax(logits)
    rows = np.arange(n)
    err = reg[:, 0] - y
    loss = np.mean(err**2) + alpha * np.mean(-np.log(probs[rows, bins] + EPS_LOG))
    g_reg = (2.0 * err / n)[:, None]
    g_logits = alpha * cross_entropy_logits_grad(probs, bins) / n
    rgrads, gh_r = decoder.reg_head.backward(rcache, g_reg)
    cgrads, gh_c = decoder.cls_head.backward(ccache, g_logits)
    tgrads, _ = decoder.trunk.backward(tcache, gh_r + gh_c)
    return float(loss), [tgrads, rgrads, cgrads]


def dataset_loss(decoder: Decoder, sset: SampleSet, alpha: float) -> float:
    X, y = sset.embeddings, sset.scores
    bins = bins_of_clamped(y, decoder.scheme)
    return stage1_batch_grads(decoder, X, y, bins, alpha)[0]


@dataclass
class Stage1Config:
    alpha: float = 1.0
    hidden_dim: int = 64
    learning_rate: float = 1e-4
    max_epochs: int = 1000
    patience: int = 20
    batch_size: int = 4
    accum_steps: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if min(self.hidden_dim, self.max_epochs, self.batch_size, self.accum_steps) < 1:
            raise ValueError("hidden_dim, max_epochs, batch_size and accum_steps must be positive")
        if self.learning_rate <= 0 or self.patience < 0:
            raise ValueError("learning_rate must be positive and patience non-negative")


def _sum_into(acc, grads):
    if acc is None:
        return [[(dW.copy(), db.copy()) for dW, db in g] for g in grads]
    for a, g in zip(acc, grads):
        for i, (dW, db) in enumerate(g):
            np.add(a[i][0], dW, out=a[i][0])
            np.add(a[i][1], db, out=a[i][1])
    return acc


def _scaled(acc, factor):
    return [[(dW * factor, db * factor) for dW, db in g] for g in acc]


def run_epochs(models, batch_grads, n_train, dev_loss, cfg, snapshot, restore):
    """Shared epoch loop: seeded shuffling, gradient accumulation, Adam, early stopping.

    ``batch_grads(idx)`` returns ``(loss, grads)`` for a batch of training indices,
    ``dev_loss()`` scores the current parameters. Keeps the best-dev snapshot.
    Returns ``(epochs_run, best_dev, history)``.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(models, AdamConfig(cfg.learning_rate))
    best = dev_loss()
    best_state = snapshot()
    stale = 0
    history = []
    epochs = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        acc, pending = None, 0
        for start in range(0, n_train, cfg.batch_size):
            _, grads = batch_grads(order[start : start + cfg.batch_size])
            acc = _sum_into(acc, grads)
            pending += 1
            if pending == cfg.accum_steps:
                opt.step(_scaled(acc, 1.0 / pending))
                acc, pending = None, 0
        if pending:
            opt.step(_scaled(acc, 1.0 / pending))
        epochs += 1
        current = dev_loss()
        history.append(current)
        if current < best:
            best, best_state, stale = current, snapshot(), 0
        else:
            stale += 1
        log.debug("epoch %d dev loss %.6f (best %.6f)", epoch + 1, current, best)
        if stale >= cfg.patience:
            break
    restore(best_state)
    return epochs, best, history


def train_stage1(train: SampleSet, dev: SampleSet, cfg: Stage1Config, scheme: BinScheme | None = None):
    """Fit the decoder with the MSE + alpha * cross-entropy objective.

    Returns ``(decoder, info)``; ``info`` has the epochs run and the best dev loss.
    """
    if len(train) == 0 or len(dev) == 0:
        raise ValueError("stage-1 training needs non-empty train and dev sets")
    if train.dim != dev.dim:
        raise DimensionError(f"train dim {train.dim} != dev dim {dev.dim}")
    scheme = scheme or BinScheme()
    decoder = Decoder.init(train.dim, cfg.hidden_dim, scheme, cfg.seed)
    X, y = train.embeddings, train.scores
    bins = bins_of_clamped(y, scheme)
    Xd, yd = dev.embeddings, dev.scores
    bins_d = bins_of_clamped(yd, scheme)

    def batch_grads(idx):
        return stage1_batch_grads(decoder, X[idx], y[idx], bins[idx], cfg.alpha)

    def dev_loss():
        return stage1_batch_grads(decoder, Xd, yd, bins_d, cfg.alpha)[0]

    def snapshot():
        return [p.copy() for m in decoder.models for p in m.parameters()]

    def restore(state):
        for p, saved in zip([p for m in decoder.models for p in m.parameters()], state):
            p[...] = saved

    epochs, best, history = run_epochs(
        decoder.models, batch_grads, len(train), dev_loss, cfg, snapshot, restore
    )
    log.info("stage 1: %d epochs, best dev loss %.6f", epochs, best)
    return decoder, {"epochs": epochs, "best_dev_loss": best, "history": history}


def confidence_features(out: DecoderOutput, S_r: float, S_p: float, scheme: BinScheme):
    """Top-8 confidences (descending) and the confidences of the bins holding S_r and S_p."""
    conf = np.asarray(out.confidences)
    c_top = top_confidences(conf[None, :])[0]
    b_r, b_p = bins_of_clamped([S_r, S_p], scheme)
    return c_top, float(conf[b_r]), float(conf[b_p])


def top_confidences(conf: np.ndarray, n: int = 8) -> np.ndarray:
    srt = -np.sort(-conf, axis=-1)
    if srt.shape[-1] < n:
        pad = np.zeros(srt.shape[:-1] + (n - srt.shape[-1],))
        srt = np.concatenate([srt, pad], axis=-1)
    return srt[..., :n]
