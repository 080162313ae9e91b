"""Labelled embedding samples: NDJSON ingestion, seeded splits and a synthetic generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

SCORE_MIN = 1.0
SCORE_MAX = 5.0
_KEYS = {"id", "system", "mos", "emb"}


class SampleFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    id: str
    system_id: str
    embedding: np.ndarray
    score: Optional[float]

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return (
            self.id == other.id
            and self.system_id == other.system_id
            and self.score == other.score
            and np.array_equal(self.embedding, other.embedding)
        )


@dataclass(frozen=True)
class SampleSet:
    samples: tuple
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.dim < 1:
            raise ValueError("dim must be positive")
        seen = set()
        for s in self.samples:
            if len(s.embedding) != self.dim:
                raise SampleFormatError(f"sample {s.id!r} has dim {len(s.embedding)}, expected {self.dim}")
            if s.id in seen:
                raise SampleFormatError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def embeddings(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, self.dim))
        return np.stack([s.embedding for s in self.samples])

    @property
    def scores(self) -> np.ndarray:
        return np.array([s.score for s in self.samples], dtype=np.float64)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def system_ids(self) -> list[str]:
        return [s.system_id for s in self.samples]

    def by_id(self) -> dict:
        return {s.id: s for s in self.samples}


def _check_score(score, lo, hi, where):
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
        raise SampleFormatError(f"{where}: mos must be a finite number")
    if not lo <= score <= hi:
        raise SampleFormatError(f"{where}: mos {score} outside [{lo}, {hi}]")


def parse_samples(
    path,
    score_range: tuple = (SCORE_MIN, SCORE_MAX),
    require_score: bool = True,
) -> SampleSet:
    """Read an NDJSON sample file.

    Each line is ``{"id": str, "system": str, "mos": number, "emb": [number, ...]}``.
    With ``require_score=False`` the ``mos`` key may be absent (prediction inputs).
    """
    lo, hi = score_range
    samples, dim, ids = [], None, set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SampleFormatError(f"{where}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise SampleFormatError(f"{where}: expected a JSON object")
            unknown = set(rec) - _KEYS
            if unknown:
                raise SampleFormatError(f"{where}: unknown keys {sorted(unknown)}")
            required = _KEYS if require_score else _KEYS - {"mos"}
            missing = required - set(rec)
            if missing:
                raise SampleFormatError(f"{where}: missing keys {sorted(missing)}")
            if not isinstance(rec["id"], str) or not isinstance(rec["system"], str):
                raise SampleFormatError(f"{where}: id and system must be strings")
            score = rec.get("mos")
            if score is not None:
                _check_score(score, lo, hi, where)
                score = float(score)
            elif require_score:
                raise SampleFormatError(f"{where}: mos is required")
            emb = rec["emb"]
            if not isinstance(emb, list) or not emb:
                raise SampleFormatError(f"{where}: emb must be a non-empty list")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in emb):
                raise SampleFormatError(f"{where}: emb entries must be numbers")
            vec = np.asarray(emb, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise SampleFormatError(f"{where}: emb entries must be finite")
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise SampleFormatError(f"{where}: embedding dim {len(vec)} != {dim} (line 1)")
            if rec["id"] in ids:
                raise SampleFormatError(f"{where}: duplicate id {rec['id']!r}")
            ids.add(rec["id"])
            samples.append(LabeledSample(rec["id"], rec["system"], vec, score))
    if not samples:
        raise SampleFormatError(f"{path}: no samples")
    return SampleSet(samples, dim)


def sample_to_json(s: LabeledSample) -> str:
    rec = {"id": s.id, "system": s.system_id}
    if s.score is not None:
        rec["mos"] = float(s.score)
    rec["emb"] = [float(v) for v in s.embedding]
    return json.dumps(rec)


def write_samples(sset: SampleSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sset:
            fh.write(sample_to_json(s) + "\n")


def split(sset: SampleSet, ratios=(0.7, 0.15, 0.15), seed: int = 0):
    """Seeded shuffle then contiguous cut into (train, dev, test).

    Sizes are ``floor(ratio * n)`` for train and dev; test takes the remainder.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    n = len(sset)
    if n < 3:
        raise ValueError(f"cannot split {n} samples into 3 partitions")
    n_train = int(math.floor(ratios[0] * n + 1e-9))
    n_dev = int(math.floor(ratios[1] * n + 1e-9))
    if n_train == 0 or n_dev == 0 or n - n_train - n_dev == 0:
        raise ValueError(f"{n} samples are too few for ratios {ratios}")
    order = np.random.default_rng(seed).permutation(n)
    items = [sset.samples[i] for i in order]
    cuts = (items[:n_train], items[n_train : n_train + n_dev], items[n_train + n_dev :])
    return tuple(SampleSet(part, sset.dim) for part in cuts)


@dataclass
class SyntheticConfig:
    """Desk-scale stand-in for SSL embeddings of scored utterances.

    Every system draws a latent quality ``q = 1 + 4 * Beta(2, 5)`` (long right tail)
    and a random unit direction. An utterance embedding is ``direction * q`` plus
    isotropic Gaussian noise of ``noise_sigma``; its score is ``q`` plus N(0, 0.2)
    noise, clamped to [1, 5]. With a shift, ``embedding_shift`` is added to every
    embedding and ``score_shift`` to every score before clamping.
    """

    dim: int = 16
    n_systems: int = 20
    utterances_per_system: int = 10
    noise_sigma: float = 0.3
    seed: int = 0
    embedding_shift: Optional[Sequence[float]] = None
    score_shift: float = 0.0
    score_noise: float = 0.2
    system_prefix: str = "sys"

    def __post_init__(self):
        if min(self.dim, self.n_systems, self.utterances_per_system) < 1:
            raise ValueError("dim, n_systems and utterances_per_system must be positive")
        if self.noise_sigma < 0 or self.score_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if self.embedding_shift is not None and len(self.embedding_shift) != self.dim:
            raise ValueError(f"embedding_shift must have {self.dim} entries")


def gen_synthetic(cfg: SyntheticConfig) -> SampleSet:
    rng = np.random.default_rng(cfg.seed)
    q = SCORE_MIN + (SCORE_MAX - SCORE_MIN) * rng.beta(2.0, 5.0, size=cfg.n_systems)
    dirs = rng.normal(size=(cfg.n_systems, cfg.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    n_utt = cfg.utterances_per_system
    noise = rng.normal(scale=1.0, size=(cfg.n_systems, n_utt, cfg.dim)) * cfg.noise_sigma
    score_noise = rng.normal(scale=1.0, size=(cfg.n_systems, n_utt)) * cfg.score_noise
    shift = np.zeros(cfg.dim) if cfg.embedding_shift is None else np.asarray(cfg.embedding_shift, float)

    width = len(str(cfg.n_systems - 1))
    uwidth = len(str(n_utt - 1))
    samples = []
    for s in range(cfg.n_systems):
        sys_id = f"{cfg.system_prefix}{s:0{width}d}"
        for u in range(n_utt):
            emb = dirs[s] * q[s] + noise[s, u] + shift
            score = float(np.clip(q[s] + score_noise[s, u] + cfg.score_shift, SCORE_MIN, SCORE_MAX))
            samples.append(LabeledSample(f"{sys_id}_u{u:0{uwidth}d}", sys_id, emb, score))
    return SampleSet(samples, cfg.dim)


def concat(sets: Iterable[SampleSet]) -> SampleSet:
    sets = list(sets)
    return SampleSet([s for ss in sets for s in ss], sets[0].dim)
