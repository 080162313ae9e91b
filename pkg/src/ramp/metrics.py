"""Utterance- and system-level MSE, Pearson, Spearman and Kendall tau-b."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

METRIC_NAMES = ("mse", "lcc", "srcc", "ktau")


class DegenerateCorrelationWarning(UserWarning):
    """A correlation input had zero variance (or no untied pairs); the result is reported as 0."""


def _pair(pred, truth, min_len=1):
    x = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(truth, dtype=np.float64).reshape(-1)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} predictions vs {len(y)} targets")
    if len(x) < min_len:
        raise ValueError(f"need at least {min_len} values, got {len(x)}")
    return x, y


# math.fsum keeps every reduction correctly rounded, so results do not depend on input order.
def _mean(v) -> float:
    return math.fsum(v) / len(v)


def mse(pred, truth) -> float:
    x, y = _pair(pred, truth)
    return _mean((x - y) ** 2)


def _pearson(x, y):
    dx = x - _mean(x)
    dy = y - _mean(y)
    sxx, syy = math.fsum(dx * dx), math.fsum(dy * dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0, True
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r)), False


def _degenerate(name):
    warnings.warn(f"{name}: zero-variance input, reporting 0", DegenerateCorrelationWarning, stacklevel=3)


def lcc(pred, truth) -> float:
    x, y = _pair(pred, truth, 2)
    r, bad = _pearson(x, y)
    if bad:
        _degenerate("lcc")
    return r


def srcc(pred, truth) -> float:
    """Spearman correlation: Pearson on average ranks."""
    x, y = _pair(pred, truth, 2)
    r, bad = _pearson(rankdata(x), rankdata(y))
    if bad:
        _degenerate("srcc")
    return r


def _tie_pairs(v):
    _, counts = np.unique(v, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _run_pairs(change: np.ndarray) -> int:
    """Tied pairs inside runs of a sorted sequence, given its 'differs from previous' mask."""
    starts = np.flatnonzero(np.concatenate([[True], change]))
    lengths = np.diff(np.append(starts, len(change) + 1))
    return int(np.sum(lengths * (lengths - 1) // 2))


def _count_inversions(seq: list) -> int:
    """Number of pairs i < j with seq[i] > seq[j] (bottom-up merge sort)."""
    n = len(seq)
    inv = 0
    width = 1
    src = list(seq)
    while width < n:
        dst = []
        for lo in range(0, n, 2 * width):
            left = src[lo : lo + width]
            right = src[lo + width : lo + 2 * width]
            i = j = 0
            while i < len(left) and j < len(right):
                if right[j] < left[i]:
                    dst.append(right[j])
                    inv += len(left) - i
                    j += 1
                else:
                    dst.append(left[i])
                    i += 1
            dst.extend(left[i:])
            dst.extend(right[j:])
        src = dst
        width *= 2
    return inv


def kendall_counts(x, y):
    """Integer pair counts ``(concordant, discordant, ties_x_only, ties_y_only)``."""
    n = len(x)
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    discordant = _count_inversions(ys.tolist())
    n0 = n * (n - 1) // 2
    tx, ty = _tie_pairs(x), _tie_pairs(y)
    txy = _run_pairs((xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]))
    concordant = n0 - tx - ty + txy - discordant
    return concordant, discordant, tx - txy, ty - txy


def tau_b_from_counts(c, d, t_x, t_y):
    denom = math.sqrt((c + d + t_x) * (c + d + t_y))
    if denom == 0.0:
        return None
    return (c - d) / denom


def ktau(pred, truth) -> float:
    """Kendall tau-b, tie corrected; O(n log n)."""
    x, y = _pair(pred, truth, 2)
    c, d, tx, ty = kendall_counts(x, y)
    tau = tau_b_from_counts(c, d, tx, ty)
    if tau is None:
        _degenerate("ktau")
        return 0.0
    return tau


def system_aggregate(preds, truths):
    """Per-system mean of predicted and true scores, systems sorted by id.

    ``preds`` is a sequence of objects with ``id`` and ``score`` (``Prediction``)
    or dicts with those keys; ``truths`` is a ``SampleSet``.
    Returns ``(system_ids, pred_means, truth_means)``.
    """
    by_id = truths.by_id()
    groups: dict = {}
    for p in preds:
        pid, score = (p["id"], p["score"]) if isinstance(p, dict) else (p.id, p.score)
        if pid not in by_id:
            raise KeyError(f"prediction for unknown id {pid!r}")
        s = by_id[pid]
        groups.setdefault(s.system_id, ([], []))
        groups[s.system_id][0].append(float(score))
        groups[s.system_id][1].append(float(s.score))
    systems = sorted(groups)
    pm = np.array([_mean(groups[k][0]) for k in systems])
    tm = np.array([_mean(groups[k][1]) for k in systems])
    return systems, pm, tm


@dataclass
class EvalReport:
    u_mse: float
    u_lcc: float
    u_srcc: float
    u_ktau: float
    s_mse: float
    s_lcc: float
    s_srcc: float
    s_ktau: float
    warnings: list = field(default_factory=list)

    def as_tuple(self):
        return (self.u_mse, self.u_lcc, self.u_srcc, self.u_ktau,
                self.s_mse, self.s_lcc, self.s_srcc, self.s_ktau)

    def to_dict(self):
        return {
            "utterance": {m: getattr(self, f"u_{m}") for m in METRIC_NAMES},
            "system": {m: getattr(self, f"s_{m}") for m in METRIC_NAMES},
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        heads = ["U_MSE", "U_LCC", "U_SRCC", "U_KTAU", "S_MSE", "S_LCC", "S_SRCC", "S_KTAU"]
        return " ".join(f"{h:>8}" for h in heads) + "\n" + " ".join(f"{v:8.3f}" for v in self.as_tuple())


def _level(prefix, pred, truth, notes):
    out = {"mse": mse(pred, truth)}
    for name, fn in (("lcc", lcc), ("srcc", srcc), ("ktau", ktau)):
        if len(pred) < 2:
            out[name] = 0.0
            notes.append(f"{prefix}_{name}: fewer than 2 points, reporting 0")
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateCorrelationWarning)
            out[name] = fn(pred, truth)
        if any(issubclass(w.category, DegenerateCorrelationWarning) for w in caught):
            notes.append(f"{prefix}_{name}: zero-variance input, reporting 0")
    return out


def evaluate(preds, truths) -> EvalReport:
    """All eight metrics; utterance level over raw pairs, system level over system means."""
    by_id = truths.by_id()
    ids = [p["id"] if isinstance(p, dict) else p.id for p in preds]
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise KeyError(f"predictions for unknown ids: {missing[:10]}")
    if not ids:
        raise ValueError("no predictions to evaluate")
    pred = np.array([p["score"] if isinstance(p, dict) else p.score for p in preds], dtype=np.float64)
    truth = np.array([by_id[i].score for i in ids], dtype=np.float64)
    notes: list = []
    u = _level("u", pred, truth, notes)
    _, pm, tm = system_aggregate(preds, truths)
    s = _level("s", pm, tm, notes)
    return EvalReport(
        u["mse"], u["lcc"], u["srcc"], u["ktau"],
        s["mse"], s["lcc"], s["srcc"], s["ktau"],
        notes,
    )
