"""Independent oracles shared by the test modules."""

import math

import numpy as np

FD_STEP = 1e-5
REL_FLOOR = 1e-5

# (criterion number, title, passed, detail) rows printed in the terminal summary
ACCEPTANCE_ROWS = []


def central_differences(params, loss, h=FD_STEP):
    """Numerical gradient of ``loss()`` w.r.t. every entry of every array in ``params``.

    Arrays are perturbed in place and restored.
    """
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            up = loss()
            p[i] = orig - h
            down = loss()
            p[i] = orig
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_error(analytic, numeric, floor=REL_FLOOR):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def flat_grads(grads):
    """[(dW, db), ...] per model -> flat list aligned with Mlp.parameters()."""
    return [g for model_grads in grads for pair in model_grads for g in pair]


def brute_force_search(keys32, q, k):
    """Scan every entry, then sort (distance, index) tuples in Python."""
    keys = np.asarray(keys32, dtype=np.float64)
    d = np.linalg.norm(keys - np.asarray(q, dtype=np.float64), axis=1)
    ranked = sorted((float(d[i]), i) for i in range(len(keys)))
    return ranked[:k]


def kendall_pairs(x, y):
    """O(n^2) pair enumeration for tau-b."""
    n = len(x)
    c = d = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            sx = (x[i] > x[j]) - (x[i] < x[j])
            sy = (y[i] > y[j]) - (y[i] < y[j])
            if sx == 0 and sy == 0:
                continue
            if sx == 0:
                tx += 1
            elif sy == 0:
                ty += 1
            elif sx == sy:
                c += 1
            else:
                d += 1
    denom = math.sqrt((c + d + tx) * (c + d + ty))
    return (c - d) / denom if denom else 0.0
