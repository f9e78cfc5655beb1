"""Independent reference implementations the tests check against.

These stay deliberately naive: full-table edit distance, an exhaustive
scan of the sufficiency rule, a triple-loop matrix product, and central
finite differences. None of them share code with the package.
"""

from __future__ import annotations

import functools
import math


def brute_levenshtein(a: str, b: str) -> int:
    """Full-table recursive edit distance with memoization."""

    @functools.lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            d(i - 1, j) + 1,
            d(i, j - 1) + 1,
            d(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )

    return d(len(a), len(b))


def exhaustive_sufficiency_scan(utilities, entries, tau, delta):
    """Literal scan of the sufficiency rule over the complete vector.

    Returns the resolution of the smallest index whose utility clears tau
    with every later utility within delta of it, else the top entry.
    """
    k = len(entries)
    for i in range(k):
        if utilities[i] < tau:
            continue
        ok = True
        for j in range(i + 1, k):
            if utilities[j] - utilities[i] > delta:
                ok = False
                break
        if ok:
            return entries[i]
    return entries[k - 1]


def triple_loop_matvec(weights, z, bias):
    """Naive W @ z + b."""
    k = len(weights)
    out = []
    for i in range(k):
        acc = 0.0
        for j in range(len(z)):
            acc += weights[i][j] * z[j]
        out.append(acc + bias[i])
    return out


def central_difference_grad(f, x, step=1e-5):
    """Componentwise central finite differences of a scalar function."""
    grad = []
    for i in range(len(x)):
        hi = list(x)
        lo = list(x)
        hi[i] += step
        lo[i] -= step
        grad.append((f(hi) - f(lo)) / (2 * step))
    return grad


def reference_softmax(logits):
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    s = sum(exps)
    return [e / s for e in exps]
