"""Extended-real arithmetic kernels.

Total-cost values live in [-inf, +inf] under two conventions that differ
from IEEE float semantics:

    inf - inf = -inf + inf = +inf
    0 * (+-inf) = (+-inf) * 0 = 0

Every expectation and sum of extended-real quantities in this package is
routed through the helpers below, so NaN can never appear in a value
vector or Q-vector.  Comparisons on the resulting floats are then total.
"""

from __future__ import annotations

import math

import numpy as np

INF = math.inf


def xadd(a: float, b: float) -> float:
    """a + b with opposite infinities resolving to +inf."""
    if math.isinf(a) and math.isinf(b) and (a > 0) != (b > 0):
        return INF
    return a + b


def xmul(a: float, b: float) -> float:
    """a * b with 0 * (+-inf) = 0."""
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def xsum(values) -> float:
    """Left-to-right sum under the xadd convention."""
    total = 0.0
    for v in values:
        total = xadd(total, v)
    return total


def expect(weights: np.ndarray, values: np.ndarray) -> float:
    """Sum of weights[i] * values[i] for nonnegative weights.

    Zero-weight entries contribute nothing even when the value is
    infinite.  If positively weighted +inf and -inf entries are both
    present the result is +inf.
    """
    if not np.isinf(values).any():
        return float(weights @ values)
    live = weights > 0.0
    v = values[live]
    if np.isposinf(v).any():
        return INF
    if np.isneginf(v).any():
        return -INF
    return float(weights[live] @ v)


def expect_rows(P: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise `expect` for a nonnegative matrix P against one vector."""
    if not np.isinf(values).any():
        return P @ values
    finite = np.isfinite(values)
    out = P[:, finite] @ values[finite]
    neg = (P[:, np.isneginf(values)] > 0.0).any(axis=1)
    pos = (P[:, np.isposinf(values)] > 0.0).any(axis=1)
    out[neg] = -INF
    out[pos] = INF
    return out


def sup_dist(a: np.ndarray, b: np.ndarray) -> float:
    """Sup-norm distance treating equal infinities as coincident."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    with np.errstate(invalid="ignore"):
        diff = np.where(a == b, 0.0, np.abs(a - b))
    return float(diff.max())


def leq(a: np.ndarray, b: np.ndarray, slack: float = 0.0) -> bool:
    """Elementwise a <= b + slack, with equal infinities passing."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ok = (a == b) | (a <= b + slack)
    return bool(ok.all())
