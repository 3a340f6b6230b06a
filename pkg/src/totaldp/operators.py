"""One-stage dynamic programming operators.

Core backups for a total-cost model:

    T(J)(x)      = inf_u  g(x,u) + alpha * E[J(x') | x, u]
    T_mu(J)(x)   = E_mu [ g(x,u) + alpha * E[J(x') | x, u] ]
    H(J)(x,u)    = g(x,u) + alpha * E[J(x') | x, u]          (Q backup)
    M(Q)(x)      = min_u Q(x,u)

Affine control families are minimized in closed form; when a successor
reachable by the family carries an infinite value, the closed-form
coefficients are unsound and the evaluation falls back to a pointwise
split into interior and closed-endpoint candidates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extreal import INF, expect, expect_rows, xadd, xmul
from .model import (
    AffineFamily,
    FamilyChoice,
    Policy,
    TotalCostModel,
)


@dataclass(frozen=True)
class AffineInfimum:
    value: float
    attained: bool
    at: float | None  # minimizer when attained, limit point otherwise


def affine_infimum(a: float, b: float, lo: float, hi: float,
                   lo_closed: bool, hi_closed: bool) -> AffineInfimum:
    """Infimum over t in the interval of t -> a + b*t, extended-real.

    The pointwise map obeys 0 * inf = 0, so at t = 0 an infinite slope
    contributes nothing.  Opposite infinities in (a, b) are rejected;
    they cannot arise from a validated single-regime model.
    """
    if not (0.0 <= lo < hi <= 1.0):
        raise ValueError(f"interval [{lo}, {hi}] must be inside [0, 1] and nonempty")
    if np.isinf(a) and np.isinf(b) and (a > 0) != (b > 0):
        raise ValueError("coefficients carry opposite infinities")

    def at(t: float) -> float:
        return xadd(a, xmul(b, t))

    if np.isinf(b):
        # For t > 0 the value is sign(b) * inf; t = 0 is special.
        if b > 0:
            if lo == 0.0 and lo_closed:
                return AffineInfimum(at(0.0), True, 0.0)
            return AffineInfimum(INF, False, None)
        witness = hi if hi_closed else (max(lo, 0.0) + hi) / 2.0
        return AffineInfimum(-INF, True, witness)
    if np.isinf(a):
        # Every point evaluates to a (b finite cannot cancel it).
        witness = lo if lo_closed else (hi if hi_closed else (lo + hi) / 2.0)
        return AffineInfimum(a, True, witness)
    if b > 0.0:
        return AffineInfimum(a + b * lo, lo_closed, lo)
    if b < 0.0:
        return AffineInfimum(a + b * hi, hi_closed, hi)
    witness = lo if lo_closed else (hi if hi_closed else (lo + hi) / 2.0)
    return AffineInfimum(a, True, witness)


def family_pointwise(model: TotalCostModel, fam: AffineFamily,
                     t: float, J: np.ndarray) -> float:
    """Value of the family arm at a fixed parameter t."""
    return xadd(fam.cost_at(t),
                xmul(model.discount, expect(fam.probs_at(t), J)))


def family_infimum(model: TotalCostModel, fam: AffineFamily, J: np.ndarray) -> float:
    """Infimum over the family's interval of the one-stage backup of J."""
    alpha = model.discount
    inf_mask = np.isinf(J)
    if inf_mask.any() and ((fam.p0[inf_mask] != 0.0) | (fam.p1[inf_mask] != 0.0)).any():
        # A successor with infinite J is reachable for some parameter:
        # the affine shortcut is unsound.  Interior parameters assign
        # positive probability to every not-identically-zero successor
        # row, so the interior value is the regime-signed infinity;
        # closed endpoints are evaluated pointwise.
        candidates = [INF if (np.isposinf(J) & ((fam.p0 != 0.0) | (fam.p1 != 0.0))).any()
                      else -INF]
        if fam.lo_closed:
            candidates.append(family_pointwise(model, fam, fam.lo, J))
        if fam.hi_closed:
            candidates.append(family_pointwise(model, fam, fam.hi, J))
        return min(candidates)
    a = xadd(fam.c0, xmul(alpha, expect(fam.p0, J)))
    b = xadd(fam.c1, xmul(alpha, float(fam.p1[np.isfinite(J)] @ J[np.isfinite(J)])
                          if inf_mask.any() else float(fam.p1 @ J)))
    return affine_infimum(a, b, fam.lo, fam.hi, fam.lo_closed, fam.hi_closed).value


def h_backup(model: TotalCostModel, J: np.ndarray) -> np.ndarray:
    """Q-factor backup over all atomic pairs: g + alpha * E[J]."""
    J = np.asarray(J, dtype=float)
    if J.shape != (model.num_states,):
        raise ValueError(f"J has shape {J.shape}, want ({model.num_states},)")
    cont = expect_rows(model.pair_probs, J)
    if model.discount == 0.0:
        cont = np.zeros_like(cont)
    elif model.discount != 1.0:
        cont = cont * model.discount
    g = model.pair_costs
    if np.isinf(g).any() or np.isinf(cont).any():
        return np.array([xadd(gi, ci) for gi, ci in zip(g, cont)])
    return g + cont


def m_minimize(model: TotalCostModel, Q: np.ndarray) -> np.ndarray:
    """Per-state minimum of a Q-vector over atomic controls."""
    if not model.atomic_only:
        raise ValueError("Q-space minimization is defined for atomic-only models")
    Q = np.asarray(Q, dtype=float)
    return np.array([Q[model.pair_slices[x]].min() for x in range(model.num_states)])


def bellman_T(model: TotalCostModel, J: np.ndarray) -> np.ndarray:
    """Optimal-cost backup over atomic controls and affine families."""
    J = np.asarray(J, dtype=float)
    Q = h_backup(model, J)
    out = np.empty(model.num_states)
    for x in range(model.num_states):
        arms = list(Q[model.pair_slices[x]])
        for fam in model.families[x]:
            arms.append(family_infimum(model, fam, J))
        out[x] = min(arms)
    return out


def bellman_T_mu(model: TotalCostModel, policy: Policy, J: np.ndarray) -> np.ndarray:
    """Fixed-policy backup; linear in J for atomic mixes, pointwise for
    family parameter choices."""
    J = np.asarray(J, dtype=float)
    out = np.empty(model.num_states)
    for x, a in enumerate(policy.actions):
        if isinstance(a, FamilyChoice):
            out[x] = family_pointwise(model, model.families[x][a.family], a.t, J)
        else:
            vals = np.array([
                xadd(c.cost, xmul(model.discount, expect(c.probs, J)))
                for c in model.controls[x]
            ])
            out[x] = expect(a.weights, vals)
    return out


def greedy_select(model: TotalCostModel, Q: np.ndarray, epsilon: float = 0.0,
                  tie_break: str = "lowest-index") -> Policy:
    """Deterministic policy with Q(x, mu(x)) <= min_u Q(x, u) + epsilon.

    With epsilon = 0 this is the exact argmin; ties go to the lowest
    control index, as do epsilon-slack choices.
    """
    if tie_break != "lowest-index":
        raise ValueError(f"unsupported tie_break {tie_break!r}")
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if not model.atomic_only:
        raise ValueError("greedy selection is defined for atomic-only models")
    Q = np.asarray(Q, dtype=float)
    choices = []
    for x in range(model.num_states):
        qx = Q[model.pair_slices[x]]
        target = xadd(qx.min(), epsilon)
        ok = np.flatnonzero((qx <= target) | (qx == qx.min()))
        choices.append(int(ok[0]))
    return Policy.deterministic(model, choices)
