"""Parametrized evaluation operators on Q-vectors.

For a pair theta = (mu, B) of a stationary policy and a state subset,
the operator

    F_theta(Q; J)(x, u) = g(x, u)
        + alpha * sum_{x' not in B} q(x'|x,u) J(x')
        + alpha * sum_{x' in B} q(x'|x,u) sum_{u'} mu(u'|x') min{J(x'), Q(x',u')}

acts on Q with J held fixed.  Its monotone limit from zero is the
continuation-value function of a two-action stopping reformulation of
policy evaluation (see the stopping module, which recomputes it by an
independent route).  A state-control-set variant replaces B with a set R
of pairs: successors (x', u') outside R contribute J(x') even when x'
meets R elsewhere.

These operators are defined for atomic-only models; the all-plus-infinity
J vector is a legal input and turns the B = S deterministic form into the
plain fixed-policy Q backup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extreal import INF, expect, expect_rows, sup_dist, xadd
from .model import AtomicMix, Policy, TotalCostModel, validate_policy
from .operators import m_minimize


class FixedPointError(RuntimeError):
    """Iteration cap reached; carries the last iterate and its bound side."""

    def __init__(self, message: str, last: np.ndarray, bound: str):
        super().__init__(message)
        self.last = last
        self.bound = bound


@dataclass(frozen=True)
class Theta:
    """Policy plus the state subset on which it is trusted."""

    policy: Policy
    B: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "B", frozenset(self.B))


@dataclass(frozen=True)
class ThetaHat:
    """Policy plus a subset R of state-control pairs."""

    policy: Policy
    R: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "R", frozenset(self.R))

    @property
    def B(self) -> frozenset[int]:
        return frozenset(x for x, _ in self.R)


def _check_inputs(model: TotalCostModel, policy: Policy) -> None:
    if not model.atomic_only:
        raise ValueError("F operators are defined for atomic-only models")
    if not policy.atomic:
        raise ValueError("F operators need an atomic-distribution policy")
    errs = validate_policy(model, policy)
    if errs:
        raise ValueError("invalid policy: " + "; ".join(errs))


def _mixed_floor(model: TotalCostModel, policy: Policy, Q: np.ndarray,
                 J: np.ndarray, x: int) -> float:
    """sum_u' mu(u'|x) min{J(x), Q(x, u')} at one state."""
    a = policy.actions[x]
    assert isinstance(a, AtomicMix)
    vals = np.minimum(J[x], Q[model.pair_slices[x]])
    return expect(a.weights, vals)


def _f_apply(model: TotalCostModel, theta: Theta, Q: np.ndarray,
             J: np.ndarray) -> np.ndarray:
    w = J.astype(float).copy()
    for x in theta.B:
        w[x] = _mixed_floor(model, theta.policy, Q, J, x)
    return _backup_against(model, w)


def f_theta_apply(model: TotalCostModel, theta: Theta, Q: np.ndarray,
                  J: np.ndarray) -> np.ndarray:
    """One application of F_theta(.; J) to Q."""
    _check_inputs(model, theta.policy)
    return _f_apply(model, theta, np.asarray(Q, dtype=float),
                    np.asarray(J, dtype=float))


def f_theta_hat_apply(model: TotalCostModel, theta_hat: ThetaHat, Q: np.ndarray,
                      J: np.ndarray) -> np.ndarray:
    """Pair-masked variant: only pairs in R see min{J, Q}; the rest of a
    B-state's controls keep the stopping value J."""
    _check_inputs(model, theta_hat.policy)
    Q = np.asarray(Q, dtype=float)
    J = np.asarray(J, dtype=float)
    w = J.astype(float).copy()
    for x in theta_hat.B:
        a = theta_hat.policy.actions[x]
        assert isinstance(a, AtomicMix)
        vals = np.array([
            min(J[x], Q[model.pair_index[(x, i)]]) if (x, i) in theta_hat.R else J[x]
            for i in range(len(model.controls[x]))
        ])
        w[x] = expect(a.weights, vals)
    return _backup_against(model, w)


def _backup_against(model: TotalCostModel, w: np.ndarray) -> np.ndarray:
    cont = expect_rows(model.pair_probs, w)
    if model.discount == 0.0:
        cont = np.zeros_like(cont)
    elif model.discount != 1.0:
        cont = cont * model.discount
    g = model.pair_costs
    if np.isinf(g).any() or np.isinf(cont).any():
        return np.array([xadd(a, b) for a, b in zip(g, cont)])
    return g + cont


def f_theta_power(model: TotalCostModel, theta: Theta, Q0: np.ndarray,
                  J: np.ndarray, n: int) -> np.ndarray:
    """n-fold composition of F_theta(.; J) starting from Q0."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    _check_inputs(model, theta.policy)
    Q = np.asarray(Q0, dtype=float)
    J = np.asarray(J, dtype=float)
    for _ in range(n):
        Q = _f_apply(model, theta, Q, J)
    return Q


@dataclass(frozen=True)
class FixedPointCertificate:
    regime: str
    iterations: int
    residual: float
    bound: str         # "two-sided" (D), "upper" (N), "lower" (P)
    error_bound: float  # a-posteriori sup-norm bound for D, inf otherwise
    promoted: frozenset[int] = frozenset()


@dataclass(frozen=True)
class FixedPointOptions:
    tol: float = 1e-10
    max_iter: int = 200_000
    # Monotone divergence promotion: a coordinate whose increments stop
    # decaying is sent to the regime-signed infinity, which is sound for
    # monotone limits and accelerates stabilization.
    promote_window: int = 40
    promote_after: int = 80
    promote_floor: float = 1e-9


def _promote_divergent(history: list[np.ndarray], k: int,
                       opts: FixedPointOptions, sign: float) -> list[int]:
    if k < opts.promote_after or len(history) <= opts.promote_window:
        return []
    cur, prev = history[-1], history[-2]
    old_cur, old_prev = history[-1 - opts.promote_window], history[-2 - opts.promote_window]
    inc = np.abs(cur - prev)
    old_inc = np.abs(old_cur - old_prev)
    with np.errstate(invalid="ignore"):
        stuck = (np.isfinite(cur) & (inc >= opts.promote_floor)
                 & np.isfinite(old_inc) & (inc >= 0.9 * old_inc))
    return [int(i) for i in np.flatnonzero(stuck)]


def q_fixed_point(model: TotalCostModel, theta: Theta, J: np.ndarray,
                  options: FixedPointOptions | None = None
                  ) -> tuple[np.ndarray, FixedPointCertificate]:
    """Monotone limit of F_theta(.; J) from the zero Q-vector.

    Discounted models stop when the contraction bound
    alpha * r / (1 - alpha) on the remaining error drops below tol and
    report it in the certificate.  Undiscounted models iterate
    monotonically (down for N, up for P) until the residual passes tol or
    the iterate stabilizes exactly; the certificate records which side of
    the limit the returned iterate is on.
    """
    opts = options or FixedPointOptions()
    _check_inputs(model, theta.policy)
    J = np.asarray(J, dtype=float)
    Q = np.zeros(model.num_pairs())
    alpha = model.discount
    sign = -1.0 if model.regime == "N" else 1.0
    promoted: set[int] = set()
    history: list[np.ndarray] = [Q]
    for k in range(1, opts.max_iter + 1):
        nxt = _f_apply(model, theta, Q, J)
        if promoted:
            nxt[list(promoted)] = sign * INF
        res = sup_dist(nxt, Q)
        Q = nxt
        if model.regime == "D":
            err = alpha * res / (1.0 - alpha)
            if err <= opts.tol:
                return Q, FixedPointCertificate("D", k, res, "two-sided", err)
            continue
        if res <= opts.tol:
            cert = FixedPointCertificate(
                model.regime, k, res,
                "upper" if model.regime == "N" else "lower",
                0.0 if res == 0.0 else INF,
                frozenset(promoted),
            )
            return Q, cert
        history.append(Q)
        if len(history) > opts.promote_window + 2:
            history.pop(0)
        for i in _promote_divergent(history, k, opts, sign):
            promoted.add(i)
            Q[i] = sign * INF
    raise FixedPointError(
        f"no fixed point within {opts.max_iter} iterations (residual left)",
        last=Q,
        bound="upper" if model.regime == "N" else "lower",
    )


def masked_update(model: TotalCostModel, theta: Theta, Q: np.ndarray,
                  J: np.ndarray, gamma_mask, s_mask,
                  n: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Asynchronous step: refresh Q on a pair subset with F_theta^n and J
    on a state subset with the minimization of the refreshed Q; all other
    coordinates keep their old values."""
    Q = np.asarray(Q, dtype=float)
    J = np.asarray(J, dtype=float)
    full = f_theta_power(model, theta, Q, J, n)
    newQ = Q.copy()
    for x, i in gamma_mask:
        newQ[model.pair_index[(x, i)]] = full[model.pair_index[(x, i)]]
    minimized = m_minimize(model, newQ)
    newJ = J.copy()
    for x in s_mask:
        newJ[x] = minimized[x]
    return newQ, newJ
