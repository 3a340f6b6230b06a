"""End-to-end iterative solvers and their convergence traces.

Covers classical value iteration, exact and modified policy iteration,
the mixed value-and-policy iteration family (Q-updates through powers or
exact fixed points of the parametrized evaluation operator, with
per-iteration policy/set choices), the constraint-program variant for
nonnegative-cost models, near-optimal policy extraction, and a
certificate verifier that replays the convergence guarantees recorded in
a trace.

Every solver is deterministic given its configuration and returns an
append-only IterationTrace whose rows carry the sup-norm residual, the
distance to ground truth when one is supplied, policy and set
descriptors, ordering margins against the value-iteration envelope
T^k(J0) and against ground truth, and wall time.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .extreal import INF, sup_dist
from .ftheta import (
    FixedPointOptions,
    Theta,
    f_theta_power,
    masked_update,
    q_fixed_point,
)
from .model import Policy, TotalCostModel
from .operators import (
    bellman_T,
    bellman_T_mu,
    greedy_select,
    h_backup,
    m_minimize,
)
from .chains import evaluate_policy, occupation_measure
from .stopping import lp_upper_bound


class SolverCapError(RuntimeError):
    """Iteration cap reached before the residual target.

    The last iterate is still a valid one-sided bound in the monotone
    regimes: a lower bound for nonnegative costs, an upper bound for
    nonpositive ones.
    """

    def __init__(self, message: str, last, trace, bound: str | None):
        super().__init__(message)
        self.last = last
        self.trace = trace
        self.bound = bound


# ---------------------------------------------------------------------------
# B-set strategies


@dataclass(frozen=True)
class FullB:
    def resolve(self, model, policy, k):
        return frozenset(range(model.num_states)), policy


@dataclass(frozen=True)
class EmptyB:
    def resolve(self, model, policy, k):
        return frozenset(), policy


@dataclass(frozen=True)
class OccupationSupportB:
    """B is the support of the policy's discounted visitation measure."""

    beta: float = 0.5
    threshold: float = 1e-12
    rho: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError("beta must lie in (0, 1)")
        if self.threshold < 0.0:
            raise ValueError("threshold must be nonnegative")

    def resolve(self, model, policy, k):
        rho = self.rho
        if rho is None:
            rho = np.full(model.num_states, 1.0 / model.num_states)
        p = occupation_measure(model, policy, rho, self.beta)
        return frozenset(int(x) for x in np.flatnonzero(p > self.threshold)), policy


@dataclass(frozen=True)
class CustomB:
    """Explicit per-iteration subsets, cycled when the run is longer."""

    sets: tuple[frozenset[int], ...]

    def resolve(self, model, policy, k):
        return self.sets[k % len(self.sets)], policy


@dataclass(frozen=True)
class SpliceB:
    """Occupation-support B, with the policy replaced by a fallback off B."""

    fallback: Policy
    beta: float = 0.5
    threshold: float = 1e-12
    rho: np.ndarray | None = None

    def resolve(self, model, policy, k):
        B, _ = OccupationSupportB(self.beta, self.threshold, self.rho).resolve(
            model, policy, k)
        actions = [policy.actions[x] if x in B else self.fallback.actions[x]
                   for x in range(model.num_states)]
        return B, Policy(tuple(actions))


BStrategy = Union[FullB, EmptyB, OccupationSupportB, CustomB, SpliceB]


# ---------------------------------------------------------------------------
# Traces


@dataclass
class TraceRow:
    k: int
    residual: float
    dist_J: float | None = None
    dist_Q: float | None = None
    policy: str = ""
    b_set: str = ""
    upper_margin: float | None = None   # max(J_k - T^k(J0)); <= 0 when the bound holds
    lower_margin: float | None = None   # max(Jstar - J_k); <= 0 when J_k >= Jstar
    q_lower_margin: float | None = None  # max(Qstar - Q_k)
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass
class IterationTrace:
    algorithm: str
    regime: str
    discount: float
    config: dict
    J0: np.ndarray | None = None
    Q0: np.ndarray | None = None
    dist0: float | None = None          # max distance of (J0, Q0) to ground truth
    initial_dominance: bool | None = None
    ground_truth_known: bool = False
    model_hash: str = ""
    seed: int | None = None
    rows: list[TraceRow] = field(default_factory=list)
    op_count: int = 0

    def append(self, row: TraceRow) -> None:
        if self.rows and row.k <= self.rows[-1].k:
            raise ValueError("trace rows must be strictly increasing in k")
        self.rows.append(row)

    @property
    def final_residual(self) -> float:
        return self.rows[-1].residual if self.rows else INF


def _dist(a, b) -> float | None:
    if b is None:
        return None
    return sup_dist(a, b)


def _margin_leq(a, b) -> float:
    """max over entries of a - b, 0 when equal (including infinities)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        diff = np.where(a == b, 0.0, a - b)
    return float(diff.max()) if diff.size else 0.0


# ---------------------------------------------------------------------------
# Monotone divergence detection for undiscounted value iteration


@dataclass(frozen=True)
class DivergenceOptions:
    window: int = 40
    warmup: int = 80
    floor: float = 1e-9
    value_cap: float = 1e13


class _DivergenceDetector:
    """Flags coordinates whose monotone increments stop decaying.

    On a finite undiscounted model, a coordinate of the value-iteration
    sequence either converges (summable increments) or grows without
    bound; increments that hold their size across a window, or values
    beyond the cap, identify the divergent ones.
    """

    def __init__(self, opts: DivergenceOptions, size: int):
        self.opts = opts
        self.incs: deque[np.ndarray] = deque(maxlen=opts.window + 1)
        self.flagged: set[int] = set()
        self.size = size

    def update(self, k: int, prev: np.ndarray, cur: np.ndarray) -> set[int]:
        with np.errstate(invalid="ignore"):
            inc = np.where(cur == prev, 0.0, np.abs(cur - prev))
        self.incs.append(inc)
        new: set[int] = set()
        finite = np.isfinite(cur)
        over = np.flatnonzero(finite & (np.abs(cur) > self.opts.value_cap))
        new.update(int(i) for i in over if i not in self.flagged)
        if k >= self.opts.warmup and len(self.incs) == self.opts.window + 1:
            old = self.incs[0]
            with np.errstate(invalid="ignore"):
                stuck = finite & (inc >= self.opts.floor) & (inc >= 0.9 * old)
            new.update(int(i) for i in np.flatnonzero(stuck)
                       if i not in self.flagged)
        self.flagged |= new
        return new


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "mixed"
    J0: np.ndarray | None = None
    Q0: np.ndarray | None = None
    nk: int | tuple[int, ...] | str = 10       # power count per iteration, or "exact"
    epsilon: float = 0.0
    bstrategy: BStrategy = field(default_factory=FullB)
    clamp_lo: np.ndarray | None = None
    clamp_hi: np.ndarray | None = None
    masks: Sequence[tuple[Sequence[tuple[int, int]], Sequence[int]]] | None = None
    max_iter: int = 1000
    tol: float = 1e-9
    ground_truth: tuple[np.ndarray, np.ndarray | None] | None = None
    initial_policy: Policy | None = None
    policy_schedule: Sequence[Policy] | None = None
    fp_options: FixedPointOptions = field(default_factory=FixedPointOptions)
    divergence: DivergenceOptions = field(default_factory=DivergenceOptions)
    stop_on_tol: bool = True
    raise_on_cap: bool = True
    snapshot_iterates: bool = True

    def __post_init__(self):
        if isinstance(self.nk, str):
            if self.nk != "exact":
                raise ValueError("nk must be a positive int, a tuple, or 'exact'")
        elif isinstance(self.nk, int):
            if self.nk < 1:
                raise ValueError("nk must be >= 1")
        else:
            object.__setattr__(self, "nk", tuple(int(v) for v in self.nk))
            if any(v < 1 for v in self.nk):
                raise ValueError("every nk entry must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.clamp_lo is not None and self.clamp_hi is not None:
            lo = np.asarray(self.clamp_lo, dtype=float)
            hi = np.asarray(self.clamp_hi, dtype=float)
            if (lo > hi).any():
                raise ValueError("clamp_lo must not exceed clamp_hi")

    def nk_at(self, k: int) -> int | str:
        if self.nk == "exact":
            return "exact"
        if isinstance(self.nk, int):
            return self.nk
        return self.nk[min(k, len(self.nk) - 1)]

    def echo(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "nk": self.nk if isinstance(self.nk, (int, str)) else list(self.nk),
            "epsilon": self.epsilon,
            "bstrategy": type(self.bstrategy).__name__,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "masks": self.masks is not None,
            "clamped": self.clamp_lo is not None or self.clamp_hi is not None,
        }


def _gt_parts(config: SolverConfig):
    if config.ground_truth is None:
        return None, None
    Jstar, Qstar = config.ground_truth
    return np.asarray(Jstar, dtype=float), (
        None if Qstar is None else np.asarray(Qstar, dtype=float))


# ---------------------------------------------------------------------------
# Value iteration


@dataclass
class VIResult:
    J: np.ndarray
    trace: IterationTrace
    divergent: frozenset[int] = frozenset()
    converged: bool = True


def value_iteration(model: TotalCostModel, J0: np.ndarray,
                    config: SolverConfig | None = None) -> VIResult:
    """Iterate the optimal-cost backup from J0.

    Undiscounted runs classify states whose iterates grow without bound
    and report them at the regime-signed infinity; the remaining states
    stop on the residual.  For atomic-only models a classified state is
    pinned to infinity immediately (finite minima commute with monotone
    limits, so this is exact and faster); models with affine families
    keep iterating the finite values so that continuum infima see the
    true finite iterates.
    """
    config = config or SolverConfig(algorithm="vi")
    Jstar, _ = _gt_parts(config)
    J = np.asarray(J0, dtype=float).copy()
    trace = IterationTrace(
        algorithm="vi", regime=model.regime, discount=model.discount,
        config=config.echo(), J0=J.copy(),
        dist0=_dist(J, Jstar) if Jstar is not None else None,
        ground_truth_known=Jstar is not None,
        initial_dominance=None if Jstar is None else bool(_margin_leq(Jstar, J) <= 0.0),
    )
    sign = -1.0 if model.regime == "N" else 1.0
    detector = _DivergenceDetector(config.divergence, model.num_states)
    pin = model.atomic_only
    start = time.perf_counter()
    direction: str | None = None
    for k in range(1, config.max_iter + 1):
        nxt = bellman_T(model, J)
        trace.op_count += 1
        if pin and detector.flagged:
            nxt[list(detector.flagged)] = sign * INF
        if model.discount == 1.0:
            detector.update(k, J, nxt)
            if pin and detector.flagged:
                nxt[list(detector.flagged)] = sign * INF
        live = np.array([i for i in range(model.num_states)
                         if i not in detector.flagged], dtype=int)
        res = sup_dist(nxt[live], J[live]) if live.size else 0.0
        if k == 1:
            if _margin_leq(nxt, J) <= 0.0:
                direction = "nonincreasing"
            elif _margin_leq(J, nxt) <= 0.0:
                direction = "nondecreasing"
        J = nxt
        reported = J.copy()
        if detector.flagged:
            reported[list(detector.flagged)] = sign * INF
        trace.append(TraceRow(
            k=k, residual=res,
            dist_J=_dist(reported, Jstar) if Jstar is not None else None,
            upper_margin=None,
            lower_margin=None if Jstar is None else _margin_leq(Jstar, reported),
            wall_time=time.perf_counter() - start,
            extra={"direction": direction, "divergent": sorted(detector.flagged)},
        ))
        if config.stop_on_tol and res <= config.tol:
            return VIResult(J=reported, trace=trace,
                            divergent=frozenset(detector.flagged))
    reported = J.copy()
    if detector.flagged:
        reported[list(detector.flagged)] = sign * INF
    if config.stop_on_tol and config.raise_on_cap:
        bound = {"nondecreasing": "lower", "nonincreasing": "upper"}.get(direction or "")
        raise SolverCapError(
            f"value iteration hit the {config.max_iter}-iteration cap "
            f"(residual {trace.final_residual:g})",
            last=reported, trace=trace, bound=bound)
    return VIResult(J=reported, trace=trace, divergent=frozenset(detector.flagged),
                    converged=False)


# ---------------------------------------------------------------------------
# Policy iteration and modified policy iteration


@dataclass
class PIResult:
    policies: list[Policy]
    values: list[np.ndarray]
    trace: IterationTrace
    termination: str  # "optimal-certified", "stuck", "cycle", "cap"


def policy_iteration(model: TotalCostModel, mu0: Policy,
                     config: SolverConfig | None = None) -> PIResult:
    """Exact policy iteration with greedy improvement.

    Terminates "stuck" when the current policy's backup already attains
    the optimal backup at its own value function (within 1e-12); this is
    a fixed point of the scheme but not necessarily optimal.  With
    ground truth supplied, a stuck point matching it upgrades the reason
    to "optimal-certified".  Policy cycles are detected exactly through
    the full history of deterministic policies.
    """
    if not model.atomic_only:
        raise ValueError("policy iteration needs an atomic-only model")
    config = config or SolverConfig(algorithm="pi")
    Jstar, _ = _gt_parts(config)
    trace = IterationTrace(algorithm="pi", regime=model.regime,
                           discount=model.discount, config=config.echo(),
                           ground_truth_known=Jstar is not None)
    mu = mu0
    policies = [mu]
    values: list[np.ndarray] = []
    seen: dict[str, int] = {}
    start = time.perf_counter()
    prev_J: np.ndarray | None = None
    for k in range(1, config.max_iter + 1):
        J = evaluate_policy(model, mu).J
        values.append(J)
        TJ = bellman_T(model, J)
        TmuJ = bellman_T_mu(model, mu, J)
        trace.op_count += 2
        gap = sup_dist(TmuJ, TJ)
        res = sup_dist(J, prev_J) if prev_J is not None else INF
        prev_J = J
        trace.append(TraceRow(
            k=k, residual=res, policy=mu.descriptor(),
            dist_J=_dist(J, Jstar) if Jstar is not None else None,
            wall_time=time.perf_counter() - start,
            extra={"improvement_gap": gap},
        ))
        if gap <= 1e-12:
            if Jstar is not None and sup_dist(J, Jstar) <= config.tol:
                return PIResult(policies, values, trace, "optimal-certified")
            return PIResult(policies, values, trace, "stuck")
        key = mu.descriptor()
        if key in seen:
            return PIResult(policies, values, trace, "cycle")
        seen[key] = k
        mu = greedy_select(model, h_backup(model, J), epsilon=0.0)
        trace.op_count += 1
        policies.append(mu)
    return PIResult(policies, values, trace, "cap")


@dataclass
class MPIResult:
    J: np.ndarray
    policy: Policy
    trace: IterationTrace
    converged: bool = True


def modified_policy_iteration(model: TotalCostModel, mu0: Policy, J0: np.ndarray,
                              config: SolverConfig | None = None) -> MPIResult:
    """Optimistic policy iteration: nk fixed-policy backups per round,
    then exact greedy improvement.

    Trace rows carry both the evaluation iterate and the improvement-time
    value M(h_backup(J)); for nonnegative-cost runs with ground truth the
    initial-condition flags T_mu0(J0) <= J0 and J0 <= c Jstar are recorded
    in the header.
    """
    if not model.atomic_only:
        raise ValueError("modified policy iteration needs an atomic-only model")
    config = config or SolverConfig(algorithm="mpi", nk=10)
    if config.nk == "exact":
        raise ValueError("modified policy iteration uses finite nk")
    Jstar, _ = _gt_parts(config)
    J = np.asarray(J0, dtype=float).copy()
    mu = mu0
    trace = IterationTrace(algorithm="mpi", regime=model.regime,
                           discount=model.discount, config=config.echo(),
                           J0=J.copy(), ground_truth_known=Jstar is not None)
    if model.regime == "P":
        flags = {"superharmonic_start": bool(
            _margin_leq(bellman_T_mu(model, mu0, J), J) <= 1e-12)}
        if Jstar is not None:
            flags["cone_c"] = cone_multiplier(J, Jstar)
        trace.config["initial_flags"] = flags
    start = time.perf_counter()
    prev_greedy: np.ndarray | None = None
    for k in range(1, config.max_iter + 1):
        for _ in range(int(config.nk_at(k - 1))):
            J = bellman_T_mu(model, mu, J)
            trace.op_count += 1
        Q = h_backup(model, J)
        trace.op_count += 1
        mu = greedy_select(model, Q, epsilon=0.0)
        J_greedy = m_minimize(model, Q)
        res = sup_dist(J_greedy, prev_greedy) if prev_greedy is not None else INF
        prev_greedy = J_greedy
        trace.append(TraceRow(
            k=k, residual=res, policy=mu.descriptor(),
            dist_J=_dist(J_greedy, Jstar) if Jstar is not None else None,
            wall_time=time.perf_counter() - start,
            extra={"J_eval": J.tolist(), "J_greedy": J_greedy.tolist()},
        ))
        if config.stop_on_tol and res <= config.tol:
            return MPIResult(J=J_greedy, policy=mu, trace=trace)
    if config.stop_on_tol and config.raise_on_cap:
        raise SolverCapError(
            f"modified policy iteration hit the {config.max_iter}-iteration cap",
            last=J, trace=trace, bound=None)
    return MPIResult(J=prev_greedy, policy=mu, trace=trace, converged=False)


# ---------------------------------------------------------------------------
# Mixed value-and-policy iteration


@dataclass
class MixedResult:
    J: np.ndarray
    Q: np.ndarray
    policy: Policy
    trace: IterationTrace
    converged: bool


def _clamp(J: np.ndarray, config: SolverConfig) -> np.ndarray:
    if config.clamp_hi is not None:
        J = np.minimum(J, np.asarray(config.clamp_hi, dtype=float))
    if config.clamp_lo is not None:
        J = np.maximum(J, np.asarray(config.clamp_lo, dtype=float))
    return J


def mixed_vpi(model: TotalCostModel, config: SolverConfig) -> MixedResult:
    """Alternate Q-updates through the parametrized evaluation operator
    with per-state minimization.

    Per iteration: pick the policy (injected schedule, initial policy at
    k = 0, or greedy from the current Q with the configured epsilon),
    resolve the B-set strategy, then either apply nk operator powers or
    solve the Q fixed point exactly; J becomes the per-state minimum,
    optionally clamped.  Mask schedules switch the update to its
    asynchronous masked form.  Rows record ordering margins against the
    value-iteration envelope from J0 and against ground truth.
    """
    if not model.atomic_only:
        raise ValueError("mixed value-and-policy iteration needs an atomic-only model")
    if config.J0 is None or config.Q0 is None:
        raise ValueError("config must provide J0 and Q0")
    J = np.asarray(config.J0, dtype=float).copy()
    Q = np.asarray(config.Q0, dtype=float).copy()
    Jstar, Qstar = _gt_parts(config)
    dist0 = None
    dominance = None
    if Jstar is not None:
        dist0 = _dist(J, Jstar)
        if Qstar is not None:
            dist0 = max(dist0, _dist(Q, Qstar))
            dominance = bool(_margin_leq(Jstar, J) <= 0.0
                             and _margin_leq(Qstar, Q) <= 0.0)
    trace = IterationTrace(
        algorithm="mixed", regime=model.regime, discount=model.discount,
        config=config.echo(), J0=J.copy(), Q0=Q.copy(), dist0=dist0,
        initial_dominance=dominance, ground_truth_known=Jstar is not None)
    envelope = J.copy()
    start = time.perf_counter()
    policy = config.initial_policy or greedy_select(model, Q, config.epsilon)
    for k in range(config.max_iter):
        if config.policy_schedule is not None and k < len(config.policy_schedule):
            policy = config.policy_schedule[k]
        elif k > 0 or config.initial_policy is None:
            policy = greedy_select(model, Q, config.epsilon)
        B, used_policy = config.bstrategy.resolve(model, policy, k)
        theta = Theta(used_policy, B)
        nk = config.nk_at(k)
        if config.masks is not None:
            if nk == "exact":
                raise ValueError("mask schedules need a finite nk")
            gamma_mask, s_mask = config.masks[k % len(config.masks)]
            Q_next, J_next = masked_update(model, theta, Q, J,
                                           gamma_mask, s_mask, n=int(nk))
            trace.op_count += int(nk)
            J_next = _clamp(J_next, config)
        elif nk == "exact":
            Q_next, cert = q_fixed_point(model, theta, J, config.fp_options)
            trace.op_count += cert.iterations
            J_next = _clamp(m_minimize(model, Q_next), config)
        else:
            Q_next = f_theta_power(model, theta, Q, J, int(nk))
            trace.op_count += int(nk)
            J_next = _clamp(m_minimize(model, Q_next), config)
        envelope = bellman_T(model, envelope)
        res_J = sup_dist(J_next, J)
        res_Q = sup_dist(Q_next, Q)
        J, Q = J_next, Q_next
        row = TraceRow(
            k=k + 1, residual=res_J,
            dist_J=_dist(J, Jstar) if Jstar is not None else None,
            dist_Q=_dist(Q, Qstar) if Qstar is not None else None,
            policy=used_policy.descriptor(),
            b_set=_describe_b(B, model.num_states),
            upper_margin=_margin_leq(J, envelope),
            lower_margin=None if Jstar is None else _margin_leq(Jstar, J),
            q_lower_margin=None if Qstar is None else _margin_leq(Qstar, Q),
            wall_time=time.perf_counter() - start,
            extra={"residual_Q": res_Q},
        )
        if config.snapshot_iterates:
            row.extra["J_snapshot"] = J.tolist()
            row.extra["Q_snapshot"] = Q.tolist()
        trace.append(row)
        if config.stop_on_tol and max(res_J, res_Q) <= config.tol:
            return MixedResult(J=J, Q=Q, policy=policy, trace=trace, converged=True)
    if config.stop_on_tol and config.raise_on_cap:
        raise SolverCapError(
            f"mixed iteration hit the {config.max_iter}-iteration cap",
            last=(J, Q), trace=trace,
            bound=None)
    return MixedResult(J=J, Q=Q, policy=policy, trace=trace, converged=False)


def _describe_b(B: frozenset[int], n: int) -> str:
    if len(B) == n:
        return "S"
    if not B:
        return "{}"
    return "{" + ",".join(str(x) for x in sorted(B)) + "}"


def round_robin_masks(model: TotalCostModel) -> list:
    """Singleton asynchronous masks cycling through every pair and state."""
    pairs = list(model.pairs)
    states = list(range(model.num_states))
    cycle = max(len(pairs), len(states))
    return [([pairs[k % len(pairs)]], [states[k % len(states)]])
            for k in range(cycle)]


# ---------------------------------------------------------------------------
# Constraint-program variant (nonnegative costs)


def lp_variant_vpi(model: TotalCostModel, config: SolverConfig) -> MixedResult:
    """Mixed iteration whose Q-update is the maximal solution of the
    stop/continue constraint program (an upper bound on the exact fixed
    point that stays below one operator application of itself).

    Each row verifies both defining inequalities: Q_{k+1} >= Q_fixed and
    Q_{k+1} <= F(Q_{k+1}; J_k), with margins in ``extra``.
    """
    if model.regime != "P":
        raise ValueError("the constraint-program variant needs nonnegative costs")
    if config.J0 is None or config.Q0 is None:
        raise ValueError("config must provide J0 and Q0")
    J = np.asarray(config.J0, dtype=float).copy()
    Q = np.asarray(config.Q0, dtype=float).copy()
    Jstar, Qstar = _gt_parts(config)
    dist0 = None if Jstar is None else (
        max(_dist(J, Jstar), _dist(Q, Qstar)) if Qstar is not None else _dist(J, Jstar))
    trace = IterationTrace(
        algorithm="lp", regime=model.regime, discount=model.discount,
        config=config.echo(), J0=J.copy(), Q0=Q.copy(), dist0=dist0,
        ground_truth_known=Jstar is not None)
    c_cone = None if Jstar is None else cone_multiplier(np.asarray(config.J0), Jstar)
    start = time.perf_counter()
    policy = config.initial_policy or greedy_select(model, Q, epsilon=0.0)
    for k in range(config.max_iter):
        if k > 0 or config.initial_policy is None:
            policy = greedy_select(model, Q, epsilon=0.0)
        B, used_policy = config.bstrategy.resolve(model, policy, k)
        theta = Theta(used_policy, B)
        bound = lp_upper_bound(model, theta, J)
        Q_next = bound.Qbar
        Q_fix, cert = q_fixed_point(model, theta, J, config.fp_options)
        trace.op_count += cert.iterations + bound.certificate.iterations
        lower_ineq = _margin_leq(Q_fix, Q_next)      # <= 0 when Qbar >= Q_fix
        upper_ineq = bound.certificate.upper_margin  # >= 0 when Qbar <= F(Qbar)
        J_next = _clamp(m_minimize(model, Q_next), config)
        res_J = sup_dist(J_next, J)
        res_Q = sup_dist(Q_next, Q)
        J, Q = J_next, Q_next
        row = TraceRow(
            k=k + 1, residual=res_J,
            dist_J=_dist(J, Jstar) if Jstar is not None else None,
            dist_Q=_dist(Q, Qstar) if Qstar is not None else None,
            policy=used_policy.descriptor(),
            b_set=_describe_b(B, model.num_states),
            lower_margin=None if Jstar is None else _margin_leq(Jstar, J),
            q_lower_margin=None if Qstar is None else _margin_leq(Qstar, Q),
            wall_time=time.perf_counter() - start,
            extra={
                "residual_Q": res_Q,
                "ineq_lower_margin": lower_ineq,
                "ineq_upper_margin": upper_ineq,
                "cone_margin": None if Jstar is None or c_cone is None
                or not np.isfinite(c_cone)
                else _margin_leq(J, c_cone * Jstar),
            },
        )
        trace.append(row)
        if config.stop_on_tol and max(res_J, res_Q) <= config.tol:
            return MixedResult(J=J, Q=Q, policy=policy, trace=trace, converged=True)
    if config.raise_on_cap:
        raise SolverCapError(
            f"constraint-program iteration hit the {config.max_iter}-iteration cap",
            last=(J, Q), trace=trace, bound="lower")
    return MixedResult(J=J, Q=Q, policy=policy, trace=trace, converged=False)


# ---------------------------------------------------------------------------
# Policy extraction


def extract_policy_discounted(model: TotalCostModel, Q: np.ndarray, epsilon: float,
                              delta: float | None = None, k: int | None = None
                              ) -> tuple[Policy, float | None]:
    """Epsilon-greedy policy from a Q iterate of a discounted run, with
    the a-priori suboptimality bound (2 alpha^k delta + epsilon)/(1 - alpha)
    when the initial distance delta and the iteration index k are known."""
    if model.regime != "D":
        raise ValueError("the a-priori extraction bound is for discounted models")
    policy = greedy_select(model, Q, epsilon=epsilon)
    bound = None
    if delta is not None and k is not None:
        bound = (2.0 * model.discount ** k * delta + epsilon) / (1.0 - model.discount)
    return policy, bound


def build_n_stage_policy(model: TotalCostModel, J: np.ndarray, delta: float,
                         n_max: int = 1000) -> tuple[list[Policy], np.ndarray]:
    """Stage policies whose composed backup stays within delta of J.

    Finds the smallest n <= n_max with T^n(J) <= J + delta/2 elementwise,
    then extracts exact-greedy stage policies backward so the composed
    fixed-policy backup equals T^n(J).  Returns the policies in
    application order and the elementwise slack of the composition.
    """
    if model.regime != "P":
        raise ValueError("the n-stage construction is for nonnegative-cost models")
    if not model.atomic_only:
        raise ValueError("the n-stage construction needs an atomic-only model")
    J = np.asarray(J, dtype=float)
    if not np.isfinite(J).all():
        raise ValueError("J must be finite")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    iterates = [J]
    best = INF
    n_found = None
    for n in range(1, n_max + 1):
        iterates.append(bellman_T(model, iterates[-1]))
        margin = _margin_leq(iterates[-1], J + delta / 2.0)
        best = min(best, margin)
        if margin <= 0.0:
            n_found = n
            break
    if n_found is None:
        raise ValueError(
            f"no horizon up to {n_max} brings the backup within delta/2 of J "
            f"(best margin above target: {best:g})")
    stages = []
    # mu_i is greedy for the value T^{n-i}(J); applying the stages in
    # order reproduces T^n(J) exactly because finite minima are attained.
    for i in range(1, n_found + 1):
        target = iterates[n_found - i]
        stages.append(greedy_select(model, h_backup(model, target), epsilon=0.0))
    composed = J
    for mu in reversed(stages):
        composed = bellman_T_mu(model, mu, composed)
    slack = composed - J
    return stages, slack


# ---------------------------------------------------------------------------
# Certificate verification


def cone_multiplier(J: np.ndarray, Jstar: np.ndarray) -> float:
    """Smallest c with J <= c * Jstar, infinity-aware.

    States with Jstar = 0 force J = 0 there; otherwise no finite c
    exists and the result is +inf.  States with infinite Jstar never
    constrain c.
    """
    J = np.asarray(J, dtype=float)
    Jstar = np.asarray(Jstar, dtype=float)
    c = 0.0
    for jx, sx in zip(J, Jstar):
        if np.isposinf(sx):
            continue
        if sx == 0.0:
            if jx != 0.0:
                return INF
            continue
        c = max(c, jx / sx)
    return c


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class CertReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name} (worst margin {c.margin:g})"
                         + (f": {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def verify_certificates(model: TotalCostModel, trace: IterationTrace,
                        ground_truth: tuple[np.ndarray, np.ndarray | None] | None = None,
                        rate_slack: float = 1e-12,
                        order_slack: float = 0.0) -> CertReport:
    """Replay the convergence guarantees recorded in a trace.

    Discounted traces check the geometric rate against the initial
    distance; undiscounted ones check the envelope sandwich
    Jstar <= J_k <= T^k(J0) (the lower side only under certified initial
    dominance).  With ground truth supplied, the initial function is
    also tested for membership in the convergence cone: bounded by a
    finite multiple of Jstar and zero wherever Jstar is zero.
    """
    checks: list[CheckResult] = []
    Jstar = Qstar = None
    if ground_truth is not None:
        Jstar = np.asarray(ground_truth[0], dtype=float)
        if ground_truth[1] is not None:
            Qstar = np.asarray(ground_truth[1], dtype=float)

    if (model.regime == "D" and trace.dist0 is not None
            and not trace.config.get("masks")):
        worst = -INF
        ok = True
        alpha = model.discount
        for row in trace.rows:
            dists = [d for d in (row.dist_J, row.dist_Q) if d is not None]
            if not dists:
                continue
            bound = alpha ** row.k * trace.dist0 + rate_slack
            margin = max(dists) - bound
            worst = max(worst, margin)
            if margin > 0.0:
                ok = False
        checks.append(CheckResult(
            "geometric-rate", ok, worst if worst > -INF else 0.0,
            f"alpha={alpha}, dist0={trace.dist0:g}"))

    if model.regime in ("N", "P"):
        ups = [row.upper_margin for row in trace.rows if row.upper_margin is not None]
        if ups:
            worst = max(ups)
            checks.append(CheckResult(
                "envelope-upper", worst <= order_slack, worst,
                "J_k <= T^k(J0) elementwise"))
        if trace.initial_dominance:
            lows = [row.lower_margin for row in trace.rows
                    if row.lower_margin is not None]
            qlows = [row.q_lower_margin for row in trace.rows
                     if row.q_lower_margin is not None]
            if lows:
                worst = max(lows + qlows)
                checks.append(CheckResult(
                    "dominance-lower", worst <= order_slack, worst,
                    "Jstar <= J_k and Qstar <= Q_k elementwise"))

    if Jstar is not None and trace.J0 is not None and model.regime == "P":
        c = cone_multiplier(trace.J0, Jstar)
        nonneg = bool((trace.J0 >= 0.0).all())
        witness = "" if nonneg else "J0 has negative entries"
        if not np.isfinite(c):
            for x, (jx, sx) in enumerate(zip(trace.J0, Jstar)):
                if sx == 0.0 and jx != 0.0:
                    witness = f"state {x}: J0={jx:g} but Jstar=0"
                    break
                if np.isfinite(sx) and sx > 0 and np.isposinf(jx):
                    witness = f"state {x}: J0 infinite over finite Jstar"
                    break
        checks.append(CheckResult(
            "cone-membership", bool(np.isfinite(c)) and nonneg,
            c if np.isfinite(c) else INF,
            witness or f"J0 <= c Jstar with c={c:g}"))
        finite_zero = bool(nonneg and np.isfinite(trace.J0).all()
                           and all(trace.J0[x] == 0.0
                                   for x in range(len(Jstar)) if Jstar[x] == 0.0))
        checks.append(CheckResult(
            "zero-set-membership", finite_zero, 0.0 if finite_zero else INF,
            "J0 finite, nonnegative, and zero on the zero set of Jstar"))
    return CertReport(tuple(checks))
