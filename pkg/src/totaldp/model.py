"""Finite total-cost MDP model types and validation.

A model carries finitely many states, per-state atomic controls, and
optionally per-state affine control families: one-parameter control
intervals whose one-stage cost and transition probabilities are affine in
the parameter.  Affine families are the finite representation of interval
control sets such as U(x) = (0, 1).

Three problem regimes are supported:

    D   discounted, alpha < 1, costs bounded
    N   undiscounted, alpha = 1, costs <= 0
    P   undiscounted, alpha = 1, costs >= 0

All types are immutable after construction; operations elsewhere in the
package are pure functions of their inputs and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .extreal import expect

PROB_TOL = 1e-12

REGIMES = ("D", "N", "P")


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AtomicControl:
    """One control: a one-stage cost and a transition distribution."""

    name: str
    cost: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))


@dataclass(frozen=True)
class AffineFamily:
    """Control interval (lo, hi) with cost c0 + c1*t and per-successor
    transition probability p0[x'] + p1[x']*t."""

    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool
    c0: float
    c1: float
    p0: np.ndarray
    p1: np.ndarray
    name: str = "family"

    def __post_init__(self):
        object.__setattr__(self, "p0", _frozen(self.p0))
        object.__setattr__(self, "p1", _frozen(self.p1))

    def cost_at(self, t: float) -> float:
        return self.c0 + self.c1 * t

    def probs_at(self, t: float) -> np.ndarray:
        return self.p0 + self.p1 * t


@dataclass(frozen=True)
class TotalCostModel:
    regime: str
    discount: float
    controls: tuple[tuple[AtomicControl, ...], ...]
    families: tuple[tuple[AffineFamily, ...], ...] = None  # type: ignore[assignment]
    state_names: tuple[str, ...] = None  # type: ignore[assignment]
    cost_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(tuple(cs) for cs in self.controls))
        fams = self.families
        if fams is None:
            fams = tuple(() for _ in self.controls)
        object.__setattr__(self, "families", tuple(tuple(fs) for fs in fams))
        names = self.state_names
        if names is None:
            names = tuple(str(i) for i in range(len(self.controls)))
        object.__setattr__(self, "state_names", tuple(names))

    @property
    def num_states(self) -> int:
        return len(self.controls)

    @property
    def atomic_only(self) -> bool:
        return all(len(fs) == 0 for fs in self.families)

    @cached_property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        """All (state, control index) pairs, state-major."""
        return tuple((x, i) for x in range(self.num_states)
                     for i in range(len(self.controls[x])))

    @cached_property
    def pair_index(self) -> dict[tuple[int, int], int]:
        return {p: k for k, p in enumerate(self.pairs)}

    @cached_property
    def pair_slices(self) -> tuple[slice, ...]:
        """Per-state slice into the pair axis."""
        out, start = [], 0
        for x in range(self.num_states):
            n = len(self.controls[x])
            out.append(slice(start, start + n))
            start += n
        return tuple(out)

    @cached_property
    def pair_costs(self) -> np.ndarray:
        g = np.array([self.controls[x][i].cost for x, i in self.pairs], dtype=float)
        g.setflags(write=False)
        return g

    @cached_property
    def pair_probs(self) -> np.ndarray:
        """Transition matrix over atomic pairs, shape (num pairs, num states)."""
        if not self.pairs:
            P = np.zeros((0, self.num_states))
        else:
            P = np.stack([self.controls[x][i].probs for x, i in self.pairs])
        P.setflags(write=False)
        return P

    def control_names(self, x: int) -> tuple[str, ...]:
        return tuple(c.name for c in self.controls[x])

    def num_pairs(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class AtomicMix:
    """Randomized choice over a state's atomic controls."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))


@dataclass(frozen=True)
class FamilyChoice:
    """Deterministic parameter choice inside one affine family."""

    family: int
    t: float


PolicyAction = Union[AtomicMix, FamilyChoice]


@dataclass(frozen=True)
class Policy:
    actions: tuple[PolicyAction, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))

    @staticmethod
    def deterministic(model: TotalCostModel, choices: Sequence[int]) -> "Policy":
        acts = []
        for x, i in enumerate(choices):
            w = np.zeros(len(model.controls[x]))
            w[i] = 1.0
            acts.append(AtomicMix(w))
        return Policy(tuple(acts))

    @staticmethod
    def uniform(model: TotalCostModel) -> "Policy":
        acts = []
        for x in range(model.num_states):
            n = len(model.controls[x])
            acts.append(AtomicMix(np.full(n, 1.0 / n)))
        return Policy(tuple(acts))

    @property
    def atomic(self) -> bool:
        return all(isinstance(a, AtomicMix) for a in self.actions)

    def is_deterministic(self) -> bool:
        for a in self.actions:
            if isinstance(a, FamilyChoice):
                continue
            if not np.isclose(a.weights.max(initial=0.0), 1.0, atol=PROB_TOL):
                return False
        return True

    def action_index(self, x: int) -> int:
        """Chosen control index at x for a deterministic atomic action."""
        a = self.actions[x]
        if not isinstance(a, AtomicMix):
            raise ValueError(f"state {x} uses a family parameter, not an atomic control")
        return int(np.argmax(a.weights))

    def descriptor(self) -> str:
        parts = []
        for x, a in enumerate(self.actions):
            if isinstance(a, FamilyChoice):
                parts.append(f"{x}:t={a.t:g}")
            elif np.isclose(a.weights.max(initial=0.0), 1.0, atol=PROB_TOL):
                parts.append(f"{x}:{int(np.argmax(a.weights))}")
            else:
                parts.append(f"{x}:mix")
        return ",".join(parts)


def validate_model(model: TotalCostModel) -> list[str]:
    """Check every model invariant; returns [] when the model is valid.

    Violations are data, not exceptions: each entry names the broken
    invariant and where it is broken.
    """
    bad: list[str] = []
    n = model.num_states
    if model.regime not in REGIMES:
        bad.append(f"regime must be one of {REGIMES}, got {model.regime!r}")
        return bad
    if model.regime == "D":
        if not (0.0 <= model.discount < 1.0):
            bad.append(f"regime D requires discount in [0, 1), got {model.discount}")
    else:
        if model.discount != 1.0:
            bad.append(f"regime {model.regime} requires discount 1, got {model.discount}")

    def check_cost(value: float, where: str) -> None:
        if model.regime == "D":
            if not math.isfinite(value):
                bad.append(f"regime D requires finite costs: {where} = {value}")
            elif model.cost_bound is not None and abs(value) > model.cost_bound + PROB_TOL:
                bad.append(f"regime D cost bound {model.cost_bound} exceeded: {where} = {value}")
        elif model.regime == "N" and value > 0.0:
            bad.append(f"regime N requires g <= 0: {where} = {value}")
        elif model.regime == "P" and value < 0.0:
            bad.append(f"regime P requires g >= 0: {where} = {value}")

    for x in range(n):
        if not model.controls[x] and not model.families[x]:
            bad.append(f"state {x} has no atomic control and no affine family")
        for i, c in enumerate(model.controls[x]):
            where = f"state {x} control {c.name!r}"
            if c.probs.shape != (n,):
                bad.append(f"{where}: transition row has shape {c.probs.shape}, want ({n},)")
                continue
            if (c.probs < -PROB_TOL).any():
                bad.append(f"{where}: negative transition probability")
            if abs(float(c.probs.sum()) - 1.0) > PROB_TOL:
                bad.append(f"{where}: distribution sum {float(c.probs.sum())!r} != 1")
            check_cost(c.cost, where)
        for j, f in enumerate(model.families[x]):
            where = f"state {x} family {j}"
            if not (0.0 <= f.lo < f.hi <= 1.0):
                bad.append(f"{where}: interval [{f.lo}, {f.hi}] not inside [0, 1] or empty")
                continue
            if f.p0.shape != (n,) or f.p1.shape != (n,):
                bad.append(f"{where}: coefficient rows must have shape ({n},)")
                continue
            if abs(float(f.p0.sum()) - 1.0) > PROB_TOL:
                bad.append(f"{where}: p0 sums to {float(f.p0.sum())!r}, want 1")
            if abs(float(f.p1.sum())) > PROB_TOL:
                bad.append(f"{where}: p1 sums to {float(f.p1.sum())!r}, want 0")
            for t in (f.lo, f.hi):
                probs = f.probs_at(t)
                if (probs < -PROB_TOL).any() or (probs > 1.0 + PROB_TOL).any():
                    bad.append(f"{where}: probabilities leave [0, 1] at t = {t}")
                check_cost(f.cost_at(t), f"{where} at t = {t}")
    return bad


def validate_policy(model: TotalCostModel, policy: Policy) -> list[str]:
    bad: list[str] = []
    if len(policy.actions) != model.num_states:
        return [f"policy has {len(policy.actions)} actions for {model.num_states} states"]
    for x, a in enumerate(policy.actions):
        if isinstance(a, AtomicMix):
            n = len(model.controls[x])
            if a.weights.shape != (n,):
                bad.append(f"state {x}: weight vector shape {a.weights.shape}, want ({n},)")
                continue
            if (a.weights < -PROB_TOL).any():
                bad.append(f"state {x}: negative control weight")
            if abs(float(a.weights.sum()) - 1.0) > PROB_TOL:
                bad.append(f"state {x}: weights sum to {float(a.weights.sum())!r}")
        else:
            if not (0 <= a.family < len(model.families[x])):
                bad.append(f"state {x}: no affine family {a.family}")
                continue
            f = model.families[x][a.family]
            if not (f.lo < a.t < f.hi
                    or (f.lo_closed and a.t == f.lo)
                    or (f.hi_closed and a.t == f.hi)):
                bad.append(f"state {x}: parameter {a.t} outside family interval")
    return bad


def induced_kernel(model: TotalCostModel, policy: Policy) -> tuple[np.ndarray, np.ndarray]:
    """Markov kernel and expected one-stage cost under a stationary policy."""
    n = model.num_states
    P = np.zeros((n, n))
    g = np.zeros(n)
    for x, a in enumerate(policy.actions):
        if isinstance(a, AtomicMix):
            costs = np.array([c.cost for c in model.controls[x]], dtype=float)
            g[x] = expect(a.weights, costs)
            for w, c in zip(a.weights, model.controls[x]):
                if w > 0.0:
                    P[x] += w * c.probs
        else:
            f = model.families[x][a.family]
            g[x] = f.cost_at(a.t)
            P[x] = f.probs_at(a.t)
    return P, g


def induced_complement(model: TotalCostModel, policy: Policy
                       ) -> tuple[np.ndarray, np.ndarray]:
    """I minus the policy kernel, assembled from the control pieces.

    Subtracting the identity from each piece before applying affine
    parameters avoids the cancellation in 1 - (p0 + t*p1) when p0 has
    0/1 entries, which keeps deterministic-chain evaluations exact.
    """
    n = model.num_states
    A = np.zeros((n, n))
    g = np.zeros(n)
    for x, a in enumerate(policy.actions):
        row = np.zeros(n)
        row[x] = 1.0
        if isinstance(a, AtomicMix):
            costs = np.array([c.cost for c in model.controls[x]], dtype=float)
            g[x] = expect(a.weights, costs)
            for w, c in zip(a.weights, model.controls[x]):
                if w > 0.0:
                    row = row - w * c.probs
        else:
            f = model.families[x][a.family]
            g[x] = f.cost_at(a.t)
            row = row - f.p0
            row = row - a.t * f.p1
        A[x] = row
    return A, g


def regime_conforming(model: TotalCostModel, J: np.ndarray) -> bool:
    """Whether J satisfies the regime's sign/boundedness constraint."""
    J = np.asarray(J, dtype=float)
    if model.regime == "D":
        return bool(np.isfinite(J).all())
    if model.regime == "N":
        return bool((J <= 0.0).all())
    return bool((J >= 0.0).all())
