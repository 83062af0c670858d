"""Pushing-configuration evaluation and selection.

Three selection routes over one shared evaluator:

* ``analytical_select`` enumerates every C(M, N) combination of candidate
  contact points and keeps the one whose net pushing direction is closest
  to the target, breaking ties by smaller net-torque magnitude and then by
  lexicographically smallest index set.
* ``conpose_select`` seeds a local search with a pluggable initializer
  (LLM, greedy, or random) and refines by replacing one randomly chosen
  member with every other candidate, up to I_max iterations. It therefore
  evaluates at most I_max * (M - N) + 1 configurations.
* ``naive_select`` validates the initializer proposal and returns it
  without refinement.

All robots push with equal unit force along their candidate's direction,
so a configuration's net force is the sum of unit vectors and its torque is
the sum of per-candidate unit torques (pose-invariant about the object
center). Summation always runs in ascending candidate-index order so the
evaluator, the local search, and the exhaustive kernel agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import WorldCandidateSet

DEFAULT_I_MAX = 5

#: Two delta-phi values closer than this count as a tie (torque decides).
TIE_TOL = 1e-12

#: Net-force magnitudes below this leave the pushing direction undefined.
FORCE_EPS = 1e-9


class SelectionError(Exception):
    pass


class NTooLarge(SelectionError):
    """Requested more contact points than candidates exist."""


class IndexOutOfRange(SelectionError):
    pass


class MalformedProposal(SelectionError):
    """Proposal with the wrong count, duplicates, or out-of-range indices."""


class InitializerFailure(SelectionError):
    """The initializer could not produce a proposal (endpoint down, etc.)."""


@dataclass(frozen=True)
class PushingConfiguration:
    """N distinct candidate indices, stored sorted ascending."""

    indices: tuple[int, ...]

    @classmethod
    def of(cls, indices) -> "PushingConfiguration":
        return cls(tuple(sorted(int(i) for i in indices)))

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class ConfigEvaluation:
    net_force: np.ndarray
    delta_phi: float
    net_torque: float
    force_ok: bool


@dataclass
class SelectionOutcome:
    configuration: PushingConfiguration | None
    evaluation: ConfigEvaluation | None
    evaluations_used: int
    initializer_used: str
    feasible: bool
    llm_reasoning: str | None = None


@dataclass
class Proposal:
    """Initializer output: candidate indices plus optional LLM reasoning."""

    indices: list[int]
    reasoning: str | None = None


def _sum_config(indices, ux, uy, tq):
    sx = 0.0
    sy = 0.0
    st = 0.0
    for i in indices:
        sx += ux[i]
        sy += uy[i]
        st += tq[i]
    return sx, sy, st


def _delta_phi(sx: float, sy: float, fx: float, fy: float) -> float:
    norm = math.sqrt(sx * sx + sy * sy)
    if norm < FORCE_EPS:
        return math.pi
    dot = (fx * sx + fy * sy) / norm
    if dot > 1.0:
        dot = 1.0
    elif dot < -1.0:
        dot = -1.0
    return math.acos(dot)


def evaluate(config, candidates: WorldCandidateSet, target_phi: float) -> ConfigEvaluation:
    """Net force, angular deviation, and net torque of one configuration."""
    indices = config.indices if isinstance(config, PushingConfiguration) else tuple(sorted(config))
    m = len(candidates)
    for i in indices:
        if i < 0 or i >= m:
            raise IndexOutOfRange(f"candidate index {i} outside [0, {m})")
    ux = np.cos(candidates.directions).tolist()
    uy = np.sin(candidates.directions).tolist()
    tq = candidates.unit_torques.tolist()
    sx, sy, st = _sum_config(indices, ux, uy, tq)
    fx, fy = math.cos(target_phi), math.sin(target_phi)
    dphi = _delta_phi(sx, sy, fx, fy)
    norm = math.sqrt(sx * sx + sy * sy)
    return ConfigEvaluation(
        net_force=np.array([sx, sy]),
        delta_phi=dphi,
        net_torque=st,
        force_ok=norm > 0.5 * len(indices),
    )


def analytical_select(
    candidates: WorldCandidateSet,
    target_phi: float,
    n: int,
    epsilon: float | None = None,
) -> SelectionOutcome:
    """Exhaustive search over all C(M, n) pushing configurations."""
    m = len(candidates)
    if n > m:
        raise NTooLarge(f"n={n} exceeds candidate count {m}")
    ux = np.ascontiguousarray(np.cos(candidates.directions))
    uy = np.ascontiguousarray(np.sin(candidates.directions))
    tq = np.ascontiguousarray(candidates.unit_torques, dtype=float)
    fx, fy = math.cos(target_phi), math.sin(target_phi)
    idx, _, _, found = kernels.best_combination(
        ux, uy, tq, n, fx, fy, 0.5 * n, TIE_TOL
    )
    evaluations = math.comb(m, n)
    if not found:
        return SelectionOutcome(None, None, evaluations, "none", False)
    config = PushingConfiguration.of(idx.tolist())
    ev = evaluate(config, candidates, target_phi)
    feasible = ev.force_ok and (epsilon is None or ev.delta_phi < epsilon)
    return SelectionOutcome(config, ev, evaluations, "none", feasible)


def conpose_select(
    initializer,
    candidates: WorldCandidateSet,
    target_phi: float,
    epsilon: float,
    n: int,
    i_max: int = DEFAULT_I_MAX,
    rng=None,
) -> SelectionOutcome:
    """Local search seeded by an initializer proposal.

    Returns immediately if the proposal is feasible (delta_phi < epsilon and
    sufficient net force). Otherwise up to ``i_max`` iterations each replace
    one uniformly chosen member with every candidate outside the current
    configuration, accepting the first feasible neighbor and otherwise
    tracking the best force-feasible neighbor seen so far.

    On InitializerFailure the greedy initializer is substituted so episodes
    keep running when the LLM endpoint is unavailable.
    """
    m = len(candidates)
    if n > m:
        raise NTooLarge(f"n={n} exceeds candidate count {m}")
    rng = np.random.default_rng(rng)

    initializer_used = getattr(initializer, "name", "greedy")
    reasoning = None
    try:
        proposal = _call_initializer(initializer, candidates, target_phi, n, rng)
        reasoning = proposal.reasoning
        current = [int(i) for i in proposal.indices]
        _validate_indices(current, n, m)
    except InitializerFailure:
        current = list(greedy_initializer(candidates, target_phi, n).indices)
        initializer_used = "greedy"
    except MalformedProposal:
        current = list(greedy_initializer(candidates, target_phi, n).indices)
        initializer_used = "greedy"

    ux = np.cos(candidates.directions).tolist()
    uy = np.sin(candidates.directions).tolist()
    tq = candidates.unit_torques.tolist()
    fx, fy = math.cos(target_phi), math.sin(target_phi)
    half_n = 0.5 * n

    def _eval(indices):
        sx, sy, st = _sum_config(sorted(indices), ux, uy, tq)
        norm = math.sqrt(sx * sx + sy * sy)
        return _delta_phi(sx, sy, fx, fy), st, norm > half_n

    evaluations = 1
    dphi0, tau0, ok0 = _eval(current)
    if dphi0 < epsilon and ok0:
        config = PushingConfiguration.of(current)
        return SelectionOutcome(
            config, evaluate(config, candidates, target_phi),
            evaluations, initializer_used, True, reasoning,
        )

    best = list(current) if ok0 else None
    best_dphi = dphi0 if ok0 else math.inf
    best_tau = abs(tau0) if ok0 else math.inf

    member_set = set(current)
    for _ in range(i_max):
        slot = int(rng.integers(0, n))
        for j in range(m):
            if j in member_set:
                continue
            neighbor = list(current)
            neighbor[slot] = j
            evaluations += 1
            dphi, tau, ok = _eval(neighbor)
            if dphi < epsilon and ok:
                config = PushingConfiguration.of(neighbor)
                return SelectionOutcome(
                    config, evaluate(config, candidates, target_phi),
                    evaluations, initializer_used, True, reasoning,
                )
            if ok and (
                best is None
                or dphi < best_dphi - TIE_TOL
                or (abs(dphi - best_dphi) <= TIE_TOL and abs(tau) < best_tau)
            ):
                best = neighbor
                best_dphi = dphi
                best_tau = abs(tau)
        if best is not None:
            current = list(best)
            member_set = set(current)

    final = best if best is not None else current
    config = PushingConfiguration.of(final)
    ev = evaluate(config, candidates, target_phi)
    feasible = ev.force_ok and ev.delta_phi < epsilon
    return SelectionOutcome(config, ev, evaluations, initializer_used, feasible, reasoning)


def naive_select(
    initializer,
    candidates: WorldCandidateSet,
    target_phi: float,
    n: int,
    epsilon: float | None = None,
    rng=None,
) -> SelectionOutcome:
    """Initializer proposal used directly, validated but not refined."""
    m = len(candidates)
    if n > m:
        raise NTooLarge(f"n={n} exceeds candidate count {m}")
    rng = np.random.default_rng(rng)
    proposal = _call_initializer(initializer, candidates, target_phi, n, rng)
    indices = [int(i) for i in proposal.indices]
    _validate_indices(indices, n, m)
    config = PushingConfiguration.of(indices)
    ev = evaluate(config, candidates, target_phi)
    feasible = ev.force_ok and (epsilon is None or ev.delta_phi < epsilon)
    return SelectionOutcome(
        config, ev, 1, getattr(initializer, "name", "greedy"), feasible,
        proposal.reasoning,
    )


def _validate_indices(indices, n: int, m: int) -> None:
    if len(indices) != n:
        raise MalformedProposal(f"expected {n} contact points, got {len(indices)}")
    if len(set(indices)) != n:
        raise MalformedProposal(f"duplicate contact points in {indices}")
    for i in indices:
        if i < 0 or i >= m:
            raise MalformedProposal(f"contact point index {i} outside [0, {m})")


def _call_initializer(initializer, candidates, target_phi, n, rng) -> Proposal:
    out = initializer(candidates, target_phi, n, rng)
    if isinstance(out, Proposal):
        return out
    if isinstance(out, PushingConfiguration):
        return Proposal(list(out.indices))
    return Proposal([int(i) for i in out])


def greedy_initializer(candidates: WorldCandidateSet, target_phi: float, n: int) -> PushingConfiguration:
    """The n candidates whose pushing directions best align with the target.

    Alignment is the dot product between the candidate's unit direction and
    the target unit vector; ties go to the lower index.
    """
    if n > len(candidates):
        raise NTooLarge(f"n={n} exceeds candidate count {len(candidates)}")
    dots = np.cos(candidates.directions - target_phi)
    order = np.argsort(-dots, kind="stable")
    return PushingConfiguration.of(order[:n].tolist())


class GreedyInitializer:
    name = "greedy"

    def __call__(self, candidates, target_phi, n, rng) -> Proposal:
        return Proposal(list(greedy_initializer(candidates, target_phi, n).indices))


class RandomInitializer:
    name = "random"

    def __call__(self, candidates, target_phi, n, rng) -> Proposal:
        idx = np.random.default_rng(rng).choice(len(candidates), size=n, replace=False)
        return Proposal(sorted(int(i) for i in idx))


def make_initializer(name: str, llm_config=None):
    if name == "greedy":
        return GreedyInitializer()
    if name == "random":
        return RandomInitializer()
    if name == "llm":
        from .llm import LlmClient, LlmInitializer

        return LlmInitializer(LlmClient(llm_config))
    raise ValueError(f"unknown initializer {name!r}")


class Selector:
    """Callable bundling a selection method with its initializer.

    Invoked as selector(candidates, target_phi, epsilon, n, rng) and returns
    a SelectionOutcome; used by the episode loop and the benchmark harness.
    """

    def __init__(self, method: str, initializer=None, i_max: int = DEFAULT_I_MAX):
        if method not in ("conpose", "analytical", "naive"):
            raise ValueError(f"unknown selector {method!r}")
        if method != "analytical" and initializer is None:
            raise ValueError(f"selector {method!r} needs an initializer")
        self.method = method
        self.initializer = initializer
        self.i_max = i_max

    @property
    def initializer_name(self) -> str:
        return getattr(self.initializer, "name", "none") if self.initializer else "none"

    def __call__(self, candidates, target_phi, epsilon, n, rng=None) -> SelectionOutcome:
        if self.method == "analytical":
            return analytical_select(candidates, target_phi, n, epsilon)
        if self.method == "conpose":
            return conpose_select(
                self.initializer, candidates, target_phi, epsilon, n, self.i_max, rng
            )
        return naive_select(self.initializer, candidates, target_phi, n, epsilon, rng)


def make_selector(method: str, initializer: str = "greedy", i_max: int = DEFAULT_I_MAX,
                  llm_config=None) -> Selector:
    init = None if method == "analytical" else make_initializer(initializer, llm_config)
    return Selector(method, init, i_max)
