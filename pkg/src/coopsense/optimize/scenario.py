"""Sequential schedule decisions over a branching set of switch patterns.

Each reporting window reveals which nodes actually forwarded; the next
window's forwarding probabilities may depend on everything observed so
far.  Enumerating (or sampling) the possible observation sequences gives
a tree whose branches carry occurrence probabilities determined by the
decisions made along them.  Decisions on a shared history prefix must
agree -- they cannot depend on observations that are not yet available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..detection import np_pieces, qfunc
from ..model import (
    BernoulliSchedule,
    NetworkConfig,
    Realization,
    realization_mass,
    realization_table,
)
from ..moments import MomentSet, normalize_unit_report_noise
from .kkt import p5_objective, solve_npc_two_stage

# Enumerated trees have 2^(n*T) observation paths before pruning; this
# cap keeps the full walk comfortably in memory and time.
MAX_TREE_BITS = 16

# decision_fn(t, prefix) -> schedule for the window after the t-th
# observation; prefix is a (t, n) 0/1 array of the patterns seen so far
# (empty at the root, where t = 0).
DecisionFn = Callable[[int, np.ndarray], BernoulliSchedule]


def stage_observation_prob(
    sched: BernoulliSchedule, psi: np.ndarray | Realization
) -> float:
    """Probability of observing the pattern psi one stage after sched.

    The pattern for the next window is drawn coordinate-wise Bernoulli
    from the schedule decided at the previous stage, so this is the
    plain product mass of psi under sched.
    """
    r = psi if isinstance(psi, Realization) else Realization(np.asarray(psi))
    return realization_mass(sched, r)


@dataclass(frozen=True)
class ScenarioBranch:
    """One root-to-leaf path: its observations, decisions, and mass.

    observations is (T, n) with row t-1 holding the stage-t pattern;
    decisions holds T + 1 schedules, the root decision first and the
    post-final-observation decision last.
    """

    observations: np.ndarray
    decisions: tuple[BernoulliSchedule, ...]
    pi: float

    def __post_init__(self) -> None:
        obs = np.asarray(self.observations, dtype=np.int8)
        if obs.ndim != 2:
            raise ValueError("observations must be a (T, n) array")
        if len(self.decisions) != obs.shape[0] + 1:
            raise ValueError("need exactly T + 1 decisions for T observations")
        if not 0.0 <= self.pi <= 1.0 + 1e-12:
            raise ValueError("branch probability must lie in [0, 1]")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    @property
    def depth(self) -> int:
        return self.observations.shape[0]


@dataclass(frozen=True)
class ScenarioTree:
    """A set of observation branches with their occurrence probabilities.

    For complete (enumerated) trees the branch probabilities sum to one;
    sampled trees carry equal empirical weights 1 / n_branches instead.
    """

    T: int
    n: int
    branches: tuple[ScenarioBranch, ...]
    sampled: bool = False

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def total_mass(self) -> float:
        return float(sum(br.pi for br in self.branches))

    def verify_non_anticipativity(self, atol: float = 0.0) -> bool:
        """Re-check that equal history prefixes carry equal decisions.

        Hashes each branch's observation prefix per stage and compares
        the decision stored under it across branches.
        """
        seen: dict[tuple[int, bytes], np.ndarray] = {}
        for br in self.branches:
            for t in range(self.T + 1):
                key = (t, br.observations[:t].tobytes())
                p = br.decisions[t].p
                if key in seen:
                    if not np.allclose(seen[key], p, rtol=0.0, atol=atol):
                        return False
                else:
                    seen[key] = p
        return True


def _memoized(decision_fn: DecisionFn) -> DecisionFn:
    """Pin decisions to their history prefix so shared prefixes agree."""
    memo: dict[tuple[int, bytes], BernoulliSchedule] = {}

    def decide(t: int, prefix: np.ndarray) -> BernoulliSchedule:
        key = (t, prefix.tobytes())
        if key not in memo:
            memo[key] = decision_fn(t, prefix)
        return memo[key]

    return decide


def build_scenario_tree(
    cfg: NetworkConfig,
    T: int,
    decision_fn: DecisionFn,
    mode: str = "enumerate",
    n_branches: int = 256,
    seed: int | None = None,
) -> ScenarioTree:
    """Walk T decision stages, branching on every window's pattern.

    In "enumerate" mode every observation sequence with positive mass
    becomes a branch (zero-probability subtrees are pruned), which needs
    n * T <= MAX_TREE_BITS; "sampled" mode draws n_branches forward
    paths instead and weights each 1 / n_branches.
    """
    if T < 1:
        raise ValueError("need at least one decision stage")
    n = cfg.n
    decide = _memoized(decision_fn)
    branches: list[ScenarioBranch] = []

    if mode == "enumerate":
        bits = n * T
        if bits > MAX_TREE_BITS:
            raise ValueError(
                f"enumerating 2^{bits} observation paths exceeds the "
                f"2^{MAX_TREE_BITS} cap; use mode='sampled'"
            )
        patterns = realization_table(n)

        def walk(prefix: np.ndarray, mass: float,
                 decs: tuple[BernoulliSchedule, ...]) -> None:
            t = prefix.shape[0]
            zeta = decide(t, prefix)
            decs = decs + (zeta,)
            if t == T:
                branches.append(ScenarioBranch(prefix, decs, mass))
                return
            for psi in patterns:
                phi = stage_observation_prob(zeta, psi)
                if phi == 0.0:
                    continue
                walk(np.vstack([prefix, psi[None, :]]), mass * phi, decs)

        walk(np.empty((0, n), dtype=np.int8), 1.0, ())
    elif mode == "sampled":
        if n_branches < 1:
            raise ValueError("n_branches must be >= 1")
        rng = np.random.default_rng(seed)
        weight = 1.0 / n_branches
        for _ in range(n_branches):
            prefix = np.empty((0, n), dtype=np.int8)
            decs: tuple[BernoulliSchedule, ...] = ()
            for t in range(T + 1):
                zeta = decide(t, prefix)
                decs = decs + (zeta,)
                if t == T:
                    break
                psi = (rng.random(n) < zeta.p).astype(np.int8)
                prefix = np.vstack([prefix, psi[None, :]])
            branches.append(ScenarioBranch(prefix, decs, weight))
    else:
        raise ValueError(f"unknown mode: {mode!r}")

    return ScenarioTree(T=T, n=n, branches=tuple(branches),
                        sampled=(mode == "sampled"))


def branch_average_pd(
    branch: ScenarioBranch,
    cfg: NetworkConfig,
    mom: MomentSet,
    rule_w: np.ndarray,
) -> float:
    """Detection probability averaged over the branch's T stages.

    Stage t contributes the pattern-conditioned detection probability of
    the decision made after observing that stage's pattern, i.e. the
    Gaussian tail of the schedule-design objective evaluated there.
    """
    mom_n = normalize_unit_report_noise(mom, cfg.sigma_z2)
    total = 0.0
    for t in range(1, branch.depth + 1):
        pieces = np_pieces(rule_w, mom_n, branch.observations[t - 1])
        val = p5_objective(branch.decisions[t].p, pieces.sigma0,
                           pieces.sigma1, pieces.q_b, cfg.alpha)
        total += float(qfunc(val)) if np.isfinite(val) else 0.0
    return total / branch.depth


def weighted_average_pd(
    tree: ScenarioTree,
    cfg: NetworkConfig,
    mom: MomentSet,
    rule_w: np.ndarray,
) -> float:
    """Tree-wide objective: occurrence-weighted branch averages."""
    return float(sum(
        br.pi * branch_average_pd(br, cfg, mom, rule_w)
        for br in tree.branches
    ))


def npc_decision_fn(
    cfg: NetworkConfig,
    mom: MomentSet,
    rule_w: np.ndarray,
) -> DecisionFn:
    """Decision policy that re-solves the two-stage design per stage.

    The root (no observations yet) and any all-interrupted pattern carry
    no separation information, so both fall back to the uniform
    budget-filling schedule; every other pattern gets the closed-form
    two-stage solution for that pattern.  Decisions are cached per
    pattern since the solve depends only on the latest observation.
    """
    fallback = BernoulliSchedule.uniform(min(1.0, 1.0 - cfg.eta), cfg.n)
    cache: dict[bytes, BernoulliSchedule] = {}

    def decide(t: int, prefix: np.ndarray) -> BernoulliSchedule:
        if t == 0 or not prefix[-1].any():
            return fallback
        key = prefix[-1].tobytes()
        if key not in cache:
            cache[key] = solve_npc_two_stage(cfg, mom, rule_w, prefix[-1])
        return cache[key]

    return decide


def solve_per_branch(
    tree: ScenarioTree,
    k: int,
    cfg: NetworkConfig,
    mom: MomentSet,
    rule_w: np.ndarray,
    memo: dict | None = None,
) -> tuple[BernoulliSchedule, ...]:
    """Re-derive the decision sequence for the k-th branch.

    Walks the branch's observations through the per-stage policy; pass
    one memo dict across calls to share prefix decisions between
    branches (identical prefixes then reuse the stored schedule).
    """
    if not 0 <= k < tree.n_branches:
        raise IndexError(f"branch index {k} out of range")
    if memo is None:
        memo = {}
    decide = npc_decision_fn(cfg, mom, rule_w)
    branch = tree.branches[k]
    decisions: list[BernoulliSchedule] = []
    for t in range(branch.depth + 1):
        prefix = branch.observations[:t]
        key = (t, prefix.tobytes())
        if key not in memo:
            memo[key] = decide(t, prefix)
        decisions.append(memo[key])
    return tuple(decisions)
