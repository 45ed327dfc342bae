"""Exact ground truth by dynamic programming and full trajectory enumeration.

Everything here is computed from the MDP and policy tables directly, without
touching the estimator implementations, so oracle and estimators form two
independent routes to the same quantities:

* ``exact_q`` -- true Q-value of a policy by forward DP on the state
  distribution.
* ``exact_estimator_moments`` -- exact mean and variance of each estimator
  under behaviour-policy generation, by enumerating every possible
  trajectory (and, for the self-normalised estimators, every N-tuple of
  trajectories, since those are nonlinear in trajectories).
* ``check_assumption_covariances`` -- exact covariances behind the variance
  theorems' side conditions.

Enumeration is guarded at 10^6 atoms; the self-normalised family is capped
at N <= 3.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateWeightsError, EnumerationLimitError
from .mdp import FactoredMdp
from .policies import FactoredPolicy, PolicyPair

ENUMERATION_GUARD = 10 ** 6
MAX_RATIO_TUPLE_N = 3
COV_TOL = 1e-10

LINEAR_ESTIMATORS = ("is", "pdis", "decis", "decpdis", "onpolicy")
RATIO_ESTIMATORS = ("pdwis", "decpdwis")


@dataclass(frozen=True)
class MomentReport:
    """Exact mean/variance of one estimator in one configuration."""

    estimator: str
    mean: float
    variance: float
    n: int
    t: int
    gamma: float
    pair_label: Optional[str]
    enumeration_size: int

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator, "mean": self.mean, "variance": self.variance,
            "n": self.n, "t": self.t, "gamma": self.gamma,
            "pair_label": self.pair_label, "enumeration_size": self.enumeration_size,
        }


@dataclass(frozen=True)
class CovarianceCondition:
    """Exact covariances for one side condition, with its sign requirement."""

    name: str
    requirement: str  # "zero" or "nonneg"
    values: dict
    passed: bool


@dataclass(frozen=True)
class AssumptionReport:
    t: int
    pair_label: Optional[str]
    conditions: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def to_dict(self) -> dict:
        return {
            "t": self.t, "pair_label": self.pair_label, "passed": self.passed,
            "conditions": {
                name: {
                    "requirement": c.requirement, "passed": c.passed,
                    "values": {" ".join(map(str, k)): v for k, v in c.values.items()},
                }
                for name, c in self.conditions.items()
            },
        }


def exact_q(mdp: FactoredMdp, policy: FactoredPolicy, gamma: float, t: int) -> float:
    """True expected discounted return over ``t`` steps, by forward DP."""
    if t < 1:
        raise ValueError("t must be >= 1")
    joint = policy.joint_table()
    dist = np.zeros(mdp.n_states)
    dist[mdp.initial_state] = 1.0
    terms = []
    for k in range(t):
        terms.append(gamma ** k * float(np.einsum("s,sa,sa->", dist, joint, mdp.reward)))
        dist = np.einsum("s,sa,sax->x", dist, joint, mdp.transition)
    return math.fsum(terms)


def enumerate_trajectories(mdp: FactoredMdp, policy: FactoredPolicy, t: int,
                           guard: int = ENUMERATION_GUARD):
    """All positive-probability trajectories of length ``t`` under ``policy``.

    Returns ``(probs, states, actions)`` with shapes (M,), (M, t+1), (M, t);
    probabilities sum to 1 within 1e-10 (verified).
    """
    joint = policy.joint_table()
    probs = np.ones(1)
    states = np.full((1, 1), mdp.initial_state, dtype=np.int64)
    actions = np.zeros((1, 0), dtype=np.int64)
    for _ in range(t):
        chunks = []
        for a in range(mdp.n_joint_actions):
            pa = joint[states[:, -1], a]
            for s2 in range(mdp.n_states):
                w = pa * mdp.transition[states[:, -1], a, s2]
                keep = np.nonzero(w > 0.0)[0]
                if keep.size == 0:
                    continue
                chunks.append((keep, w[keep], a, s2))
        total = sum(len(c[0]) for c in chunks)
        if total > guard:
            raise EnumerationLimitError(
                f"trajectory enumeration would exceed {guard} atoms at horizon {t}")
        probs = np.concatenate([probs[keep] * w for keep, w, _, _ in chunks])
        states = np.concatenate([
            np.hstack([states[keep], np.full((keep.size, 1), s2, dtype=np.int64)])
            for keep, _, _, s2 in chunks])
        actions = np.concatenate([
            np.hstack([actions[keep], np.full((keep.size, 1), a, dtype=np.int64)])
            for keep, _, a, _ in chunks])
    total = math.fsum(probs)
    if abs(total - 1.0) > 1e-10:
        raise RuntimeError(f"enumerated probabilities sum to {total!r}, expected 1")
    return probs, states, actions


@dataclass(frozen=True)
class _TrajectoryTables:
    """Per-trajectory building blocks shared by the moment computations."""

    probs: np.ndarray          # (M,)
    rewards: np.ndarray        # (M, t) environment rewards
    sub_rewards: np.ndarray    # (D, M, t)
    joint_prefix: np.ndarray   # (M, t) inclusive prefix products of joint ratios
    factor_prefix: np.ndarray  # (D, M, t)


def _trajectory_tables(mdp: FactoredMdp, pair: PolicyPair, t: int, guard: int) -> _TrajectoryTables:
    probs, states, actions = enumerate_trajectories(mdp, pair.behaviour, t, guard)
    prefix_states = states[:, :-1]
    rewards = mdp.reward[prefix_states, actions]
    joint_b = pair.behaviour.joint_table()[prefix_states, actions]
    joint_e = pair.evaluation.joint_table()[prefix_states, actions]
    joint_prefix = np.cumprod(joint_e / joint_b, axis=1)

    per_factor_actions = mdp.joint_actions[actions]  # (M, t, D)
    sub_rewards = []
    factor_prefix = []
    for d in range(mdp.n_factors):
        z = mdp.abstractions[d][prefix_states]
        a_d = per_factor_actions[:, :, d]
        sub_rewards.append(mdp.sub_rewards[d][z, a_d])
        ratio = pair.evaluation.tables[d][z, a_d] / pair.behaviour.tables[d][z, a_d]
        factor_prefix.append(np.cumprod(ratio, axis=1))
    return _TrajectoryTables(probs, rewards, np.stack(sub_rewards),
                             joint_prefix, np.stack(factor_prefix))


def _mean_var(probs: np.ndarray, values: np.ndarray):
    mean = math.fsum(probs * values)
    second = math.fsum(probs * values * values)
    return mean, second - mean * mean


def _tuple_moments(probs: np.ndarray, make_value, n: int):
    """Moments of a symmetric function of ``n`` iid trajectories.

    ``make_value`` maps stacked index arrays to estimator values; tuples are
    enumerated by outer products, guarded by ``ENUMERATION_GUARD``.
    """
    m = len(probs)
    if m ** n > ENUMERATION_GUARD:
        raise EnumerationLimitError(
            f"{m}^{n} trajectory tuples exceed the {ENUMERATION_GUARD} atom guard")
    idx = np.indices((m,) * n).reshape(n, -1)
    p = probs[idx[0]]
    for k in range(1, n):
        p = p * probs[idx[k]]
    values = make_value(idx)
    mean = math.fsum(p * values)
    second = math.fsum(p * values * values)
    return mean, second - mean * mean, m ** n


def exact_estimator_moments(mdp: FactoredMdp, pair: PolicyPair, estimator: str,
                            n: int, t: int, gamma: float,
                            guard: int = ENUMERATION_GUARD) -> MomentReport:
    """Exact mean and variance of ``estimator`` on size-``n`` datasets.

    The IS family is linear in trajectories, so the mean is N-independent
    and the variance scales as 1/N from single-trajectory moments.  The
    self-normalised family is a ratio of sums, so moments come from
    enumerating all N-tuples (N <= 3).

    The on-policy estimator is evaluated under evaluation-policy generation
    (it runs on evaluation-policy data); everything else under the behaviour
    policy.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if estimator not in LINEAR_ESTIMATORS + RATIO_ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    gpow = gamma ** np.arange(t)

    if estimator == "onpolicy":
        probs, states, actions = enumerate_trajectories(mdp, pair.evaluation, t, guard)
        returns = (mdp.reward[states[:, :-1], actions] * gpow).sum(axis=1)
        mean, var1 = _mean_var(probs, returns)
        return MomentReport(estimator, mean, var1 / n, n, t, gamma,
                            pair.divergence_label, len(probs))

    tab = _trajectory_tables(mdp, pair, t, guard)
    if estimator in LINEAR_ESTIMATORS:
        if estimator == "is":
            values = tab.joint_prefix[:, -1] * (tab.rewards * gpow).sum(axis=1)
        elif estimator == "pdis":
            values = (tab.joint_prefix * tab.rewards * gpow).sum(axis=1)
        elif estimator == "decis":
            values = (tab.factor_prefix[:, :, -1]
                      * (tab.sub_rewards * gpow).sum(axis=2)).sum(axis=0)
        else:  # decpdis
            values = (tab.factor_prefix * tab.sub_rewards * gpow).sum(axis=(0, 2))
        mean, var1 = _mean_var(tab.probs, values)
        return MomentReport(estimator, mean, var1 / n, n, t, gamma,
                            pair.divergence_label, len(tab.probs))

    # ratio estimators: enumerate N-tuples
    if n > MAX_RATIO_TUPLE_N:
        raise EnumerationLimitError(
            f"self-normalised moments enumerate N-tuples; n must be <= {MAX_RATIO_TUPLE_N}")
    if estimator == "pdwis":
        num = (tab.joint_prefix * tab.rewards * gpow).sum(axis=1)
        den = (tab.joint_prefix * gpow).sum(axis=1)

        def value(idx):
            nu = num[idx].sum(axis=0)
            de = den[idx].sum(axis=0)
            if np.any(de == 0.0):
                raise DegenerateWeightsError("zero PDWIS denominator atom in enumeration")
            return nu / de
    else:  # decpdwis
        num_d = (tab.factor_prefix * tab.sub_rewards * gpow).sum(axis=2)  # (D, M)
        den_d = (tab.factor_prefix * gpow).sum(axis=2)

        def value(idx):
            total = 0.0
            for d in range(mdp.n_factors):
                nu = num_d[d][idx].sum(axis=0)
                de = den_d[d][idx].sum(axis=0)
                if np.any(de == 0.0):
                    raise DegenerateWeightsError(
                        f"zero decomposed-PDWIS denominator atom in factor {d}")
                total = total + nu / de
            return total
    mean, var, size = _tuple_moments(tab.probs, value, n)
    return MomentReport(estimator, mean, var, n, t, gamma, pair.divergence_label, size)


def check_assumption_covariances(mdp: FactoredMdp, pair: PolicyPair, t: int,
                                 guard: int = ENUMERATION_GUARD) -> AssumptionReport:
    """Exact covariance side conditions over all index combinations.

    Cross-factor reward covariances (at distinct steps) must be nonnegative;
    cross-factor full-horizon ratio covariances and reward/ratio covariances
    must vanish; same-factor prefix-ratio covariances at distinct steps must
    be nonnegative.  Zero conditions use |cov| <= 1e-10; nonnegative ones
    allow a -1e-10 slack for float round-off in exactly-zero cases.
    """
    tab = _trajectory_tables(mdp, pair, t, guard)
    p = tab.probs
    d_count = mdp.n_factors

    def cov(x, y):
        return math.fsum(p * x * y) - math.fsum(p * x) * math.fsum(p * y)

    reward_reward = {}
    for d1 in range(d_count):
        for d2 in range(d_count):
            if d2 <= d1:
                continue
            for t1 in range(t):
                for t2 in range(t):
                    if t1 == t2:
                        continue
                    reward_reward[(d1, t1, d2, t2)] = cov(
                        tab.sub_rewards[d1, :, t1], tab.sub_rewards[d2, :, t2])

    ratio_ratio = {}
    for d1 in range(d_count):
        for d2 in range(d1 + 1, d_count):
            ratio_ratio[(d1, d2)] = cov(
                tab.factor_prefix[d1, :, -1], tab.factor_prefix[d2, :, -1])

    reward_ratio = {}
    for d1 in range(d_count):
        for t1 in range(t):
            for d2 in range(d_count):
                if d2 == d1:
                    continue
                reward_ratio[(d1, t1, d2)] = cov(
                    tab.sub_rewards[d1, :, t1], tab.factor_prefix[d2, :, -1])

    prefix_prefix = {}
    for d in range(d_count):
        for t1 in range(t):
            for t2 in range(t1 + 1, t):
                prefix_prefix[(d, t1, t2)] = cov(
                    tab.factor_prefix[d, :, t1], tab.factor_prefix[d, :, t2])

    def condition(name, requirement, values):
        if requirement == "zero":
            ok = all(abs(v) <= COV_TOL for v in values.values())
        else:
            ok = all(v >= -COV_TOL for v in values.values())
        return CovarianceCondition(name, requirement, values, ok)

    return AssumptionReport(t, pair.divergence_label, {
        "reward_reward": condition("reward_reward", "nonneg", reward_reward),
        "ratio_ratio": condition("ratio_ratio", "zero", ratio_ratio),
        "reward_ratio": condition("reward_ratio", "zero", reward_ratio),
        "prefix_prefix": condition("prefix_prefix", "nonneg", prefix_prefix),
    })
