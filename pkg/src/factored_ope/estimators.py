"""Importance-sampling estimators, plain and decomposed, plus factor grouping.

Seven estimators share one accumulation discipline: per-trajectory terms are
formed with vectorised numpy, then combined across trajectories with exact
(Shewchuk) summation in ascending index order, so results do not depend on
chunking or parallel scheduling.  The decomposed estimators reuse the exact
same routines per factor, which is what makes the all-factors-in-one-group
degeneracy reproduce the plain estimators bit for bit.

Cumulative weights are inclusive prefix products: ``rho[., t]`` includes the
probability ratio of step ``t`` itself.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataPolicyMismatchError, DegenerateWeightsError
from .mdp import FactoredMdp
from .policies import FactoredPolicy, PolicyPair
from .sampling import Dataset

ESTIMATOR_IDS = ("is", "pdis", "pdwis", "decis", "decpdis", "decpdwis", "onpolicy")


@dataclass(frozen=True)
class WeightStats:
    """Spread of the importance weights an estimate contracted against."""

    min: float
    max: float
    mean: float
    sum: float

    @classmethod
    def of(cls, weights: np.ndarray) -> "WeightStats":
        flat = np.asarray(weights, dtype=float).ravel()
        return cls(float(flat.min()), float(flat.max()), float(flat.mean()), float(flat.sum()))


@dataclass(frozen=True)
class Estimate:
    """One estimator's output on one dataset."""

    estimator: str
    value: float
    per_factor: Optional[tuple] = None
    weight_stats: Optional[WeightStats] = None
    coverage_flag: bool = False

    def to_dict(self) -> dict:
        doc = {"estimator": self.estimator, "value": self.value,
               "coverage_flag": self.coverage_flag}
        if self.per_factor is not None:
            doc["per_factor"] = list(self.per_factor)
        if self.weight_stats is not None:
            doc["weight_stats"] = {
                "min": self.weight_stats.min, "max": self.weight_stats.max,
                "mean": self.weight_stats.mean, "sum": self.weight_stats.sum,
            }
        return doc


@dataclass(frozen=True)
class Grouping:
    """Partition of the factor indices 0..D-1 into merged groups."""

    groups: tuple

    def __post_init__(self):
        flat = [d for group in self.groups for d in group]
        if not flat:
            raise ValueError("grouping must contain at least one group")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("groups must be disjoint, nonempty, and cover all factors")
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))

    @property
    def n_factors(self) -> int:
        return sum(len(g) for g in self.groups)

    @classmethod
    def single(cls, n_factors: int) -> "Grouping":
        return cls((tuple(range(n_factors)),))

    @classmethod
    def identity(cls, n_factors: int) -> "Grouping":
        return cls(tuple((d,) for d in range(n_factors)))

    @classmethod
    def from_string(cls, spec: str, n_factors: int) -> "Grouping":
        """Parse the CLI syntax, e.g. "1,2|3" with 1-based factor numbers."""
        groups = tuple(tuple(int(x) - 1 for x in part.split(",")) for part in spec.split("|"))
        grouping = cls(groups)
        if grouping.n_factors != n_factors:
            raise ValueError(f"grouping covers {grouping.n_factors} factors, MDP has {n_factors}")
        return grouping

    def is_identity(self) -> bool:
        return self.groups == tuple((d,) for d in range(self.n_factors))


@dataclass(frozen=True)
class WeightTensor:
    """Cumulative importance weights, joint and per factor.

    ``joint[n, t]`` is the inclusive prefix product of joint probability
    ratios; ``factors[d, n, t]`` the same per factor.  ``joint_steps`` /
    ``factor_steps`` hold the single-step ratios the prefixes multiply.
    """

    joint: np.ndarray
    factors: np.ndarray
    joint_steps: np.ndarray
    factor_steps: np.ndarray

    @property
    def full_horizon(self) -> np.ndarray:
        return self.joint[:, -1]

    @property
    def factor_full_horizon(self) -> np.ndarray:
        return self.factors[:, :, -1]


def _behaviour_probs(mdp: FactoredMdp, policy: FactoredPolicy, dataset: Dataset, d: int) -> np.ndarray:
    z = mdp.abstractions[d][dataset.states[:, :-1]]
    return policy.tables[d][z, dataset.actions[:, :, d]]


def compute_weights(dataset: Dataset, pair: PolicyPair) -> WeightTensor:
    """Cumulative joint and per-factor weights for every (trajectory, step)."""
    if dataset.n == 0:
        raise ValueError("empty dataset")
    mdp = pair.mdp
    d_count = mdp.n_factors
    pb_factors = []
    pe_factors = []
    for d in range(d_count):
        pb = _behaviour_probs(mdp, pair.behaviour, dataset, d)
        if np.any(pb == 0.0):
            n, t = np.argwhere(pb == 0.0)[0]
            raise DataPolicyMismatchError(
                f"observed action has zero behaviour probability "
                f"(trajectory {n}, step {t}, factor {d}); "
                "the data cannot have come from this behaviour policy")
        pb_factors.append(pb)
        pe_factors.append(_behaviour_probs(mdp, pair.evaluation, dataset, d))
    pb_joint = pb_factors[0].copy()
    pe_joint = pe_factors[0].copy()
    for d in range(1, d_count):
        pb_joint *= pb_factors[d]
        pe_joint *= pe_factors[d]
    joint_steps = pe_joint / pb_joint
    factor_steps = np.stack([pe / pb for pe, pb in zip(pe_factors, pb_factors)])
    return WeightTensor(
        joint=np.cumprod(joint_steps, axis=1),
        factors=np.cumprod(factor_steps, axis=2),
        joint_steps=joint_steps,
        factor_steps=factor_steps,
    )


def _gamma_powers(t: int, gamma: float) -> np.ndarray:
    return gamma ** np.arange(t)


def _row_discounted(mat: np.ndarray, gpow: np.ndarray) -> np.ndarray:
    """Per-trajectory discounted sums; plain numpy reduction, fixed order."""
    return np.sum(mat * gpow, axis=1)


def _fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values) / len(values)


def _coverage(weights: WeightTensor) -> bool:
    return bool(np.any(weights.full_horizon == 0.0)
                or np.any(weights.factor_full_horizon == 0.0))


def _check_nonempty(dataset: Dataset):
    if dataset.n == 0 or dataset.t == 0:
        raise ValueError("empty dataset")


# -- plain estimators --------------------------------------------------------

def on_policy_estimate(dataset: Dataset, gamma: float) -> Estimate:
    """Mean discounted return of the dataset's own policy."""
    _check_nonempty(dataset)
    gpow = _gamma_powers(dataset.t, gamma)
    value = _fsum_mean(_row_discounted(dataset.rewards, gpow))
    ones = np.ones(dataset.n)
    return Estimate("onpolicy", value, weight_stats=WeightStats.of(ones), coverage_flag=False)


def is_estimate(dataset: Dataset, pair: PolicyPair, gamma: float) -> Estimate:
    """Trajectory-weighted importance sampling."""
    _check_nonempty(dataset)
    w = compute_weights(dataset, pair)
    gpow = _gamma_powers(dataset.t, gamma)
    terms = w.full_horizon * _row_discounted(dataset.rewards, gpow)
    return Estimate("is", _fsum_mean(terms),
                    weight_stats=WeightStats.of(w.full_horizon),
                    coverage_flag=_coverage(w))


def pdis_estimate(dataset: Dataset, pair: PolicyPair, gamma: float) -> Estimate:
    """Per-decision importance sampling: reward at t weighted by rho[0:t]."""
    _check_nonempty(dataset)
    w = compute_weights(dataset, pair)
    gpow = _gamma_powers(dataset.t, gamma)
    terms = _row_discounted(w.joint * dataset.rewards, gpow)
    return Estimate("pdis", _fsum_mean(terms),
                    weight_stats=WeightStats.of(w.joint),
                    coverage_flag=_coverage(w))


def pdwis_estimate(dataset: Dataset, pair: PolicyPair, gamma: float) -> Estimate:
    """Self-normalised PDIS: one global weight denominator per estimate."""
    _check_nonempty(dataset)
    w = compute_weights(dataset, pair)
    gpow = _gamma_powers(dataset.t, gamma)
    num = math.fsum(_row_discounted(w.joint * dataset.rewards, gpow))
    den = math.fsum(_row_discounted(w.joint, gpow))
    if den == 0.0:
        raise DegenerateWeightsError("PDWIS weight denominator is exactly zero (total coverage loss)")
    return Estimate("pdwis", num / den,
                    weight_stats=WeightStats.of(w.joint),
                    coverage_flag=_coverage(w))


# -- decomposed estimators ---------------------------------------------------

def _grouped_inputs(dataset: Dataset, pair: PolicyPair, grouping: Optional[Grouping]):
    """Per-group (sub-reward, step-ratio) arrays plus the coverage tensor.

    With no grouping (or the identity grouping) the original factors are used
    directly; otherwise the dataset's action columns are re-indexed onto the
    merged factors of :func:`group_factors`.
    """
    mdp = pair.mdp
    if grouping is not None and not grouping.is_identity():
        gmdp, gpair = group_factors(mdp, pair, grouping)
        members = grouping.groups
        sub_actions = []
        for group in members:
            if len(group) == 1:
                sub_actions.append(dataset.actions[:, :, group[0]])
            else:
                dims = tuple(len(mdp.sub_action_spaces[d]) for d in group)
                sub_actions.append(np.ravel_multi_index(
                    tuple(dataset.actions[:, :, d] for d in group), dims))
        mdp, pair = gmdp, gpair
    else:
        sub_actions = [dataset.actions[:, :, d] for d in range(mdp.n_factors)]

    z = [mdp.abstractions[d][dataset.states[:, :-1]] for d in range(mdp.n_factors)]
    sub_rewards = [mdp.sub_rewards[d][z[d], sub_actions[d]] for d in range(mdp.n_factors)]
    ratios = []
    for d in range(mdp.n_factors):
        pb = pair.behaviour.tables[d][z[d], sub_actions[d]]
        if np.any(pb == 0.0):
            raise DataPolicyMismatchError(
                f"observed action has zero behaviour probability in factor {d}")
        ratios.append(pair.evaluation.tables[d][z[d], sub_actions[d]] / pb)
    return sub_rewards, ratios


def dec_is_estimate(dataset: Dataset, pair: PolicyPair, gamma: float,
                    grouping: Optional[Grouping] = None) -> Estimate:
    """Decomposed IS: per-factor full-horizon weights on per-factor sub-rewards."""
    _check_nonempty(dataset)
    sub_rewards, ratios = _grouped_inputs(dataset, pair, grouping)
    gpow = _gamma_powers(dataset.t, gamma)
    per_factor = []
    fulls = []
    for r_d, ratio_d in zip(sub_rewards, ratios):
        cum = np.cumprod(ratio_d, axis=1)
        fulls.append(cum[:, -1])
        terms = cum[:, -1] * _row_discounted(r_d, gpow)
        per_factor.append(_fsum_mean(terms))
    fulls = np.stack(fulls)
    return Estimate("decis", math.fsum(per_factor), per_factor=tuple(per_factor),
                    weight_stats=WeightStats.of(fulls),
                    coverage_flag=bool(np.any(fulls == 0.0)))


def dec_pdis_estimate(dataset: Dataset, pair: PolicyPair, gamma: float,
                      grouping: Optional[Grouping] = None) -> Estimate:
    """Decomposed PDIS: per-factor per-step weights on per-factor sub-rewards."""
    _check_nonempty(dataset)
    sub_rewards, ratios = _grouped_inputs(dataset, pair, grouping)
    gpow = _gamma_powers(dataset.t, gamma)
    per_factor = []
    all_weights = []
    coverage = False
    for r_d, ratio_d in zip(sub_rewards, ratios):
        cum = np.cumprod(ratio_d, axis=1)
        all_weights.append(cum)
        coverage = coverage or bool(np.any(cum[:, -1] == 0.0))
        per_factor.append(_fsum_mean(_row_discounted(cum * r_d, gpow)))
    return Estimate("decpdis", math.fsum(per_factor), per_factor=tuple(per_factor),
                    weight_stats=WeightStats.of(np.stack(all_weights)),
                    coverage_flag=coverage)


def dec_pdwis_estimate(dataset: Dataset, pair: PolicyPair, gamma: float,
                       grouping: Optional[Grouping] = None) -> Estimate:
    """Decomposed PDWIS: one self-normalised ratio per factor, summed."""
    _check_nonempty(dataset)
    sub_rewards, ratios = _grouped_inputs(dataset, pair, grouping)
    gpow = _gamma_powers(dataset.t, gamma)
    per_factor = []
    all_weights = []
    coverage = False
    for d, (r_d, ratio_d) in enumerate(zip(sub_rewards, ratios)):
        cum = np.cumprod(ratio_d, axis=1)
        all_weights.append(cum)
        coverage = coverage or bool(np.any(cum[:, -1] == 0.0))
        num = math.fsum(_row_discounted(cum * r_d, gpow))
        den = math.fsum(_row_discounted(cum, gpow))
        if den == 0.0:
            raise DegenerateWeightsError(
                f"decomposed PDWIS weight denominator is exactly zero in factor {d}")
        per_factor.append(num / den)
    return Estimate("decpdwis", math.fsum(per_factor), per_factor=tuple(per_factor),
                    weight_stats=WeightStats.of(np.stack(all_weights)),
                    coverage_flag=coverage)


def apply_estimator(estimator: str, dataset: Dataset, pair: Optional[PolicyPair],
                    gamma: float, grouping: Optional[Grouping] = None) -> Estimate:
    """Dispatch by estimator id ("is", "pdis", ..., "onpolicy")."""
    if estimator == "onpolicy":
        return on_policy_estimate(dataset, gamma)
    if pair is None:
        raise ValueError(f"estimator {estimator!r} requires a policy pair")
    plain = {"is": is_estimate, "pdis": pdis_estimate, "pdwis": pdwis_estimate}
    decomposed = {"decis": dec_is_estimate, "decpdis": dec_pdis_estimate,
                  "decpdwis": dec_pdwis_estimate}
    if estimator in plain:
        return plain[estimator](dataset, pair, gamma)
    if estimator in decomposed:
        return decomposed[estimator](dataset, pair, gamma, grouping)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATOR_IDS)}")


# -- factor grouping (merging sub-action spaces) ------------------------------

def _merge_labels(parts: Sequence[Sequence[str]]) -> tuple:
    return tuple("+".join(combo) for combo in itertools.product(*parts))


def group_factors(mdp: FactoredMdp, pair: PolicyPair, grouping: Grouping):
    """Re-factor an MDP and policy pair onto merged groups of factors.

    Merged sub-action spaces are Cartesian products of their members, merged
    abstractions are tuples of member abstractions, merged sub-rewards sum
    their members, and merged policy factors multiply their members (in
    member order, so the single-group case reproduces joint probabilities
    bit for bit).  The full transition and reward tables are unchanged up to
    the reindexing of joint actions.
    """
    if grouping.n_factors != mdp.n_factors:
        raise ValueError(f"grouping covers {grouping.n_factors} factors, MDP has {mdp.n_factors}")
    groups = grouping.groups

    new_action_spaces = []
    new_abstract_spaces = []
    new_abstractions = []
    new_sub_rewards = []
    for group in groups:
        member_sizes = tuple(len(mdp.sub_action_spaces[d]) for d in group)
        member_z_sizes = tuple(len(mdp.abstract_state_spaces[d]) for d in group)
        new_action_spaces.append(_merge_labels([mdp.sub_action_spaces[d] for d in group]))
        new_abstract_spaces.append(_merge_labels([mdp.abstract_state_spaces[d] for d in group]))
        new_abstractions.append(np.ravel_multi_index(
            tuple(mdp.abstractions[d] for d in group), member_z_sizes))
        table = np.zeros((int(np.prod(member_z_sizes)), int(np.prod(member_sizes))))
        for z_combo in itertools.product(*[range(s) for s in member_z_sizes]):
            zi = int(np.ravel_multi_index(z_combo, member_z_sizes))
            for a_combo in itertools.product(*[range(s) for s in member_sizes]):
                ai = int(np.ravel_multi_index(a_combo, member_sizes))
                table[zi, ai] = sum(
                    mdp.sub_rewards[d][z_combo[k], a_combo[k]] for k, d in enumerate(group))
        new_sub_rewards.append(table)

    # joint-action permutation: new index -> old index
    order = [d for group in groups for d in group]
    old_dims = mdp.factor_sizes
    perm = np.empty(mdp.n_joint_actions, dtype=int)
    for old in range(mdp.n_joint_actions):
        subs = np.unravel_index(old, old_dims)
        new = 0
        for group in groups:
            member_sizes = tuple(old_dims[d] for d in group)
            gi = int(np.ravel_multi_index(tuple(subs[d] for d in group), member_sizes))
            new = new * int(np.prod(member_sizes)) + gi
        perm[new] = old

    grouped_mdp = FactoredMdp(
        name=f"{mdp.name}#grouped[{';'.join(','.join(str(d) for d in g) for g in groups)}]",
        states=mdp.states,
        sub_action_spaces=tuple(new_action_spaces),
        abstract_state_spaces=tuple(new_abstract_spaces),
        abstractions=tuple(new_abstractions),
        transition=mdp.transition[:, perm, :].copy(),
        reward=mdp.reward[:, perm].copy(),
        sub_rewards=tuple(new_sub_rewards),
        initial_state=mdp.initial_state,
        horizon_default=mdp.horizon_default,
        discount_default=mdp.discount_default,
    )

    def merge_policy(policy: FactoredPolicy) -> FactoredPolicy:
        tables = []
        for g, group in enumerate(groups):
            member_sizes = tuple(len(mdp.sub_action_spaces[d]) for d in group)
            member_z_sizes = tuple(len(mdp.abstract_state_spaces[d]) for d in group)
            table = np.ones((int(np.prod(member_z_sizes)), int(np.prod(member_sizes))))
            for z_combo in itertools.product(*[range(s) for s in member_z_sizes]):
                zi = int(np.ravel_multi_index(z_combo, member_z_sizes))
                for a_combo in itertools.product(*[range(s) for s in member_sizes]):
                    ai = int(np.ravel_multi_index(a_combo, member_sizes))
                    p = 1.0
                    for k, d in enumerate(group):
                        p *= policy.tables[d][z_combo[k], a_combo[k]]
                    table[zi, ai] = p
            tables.append(table)
        return FactoredPolicy(grouped_mdp, tuple(tables), name=f"{policy.name}#grouped")

    grouped_pair = PolicyPair(
        behaviour=merge_policy(pair.behaviour),
        evaluation=merge_policy(pair.evaluation),
        divergence_label=pair.divergence_label,
    )
    return grouped_mdp, grouped_pair
