"""Tabular factored policies and the builtin behaviour/evaluation pairs.

A :class:`FactoredPolicy` stores one conditional table per factor,
pi^d(a^d | z^d); the joint policy is never stored, always derived as the
product of the factors, so the policy-factorisation condition holds by
construction.  The builtin library provides the nine behaviour/evaluation
pairs used in the experiments, keyed by their single-step divergence label.
"""

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import CoverageViolationError
from .mdp import FactoredMdp, FactorisationReport, build_mdp1, build_mdp2

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class FactoredPolicy:
    """Per-factor conditional distributions over sub-actions.

    ``tables[d][z, a]`` is pi^d(a | z); rows are probability vectors.  Tables
    are stationary: the same table applies at every time step.
    """

    mdp: FactoredMdp
    tables: tuple
    name: str = "policy"

    def __post_init__(self):
        if len(self.tables) != self.mdp.n_factors:
            raise ValueError("one table per factor required")
        for d, table in enumerate(self.tables):
            want = (len(self.mdp.abstract_state_spaces[d]), len(self.mdp.sub_action_spaces[d]))
            if table.shape != want:
                raise ValueError(f"factor {d} table must have shape {want}")
            if np.any(table < 0):
                raise ValueError(f"factor {d} table has negative entries")
            if np.max(np.abs(table.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
                raise ValueError(f"factor {d} rows must sum to 1 within 1e-12")
            table.flags.writeable = False

    def factor_prob(self, d: int, state_idx: int, sub_action_idx: int) -> float:
        z = self.mdp.abstractions[d][state_idx]
        return float(self.tables[d][z, sub_action_idx])

    def joint_table(self) -> np.ndarray:
        """Derived joint policy, shape (S, A); product over factors in order."""
        joint = self.mdp.joint_actions
        out = np.ones((self.mdp.n_states, self.mdp.n_joint_actions))
        for d in range(self.mdp.n_factors):
            out *= self.tables[d][np.ix_(self.mdp.abstractions[d], joint[:, d])]
        return out


def _coerce_state(mdp: FactoredMdp, state) -> int:
    return state if isinstance(state, (int, np.integer)) else mdp.state_index(state)


def _coerce_action(mdp: FactoredMdp, action) -> int:
    if isinstance(action, (int, np.integer)):
        return int(action)
    subs = [
        a if isinstance(a, (int, np.integer)) else mdp.sub_action_index(d, a)
        for d, a in enumerate(action)
    ]
    return mdp.joint_action_index(subs)


def joint_probability(policy: FactoredPolicy, state, action) -> float:
    """pi(a | s) as the product of the per-factor conditionals."""
    s = _coerce_state(policy.mdp, state)
    a = _coerce_action(policy.mdp, action)
    subs = np.unravel_index(a, policy.mdp.factor_sizes)
    p = 1.0
    for d, ad in enumerate(subs):
        p *= policy.factor_prob(d, s, int(ad))
    return p


def check_policy_factorisation(joint_table: np.ndarray, policy: FactoredPolicy,
                               tol: float = 0.0) -> FactorisationReport:
    """Check an externally supplied joint table against product-of-factors."""
    derived = policy.joint_table()
    if joint_table.shape != derived.shape:
        raise ValueError(f"joint table must have shape {derived.shape}")
    residual = np.abs(joint_table - derived)
    worst = float(residual.max())
    witness = None
    if worst > tol:
        s, a = np.unravel_index(int(residual.argmax()), residual.shape)
        witness = (policy.mdp.states[s], policy.mdp.action_label(int(a)))
    return FactorisationReport("policy", worst <= tol, worst, tol, witness)


@dataclass(frozen=True)
class PolicyPair:
    """Behaviour/evaluation policy pair on a shared MDP.

    Construction enforces per-factor absolute continuity: wherever the
    behaviour factor puts zero mass, the evaluation factor must too.
    """

    behaviour: FactoredPolicy
    evaluation: FactoredPolicy
    divergence_label: Optional[str] = None

    def __post_init__(self):
        if self.behaviour.mdp.name != self.evaluation.mdp.name:
            raise ValueError("behaviour and evaluation policies must share an MDP")
        for d, (tb, te) in enumerate(zip(self.behaviour.tables, self.evaluation.tables)):
            bad = (tb == 0.0) & (te > 0.0)
            if bad.any():
                z, a = np.argwhere(bad)[0]
                raise CoverageViolationError(
                    f"factor {d}: evaluation policy puts mass on "
                    f"(z={self.behaviour.mdp.abstract_state_spaces[d][z]!r}, "
                    f"a={self.behaviour.mdp.sub_action_spaces[d][a]!r}) "
                    "where the behaviour policy has none"
                )

    @property
    def mdp(self) -> FactoredMdp:
        return self.behaviour.mdp


def policy_divergence(pair: PolicyPair, horizon: int = 1) -> float:
    """Worst-case probability ratio sup_{s,a} pi_e/pi_b, raised to the horizon."""
    pb = pair.behaviour.joint_table()
    pe = pair.evaluation.joint_table()
    uncovered = (pb == 0.0) & (pe > 0.0)
    if uncovered.any():
        s, a = np.argwhere(uncovered)[0]
        raise CoverageViolationError(
            f"pi_b(a|s) = 0 < pi_e(a|s) at state {pair.mdp.states[s]!r}, "
            f"action {pair.mdp.action_label(int(a))!r}"
        )
    mask = pb > 0.0
    ratio = float((pe[mask] / pb[mask]).max())
    return ratio ** horizon


# -- builtin pair library ----------------------------------------------------
# (behaviour, evaluation) probability of the "advance" move (right / up) per
# factor; both factors use the same numbers, and the same table is used at
# every abstract state.  Keys are the single-step divergence labels.

BUILTIN_PAIR_PROBS = {
    "1.44": (0.5, 0.6),
    "2.56": (0.5, 0.8),
    "3.61": (0.5, 0.95),
    "4.46": (0.45, 0.95),
    "5.64": (0.4, 0.95),
    "10.03": (0.3, 0.95),
    "22.56": (0.2, 0.95),
    "90.25": (0.1, 0.95),
    "361.0": (0.05, 0.95),
}

BUILTIN_PAIR_LABELS = tuple(BUILTIN_PAIR_PROBS)


def _uniform_row():
    return np.array([0.5, 0.5])


def _factor_table(mdp: FactoredMdp, d: int, p_advance: float, live_rows) -> np.ndarray:
    """Table with [1 - p, p] on live abstract states, uniform elsewhere.

    ``live_rows`` marks the abstract states the experiments actually visit;
    the bandit MDP's terminal row is kept uniform in both policies so that
    ratios beyond the first step are exactly 1.
    """
    nz = len(mdp.abstract_state_spaces[d])
    table = np.tile(_uniform_row(), (nz, 1))
    for z in range(nz):
        if live_rows[z]:
            table[z] = (1.0 - p_advance, p_advance)
    return table


def builtin_policy_pair(mdp: Union[str, FactoredMdp], label: str) -> PolicyPair:
    """One of the nine builtin pairs, attached to ``mdp``.

    ``mdp`` may be "mdp1"/"mdp2" or an existing builder-produced instance
    (so that reward-parameter variants of the bandit MDP share policies).
    """
    label = str(label)
    if label not in BUILTIN_PAIR_PROBS:
        raise ValueError(f"unknown divergence label {label!r}; "
                         f"choose from {', '.join(BUILTIN_PAIR_LABELS)}")
    if isinstance(mdp, str):
        if mdp == "mdp1":
            mdp = build_mdp1()
        elif mdp == "mdp2":
            mdp = build_mdp2()
        else:
            raise ValueError(f"unknown MDP id {mdp!r}")
    is_mdp1 = mdp.name.startswith("mdp1")
    if not (is_mdp1 or mdp.name == "mdp2"):
        raise ValueError("builtin pairs are defined for the two builtin MDPs only")

    p_b, p_e = BUILTIN_PAIR_PROBS[label]
    policies = {}
    for role, p in (("behaviour", p_b), ("evaluation", p_e)):
        tables = []
        for d in range(mdp.n_factors):
            if is_mdp1:
                live = [z == mdp.abstractions[d][mdp.initial_state]
                        for z in range(len(mdp.abstract_state_spaces[d]))]
            else:
                live = [True] * len(mdp.abstract_state_spaces[d])
            tables.append(_factor_table(mdp, d, p, live))
        policies[role] = FactoredPolicy(mdp, tuple(tables), name=f"pair[{label}].{role}")
    return PolicyPair(policies["behaviour"], policies["evaluation"], divergence_label=label)


# -- serialization ----------------------------------------------------------

def policy_to_dict(policy: FactoredPolicy) -> dict:
    factors = []
    for d in range(policy.mdp.n_factors):
        factors.append({
            z: {a: policy.tables[d][zi, ai]
                for ai, a in enumerate(policy.mdp.sub_action_spaces[d])}
            for zi, z in enumerate(policy.mdp.abstract_state_spaces[d])
        })
    return {"mdp": policy.mdp.name, "name": policy.name, "factors": factors}


def policy_from_dict(doc: dict, mdp: FactoredMdp) -> FactoredPolicy:
    tables = []
    for d, table in enumerate(doc["factors"]):
        arr = np.zeros((len(mdp.abstract_state_spaces[d]), len(mdp.sub_action_spaces[d])))
        for z, row in table.items():
            for a, p in row.items():
                arr[mdp.abstract_state_spaces[d].index(z), mdp.sub_action_index(d, a)] = p
        tables.append(arr)
    return FactoredPolicy(mdp, tuple(tables), name=doc.get("name", "policy"))


def pair_to_dict(pair: PolicyPair) -> dict:
    return {
        "behaviour": policy_to_dict(pair.behaviour),
        "evaluation": policy_to_dict(pair.evaluation),
        "divergence_label": pair.divergence_label,
    }


def pair_from_dict(doc: dict, mdp: FactoredMdp) -> PolicyPair:
    return PolicyPair(
        behaviour=policy_from_dict(doc["behaviour"], mdp),
        evaluation=policy_from_dict(doc["evaluation"], mdp),
        divergence_label=doc.get("divergence_label"),
    )


def save_pair(pair: PolicyPair, path) -> None:
    with open(path, "w") as fh:
        json.dump(pair_to_dict(pair), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pair(path, mdp: FactoredMdp) -> PolicyPair:
    with open(path) as fh:
        return pair_from_dict(json.load(fh), mdp)
