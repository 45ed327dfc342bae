"""Tabular MDPs with a declared action-space factorisation.

A :class:`FactoredMdp` bundles the usual finite MDP tables (transition,
reward, start state) with the structure the decomposed estimators need:
per-factor sub-action spaces, per-factor state abstractions, and per-factor
sub-reward tables.  States and actions are referred to by string label in
external formats and by dense integer index internally; builders fix a
canonical ordering so serialized artifacts are reproducible.

Two builders construct the bandit-style two-state MDP (``build_mdp1``) and
the four-state grid MDP (``build_mdp2``) used throughout the experiment
suite, together with validation routines for the additive-reward and
product-transition factorisation conditions.
"""

import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidAbstractionError

ROW_SUM_TOL = 1e-12
DEFAULT_FACTORISATION_TOL = 1e-12


@dataclass(frozen=True)
class Mdp1Params:
    """Reward parameters of the two-state MDP.

    ``alpha`` is the reward of the second factor's "up" move; ``beta`` is an
    extra reward on the joint (right, up) action that breaks the additive
    factorisation whenever it is nonzero.
    """

    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")


@dataclass(frozen=True)
class FactorisationReport:
    """Outcome of one factorisation check.

    ``witness`` names an offending (state, action) pair when the check fails;
    ``passed`` is equivalent to ``max_residual <= tol``.
    """

    condition: str
    passed: bool
    max_residual: float
    tol: float
    witness: Optional[tuple] = None


@dataclass(frozen=True)
class FactoredMdp:
    """Finite MDP plus its declared factorisation.

    Attributes:
        states: ordered state labels.
        sub_action_spaces: per factor, ordered sub-action labels; the joint
            action space is their Cartesian product in row-major order.
        abstract_state_spaces: per factor, ordered abstract-state labels.
        abstractions: per factor, array mapping state index -> abstract index.
        transition: array (S, A, S) of transition probabilities.
        reward: array (S, A) of deterministic rewards.
        sub_rewards: per factor, array (Z_d, A_d) of sub-rewards.
        initial_state: index of the (point-mass) start state.
    """

    name: str
    states: tuple
    sub_action_spaces: tuple
    abstract_state_spaces: tuple
    abstractions: tuple
    transition: np.ndarray
    reward: np.ndarray
    sub_rewards: tuple
    initial_state: int
    horizon_default: int = 1
    discount_default: float = 1.0

    def __post_init__(self):
        s, a = len(self.states), self.n_joint_actions
        if self.transition.shape != (s, a, s):
            raise ValueError(f"transition table must have shape {(s, a, s)}")
        if self.reward.shape != (s, a):
            raise ValueError(f"reward table must have shape {(s, a)}")
        if np.any(self.transition < 0):
            raise ValueError("negative transition probability")
        rows = self.transition.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
            raise ValueError("transition rows must sum to 1 within 1e-12")
        for d, (phi, space) in enumerate(zip(self.abstractions, self.abstract_state_spaces)):
            if phi.shape != (s,):
                raise ValueError(f"abstraction {d} must be total over states")
            if phi.min() < 0 or phi.max() >= len(space):
                raise ValueError(f"abstraction {d} maps outside its abstract space")
        for d, table in enumerate(self.sub_rewards):
            want = (len(self.abstract_state_spaces[d]), len(self.sub_action_spaces[d]))
            if table.shape != want:
                raise ValueError(f"sub-reward table {d} must have shape {want}")
        if not 0 <= self.initial_state < s:
            raise ValueError("initial_state out of range")
        if self.horizon_default < 1:
            raise ValueError("horizon_default must be >= 1")
        for arr in (self.transition, self.reward, *self.abstractions, *self.sub_rewards):
            arr.flags.writeable = False

    # -- sizes and indexing -------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_factors(self) -> int:
        return len(self.sub_action_spaces)

    @property
    def factor_sizes(self) -> tuple:
        return tuple(len(a) for a in self.sub_action_spaces)

    @property
    def n_joint_actions(self) -> int:
        return int(np.prod(self.factor_sizes))

    @property
    def joint_actions(self) -> np.ndarray:
        """Array (A, D): per-factor sub-action indices of every joint action."""
        grids = np.unravel_index(np.arange(self.n_joint_actions), self.factor_sizes)
        return np.stack(grids, axis=1)

    def joint_action_index(self, sub_indices: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(sub_indices), self.factor_sizes))

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise ValueError(f"unknown state {label!r}") from None

    def sub_action_index(self, d: int, label: str) -> int:
        try:
            return self.sub_action_spaces[d].index(label)
        except ValueError:
            raise ValueError(f"unknown sub-action {label!r} for factor {d}") from None

    def action_label(self, joint_index: int) -> str:
        subs = np.unravel_index(joint_index, self.factor_sizes)
        return ",".join(self.sub_action_spaces[d][i] for d, i in enumerate(subs))

    def action_index_from_label(self, label: str) -> int:
        parts = label.split(",")
        if len(parts) != self.n_factors:
            raise ValueError(f"action label {label!r} must have {self.n_factors} parts")
        return self.joint_action_index([self.sub_action_index(d, p) for d, p in enumerate(parts)])


def abstract_state(mdp: FactoredMdp, d: int, state: str) -> str:
    """Abstract-state label of ``state`` under factor ``d`` (0-based)."""
    if not 0 <= d < mdp.n_factors:
        raise ValueError(f"factor index {d} out of range for D={mdp.n_factors}")
    idx = mdp.state_index(state)
    return mdp.abstract_state_spaces[d][mdp.abstractions[d][idx]]


# -- builders ---------------------------------------------------------------

ACTIONS_LR = ("left", "right")
ACTIONS_DU = ("down", "up")


def build_mdp1(params: Mdp1Params = Mdp1Params()) -> FactoredMdp:
    """Two-state bandit MDP: every action leads to the terminal state.

    Rewards from the start state are ``(right, up) -> 1 + alpha + beta``,
    ``(left, up) -> alpha``, ``(right, down) -> 1`` and ``(left, down) -> 0``.
    The declared sub-rewards are fixed to the beta = 0 factorisation, so the
    decomposed estimators act as if beta were zero even when the environment
    reward carries a nonzero beta.
    """
    states = ("state", "terminal")
    factors = (ACTIONS_LR, ACTIONS_DU)
    sizes = (2, 2)
    a, b = params.alpha, params.beta

    transition = np.zeros((2, 4, 2))
    transition[:, :, 1] = 1.0  # everything leads to terminal

    def joint(i, j):
        return int(np.ravel_multi_index((i, j), sizes))

    reward = np.zeros((2, 4))
    reward[0, joint(1, 1)] = 1.0 + a + b   # right, up
    reward[0, joint(0, 1)] = a             # left, up
    reward[0, joint(1, 0)] = 1.0           # right, down

    sub1 = np.zeros((2, 2))
    sub1[0, 1] = 1.0                       # right from the start state
    sub2 = np.zeros((2, 2))
    sub2[0, 1] = a                         # up from the start state

    return FactoredMdp(
        name=f"mdp1[alpha={a!r},beta={b!r}]",
        states=states,
        sub_action_spaces=factors,
        abstract_state_spaces=(states, states),
        abstractions=(np.arange(2), np.arange(2)),
        transition=transition,
        reward=reward,
        sub_rewards=(sub1, sub2),
        initial_state=0,
        horizon_default=1,
        discount_default=1.0,
    )


def build_mdp2() -> FactoredMdp:
    """Four-state grid MDP composed of two independent two-state sub-MDPs.

    The next state is fully determined by the action: its first coordinate is
    1 after ``right`` (else 0) and its second is 1 after ``up`` (else 0).
    Each factor pays +1 for moving its coordinate from 0 via right/up, -1 for
    keeping it at 1 via right/up, and 0 for left/down; the environment reward
    is the sum of the two factor rewards, so the additive condition holds
    exactly.
    """
    states = ("0,0", "0,1", "1,0", "1,1")
    factors = (ACTIONS_LR, ACTIONS_DU)
    sizes = (2, 2)
    coords = [(int(s[0]), int(s[2])) for s in states]

    # sub-reward of driving one coordinate with the "advance" move
    sub = np.array([[0.0, 1.0],    # coordinate at 0: left/down -> 0, right/up -> +1
                    [0.0, -1.0]])  # coordinate at 1: right/up again -> -1
    phi1 = np.array([c1 for c1, _ in coords])
    phi2 = np.array([c2 for _, c2 in coords])

    transition = np.zeros((4, 4, 4))
    reward = np.zeros((4, 4))
    for s, (c1, c2) in enumerate(coords):
        for a1, a2 in itertools.product((0, 1), (0, 1)):
            a = int(np.ravel_multi_index((a1, a2), sizes))
            nxt = states.index(f"{a1},{a2}")
            transition[s, a, nxt] = 1.0
            reward[s, a] = sub[c1, a1] + sub[c2, a2]

    return FactoredMdp(
        name="mdp2",
        states=states,
        sub_action_spaces=factors,
        abstract_state_spaces=(("0,?", "1,?"), ("?,0", "?,1")),
        abstractions=(phi1, phi2),
        transition=transition,
        reward=reward,
        sub_rewards=(sub.copy(), sub.copy()),
        initial_state=0,
        horizon_default=1000,
        discount_default=0.7,
    )


def mdp_from_name(name: str) -> FactoredMdp:
    """Rebuild a builder-produced MDP from its recorded name."""
    if name == "mdp2":
        return build_mdp2()
    if name.startswith("mdp1[") and name.endswith("]"):
        kv = dict(part.split("=") for part in name[5:-1].split(","))
        return build_mdp1(Mdp1Params(alpha=float(kv["alpha"]), beta=float(kv["beta"])))
    if name == "mdp1":
        return build_mdp1()
    raise ValueError(f"not a builtin MDP name: {name!r}")


# -- factorisation checks ---------------------------------------------------

def check_reward_factorisation(mdp: FactoredMdp, tol: float = DEFAULT_FACTORISATION_TOL) -> FactorisationReport:
    """Check the additive condition r(s, a) = sum_d r^d(z^d, a^d)."""
    joint = mdp.joint_actions
    total = np.zeros_like(mdp.reward)
    for d in range(mdp.n_factors):
        total += mdp.sub_rewards[d][np.ix_(mdp.abstractions[d], joint[:, d])]
    residual = np.abs(mdp.reward - total)
    worst = float(residual.max())
    witness = None
    if worst > tol:
        s, a = np.unravel_index(int(residual.argmax()), residual.shape)
        witness = (mdp.states[s], mdp.action_label(int(a)))
    return FactorisationReport("reward", worst <= tol, worst, tol, witness)


def derive_sub_transitions(mdp: FactoredMdp, tol: float = DEFAULT_FACTORISATION_TOL) -> list:
    """Candidate sub-transition tables p^d(z' | z, a^d), by marginalisation.

    For each factor the marginal of the full transition onto the factor's
    abstract states must agree across every (state, joint action) pair that
    shares (z^d, a^d); otherwise the declared abstraction cannot carry a
    factored transition and :class:`InvalidAbstractionError` is raised.
    """
    joint = mdp.joint_actions
    subs = []
    for d in range(mdp.n_factors):
        phi = mdp.abstractions[d]
        nz = len(mdp.abstract_state_spaces[d])
        n_sub = len(mdp.sub_action_spaces[d])
        # marginals[s, a, z'] = P(z'_d | s, a)
        marginals = np.zeros((mdp.n_states, mdp.n_joint_actions, nz))
        for z in range(nz):
            marginals[:, :, z] = mdp.transition[:, :, phi == z].sum(axis=2)
        table = np.full((nz, n_sub, nz), np.nan)
        for s in range(mdp.n_states):
            for a in range(mdp.n_joint_actions):
                z, ad = phi[s], joint[a, d]
                if np.isnan(table[z, ad, 0]):
                    table[z, ad] = marginals[s, a]
                elif np.max(np.abs(table[z, ad] - marginals[s, a])) > tol:
                    raise InvalidAbstractionError(
                        f"factor {d}: marginal transition at (z={mdp.abstract_state_spaces[d][z]!r}, "
                        f"a={mdp.sub_action_spaces[d][ad]!r}) differs across states; "
                        f"witness state {mdp.states[s]!r}, action {mdp.action_label(a)!r}"
                    )
        if np.isnan(table).any():
            # unreachable (z, a^d) combinations keep a uniform placeholder row
            for z in range(nz):
                for ad in range(n_sub):
                    if np.isnan(table[z, ad, 0]):
                        table[z, ad] = 1.0 / nz
        subs.append(table)
    return subs


def check_transition_factorisation(mdp: FactoredMdp, tol: float = DEFAULT_FACTORISATION_TOL) -> FactorisationReport:
    """Check that abstraction-class transition mass factors as prod_d p^d."""
    subs = derive_sub_transitions(mdp, tol)
    joint = mdp.joint_actions
    # group states into joint-abstraction classes
    keys = np.stack(mdp.abstractions, axis=1)  # (S, D)
    _, class_of = np.unique(keys, axis=0, return_inverse=True)
    n_classes = class_of.max() + 1

    worst, witness = 0.0, None
    for s in range(mdp.n_states):
        for a in range(mdp.n_joint_actions):
            lhs = np.zeros(n_classes)
            np.add.at(lhs, class_of, mdp.transition[s, a])
            rhs = np.ones(n_classes)
            for d in range(mdp.n_factors):
                # abstract destination of each class under factor d
                z_dst = np.zeros(n_classes, dtype=int)
                z_dst[class_of] = mdp.abstractions[d]
                rhs *= subs[d][mdp.abstractions[d][s], joint[a, d], z_dst]
            resid = float(np.max(np.abs(lhs - rhs)))
            if resid > worst:
                worst, witness = resid, (mdp.states[s], mdp.action_label(a))
    return FactorisationReport("transition", worst <= tol, worst, tol, witness if worst > tol else None)


# -- serialization ----------------------------------------------------------

def mdp_to_dict(mdp: FactoredMdp) -> dict:
    joint_labels = [mdp.action_label(a) for a in range(mdp.n_joint_actions)]
    transitions = {}
    rewards = {}
    for s, sname in enumerate(mdp.states):
        transitions[sname] = {
            joint_labels[a]: {
                mdp.states[s2]: mdp.transition[s, a, s2]
                for s2 in range(mdp.n_states) if mdp.transition[s, a, s2] > 0.0
            }
            for a in range(mdp.n_joint_actions)
        }
        rewards[sname] = {joint_labels[a]: mdp.reward[s, a] for a in range(mdp.n_joint_actions)}
    factors = []
    sub_rewards = []
    for d in range(mdp.n_factors):
        factors.append({
            "sub_actions": list(mdp.sub_action_spaces[d]),
            "abstraction": {
                sname: mdp.abstract_state_spaces[d][mdp.abstractions[d][s]]
                for s, sname in enumerate(mdp.states)
            },
        })
        sub_rewards.append({
            z: {a: mdp.sub_rewards[d][zi, ai] for ai, a in enumerate(mdp.sub_action_spaces[d])}
            for zi, z in enumerate(mdp.abstract_state_spaces[d])
        })
    return {
        "name": mdp.name,
        "states": list(mdp.states),
        "factors": factors,
        "transitions": transitions,
        "rewards": rewards,
        "sub_rewards": sub_rewards,
        "initial_state": mdp.states[mdp.initial_state],
        "horizon_default": mdp.horizon_default,
        "discount_default": mdp.discount_default,
    }


def mdp_from_dict(doc: dict) -> FactoredMdp:
    states = tuple(doc["states"])
    factor_docs = doc["factors"]
    sub_action_spaces = tuple(tuple(f["sub_actions"]) for f in factor_docs)
    abstract_spaces = []
    abstractions = []
    for f in factor_docs:
        amap = f["abstraction"]
        labels = []
        for s in states:
            if amap[s] not in labels:
                labels.append(amap[s])
        abstract_spaces.append(tuple(labels))
        abstractions.append(np.array([labels.index(amap[s]) for s in states]))

    sizes = tuple(len(a) for a in sub_action_spaces)
    n_actions = int(np.prod(sizes))

    def action_index(label):
        parts = label.split(",")
        return int(np.ravel_multi_index(
            tuple(sub_action_spaces[d].index(p) for d, p in enumerate(parts)), sizes))

    transition = np.zeros((len(states), n_actions, len(states)))
    for sname, by_action in doc["transitions"].items():
        for alabel, dist in by_action.items():
            for s2name, p in dist.items():
                transition[states.index(sname), action_index(alabel), states.index(s2name)] = p
    reward = np.zeros((len(states), n_actions))
    for sname, by_action in doc["rewards"].items():
        for alabel, r in by_action.items():
            reward[states.index(sname), action_index(alabel)] = r
    sub_rewards = []
    for d, table in enumerate(doc["sub_rewards"]):
        arr = np.zeros((len(abstract_spaces[d]), len(sub_action_spaces[d])))
        for z, by_action in table.items():
            for a, r in by_action.items():
                arr[abstract_spaces[d].index(z), sub_action_spaces[d].index(a)] = r
        sub_rewards.append(arr)

    return FactoredMdp(
        name=doc.get("name", "custom"),
        states=states,
        sub_action_spaces=sub_action_spaces,
        abstract_state_spaces=tuple(abstract_spaces),
        abstractions=tuple(abstractions),
        transition=transition,
        reward=reward,
        sub_rewards=tuple(sub_rewards),
        initial_state=states.index(doc["initial_state"]),
        horizon_default=doc.get("horizon_default", 1),
        discount_default=doc.get("discount_default", 1.0),
    )


def save_mdp(mdp: FactoredMdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp_to_dict(mdp), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mdp(path) -> FactoredMdp:
    with open(path) as fh:
        return mdp_from_dict(json.load(fh))
