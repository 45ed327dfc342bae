"""Seeded trajectory generation, dataset storage, and replicate subsetting.

Datasets hold dense index arrays: ``states`` (N, T+1), ``actions`` (N, T, D)
with one sub-action index per factor, and ``rewards`` (N, T).  Every
trajectory draws from its own counter-based random stream (see :mod:`rng`),
so regeneration is bit-identical and independent of chunking or parallelism.

The on-disk format is CSV, one record per step::

    # {"mdp": ..., "policy": ..., "seed": ..., "n": ..., "t": ...}
    episode,t,state,a1,...,aD,reward,next_state

``next_state`` carries the post-step state so the full state sequence
(including the final state) survives a round trip.
"""

import csv
import io
import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .mdp import FactoredMdp, mdp_from_name
from .policies import FactoredPolicy
from .rng import trajectory_uniforms

_CHUNK_DRAWS = 24_000_000


@dataclass(frozen=True)
class DatasetMeta:
    """Generator provenance; enough to regenerate a builtin dataset exactly."""

    mdp: str
    policy: str
    seed: int
    n: int
    t: int
    offset: int = 0  # first trajectory index relative to the master dataset


@dataclass(frozen=True)
class Trajectory:
    """One episode: T+1 state indices, T action vectors, T rewards."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class AbstractedTrajectory:
    """A trajectory projected onto one factor: labels plus sub-rewards."""

    factor: int
    abstract_states: tuple
    sub_actions: tuple
    sub_rewards: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """N fixed-length trajectories plus generator metadata."""

    states: np.ndarray   # (N, T+1) int
    actions: np.ndarray  # (N, T, D) int
    rewards: np.ndarray  # (N, T) float
    meta: DatasetMeta

    def __post_init__(self):
        if self.states.shape[0] != self.actions.shape[0] or self.states.shape[0] != self.rewards.shape[0]:
            raise ValueError("inconsistent trajectory counts")
        if self.states.shape[1] != self.rewards.shape[1] + 1 or self.actions.shape[1] != self.rewards.shape[1]:
            raise ValueError("states must hold T+1 entries, actions and rewards T")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def t(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_factors(self) -> int:
        return self.actions.shape[2]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i], self.rewards[i])


def _cdf_rows(probs: np.ndarray) -> np.ndarray:
    """Row-wise CDF with the final entry forced to exactly 1.0."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def _sample_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # right-continuous inverse CDF; u < 1 guarantees an in-range index
    return (u[:, None] >= cdf_rows).sum(axis=1)


def _rollout(mdp: FactoredMdp, policy: FactoredPolicy, seed: int,
             first: int, count: int, t: int) -> tuple:
    d = mdp.n_factors
    draws = t * (d + 1)
    action_cdfs = [_cdf_rows(table) for table in policy.tables]
    trans_cdf = _cdf_rows(mdp.transition)

    states = np.empty((count, t + 1), dtype=np.int16)
    actions = np.empty((count, t, d), dtype=np.int8)
    rewards = np.empty((count, t), dtype=np.float64)

    chunk = max(1, _CHUNK_DRAWS // max(1, draws))
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        u = trajectory_uniforms(seed, first + lo, hi - lo, draws).reshape(hi - lo, t, d + 1)
        s = np.full(hi - lo, mdp.initial_state, dtype=np.int64)
        states[lo:hi, 0] = s
        for step in range(t):
            subs = []
            for f in range(d):
                z = mdp.abstractions[f][s]
                a_f = _sample_rows(action_cdfs[f][z], u[:, step, f])
                subs.append(a_f)
                actions[lo:hi, step, f] = a_f
            joint = np.ravel_multi_index(tuple(subs), mdp.factor_sizes)
            rewards[lo:hi, step] = mdp.reward[s, joint]
            s = _sample_rows(trans_cdf[s, joint], u[:, step, d])
            states[lo:hi, step + 1] = s
    return states, actions, rewards


def generate_dataset(mdp: FactoredMdp, policy: FactoredPolicy, n: int, t: int, seed: int) -> Dataset:
    """N independent trajectories of length ``t`` under ``policy``."""
    if n < 1 or t < 1:
        raise ValueError("n and t must be >= 1")
    states, actions, rewards = _rollout(mdp, policy, seed, 0, n, t)
    for arr in (states, actions, rewards):
        arr.flags.writeable = False
    return Dataset(states, actions, rewards, DatasetMeta(mdp.name, policy.name, seed, n, t))


def subset(dataset: Dataset, n: int, t: int, replicate: int) -> Dataset:
    """Replicate ``replicate``'s disjoint block: rows [rn, (r+1)n), first t steps.

    Returns read-only views into the parent arrays.
    """
    if replicate < 0 or n < 1:
        raise ValueError("n must be >= 1 and replicate >= 0")
    if n * (replicate + 1) > dataset.n:
        raise ValueError(
            f"replicate {replicate} of size {n} needs {n * (replicate + 1)} trajectories, "
            f"dataset has {dataset.n}")
    if t > dataset.t:
        raise ValueError(f"requested horizon {t} exceeds dataset horizon {dataset.t}")
    lo = replicate * n
    meta = replace(dataset.meta, n=n, t=t, offset=dataset.meta.offset + lo)
    return Dataset(dataset.states[lo:lo + n, :t + 1],
                   dataset.actions[lo:lo + n, :t],
                   dataset.rewards[lo:lo + n, :t], meta)


def abstract_trajectory(mdp: FactoredMdp, d: int, traj: Trajectory) -> AbstractedTrajectory:
    """Project a trajectory onto factor ``d``: abstractions, sub-actions, sub-rewards."""
    if not 0 <= d < mdp.n_factors:
        raise ValueError(f"factor index {d} out of range for D={mdp.n_factors}")
    z_idx = mdp.abstractions[d][traj.states]
    space = mdp.abstract_state_spaces[d]
    a_idx = traj.actions[:, d]
    return AbstractedTrajectory(
        factor=d,
        abstract_states=tuple(space[z] for z in z_idx),
        sub_actions=tuple(mdp.sub_action_spaces[d][a] for a in a_idx),
        sub_rewards=mdp.sub_rewards[d][z_idx[:-1], a_idx],
    )


def sub_reward_arrays(mdp: FactoredMdp, dataset: Dataset) -> np.ndarray:
    """Per-factor sub-rewards for every step, shape (D, N, T)."""
    out = np.empty((mdp.n_factors, dataset.n, dataset.t))
    for d in range(mdp.n_factors):
        z = mdp.abstractions[d][dataset.states[:, :-1]]
        out[d] = mdp.sub_rewards[d][z, dataset.actions[:, :, d]]
    return out


def rollout_actions(mdp: FactoredMdp, episodes, seed: int = 0, policy_name: str = "scripted") -> Dataset:
    """Dataset from scripted action-label sequences on a deterministic MDP.

    ``episodes`` is a list of episodes, each a list of per-step sub-action
    label tuples.  Intended for hand-computed test fixtures.
    """
    t = len(episodes[0])
    n = len(episodes)
    states = np.empty((n, t + 1), dtype=np.int16)
    actions = np.empty((n, t, mdp.n_factors), dtype=np.int8)
    rewards = np.empty((n, t), dtype=np.float64)
    for i, episode in enumerate(episodes):
        if len(episode) != t:
            raise ValueError("all episodes must share a horizon")
        s = mdp.initial_state
        states[i, 0] = s
        for step, labels in enumerate(episode):
            subs = [mdp.sub_action_index(d, lab) for d, lab in enumerate(labels)]
            a = mdp.joint_action_index(subs)
            dist = mdp.transition[s, a]
            if dist.max() != 1.0:
                raise ValueError("rollout_actions requires deterministic transitions")
            actions[i, step] = subs
            rewards[i, step] = mdp.reward[s, a]
            s = int(dist.argmax())
            states[i, step + 1] = s
    return Dataset(states, actions, rewards, DatasetMeta(mdp.name, policy_name, seed, n, t))


# -- serialization ----------------------------------------------------------

def dataset_to_csv(dataset: Dataset, mdp: FactoredMdp) -> str:
    buf = io.StringIO()
    meta = {
        "mdp": dataset.meta.mdp, "policy": dataset.meta.policy,
        "seed": dataset.meta.seed, "n": dataset.meta.n, "t": dataset.meta.t,
        "offset": dataset.meta.offset,
    }
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["episode", "t", "state"]
                    + [f"a{d + 1}" for d in range(dataset.n_factors)]
                    + ["reward", "next_state"])
    for i in range(dataset.n):
        for step in range(dataset.t):
            writer.writerow(
                [i, step, mdp.states[dataset.states[i, step]]]
                + [mdp.sub_action_spaces[d][dataset.actions[i, step, d]]
                   for d in range(dataset.n_factors)]
                + [repr(float(dataset.rewards[i, step])),
                   mdp.states[dataset.states[i, step + 1]]])
    return buf.getvalue()


def save_dataset(dataset: Dataset, path, mdp: Optional[FactoredMdp] = None) -> None:
    mdp = mdp if mdp is not None else mdp_from_name(dataset.meta.mdp)
    with open(path, "w", newline="") as fh:
        fh.write(dataset_to_csv(dataset, mdp))


def load_dataset(path, mdp: Optional[FactoredMdp] = None) -> Dataset:
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise ValueError("dataset file must start with a '# ' metadata line")
        meta_doc = json.loads(header[2:])
        if mdp is None:
            mdp = mdp_from_name(meta_doc["mdp"])
        reader = csv.reader(fh)
        columns = next(reader)
        d = len(columns) - 5
        if d != mdp.n_factors:
            raise ValueError(f"dataset has {d} factors, MDP has {mdp.n_factors}")
        n, t = meta_doc["n"], meta_doc["t"]
        states = np.empty((n, t + 1), dtype=np.int16)
        actions = np.empty((n, t, d), dtype=np.int8)
        rewards = np.empty((n, t), dtype=np.float64)
        for row in reader:
            i, step = int(row[0]), int(row[1])
            states[i, step] = mdp.state_index(row[2])
            for f in range(d):
                actions[i, step, f] = mdp.sub_action_index(f, row[3 + f])
            rewards[i, step] = float(row[3 + d])
            states[i, step + 1] = mdp.state_index(row[4 + d])
    for arr in (states, actions, rewards):
        arr.flags.writeable = False
    meta = DatasetMeta(meta_doc["mdp"], meta_doc["policy"], meta_doc["seed"],
                       n, t, meta_doc.get("offset", 0))
    return Dataset(states, actions, rewards, meta)
