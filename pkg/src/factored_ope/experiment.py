"""Configuration-driven sweep runner.

One experiment = a grid over (pair, beta, N, T, gamma) crossed with a list
of estimators.  Per trial, one behaviour and one evaluation master dataset
are generated (sized R * max(N) by max(T)), carved into R disjoint replicate
blocks per grid cell, and every estimator is evaluated on every replicate;
bias/variance/MSE/ESS are computed per (cell, estimator, trial) and then
aggregated to mean +/- std over trials.  All seeds derive from the master
seed, so a sweep is reproducible byte for byte regardless of thread count.

The on-policy estimate runs on the evaluation-policy dataset; following the
experimental convention, its bias is recorded as zero and its MSE equals its
variance.
"""

import concurrent.futures
import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import __version__
from .errors import SizingError
from .estimators import apply_estimator
from .mdp import FactoredMdp, Mdp1Params, build_mdp1, build_mdp2
from .metrics import ReplicateSet, summarize, variance
from .oracle import exact_q
from .policies import builtin_policy_pair
from .rng import derive_seed
from .sampling import generate_dataset, subset

OPE_ESTIMATORS = ("is", "pdis", "pdwis", "decis", "decpdis", "decpdwis")
METRIC_NAMES = ("bias", "variance", "mse", "ess")

PAPER_N_GRID = (10, 50, 100, 500, 1000, 5000, 10000, 50000, 100000)
PAPER_T_GRID = (1, 5, 10, 50, 100, 500, 1000)
PAPER_GAMMA_GRID = (0.7, 0.9, 0.9999)
DEFAULT_BETA_GRID = (-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one sweep."""

    name: str
    mdp: str                       # "mdp1" or "mdp2"
    pair_labels: tuple = ("2.56",)
    alpha: float = 1.0
    beta_values: tuple = (0.0,)
    n_values: tuple = (1000,)
    t_values: tuple = (1,)
    gamma_values: tuple = (1.0,)
    r_replicates: int = 100
    trials: int = 5
    master_seed: int = 0
    estimators: tuple = OPE_ESTIMATORS
    truth_source: str = "oracle"   # "oracle" or "onpolicy"
    master_n: Optional[int] = None  # override master dataset size (default R * max N)
    master_t: Optional[int] = None

    def __post_init__(self):
        for name in ("pair_labels", "beta_values", "n_values", "t_values",
                     "gamma_values", "estimators"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.mdp not in ("mdp1", "mdp2"):
            raise ValueError("mdp must be 'mdp1' or 'mdp2'")
        if self.mdp == "mdp2" and any(b != 0.0 for b in self.beta_values):
            raise ValueError("beta sweeps apply to mdp1 only")
        if self.r_replicates < 2:
            raise ValueError("r_replicates must be >= 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = set(self.estimators) - set(OPE_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        if self.truth_source not in ("oracle", "onpolicy"):
            raise ValueError("truth_source must be 'oracle' or 'onpolicy'")

    @property
    def demand_n(self) -> int:
        return self.r_replicates * max(self.n_values)

    @property
    def demand_t(self) -> int:
        return max(self.t_values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    trial_agg: int
    mdp: str
    pair: str
    n: int
    t: int
    gamma: float
    beta: float
    estimator: str
    metric: str
    mean: float
    std: float


def _build_mdp(config: ExperimentConfig, beta: float) -> FactoredMdp:
    if config.mdp == "mdp1":
        return build_mdp1(Mdp1Params(alpha=config.alpha, beta=beta))
    return build_mdp2()


def _dataset_seeds(config: ExperimentConfig, trial: int, label: str, beta: float):
    # keyed by the master seed only (not the experiment name), so a sweep's
    # data is reproducible from the seed alone
    base = (config.master_seed, trial, label, repr(float(beta)))
    return derive_seed(*base, "behaviour"), derive_seed(*base, "evaluation")


def trial_metrics(config: ExperimentConfig, trial: int, label: str, beta: float) -> dict:
    """All metric values for one (trial, pair, beta): {(n, t, gamma, estimator, metric): value}.

    This is the per-trial building block of :func:`run_experiment`; exposed
    so trend checks can look at trial-level values before aggregation.
    """
    mdp = _build_mdp(config, beta)
    pair = builtin_policy_pair(mdp, label)
    n_master = config.master_n if config.master_n is not None else config.demand_n
    t_master = config.master_t if config.master_t is not None else config.demand_t
    seed_b, seed_e = _dataset_seeds(config, trial, label, beta)
    data_b = generate_dataset(mdp, pair.behaviour, n_master, t_master, seed_b)
    data_e = generate_dataset(mdp, pair.evaluation, n_master, t_master, seed_e)

    out = {}
    r = config.r_replicates
    for n in config.n_values:
        for t in config.t_values:
            for gamma in config.gamma_values:
                on_policy = np.array([
                    apply_estimator("onpolicy", subset(data_e, n, t, rep), None, gamma).value
                    for rep in range(r)])
                ope_values = {
                    est: np.array([
                        apply_estimator(est, subset(data_b, n, t, rep), pair, gamma).value
                        for rep in range(r)])
                    for est in config.estimators}
                if config.truth_source == "oracle":
                    truth = exact_q(mdp, pair.evaluation, gamma, t)
                else:
                    truth = float(np.mean(on_policy))
                on_set = ReplicateSet("onpolicy", on_policy, truth, config.truth_source, n)
                var_on = variance(on_set)
                cell = (n, t, gamma)
                # on-policy rows: bias fixed at zero by convention, MSE = variance
                out[cell + ("onpolicy", "bias")] = 0.0
                out[cell + ("onpolicy", "variance")] = var_on
                out[cell + ("onpolicy", "mse")] = var_on
                out[cell + ("onpolicy", "ess")] = float(n)
                for est, values in ope_values.items():
                    summary = summarize(
                        ReplicateSet(est, values, truth, config.truth_source, n),
                        var_on_policy=var_on)
                    out[cell + (est, "bias")] = summary.bias
                    out[cell + (est, "variance")] = summary.variance
                    out[cell + (est, "mse")] = summary.mse_identity
                    out[cell + (est, "ess")] = summary.ess if summary.ess is not None else float("nan")
    return out


def run_experiment(config: ExperimentConfig, out_dir=None, threads: int = 1):
    """Run a sweep; returns (rows, manifest) and optionally writes CSV + manifest.

    Raises :class:`SizingError` before any computation if an explicit master
    dataset size cannot cover ``r_replicates`` disjoint replicates of the
    largest requested N (or the largest requested T).
    """
    if config.master_n is not None and config.master_n < config.demand_n:
        raise SizingError(
            f"master dataset of {config.master_n} trajectories cannot supply "
            f"{config.r_replicates} disjoint replicates of N={max(config.n_values)}")
    if config.master_t is not None and config.master_t < config.demand_t:
        raise SizingError(
            f"master horizon {config.master_t} is shorter than the largest requested T="
            f"{config.demand_t}")

    tasks = [(trial, label, beta)
             for trial in range(config.trials)
             for label in config.pair_labels
             for beta in config.beta_values]
    results = {}
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(trial_metrics, config, *task): task for task in tasks}
            for fut, task in futures.items():
                results[task] = fut.result()
    else:
        for task in tasks:
            results[task] = trial_metrics(config, *task)

    estimator_order = ("onpolicy",) + tuple(config.estimators)
    rows = []
    for label in config.pair_labels:
        for beta in config.beta_values:
            for n in config.n_values:
                for t in config.t_values:
                    for gamma in config.gamma_values:
                        for est in estimator_order:
                            for metric in METRIC_NAMES:
                                key = (n, t, gamma, est, metric)
                                values = np.array([
                                    results[(trial, label, beta)][key]
                                    for trial in range(config.trials)])
                                mean = float(np.mean(values))
                                std = float(np.std(values, ddof=1)) if config.trials > 1 else 0.0
                                rows.append(ResultRow(
                                    config.name, config.trials, config.mdp, label,
                                    n, t, gamma, beta, est, metric, mean, std))

    manifest = _manifest(config)
    if out_dir is not None:
        write_results(rows, manifest, out_dir)
    return rows, manifest


def _manifest(config: ExperimentConfig) -> dict:
    doc = config.to_dict()
    blob = json.dumps(doc, sort_keys=True).encode()
    seeds = {}
    for trial in range(config.trials):
        for label in config.pair_labels:
            for beta in config.beta_values:
                b, e = _dataset_seeds(config, trial, label, beta)
                seeds[f"trial={trial}/pair={label}/beta={beta!r}"] = {
                    "behaviour": b, "evaluation": e}
    return {
        "name": config.name,
        "config": doc,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "code_version": __version__,
        "dataset_seeds": seeds,
        "columns": ["experiment", "trial_agg", "mdp", "pair", "N", "T",
                    "gamma", "beta", "estimator", "metric", "mean", "std"],
    }


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["experiment", "trial_agg", "mdp", "pair", "N", "T",
                     "gamma", "beta", "estimator", "metric", "mean", "std"])
    for row in rows:
        writer.writerow([row.experiment, row.trial_agg, row.mdp, row.pair,
                         row.n, row.t, repr(row.gamma), repr(row.beta),
                         row.estimator, row.metric, repr(row.mean), repr(row.std)])
    return buf.getvalue()


def write_results(rows, manifest: dict, out_dir) -> None:
    import os
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def append_results(all_rows, manifests, out_dir) -> None:
    """Write several experiments' rows into one results.csv + manifest.json."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        fh.write(rows_to_csv(all_rows))
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump({"experiments": manifests}, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- builtin experiment library ----------------------------------------------

def builtin_experiments(full: bool = False, smoke: bool = False) -> dict:
    """Named configs keyed to the figure suite.

    Desk-scale grids by default; ``full=True`` restores the original grids;
    ``smoke=True`` shrinks everything for fast functional checks.
    """
    if full and smoke:
        raise ValueError("choose at most one of full/smoke")

    def seeded(name):
        return derive_seed("experiment", name)

    n_grid = PAPER_N_GRID if full else (10, 100, 1000, 10000)
    t_grid = PAPER_T_GRID if full else (1, 5, 10, 50, 100)
    beta_grid = DEFAULT_BETA_GRID
    r, trials = 100, 5
    beta_n = (100000,) if full else (10000,)
    if smoke:
        n_grid, t_grid = (10, 50), (1, 5)
        beta_grid = (-1.0, 0.0, 1.0)
        beta_n = (50,)
        r, trials = 5, 2

    def cfg(name, **kw):
        kw.setdefault("r_replicates", r)
        kw.setdefault("trials", trials)
        return ExperimentConfig(name=name, master_seed=seeded(name), **kw)

    mdp2_t = dict(mdp="mdp2", pair_labels=("1.44",), n_values=(1000,) if not smoke else (20,),
                  t_values=t_grid)
    configs = [
        cfg("fig1_var_mse_vs_N", mdp="mdp1", pair_labels=("2.56",), n_values=n_grid),
        cfg("fig2_bias_vs_beta", mdp="mdp1", pair_labels=("1.44",),
            beta_values=beta_grid, n_values=beta_n),
        cfg("fig3_bias_vs_T", gamma_values=(0.7,), **mdp2_t),
        cfg("fig4_var_mse_vs_T", gamma_values=(0.7,), **mdp2_t),
        cfg("fig_var_vs_PD", mdp="mdp2", pair_labels=tuple(
            ("1.44", "2.56", "3.61", "4.46", "5.64", "10.03", "22.56", "90.25", "361.0")),
            n_values=(1000,) if not smoke else (20,), t_values=(10,) if not smoke else (2,),
            gamma_values=(0.7,)),
        cfg("fig5_ess_vs_N", mdp="mdp1", pair_labels=("2.56",), n_values=n_grid),
        cfg("fig6_ess_vs_T", gamma_values=(0.7,), **mdp2_t),
        cfg("app_bias_vs_beta_N1000", mdp="mdp1", pair_labels=("1.44",),
            beta_values=beta_grid, n_values=(1000,) if not smoke else (50,)),
        cfg("app_var_vs_T_gamma_0_9", gamma_values=(0.9,), **mdp2_t),
        cfg("app_var_vs_T_gamma_0_9999", gamma_values=(0.9999,), **mdp2_t),
        cfg("app_var_vs_PD_mdp1", mdp="mdp1", pair_labels=tuple(
            ("1.44", "2.56", "3.61", "4.46", "5.64", "10.03", "22.56", "90.25", "361.0")),
            n_values=(1000,) if not smoke else (20,)),
    ]
    return {c.name: c for c in configs}
