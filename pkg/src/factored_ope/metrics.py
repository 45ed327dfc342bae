"""Bias, variance, MSE (both routes), and effective sample size.

Variance uses the unbiased (R-1) convention.  ``mse`` returns both the
population mean of squared deviations from the truth and the bias^2 +
variance identity; the two differ by the R/(R-1) factor on the variance
term, and downstream consumers (experiment CSV, acceptance checks) use the
identity form.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ReplicateSet:
    """R estimates of one estimator from disjoint replicates, plus the truth."""

    estimator: str
    values: np.ndarray
    truth: float
    truth_source: str  # "oracle" or "onpolicy"
    n_per_replicate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError("replicate estimates must be finite")
        object.__setattr__(self, "values", values)

    @property
    def r(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class MetricsSummary:
    estimator: str
    bias: float
    variance: float
    mse_direct: float
    mse_identity: float
    ess: Optional[float]
    truth: float
    truth_source: str
    r: int


def bias(replicates: ReplicateSet) -> float:
    """mean(values) - truth."""
    return math.fsum(replicates.values) / replicates.r - replicates.truth


def variance(replicates: ReplicateSet) -> float:
    """Unbiased sample variance of the replicate estimates."""
    if replicates.r < 2:
        raise ValueError("variance needs at least 2 replicates")
    mean = math.fsum(replicates.values) / replicates.r
    return math.fsum((replicates.values - mean) ** 2) / (replicates.r - 1)


def mse(replicates: ReplicateSet):
    """(direct, identity) MSE: mean squared deviation from truth, and bias^2 + variance."""
    direct = math.fsum((replicates.values - replicates.truth) ** 2) / replicates.r
    b = bias(replicates)
    return direct, b * b + variance(replicates)


def ess(n: int, var_on_policy: float, var_ope: float) -> float:
    """Effective sample size: n scaled by the on-policy/off-policy variance ratio."""
    if var_ope <= 0.0:
        raise ValueError("ESS is undefined for zero (or negative) OPE variance")
    return n * var_on_policy / var_ope


def summarize(replicates: ReplicateSet, var_on_policy: Optional[float] = None) -> MetricsSummary:
    """All metrics for one replicate set; ESS only when the on-policy variance is given."""
    mse_direct, mse_identity = mse(replicates)
    var = variance(replicates)
    ess_value = None
    if var_on_policy is not None and var > 0.0:
        ess_value = ess(replicates.n_per_replicate, var_on_policy, var)
    return MetricsSummary(
        estimator=replicates.estimator,
        bias=bias(replicates),
        variance=var,
        mse_direct=mse_direct,
        mse_identity=mse_identity,
        ess=ess_value,
        truth=replicates.truth,
        truth_source=replicates.truth_source,
        r=replicates.r,
    )
