import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factored_ope import ReplicateSet, bias, ess, mse, summarize, variance


def rs(values, truth=0.0, n=100):
    return ReplicateSet("is", np.asarray(values, dtype=float), truth, "oracle", n)


class TestBias:
    def test_zero_when_values_equal_truth(self):
        assert bias(rs([1.2, 1.2, 1.2], truth=1.2)) == 0.0

    def test_symmetric_values(self):
        assert bias(rs([1.0, 1.4], truth=1.2)) == pytest.approx(0.0, abs=1e-15)

    def test_signed(self):
        assert bias(rs([2.0, 4.0], truth=1.0)) == pytest.approx(2.0)


class TestVariance:
    def test_constant_is_zero(self):
        assert variance(rs([3.3] * 10)) == 0.0

    def test_unbiased_convention(self):
        assert variance(rs([0.0, 2.0])) == pytest.approx(2.0)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            variance(rs([1.0]))


class TestMse:
    def test_zero_for_perfect_estimates(self):
        direct, identity = mse(rs([1.0, 1.0], truth=1.0))
        assert direct == 0.0 and identity == 0.0

    def test_conventions_differ_by_r_over_r_minus_one(self):
        direct, identity = mse(rs([0.0, 2.0], truth=1.0))
        assert direct == pytest.approx(1.0)
        assert identity == pytest.approx(2.0)  # 0 bias + unbiased variance 2

    def test_identity_is_bias_sq_plus_variance(self):
        values = [0.3, 1.9, -0.7, 2.2, 0.6]
        set_ = rs(values, truth=0.5)
        _, identity = mse(set_)
        assert identity == pytest.approx(bias(set_) ** 2 + variance(set_), abs=1e-15)


class TestEss:
    def test_equal_variances(self):
        assert ess(100, 0.5, 0.5) == 100

    def test_direct_formula(self):
        assert ess(1000, 0.5, 1.0) == 500

    def test_inverse_proportionality(self):
        assert ess(100, 0.3, 2.0) == pytest.approx(ess(100, 0.3, 1.0) / 2)

    def test_zero_ope_variance_rejected(self):
        with pytest.raises(ValueError):
            ess(10, 1.0, 0.0)


class TestSummarize:
    def test_fields_consistent(self):
        set_ = rs([1.0, 1.5, 0.5, 1.1], truth=1.2, n=50)
        summary = summarize(set_, var_on_policy=0.25)
        assert summary.bias == pytest.approx(bias(set_))
        assert summary.variance == pytest.approx(variance(set_))
        assert summary.mse_identity == pytest.approx(summary.bias ** 2 + summary.variance, abs=1e-15)
        assert summary.ess == pytest.approx(50 * 0.25 / summary.variance)
        assert summary.truth_source == "oracle"
        assert summary.r == 4

    def test_no_on_policy_variance_no_ess(self):
        summary = summarize(rs([1.0, 2.0]))
        assert summary.ess is None


class TestValidation:
    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            rs([1.0, float("inf")])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rs([])


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=30),
    truth=st.floats(min_value=-100, max_value=100),
    scale=st.floats(min_value=0.01, max_value=100),
)
def test_scale_equivariance(values, truth, scale):
    """Scaling values and truth by c scales bias by c and variance/MSE by c^2."""
    base = rs(values, truth=truth)
    scaled = rs([scale * v for v in values], truth=scale * truth)
    assert bias(scaled) == pytest.approx(scale * bias(base), rel=1e-9, abs=1e-9)
    assert variance(scaled) == pytest.approx(scale ** 2 * variance(base), rel=1e-9, abs=1e-9)
    d0, i0 = mse(base)
    d1, i1 = mse(scaled)
    assert d1 == pytest.approx(scale ** 2 * d0, rel=1e-9, abs=1e-9)
    assert i1 == pytest.approx(scale ** 2 * i0, rel=1e-9, abs=1e-9)
