import numpy as np
import pytest

from factored_ope import (
    BUILTIN_PAIR_LABELS,
    CoverageViolationError,
    FactoredPolicy,
    PolicyPair,
    build_mdp1,
    build_mdp2,
    builtin_policy_pair,
    check_policy_factorisation,
    joint_probability,
    load_pair,
    policy_divergence,
    save_pair,
)

# single-step divergences from the builtin pair library
EXPECTED_DIVERGENCE = {
    "1.44": 1.44, "2.56": 2.56, "3.61": 3.61, "4.46": 4.46, "5.64": 5.64,
    "10.03": 10.03, "22.56": 22.56, "90.25": 90.25, "361.0": 361.0,
}


class TestJointProbability:
    def test_mdp1_evaluation_pair_144(self):
        pair = builtin_policy_pair("mdp1", "1.44")
        assert joint_probability(pair.evaluation, "state", ("right", "up")) == pytest.approx(0.36)
        assert joint_probability(pair.evaluation, "state", ("left", "up")) == pytest.approx(0.24)
        assert joint_probability(pair.behaviour, "state", ("right", "up")) == pytest.approx(0.25)

    def test_accepts_indices_and_labels(self):
        pair = builtin_policy_pair("mdp2", "2.56")
        m = pair.mdp
        a = m.action_index_from_label("right,up")
        assert joint_probability(pair.evaluation, 0, a) == pytest.approx(0.64)
        assert joint_probability(pair.evaluation, "0,0", (1, 1)) == pytest.approx(0.64)

    def test_single_factor_joint_equals_factor(self):
        m2 = build_mdp2()
        from factored_ope import Grouping, group_factors
        grouped, gpair = group_factors(m2, builtin_policy_pair(m2, "1.44"), Grouping.single(2))
        table = gpair.evaluation.joint_table()
        assert np.array_equal(table, gpair.evaluation.tables[0][grouped.abstractions[0]])

    def test_joint_marginalises_to_factors(self):
        pair = builtin_policy_pair("mdp2", "5.64")
        m = pair.mdp
        joint = pair.evaluation.joint_table()
        acts = m.joint_actions
        for s in range(m.n_states):
            for a1 in range(2):
                marginal = joint[s, acts[:, 0] == a1].sum()
                z = m.abstractions[0][s]
                assert marginal == pytest.approx(pair.evaluation.tables[0][z, a1], abs=1e-12)


class TestBuiltinPairs:
    @pytest.mark.parametrize("label", BUILTIN_PAIR_LABELS)
    @pytest.mark.parametrize("mdp_id", ["mdp1", "mdp2"])
    def test_rows_sum_to_one(self, mdp_id, label):
        pair = builtin_policy_pair(mdp_id, label)
        for policy in (pair.behaviour, pair.evaluation):
            for table in policy.tables:
                assert np.max(np.abs(table.sum(axis=1) - 1.0)) <= 1e-12
            joint = policy.joint_table()
            assert np.max(np.abs(joint.sum(axis=1) - 1.0)) <= 1e-12

    def test_361_tables(self):
        pair = builtin_policy_pair("mdp1", "361.0")
        s = pair.mdp.state_index("state")
        z = pair.mdp.abstractions[0][s]
        assert pair.behaviour.tables[0][z, 1] == pytest.approx(0.05)  # right
        assert pair.evaluation.tables[0][z, 1] == pytest.approx(0.95)

    def test_mdp2_same_tables_at_all_states(self):
        pair = builtin_policy_pair("mdp2", "1.44")
        joint = pair.evaluation.joint_table()
        assert np.allclose(joint, joint[0])

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            builtin_policy_pair("mdp1", "7.77")


class TestDivergence:
    @pytest.mark.parametrize("label", BUILTIN_PAIR_LABELS)
    def test_single_step_value_matches_label(self, label):
        pair = builtin_policy_pair("mdp1", label)
        assert round(policy_divergence(pair, 1), 2) == EXPECTED_DIVERGENCE[label]

    def test_multiplicative_in_horizon(self):
        pair = builtin_policy_pair("mdp2", "2.56")
        base = policy_divergence(pair, 1)
        for t in (2, 5, 17):
            assert policy_divergence(pair, t) == base ** t

    def test_identical_policies_give_one(self):
        pair = builtin_policy_pair("mdp1", "1.44")
        same = PolicyPair(pair.behaviour, pair.behaviour)
        assert policy_divergence(same, 9) == 1.0

    def test_pair_144_ratio_is_036_over_025(self):
        pair = builtin_policy_pair("mdp1", "1.44")
        assert policy_divergence(pair, 1) == pytest.approx(0.36 / 0.25)

    def test_coverage_violation_raises(self):
        m = build_mdp1()
        dirac = FactoredPolicy(m, (np.array([[0.0, 1.0], [0.5, 0.5]]),
                                   np.array([[0.0, 1.0], [0.5, 0.5]])), name="dirac")
        broad = builtin_policy_pair(m, "1.44").evaluation
        with pytest.raises(CoverageViolationError):
            PolicyPair(behaviour=dirac, evaluation=broad)


class TestPolicyFactorisationCheck:
    def test_derived_joint_passes_at_tol_zero(self):
        pair = builtin_policy_pair("mdp1", "1.44")
        report = check_policy_factorisation(pair.evaluation.joint_table(), pair.evaluation)
        assert report.passed and report.max_residual == 0.0

    def test_correlated_joint_fails(self):
        # half the mass on (right, up), half on (left, down): no product of
        # marginals puts zero mass off-diagonal
        pair = builtin_policy_pair("mdp1", "1.44")
        m = pair.mdp
        joint = np.zeros((m.n_states, m.n_joint_actions))
        joint[:, m.action_index_from_label("right,up")] = 0.5
        joint[:, m.action_index_from_label("left,down")] = 0.5
        report = check_policy_factorisation(joint, pair.evaluation, tol=1e-9)
        assert not report.passed
        assert report.witness is not None


class TestPairValidation:
    def test_mismatched_mdps_rejected(self):
        p1 = builtin_policy_pair("mdp1", "1.44").behaviour
        p2 = builtin_policy_pair("mdp2", "1.44").evaluation
        with pytest.raises(ValueError):
            PolicyPair(behaviour=p1, evaluation=p2)

    def test_bad_rows_rejected(self):
        m = build_mdp1()
        with pytest.raises(ValueError):
            FactoredPolicy(m, (np.array([[0.6, 0.6], [0.5, 0.5]]),
                               np.array([[0.5, 0.5], [0.5, 0.5]])))


class TestSerialization:
    def test_pair_round_trip(self, tmp_path):
        pair = builtin_policy_pair("mdp2", "22.56")
        path = tmp_path / "pair.json"
        save_pair(pair, path)
        again = load_pair(path, pair.mdp)
        assert again.divergence_label == "22.56"
        for a, b in zip(again.behaviour.tables, pair.behaviour.tables):
            assert np.array_equal(a, b)
        for a, b in zip(again.evaluation.tables, pair.evaluation.tables):
            assert np.array_equal(a, b)
