import math

import numpy as np
import pytest

from conftest import bsc, informative_joints, random_joint
from ibonset import chi2, datagen
from ibonset.errors import InvalidDistributionError, NoOnsetError
from ibonset.onset import (
    _kl_rows,
    eta_kl,
    eta_kl_bruteforce,
    fixed_point_residual,
    kl_ratio,
    solve_onset,
)
from ibonset.probcore import LN2, JointDistribution, kl_divergence


def bsc_ratio_oracle(delta, t):
    """KL ratio on the BSC written out by hand for input (1/2 + u, 1/2 - u)."""

    def kl_from_half(u):
        return (0.5 + u) * math.log1p(2 * u) + (0.5 - u) * math.log1p(-2 * u)

    u = t - 0.5
    return kl_from_half(u * (1 - 2 * delta)) / kl_from_half(u)


@pytest.fixture(scope="module")
def fig1():
    joint = datagen.fig1_joint()
    return joint, solve_onset(joint)


class TestBSC:
    @pytest.mark.parametrize("delta", [0.1, 0.25, 0.4])
    def test_closed_form(self, delta):
        sol = solve_onset(bsc(delta))
        assert sol.beta_c == pytest.approx((1 - 2 * delta) ** -2, rel=1e-12)
        assert sol.eta_kl == 1.0 / sol.beta_c

    def test_bsc_quarter(self):
        assert eta_kl(bsc(0.25)) == pytest.approx(0.25, rel=1e-12)

    def test_hand_oracle_supremum_at_midpoint(self):
        # the ratio increases towards t = 1/2, where it tends to (1 - 2 delta)^2
        vals = [bsc_ratio_oracle(0.25, t) for t in (0.1, 0.3, 0.45, 0.499, 0.4999999)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(0.25, abs=1e-8)

    def test_limit_solution_fields(self):
        sol = solve_onset(bsc(0.25))
        assert not sol.attained
        np.testing.assert_allclose(sol.r_x, [0.5, 0.5])
        assert abs(sol.direction.sum()) < 1e-12
        assert np.abs(sol.direction).sum() == pytest.approx(1.0)

    def test_bruteforce(self):
        assert eta_kl_bruteforce(bsc(0.25)) == pytest.approx(0.25, abs=1e-9)


def test_identity_channel_onset_is_one():
    j = JointDistribution.from_array(np.diag([0.2, 0.3, 0.5]))
    assert solve_onset(j).beta_c == pytest.approx(1.0, abs=1e-12)
    assert eta_kl(j) == pytest.approx(1.0, abs=1e-12)


def test_permuted_bijection_onset_is_one():
    j = JointDistribution.from_array(np.array([[0, 0.2, 0], [0, 0, 0.3], [0.5, 0, 0]]))
    assert solve_onset(j).beta_c == pytest.approx(1.0, abs=1e-12)


def test_independent_joint_has_no_onset():
    with pytest.raises(NoOnsetError):
        solve_onset(JointDistribution.from_array(np.outer([0.3, 0.7], [0.4, 0.6])))


def test_argument_checks(rng):
    j = random_joint(rng, 3, 3)
    with pytest.raises(ValueError):
        solve_onset(j, tol=0.0)
    with pytest.raises(ValueError):
        solve_onset(j, max_restarts=0)


def test_solution_invariants(fig1):
    joint, sol = fig1
    assert sol.attained and sol.converged
    np.testing.assert_allclose(sol.r_y, sol.r_x @ joint.p_y_given_x, atol=1e-12)
    ratio = _kl_rows(sol.r_x, joint.px) / _kl_rows(sol.r_y, joint.py)
    assert ratio == pytest.approx(sol.beta_c, rel=1e-8)
    assert sol.beta_c >= 1.0
    assert sol.eta_kl == 1.0 / sol.beta_c
    assert fixed_point_residual(joint, sol) < 1e-8
    assert np.abs(sol.r_x - joint.px).sum() > 1e-4


def test_deterministic_given_seed(fig1):
    joint, sol = fig1
    again = solve_onset(joint)
    assert again.beta_c == sol.beta_c
    np.testing.assert_array_equal(again.r_x, sol.r_x)


def test_json_dict(fig1):
    _, sol = fig1
    d = sol.to_json_dict()
    assert set(d) >= {"beta_c", "eta_kl", "r_x", "r_y", "converged", "restarts_used"}


def test_random_joints_match_bruteforce():
    for j in informative_joints(seed=3, count=6):
        sol = solve_onset(j)
        bf = eta_kl_bruteforce(j)
        assert bf <= sol.eta_kl + 1e-6
        assert bf >= sol.eta_kl - 1e-3
        if sol.attained:
            assert fixed_point_residual(j, sol) < 1e-8


def test_bound_chain_random_joints():
    rng = np.random.default_rng(21)
    for _ in range(200):
        j = random_joint(rng, int(rng.integers(2, 6)), int(rng.integers(2, 6)), spread=1.5)
        sol = solve_onset(j, max_restarts=8)
        eta2 = chi2.eta_chi2(j).eta_chi2
        assert eta2 <= sol.eta_kl + 1e-9
        assert sol.eta_kl <= 1.0 + 1e-12
        assert sol.beta_c >= 1.0 - 1e-12


class TestKlRatio:
    def test_point_mass(self, rng):
        j = random_joint(rng, 4, 3)
        f = np.array([1.0, 0.0, 0.0, 0.0])
        expected = kl_divergence(j.p_y_given_x[0], j.py) / -math.log2(j.px[0])
        assert kl_ratio(f, j) == pytest.approx(expected, rel=1e-12)

    def test_at_onset_solution(self, fig1):
        joint, sol = fig1
        assert kl_ratio(sol.r_x, joint) == pytest.approx(sol.eta_kl, abs=1e-8)

    def test_rejects_marginal(self, rng):
        j = random_joint(rng, 3, 3)
        with pytest.raises(ValueError):
            kl_ratio(j.px, j)
        with pytest.raises(InvalidDistributionError):
            kl_ratio([0.5, 0.5], j)

    def test_supremum_property(self, fig1):
        joint, sol = fig1
        rng = np.random.default_rng(8)
        for scale in (0.01, 0.3, 3.0):
            logf = np.log(joint.px) + scale * rng.standard_normal((1000, joint.shape[0]))
            f = np.exp(logf - logf.max(axis=1, keepdims=True))
            f /= f.sum(axis=1, keepdims=True)
            ratios = _kl_rows(f @ joint.p_y_given_x, joint.py) / _kl_rows(f, joint.px)
            assert ratios.max() <= sol.eta_kl + 1e-9

    def test_bsc_random_inputs_bounded(self):
        j = bsc(0.25)
        rng = np.random.default_rng(9)
        for t in rng.uniform(0.001, 0.999, 1000):
            if abs(t - 0.5) > 1e-6:
                assert kl_ratio([t, 1 - t], j) <= 0.25 + 1e-9


class TestBruteforce:
    def test_independent_is_zero(self):
        j = JointDistribution.from_array(np.outer([0.5, 0.5], [0.3, 0.7]))
        assert eta_kl_bruteforce(j) == pytest.approx(0.0, abs=1e-15)

    def test_alphabet_limit(self, rng):
        with pytest.raises(ValueError):
            eta_kl_bruteforce(random_joint(rng, 5, 2))

    def test_refinement_does_not_decrease(self, rng):
        j = random_joint(rng, 3, 3, spread=1.5)
        coarse = eta_kl_bruteforce(j, resolution=20, n_refine=1, min_step=1e-2)
        fine = eta_kl_bruteforce(j, resolution=60)
        assert fine >= coarse - 1e-12


def test_asymmetric_onset():
    # eta_KL depends on direction while eta_chi2 does not
    j = JointDistribution.from_array([[0.4, 0.1, 0.0], [0.0, 0.3, 0.2]])
    fwd, bwd = solve_onset(j), solve_onset(j.transpose())
    assert chi2.eta_chi2(j).eta_chi2 == pytest.approx(chi2.eta_chi2(j.transpose()).eta_chi2, abs=1e-12)
    assert fwd.eta_kl >= chi2.eta_chi2(j).eta_chi2 - 1e-12
    assert bwd.eta_kl >= chi2.eta_chi2(j).eta_chi2 - 1e-12
    assert abs(fwd.eta_kl - bwd.eta_kl) > 1e-3


def test_limit_case_matches_chi2():
    # below-limit fixed points absent: eta_KL equals eta_chi2 and the returned r is p
    j = datagen.binary_classification_joint(datagen.BinaryClassSpec("gaussian", (0.0, 1.0), (1.0, 1.0), 64))
    sol = solve_onset(j)
    assert not sol.attained
    assert sol.eta_kl == pytest.approx(chi2.eta_chi2(j).eta_chi2, rel=1e-12)


def test_nats_to_bits_consistency(fig1):
    joint, sol = fig1
    assert _kl_rows(sol.r_x, joint.px) / LN2 == pytest.approx(kl_divergence(sol.r_x, joint.px), rel=1e-10)
