import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import bsc, random_joint
from ibonset.errors import InvalidDistributionError
from ibonset.probcore import (
    Encoder,
    JointDistribution,
    as_distribution,
    conditional_x_given_y,
    conditional_y_given_x,
    divergence_transition_matrix,
    encoder_informations,
    entropy,
    kl_divergence,
    marginals,
    mutual_information,
    singular_values,
    svd,
    symmetric_eig,
)

N_CASES = 1000


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def mi_double_sum(p):
    """Independent oracle: explicit double loop."""
    p = np.asarray(p, dtype=float)
    px, py = p.sum(axis=1), p.sum(axis=0)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if p[i, j] > 0:
                total += p[i, j] * math.log2(p[i, j] / (px[i] * py[j]))
    return total


class TestConstruction:
    def test_rejects_bad_sum(self):
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_array([[0.5, 0.2], [0.1, 0.1]])

    def test_rejects_negative(self):
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_array([[0.6, -0.1], [0.25, 0.25]])

    def test_rejects_nan_and_wrong_rank(self):
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_array([[np.nan, 0.5], [0.25, 0.25]])
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_array([0.5, 0.5])

    def test_normalize_flag(self):
        j = JointDistribution.from_array([[2.0, 1.0], [1.0, 0.0]], normalize=True)
        assert j.p.sum() == pytest.approx(1.0, abs=1e-15)

    def test_strips_zero_marginal_states(self):
        j = JointDistribution.from_array(
            [[0.5, 0.0, 0.0], [0.0, 0.0, 0.0], [0.25, 0.0, 0.25]], x_labels="abc", y_labels="uvw"
        )
        assert j.shape == (2, 2)
        assert j.x_labels == ("a", "c")
        assert j.y_labels == ("u", "w")

    def test_tiny_entries_are_zero(self):
        j = JointDistribution.from_array([[0.5, 1e-17], [0.0, 0.5]], normalize=True)
        assert j.p[0, 1] == 0.0

    def test_label_count_checked(self):
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_array([[0.5, 0.5]], x_labels=["a", "b"])

    def test_table_is_read_only(self):
        j = bsc(0.1)
        with pytest.raises(ValueError):
            j.p[0, 0] = 1.0

    def test_as_distribution(self):
        assert as_distribution([0.25, 0.75]).sum() == 1.0
        with pytest.raises(InvalidDistributionError):
            as_distribution([0.2, 0.2])
        np.testing.assert_allclose(as_distribution([1, 3], normalize=True), [0.25, 0.75])


class TestMarginalsAndConditionals:
    def test_uniform(self):
        px, py = marginals(JointDistribution.from_array(np.full((2, 2), 0.25)))
        np.testing.assert_allclose(px, [0.5, 0.5])
        np.testing.assert_allclose(py, [0.5, 0.5])

    def test_diagonal(self):
        j = JointDistribution.from_array([[0.5, 0.0], [0.0, 0.5]])
        px, py = marginals(j)
        np.testing.assert_allclose(px, [0.5, 0.5])
        np.testing.assert_allclose(conditional_y_given_x(j), np.eye(2))

    def test_hand_example(self):
        j = JointDistribution.from_array([[0.4, 0.1], [0.2, 0.3]])
        px, py = marginals(j)
        np.testing.assert_allclose(px, [0.5, 0.5])
        np.testing.assert_allclose(py, [0.6, 0.4])
        np.testing.assert_allclose(conditional_y_given_x(j)[0], [0.8, 0.2])
        np.testing.assert_allclose(conditional_x_given_y(j)[:, 0], [2 / 3, 1 / 3])

    def test_independent_rows_equal_marginal(self):
        j = JointDistribution.from_array(np.outer([0.2, 0.3, 0.5], [0.6, 0.4]))
        for row in conditional_y_given_x(j):
            np.testing.assert_allclose(row, j.py)

    def test_conditionals_normalized(self, rng):
        j = random_joint(rng, 5, 3)
        np.testing.assert_allclose(conditional_y_given_x(j).sum(axis=1), 1.0, atol=1e-14)
        np.testing.assert_allclose(conditional_x_given_y(j).sum(axis=0), 1.0, atol=1e-14)


class TestDivergences:
    def test_kl_examples(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)
        direct = 0.75 * math.log2(1.5) + 0.25 * math.log2(0.5)
        assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(direct, abs=1e-15)
        assert direct == pytest.approx(0.18872, abs=1e-5)

    def test_kl_support_violation_is_inf(self):
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf

    def test_mi_examples(self):
        assert mutual_information(JointDistribution.from_array(np.outer([0.3, 0.7], [0.5, 0.5]))) == pytest.approx(
            0.0, abs=1e-15
        )
        assert mutual_information(JointDistribution.from_array([[0.5, 0.0], [0.0, 0.5]])) == pytest.approx(1.0)
        assert mutual_information(bsc(0.11)) == pytest.approx(1 - h2(0.11), abs=1e-14)
        # the rounded figure 0.4999 is quoted loosely; the exact value is 0.50008
        assert mutual_information(bsc(0.11)) == pytest.approx(0.4999, abs=2e-4)

    def test_mi_matches_double_sum(self, rng):
        for _ in range(20):
            j = random_joint(rng, int(rng.integers(2, 7)), int(rng.integers(2, 7)))
            assert mutual_information(j) == pytest.approx(mi_double_sum(j.p), abs=1e-13)

    def test_entropy(self):
        assert entropy([0.5, 0.5]) == pytest.approx(1.0)
        assert entropy([1.0, 0.0]) == 0.0


class TestEncoder:
    def test_validation(self):
        with pytest.raises(InvalidDistributionError):
            Encoder(np.array([[0.5, 0.5], [0.4, 0.5]]))
        with pytest.raises(InvalidDistributionError):
            Encoder(np.array([1.0, 0.0]))

    def test_uniform_encoder_is_uninformative(self, rng):
        j = random_joint(rng, 4, 3)
        assert encoder_informations(Encoder.uniform(3, 4), j) == pytest.approx((0.0, 0.0), abs=1e-15)

    def test_identity_encoder(self, rng):
        j = random_joint(rng, 4, 3)
        izx, izy = encoder_informations(Encoder.identity(4), j)
        assert izx == pytest.approx(entropy(j.px), abs=1e-13)
        assert izy == pytest.approx(mutual_information(j), abs=1e-13)

    def test_matches_double_sum_oracle(self, rng):
        j = random_joint(rng, 3, 3)
        q = rng.uniform(size=(3, 3))
        q /= q.sum(axis=0)
        pzx = q * j.px[None, :]
        pzy = np.einsum("zx,xy->zy", q, j.p)
        izx, izy = encoder_informations(q, j)
        assert izx == pytest.approx(mi_double_sum(pzx), abs=1e-13)
        assert izy == pytest.approx(mi_double_sum(pzy), abs=1e-13)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InvalidDistributionError):
            encoder_informations(np.full((2, 3), 0.5), random_joint(rng, 4, 2))


class TestDivergenceTransitionMatrix:
    def test_independent_rank_one(self):
        j = JointDistribution.from_array(np.outer([0.2, 0.8], [0.3, 0.3, 0.4]))
        s = singular_values(divergence_transition_matrix(j))
        assert s[0] == pytest.approx(1.0)
        assert s[1] == pytest.approx(0.0, abs=1e-15)

    def test_diagonal_is_identity(self):
        b = divergence_transition_matrix(JointDistribution.from_array([[0.5, 0.0], [0.0, 0.5]]))
        np.testing.assert_allclose(b, np.eye(2))

    def test_bsc_second_singular_value(self):
        s = singular_values(divergence_transition_matrix(bsc(0.25)))
        assert s[1] == pytest.approx(0.5, abs=1e-14)

    def test_top_singular_vectors(self, rng):
        j = random_joint(rng, 5, 4)
        u, s, vt = svd(divergence_transition_matrix(j))
        assert s[0] == pytest.approx(1.0, abs=1e-12)
        assert abs(u[:, 0] @ np.sqrt(j.px)) == pytest.approx(1.0, abs=1e-8)
        assert abs(vt[0] @ np.sqrt(j.py)) == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_eig(self):
        w, v = symmetric_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(w, [1.0, 3.0])


class TestSerialization:
    def test_json_round_trip(self, rng):
        j = random_joint(rng, 4, 3)
        k = JointDistribution.from_json(j.to_json())
        np.testing.assert_array_equal(k.p, j.p)
        assert k.x_labels == j.x_labels and k.y_labels == j.y_labels

    def test_csv_round_trip_is_exact(self, rng, tmp_path):
        j = JointDistribution.from_array(rng.dirichlet(np.ones(12)).reshape(4, 3), y_labels=["a", "b", "c"])
        path = tmp_path / "j.csv"
        j.save(path, metadata=["seed: 1"])
        text = path.read_text()
        assert text.startswith("# seed: 1\nx,a,b,c\n")
        k = JointDistribution.load(path)
        np.testing.assert_array_equal(k.p, j.p)

    def test_json_file_round_trip(self, rng, tmp_path):
        j = random_joint(rng, 3, 5)
        j.save(tmp_path / "j.json")
        np.testing.assert_array_equal(JointDistribution.load(tmp_path / "j.json").p, j.p)

    def test_malformed_inputs(self):
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_json("{}")
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_csv("x,a\n0,zz\n")
        with pytest.raises(InvalidDistributionError):
            JointDistribution.from_csv("x,a,b\n0,0.5\n1,0.25,0.25\n")

    def test_transpose(self, rng):
        j = random_joint(rng, 4, 3)
        t = j.transpose()
        np.testing.assert_array_equal(t.p, j.p.T)
        assert mutual_information(t) == pytest.approx(mutual_information(j), abs=1e-14)


# -- property suites: 1000 randomized cases per invariant -------------------


def _random_cases(seed):
    rng = np.random.default_rng(seed)
    for _ in range(N_CASES):
        yield rng, random_joint(rng, int(rng.integers(2, 7)), int(rng.integers(2, 7)), spread=1.5)


def test_normalization_property():
    for rng, j in _random_cases(1):
        assert abs(j.p.sum() - 1.0) <= 1e-12
        assert np.all(np.abs(j.p_y_given_x.sum(axis=1) - 1.0) <= 1e-12)
        q = rng.uniform(size=(int(rng.integers(2, 6)), j.shape[0]))
        enc = Encoder(q / q.sum(axis=0))
        assert np.all(np.abs(enc.q.sum(axis=0) - 1.0) <= 1e-12)


def test_kl_and_mi_nonnegative_property():
    for rng, j in _random_cases(2):
        n = j.shape[0]
        assert kl_divergence(rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))) >= 0.0
        assert mutual_information(j) >= -1e-15


def test_mi_bounded_by_entropies_property():
    for _, j in _random_cases(3):
        assert mutual_information(j) <= min(entropy(j.px), entropy(j.py)) + 1e-12


def test_dpi_property():
    for rng, j in _random_cases(4):
        q = rng.uniform(size=(int(rng.integers(2, 6)), j.shape[0]))
        izx, izy = encoder_informations(q / q.sum(axis=0), j)
        assert izy <= izx + 1e-10


def test_gibbs_property():
    rng = np.random.default_rng(5)
    for _ in range(N_CASES):
        n = int(rng.integers(2, 8))
        p = rng.dirichlet(np.ones(n))
        assert kl_divergence(p, p) <= 1e-10
        q = rng.dirichlet(np.ones(n))
        if np.max(np.abs(p - q)) > 1e-6:
            assert kl_divergence(p, q) > 0.0


def test_top_singular_value_property():
    for _, j in _random_cases(6):
        assert abs(singular_values(divergence_transition_matrix(j))[0] - 1.0) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 5), st.integers(2, 5)), elements=st.floats(0.01, 10.0)))
def test_mi_invariant_under_permutation(w):
    j = JointDistribution.from_array(w, normalize=True)
    perm = JointDistribution.from_array(w[::-1, ::-1], normalize=True)
    assert mutual_information(j) == pytest.approx(mutual_information(perm), abs=1e-12)
