import numpy as np
import pytest

from ibonset.perturb import SeriesEncoder
from ibonset.probcore import JointDistribution


def bsc(delta: float) -> JointDistribution:
    """Binary symmetric channel with uniform input."""
    return JointDistribution.from_array(0.5 * np.array([[1 - delta, delta], [delta, 1 - delta]]))


def random_joint(rng: np.random.Generator, nx: int, ny: int, spread: float = 1.0) -> JointDistribution:
    w = np.exp(spread * rng.standard_normal((nx, ny)))
    return JointDistribution.from_array(w, normalize=True)


def informative_joints(seed: int, count: int, nx: int = 4, ny: int = 4, min_bits: float = 0.05):
    """``count`` random joints with I(X;Y) above ``min_bits``."""
    from ibonset.probcore import mutual_information

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        j = random_joint(rng, nx, ny, spread=1.5)
        if mutual_information(j) > min_bits:
            out.append(j)
    return out


# -- random series encoders, one family per support case ---------------------
# q1 scales with ``scale`` and q2 with its square, so ``scale`` acts exactly
# like a rescaling of eps.


def _zero_sum_columns(rng, nz, nx, scale=1.0):
    a = scale * rng.standard_normal((nz, nx))
    return a - a.mean(axis=0, keepdims=True)


def series_all_in_support(rng, nx, scale=1.0):
    nz = int(rng.integers(2, 4))
    q0 = rng.dirichlet(np.ones(nz) * 5)
    return SeriesEncoder(q0, _zero_sum_columns(rng, nz, nx, scale), _zero_sum_columns(rng, nz, nx, scale**2))


def series_with_z1(rng, nx, scale=1.0):
    """Two letters in supp(q0) and one new letter entering at first order."""
    q0 = np.array([0.0, *rng.dirichlet([5.0, 5.0])])
    new = scale * rng.uniform(0.2, 1.0, nx)
    q1 = np.zeros((3, nx))
    q1[0] = new
    share = rng.uniform(0.2, 0.8, nx)
    q1[1] = -share * new
    q1[2] = -(1 - share) * new
    q1[1:] += _zero_sum_columns(rng, 2, nx, scale / 2)
    q2 = _zero_sum_columns(rng, 3, nx, scale**2 / 2)
    return SeriesEncoder(q0, q1, q2)


def series_with_z2(rng, nx, scale=1.0):
    """A new letter that only enters at second order."""
    q0 = np.array([0.0, *rng.dirichlet([5.0, 5.0])])
    q1 = np.zeros((3, nx))
    q1[1:] = _zero_sum_columns(rng, 2, nx, scale)
    q2 = np.zeros((3, nx))
    q2[0] = scale**2 * rng.uniform(0.2, 1.0, nx)
    q2[1:] = -q2[0] / 2 + _zero_sum_columns(rng, 2, nx, scale**2 / 2)
    return SeriesEncoder(q0, q1, q2)


FAMILIES = {"z0_only": series_all_in_support, "z1": series_with_z1, "z2": series_with_z2}


def _phi(d):
    """(1 + d) ln(1 + d) - d, by its Taylor series for small |d|."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    small = np.abs(d) < 1e-2
    ds = d[small]
    out[small] = sum((-1) ** n * ds ** (n + 2) / ((n + 1) * (n + 2)) for n in range(10))
    db = d[~small]
    out[~small] = (1 + db) * np.log1p(db) - db
    return out


def exact_info(se, joint, eps, side):
    """Exact I(Z;X) or I(Z;Y) in bits of the encoder q0 + eps q1 + eps^2 q2.

    Written as sum_z q(z) sum_w p(w) phi(q(z|w)/q(z) - 1) with the deviation
    built from the corrections directly, so every term is nonnegative and
    nothing cancels even when eps is tiny.
    """
    if side == "X":
        w, q1, q2 = joint.px, se.q1, se.q2
    else:
        p_x_given_y = (joint.p / joint.py[None, :]).T
        w, q1, q2 = joint.py, se.q1 @ p_x_given_y.T, se.q2 @ p_x_given_y.T
    q1z, q2z = se.q1 @ joint.px, se.q2 @ joint.px
    qz = se.q0 + eps * q1z + eps * eps * q2z
    used = qz > 0
    dev = eps * (q1 - q1z[:, None]) + eps * eps * (q2 - q2z[:, None])
    terms = qz[used][:, None] * w[None, :] * _phi(dev[used] / qz[used][:, None])
    return float(terms.sum() / np.log(2))


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
