"""Second-order perturbation theory around the learning onset.

Given the onset solution (beta_c, r), the curvature

    kappa = sum_{x,x'} r(x) K(x,x') r(x') / (p(x) p(x'))

built from the Hessian kernel K fixes the scale of the first-order encoder
correction, and with it the leading growth of both informations and the
second-order loss just above beta_c. The series evaluators compute the
first two Taylor coefficients of I(Z;X), I(Z;Y) and the loss for an
arbitrary encoder path q0 + eps q1 + eps^2 q2 and serve as an independent
route to the same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HigherOrderRequiredError, InvalidDistributionError
from .onset import OnsetSolution, _kl_rows
from .probcore import LN2, JointDistribution

KAPPA_FLOOR = 1e-12
_ZERO = 1e-15


def hessian_kernel(joint: JointDistribution, beta_c: float) -> np.ndarray:
    """K(x,x') = d(x,x')p(x) + (b-1)p(x)p(x') - b sum_y p(y)p(x|y)p(x'|y)."""
    if beta_c <= 0:
        raise ValueError("beta_c must be positive")
    px = joint.px
    pxgy = joint.p_x_given_y
    k = np.diag(px) + (beta_c - 1.0) * np.outer(px, px) - beta_c * (pxgy * joint.py[None, :]) @ pxgy.T
    return 0.5 * (k + k.T)


def symmetrized_kernel(joint: JointDistribution, beta_c: float) -> np.ndarray:
    """K(x,x') / sqrt(p(x)p(x')), whose spectrum governs the fixed-support curvature."""
    s = np.sqrt(joint.px)
    return hessian_kernel(joint, beta_c) / np.outer(s, s)


def kappa(joint: JointDistribution, onset: OnsetSolution) -> float:
    """Quadratic form of K in the direction r/p.

    Evaluated on r/p - 1 (K annihilates constants), which keeps the value
    accurate when r is close to p.
    """
    v = onset.r_x / joint.px - 1.0
    return float(v @ hessian_kernel(joint, onset.beta_c) @ v)


@dataclass(frozen=True)
class PerturbationPrediction:
    kappa: float
    sum_q1_z1: float
    l2: float
    i1_zx: float
    i1_zy: float
    beta_c: float

    def to_json_dict(self) -> dict:
        return {
            "beta_c": self.beta_c,
            "kappa": self.kappa,
            "sum_q1_z1": self.sum_q1_z1,
            "l2_bits": self.l2,
            "i1_zx_bits": self.i1_zx,
            "i1_zy_bits": self.i1_zy,
        }


def predict(joint: JointDistribution, onset: OnsetSolution) -> PerturbationPrediction:
    """Leading corrections just above beta_c (informations in bits).

    Raises HigherOrderRequiredError when kappa <= 0, which includes every
    onset where the KL-ratio supremum is only approached as r -> p.
    """
    k = kappa(joint, onset)
    if k <= KAPPA_FLOOR:
        raise HigherOrderRequiredError(
            f"kappa = {k:.3g} is not positive; the second-order theory does not fix the scale",
            kappa=k,
        )
    klx = float(_kl_rows(onset.r_x, joint.px))
    kly = float(_kl_rows(onset.r_y, joint.py))
    return PerturbationPrediction(
        kappa=k,
        sum_q1_z1=kly / k,
        l2=-(kly * kly) / (2.0 * k) / LN2,
        i1_zx=klx * kly / k / LN2,
        i1_zy=kly * kly / k / LN2,
        beta_c=onset.beta_c,
    )


# -- series evaluators -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeriesEncoder:
    """Encoder path q0(z) + eps q1(z|x) + eps^2 q2(z|x), arrays of shape (|Z|, |X|)."""

    q0: np.ndarray
    q1: np.ndarray
    q2: np.ndarray

    def __post_init__(self):
        q0 = np.asarray(self.q0, dtype=float)
        q1 = np.asarray(self.q1, dtype=float)
        q2 = np.asarray(self.q2, dtype=float)
        if q0.ndim != 1 or q1.ndim != 2 or q1.shape != q2.shape or q1.shape[0] != q0.size:
            raise InvalidDistributionError("q0 must be (|Z|,) and q1, q2 must both be (|Z|, |X|)")
        if np.any(q0 < 0) or abs(q0.sum() - 1.0) > 1e-12:
            raise InvalidDistributionError("q0 must be a distribution over Z")
        for name, q in (("q1", q1), ("q2", q2)):
            if np.max(np.abs(q.sum(axis=0))) > 1e-12:
                raise InvalidDistributionError(f"columns of {name} must sum to zero")
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)

    def at(self, eps: float) -> np.ndarray:
        return self.q0[:, None] + eps * self.q1 + eps * eps * self.q2

    def partition(self, joint: JointDistribution) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Boolean masks (Z0, Z1, Z2) over representation letters.

        Raises InvalidDistributionError for letters outside supp(q0) that
        would make the encoder negative for small eps, or that carry
        second-order mass where the first-order correction vanishes.
        """
        px = joint.px
        q1z = self.q1 @ px
        q2z = self.q2 @ px
        z0 = self.q0 > _ZERO
        out = ~z0
        if np.any(self.q1[out] < -_ZERO):
            raise InvalidDistributionError("q1 is negative on a letter outside supp(q0)")
        z1 = out & (q1z > _ZERO)
        rest = out & ~z1
        if np.any(self.q2[rest] < -_ZERO):
            raise InvalidDistributionError("q2 is negative on a letter outside supp(q0) and supp(q1)")
        z2 = rest & (q2z > _ZERO)
        q1_zero = np.abs(self.q1) <= _ZERO
        if np.any((np.abs(self.q2) > _ZERO) & q1_zero & z1[:, None]):
            raise InvalidDistributionError("a Z1 letter has q2 mass where q1 vanishes")
        unused = rest & ~z2
        if np.any(np.abs(self.q2[unused]) > _ZERO):
            raise InvalidDistributionError("malformed support partition")
        return z0, z1, z2


def _xlog_ratio(a: np.ndarray, b: np.ndarray, weight: np.ndarray) -> float:
    """sum weight * a * ln(a/b) with 0 ln 0 = 0; ``b`` broadcasts over columns."""
    mask = np.abs(a) > _ZERO
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(mask, a * np.log(np.where(mask, a, 1.0) / b), 0.0)
    return float(np.sum(t * weight[None, :]))


def _series_terms(q0, q1, q2, w, masks) -> tuple[float, float]:
    """First and second coefficients (nats) for conditionals q_n(z|.) weighted by w."""
    z0, z1, z2 = masks
    q1z = q1 @ w
    q2z = q2 @ w
    i1 = _xlog_ratio(q1[z1], q1z[z1, None], w) if np.any(z1) else 0.0

    i2 = 0.0
    if np.any(z0):
        d = q1[z0] - q1z[z0, None]
        i2 += float(np.sum(w[None, :] * d * d / (2.0 * q0[z0, None])))
    if np.any(z1):
        a = q1[z1]
        mask = np.abs(a) > _ZERO
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(mask, np.log(np.where(mask, a, 1.0) / q1z[z1, None]), 0.0)
        i2 += float(np.sum(w[None, :] * q2[z1] * lg))
    if np.any(z2):
        i2 += _xlog_ratio(q2[z2], q2z[z2, None], w)
    return i1, i2


def info_series_eval(se: SeriesEncoder, joint: JointDistribution, side: str = "X") -> tuple[float, float]:
    """(I1, I2) in bits for I(Z;X) (``side="X"``) or I(Z;Y) (``side="Y"``)."""
    masks = se.partition(joint)
    if side.upper() == "X":
        i1, i2 = _series_terms(se.q0, se.q1, se.q2, joint.px, masks)
    elif side.upper() == "Y":
        pxgy = joint.p_x_given_y
        i1, i2 = _series_terms(se.q0, se.q1 @ pxgy, se.q2 @ pxgy, joint.py, masks)
    else:
        raise ValueError("side must be 'X' or 'Y'")
    return i1 / LN2, i2 / LN2


def loss_series_eval(se: SeriesEncoder, joint: JointDistribution, beta_c: float) -> tuple[float, float]:
    """(L1, L2) in bits: L1 = I1x - b I1y and L2 = I2x - b I2y - I1y."""
    i1x, i2x = info_series_eval(se, joint, "X")
    i1y, i2y = info_series_eval(se, joint, "Y")
    return i1x - beta_c * i1y, i2x - beta_c * i2y - i1y


def optimal_series(joint: JointDistribution, onset: OnsetSolution, prediction: PerturbationPrediction) -> SeriesEncoder:
    """Two-letter optimal path: z0 holds all mass at eps=0, z1 grows along r(x)/p(x).

    q1(z1|x) = s r(x)/p(x) with s = sum_{Z1} q1(z) from the prediction, and
    q1(z0|x) = -q1(z1|x) (stationary on Z0 by the normalization constraint).
    """
    nx = joint.shape[0]
    v = prediction.sum_q1_z1 * onset.r_x / joint.px
    q0 = np.array([1.0, 0.0])
    q1 = np.vstack([-v, v])
    return SeriesEncoder(q0, q1, np.zeros((2, nx)))


def stationarity_residual(se: SeriesEncoder, joint: JointDistribution, beta_c: float) -> float:
    """Max over Z1 of |ln(q1(z|x)/q1(z)) - beta_c sum_y p(y|x) ln(q1(z|y)/q1(z))|."""
    _, z1, _ = se.partition(joint)
    q1 = se.q1[z1]
    q1z = q1 @ joint.px
    q1y = q1 @ joint.p_x_given_y
    lhs = np.log(q1 / q1z[:, None])
    rhs = beta_c * np.log(q1y / q1z[:, None]) @ joint.p_y_given_x.T
    return float(np.max(np.abs(lhs - rhs)))
