"""Fixed-representation-space onset via chi-squared information.

The contraction coefficient for chi-squared information is the squared
maximal correlation, i.e. the square of the second singular value of the
divergence transition matrix B. Its inverse is the onset predicted when the
representation alphabet may not grow beyond the support of the uninformative
encoder; it is an upper bound on the true onset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .probcore import JointDistribution, divergence_transition_matrix, singular_values

NO_ONSET_SIGMA = 1e-12


@dataclass(frozen=True)
class Chi2Analysis:
    eta_chi2: float
    beta_c_hat: float  # math.inf when there is no onset
    sigma2: float
    singular_values: tuple[float, ...]

    @property
    def has_onset(self) -> bool:
        return math.isfinite(self.beta_c_hat)

    def to_json_dict(self) -> dict:
        return {
            "eta_chi2": self.eta_chi2,
            "beta_c_hat": self.beta_c_hat if self.has_onset else None,
            "singular_values": list(self.singular_values),
        }


def eta_chi2(joint: JointDistribution) -> Chi2Analysis:
    s = singular_values(divergence_transition_matrix(joint))
    sigma2 = float(s[1]) if s.size > 1 else 0.0
    if sigma2 < NO_ONSET_SIGMA:
        sigma2 = 0.0
    eta = sigma2 * sigma2
    return Chi2Analysis(
        eta_chi2=eta,
        beta_c_hat=1.0 / eta if sigma2 > 0 else math.inf,
        sigma2=sigma2,
        singular_values=tuple(float(v) for v in s),
    )


def chi2_information(joint: JointDistribution) -> float:
    """sum_{x,y} p(x)p(y) (p(x,y)/(p(x)p(y)) - 1)^2."""
    pxpy = np.outer(joint.px, joint.py)
    return float(np.sum(pxpy * (joint.p / pxpy - 1.0) ** 2))


def symmetry_check(joint: JointDistribution) -> tuple[float, float]:
    """eta_chi2 computed for X->Y and for Y->X."""
    return eta_chi2(joint).eta_chi2, eta_chi2(joint.transpose()).eta_chi2
