"""Learning onset of the information bottleneck.

Discrete IB solver, first- and second-order onset theory, chi-square and
Gaussian closed forms, and synthetic data generators.
"""

from .chi2 import Chi2Analysis, chi2_information, eta_chi2
from .errors import (
    ConvergenceError,
    HigherOrderRequiredError,
    IBOnsetError,
    InvalidDistributionError,
    NoOnsetError,
)
from .gaussian import GaussianJoint, discretize_gaussian, gaussian_onset
from .ibsolver import IBSolution, frontier_sweep, solve_ib, solve_ib_restarts
from .onset import OnsetSolution, eta_kl, eta_kl_bruteforce, solve_onset
from .perturb import PerturbationPrediction, SeriesEncoder, kappa, predict
from .probcore import (
    Encoder,
    JointDistribution,
    kl_divergence,
    mutual_information,
    entropy,
)

__version__ = "0.1.0"

__all__ = [
    "Chi2Analysis",
    "ConvergenceError",
    "Encoder",
    "GaussianJoint",
    "HigherOrderRequiredError",
    "IBOnsetError",
    "IBSolution",
    "InvalidDistributionError",
    "JointDistribution",
    "NoOnsetError",
    "OnsetSolution",
    "PerturbationPrediction",
    "SeriesEncoder",
    "chi2_information",
    "discretize_gaussian",
    "entropy",
    "eta_chi2",
    "eta_kl",
    "eta_kl_bruteforce",
    "frontier_sweep",
    "gaussian_onset",
    "kappa",
    "kl_divergence",
    "mutual_information",
    "predict",
    "solve_ib",
    "solve_ib_restarts",
    "solve_onset",
]
