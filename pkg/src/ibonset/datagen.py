"""Synthetic joint distributions for the onset experiments.

Three families:

* ``fig1_joint`` - a fixed 8x8 categorical joint (committed data file).
* ``binary_classification_joint`` - binary Y with equal priors and X drawn
  from a Gaussian, exponential or Poisson law depending on Y.
* ``noisy_function_joint`` - X uniform on (-1, 1), Y = f(X) + N(0, sigma^2).

Continuous conditionals are discretized by bin mass (CDF differences), so
every joint is exactly normalized and deterministic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .probcore import JointDistribution

MIN_COVERAGE = 1.0 - 1e-6
GAUSS_ENVELOPE = 6.5  # sigmas; two-sided tail ~8e-11
EXP_TAIL = 1e-10
POISSON_TAIL = 1e-12

FIG1_SEED = 20210
FIG1_SIZE = 8


@dataclass(frozen=True)
class BinaryClassSpec:
    """Class-conditional laws for a balanced binary target.

    ``class1``/``class2`` hold the family parameters: ``(mu, sigma)`` for
    gaussian, ``(rate,)`` for exponential and ``(mean,)`` for poisson.
    ``n_bins`` and ``range`` are ignored for poisson (integer support).
    """

    family: str
    class1: tuple[float, ...]
    class2: tuple[float, ...]
    n_bins: int = 256
    range: tuple[float, float] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryClassSpec":
        d = dict(d)
        d["class1"] = tuple(d["class1"])
        d["class2"] = tuple(d["class2"])
        if d.get("range") is not None:
            d["range"] = tuple(d["range"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_coverage(mass: np.ndarray, what: str) -> None:
    lo = float(np.min(mass))
    if lo < MIN_COVERAGE:
        raise ValueError(f"grid covers only {lo:.9f} of the {what} mass (need >= {MIN_COVERAGE})")


def _gaussian_conditionals(spec: BinaryClassSpec):
    params = [spec.class1, spec.class2]
    for mu, sd in params:
        if sd <= 0:
            raise ValueError("gaussian sigma must be positive")
    if spec.range is None:
        lo = min(mu - GAUSS_ENVELOPE * sd for mu, sd in params)
        hi = max(mu + GAUSS_ENVELOPE * sd for mu, sd in params)
    else:
        lo, hi = spec.range
    edges = np.linspace(lo, hi, spec.n_bins + 1)
    cond = np.array([np.diff(ndtr((edges - mu) / sd)) for mu, sd in params])
    return edges, cond


def _exponential_conditionals(spec: BinaryClassSpec):
    rates = [spec.class1[0], spec.class2[0]]
    if min(rates) <= 0:
        raise ValueError("exponential rates must be positive")
    if spec.range is None:
        lo, hi = 0.0, max(-np.log(EXP_TAIL) / lam for lam in rates)
    else:
        lo, hi = spec.range
    edges = np.linspace(lo, hi, spec.n_bins + 1)
    cond = np.array([np.diff(-np.expm1(-lam * np.maximum(edges, 0.0))) for lam in rates])
    return edges, cond


def _poisson_conditionals(spec: BinaryClassSpec):
    means = [spec.class1[0], spec.class2[0]]
    if min(means) <= 0:
        raise ValueError("poisson means must be positive")
    top = int(max(stats.poisson.isf(POISSON_TAIL, lam) for lam in means)) + 1
    k = np.arange(top + 1)
    cond = np.array([stats.poisson.pmf(k, lam) for lam in means])
    edges = np.concatenate([k - 0.5, [top + 0.5]])
    return edges, cond


_FAMILIES: dict[str, Callable] = {
    "gaussian": _gaussian_conditionals,
    "exponential": _exponential_conditionals,
    "poisson": _poisson_conditionals,
}


def binary_classification_joint(spec: BinaryClassSpec) -> JointDistribution:
    try:
        build = _FAMILIES[spec.family]
    except KeyError:
        raise ValueError(f"unknown family {spec.family!r}; expected one of {sorted(_FAMILIES)}") from None
    edges, cond = build(spec)
    covered = cond.sum(axis=1)
    _check_coverage(covered, f"{spec.family} class")
    cond = cond / covered[:, None]
    p = 0.5 * cond.T
    centers = 0.5 * (edges[1:] + edges[:-1])
    grid = {
        "x_centers": centers.tolist(),
        "x_widths": np.diff(edges).tolist(),
        "covered_mass": covered.tolist(),
    }
    labels = [repr(float(c)) for c in centers]
    return JointDistribution.from_array(p, x_labels=labels, y_labels=["y1", "y2"], grid=grid, normalize=True)


# -- noisy functional relationships -----------------------------------------

FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    # f(x) = x
    "linear": lambda x: x,
    # f(x) = x^3, flat in the middle and steep at the ends
    "cubic": lambda x: x**3,
    # f(x) = tanh(5(x - 0.3)), off-center steep sigmoid
    "step": lambda x: np.tanh(5.0 * (x - 0.3)),
    # f(x) = 2 (e^{2x} - e^{-2}) / (e^2 - e^{-2}) - 1, convex through (-1,-1) and (1,1)
    "exp": lambda x: 2.0 * (np.exp(2.0 * x) - np.exp(-2.0)) / (np.exp(2.0) - np.exp(-2.0)) - 1.0,
    # f(x) = 2x^2 - 1, non-monotone
    "quadratic": lambda x: 2.0 * x * x - 1.0,
}
MONOTONE_FUNCTIONS = ("linear", "cubic", "step", "exp")


@dataclass(frozen=True)
class NoisyFunctionSpec:
    function: str
    sigma: float
    n_x_bins: int = 32
    n_y_bins: int = 256
    y_range: tuple[float, float] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "NoisyFunctionSpec":
        d = dict(d)
        if d.get("y_range") is not None:
            d["y_range"] = tuple(d["y_range"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def noisy_function_joint(spec: NoisyFunctionSpec) -> JointDistribution:
    """X uniform over ``n_x_bins`` cells of (-1, 1); Y binned around f(cell center)."""
    if spec.sigma <= 0:
        raise ValueError("sigma must be positive")
    try:
        f = FUNCTIONS[spec.function]
    except KeyError:
        raise ValueError(f"unknown function {spec.function!r}; expected one of {sorted(FUNCTIONS)}") from None
    if spec.n_x_bins < 2 or spec.n_y_bins < 2:
        raise ValueError("grids need at least two bins per axis")
    x_edges = np.linspace(-1.0, 1.0, spec.n_x_bins + 1)
    xc = 0.5 * (x_edges[1:] + x_edges[:-1])
    fx = f(xc)
    if spec.y_range is None:
        lo = fx.min() - GAUSS_ENVELOPE * spec.sigma
        hi = fx.max() + GAUSS_ENVELOPE * spec.sigma
    else:
        lo, hi = spec.y_range
    y_edges = np.linspace(lo, hi, spec.n_y_bins + 1)
    cond = np.diff(ndtr((y_edges[None, :] - fx[:, None]) / spec.sigma), axis=1)
    covered = cond.sum(axis=1)
    _check_coverage(covered, "noise")
    cond = cond / covered[:, None]
    p = cond / spec.n_x_bins
    yc = 0.5 * (y_edges[1:] + y_edges[:-1])
    grid = {
        "x_centers": xc.tolist(),
        "x_widths": np.diff(x_edges).tolist(),
        "y_centers": yc.tolist(),
        "y_widths": np.diff(y_edges).tolist(),
    }
    return JointDistribution.from_array(p, grid=grid, normalize=True)


# -- fixed small categorical joint ------------------------------------------


def make_fig1_joint(seed: int = FIG1_SEED, size: int = FIG1_SIZE, spread: float = 1.5) -> JointDistribution:
    """Log-normal weights, normalized. Used once to produce the committed data file."""
    rng = np.random.default_rng(seed)
    w = np.exp(spread * rng.standard_normal((size, size)))
    return JointDistribution.from_array(w, normalize=True)


def fig1_joint() -> JointDistribution:
    """The committed 8x8 stand-in joint (``data/fig1_joint.json``)."""
    text = resources.files("ibonset").joinpath("data/fig1_joint.json").read_text()
    return JointDistribution.from_json(text)


# -- sweep presets --------------------------------------------------------------

FIG2_SWEEPS: dict[str, dict] = {
    "gaussian": {"param": "mu", "values": np.linspace(0.2, 3.0, 8).tolist(), "fixed": {"sigma": 2.0}},
    "exponential": {"param": "rate", "values": np.geomspace(1.25, 10.0, 8).tolist(), "fixed": {}},
    "poisson": {"param": "lambda2", "values": np.linspace(2.0, 9.0, 8).tolist(), "fixed": {"lambda1": 1.0}},
}

FIG3_SIGMAS = np.geomspace(0.05, 1.0, 8).tolist()


def fig2_spec(family: str, value: float, fixed: dict | None = None, n_bins: int = 256) -> BinaryClassSpec:
    """Sweep-point spec: class 1 is the reference law, class 2 carries ``value``."""
    if family not in FIG2_SWEEPS:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FIG2_SWEEPS)}")
    fixed = {**FIG2_SWEEPS[family]["fixed"], **(fixed or {})}
    if family == "gaussian":
        return BinaryClassSpec("gaussian", (0.0, 1.0), (float(value), float(fixed.get("sigma", 2.0))), n_bins)
    if family == "exponential":
        return BinaryClassSpec("exponential", (1.0,), (float(value),), n_bins)
    return BinaryClassSpec("poisson", (float(fixed.get("lambda1", 1.0)),), (float(value),))


def save_spec(spec, path) -> None:
    with open(path, "w") as fh:
        json.dump({"kind": type(spec).__name__, **spec.to_dict()}, fh, indent=2)


def load_spec(path):
    with open(path) as fh:
        d = json.load(fh)
    kind = d.pop("kind", None)
    if kind == "NoisyFunctionSpec" or "function" in d:
        return NoisyFunctionSpec.from_dict(d)
    return BinaryClassSpec.from_dict(d)
