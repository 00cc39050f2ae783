"""Learning onset for jointly Gaussian (X, Y) with zero means.

With a Gaussian ansatz for r(x) whose covariance equals Sigma_X, the onset
condition reduces to the eigenproblem of Sigma_{X|Y} Sigma_X^{-1}:

    beta_c = 1 / (1 - lambda_min),   nu_X  ~  phi_min.

A bin-mass discretizer turns scalar Gaussians into finite joints so the
closed form can be checked against the discrete onset solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import NoOnsetError
from .probcore import JointDistribution


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    return m


def _check_pd(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(m).min() <= 0:
        raise ValueError(f"{name} must be positive definite")


def _inv_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v / np.sqrt(w)) @ v.T


def _sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True, eq=False)
class GaussianJoint:
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_xy: np.ndarray

    def __post_init__(self):
        sx = _as_matrix(self.sigma_x, "sigma_x")
        sy = _as_matrix(self.sigma_y, "sigma_y")
        sxy = np.asarray(self.sigma_xy, dtype=float).reshape(sx.shape[0], sy.shape[0])
        _check_pd(sx, "sigma_x")
        _check_pd(sy, "sigma_y")
        full = np.block([[sx, sxy], [sxy.T, sy]])
        if np.linalg.eigvalsh(0.5 * (full + full.T)).min() <= 0:
            raise ValueError("joint covariance must be positive definite")
        object.__setattr__(self, "sigma_x", sx)
        object.__setattr__(self, "sigma_y", sy)
        object.__setattr__(self, "sigma_xy", sxy)

    @classmethod
    def scalar(cls, rho: float, sx: float = 1.0, sy: float = 1.0) -> "GaussianJoint":
        return cls([[sx * sx]], [[sy * sy]], [[rho * sx * sy]])

    @property
    def d_x(self) -> int:
        return self.sigma_x.shape[0]

    @property
    def d_y(self) -> int:
        return self.sigma_y.shape[0]

    @property
    def sigma_yx(self) -> np.ndarray:
        return self.sigma_xy.T

    @property
    def sigma_y_given_x(self) -> np.ndarray:
        return self.sigma_y - self.sigma_yx @ np.linalg.solve(self.sigma_x, self.sigma_xy)

    @property
    def sigma_x_given_y(self) -> np.ndarray:
        return self.sigma_x - self.sigma_xy @ np.linalg.solve(self.sigma_y, self.sigma_yx)

    def mean_y_given_x(self, x) -> np.ndarray:
        """mu_{Y|x} = Sigma_YX Sigma_X^{-1} x for one x (d_X,) or a batch (n, d_X)."""
        x = np.asarray(x, dtype=float)
        a = self.sigma_yx @ np.linalg.inv(self.sigma_x)
        return x @ a.T

    def to_json(self) -> str:
        return json.dumps(
            {
                "sigma_x": self.sigma_x.tolist(),
                "sigma_y": self.sigma_y.tolist(),
                "sigma_xy": self.sigma_xy.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GaussianJoint":
        d = json.loads(text)
        return cls(d["sigma_x"], d["sigma_y"], d["sigma_xy"])


def gaussian_kl_conditional(g: GaussianJoint, x, reference) -> np.ndarray | float:
    """KL[p(y|x) || N(mean, cov)] in nats, for one x or a batch of rows.

    ``reference`` is a ``(mean, covariance)`` pair; the mean may be a vector
    or zero.
    """
    mean, cov = reference
    cov = _as_matrix(cov, "reference covariance")
    if cov.shape != (g.d_y, g.d_y):
        raise ValueError("reference covariance has the wrong dimension")
    _check_pd(cov, "reference covariance")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xb = np.atleast_2d(x).reshape(-1, g.d_x)
    mu = g.mean_y_given_x(xb)
    diff = mu - np.broadcast_to(np.asarray(mean, dtype=float).reshape(-1), (g.d_y,))
    cinv = np.linalg.inv(cov)
    syx = g.sigma_y_given_x
    quad = np.einsum("ni,ij,nj->n", diff, cinv, diff)
    const = np.trace(cinv @ syx) - g.d_y + np.linalg.slogdet(cov)[1] - np.linalg.slogdet(syx)[1]
    kl = 0.5 * (quad + const)
    return float(kl[0]) if single else kl


def gaussian_onset(g: GaussianJoint) -> tuple[float, np.ndarray]:
    """(beta_c, unit direction of the mean shift nu_X)."""
    if np.allclose(g.sigma_xy, 0.0, atol=1e-15):
        raise NoOnsetError("Sigma_XY = 0: X and Y are independent")
    s_half_inv = _inv_sqrt(g.sigma_x)
    sym = s_half_inv @ g.sigma_x_given_y @ s_half_inv
    w, v = np.linalg.eigh(0.5 * (sym + sym.T))
    lam = float(w[0])
    if lam >= 1.0 - 1e-15:
        raise NoOnsetError("smallest eigenvalue of Sigma_{X|Y} Sigma_X^{-1} is 1")
    phi = _sqrt(g.sigma_x) @ v[:, 0]
    phi = phi / np.linalg.norm(phi)
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    return 1.0 / (1.0 - lam), phi


def matching_residuals(g: GaussianJoint, beta_c: float, nu_x) -> tuple[float, float, float]:
    """Residual norms of the quadratic, linear and constant matching conditions.

    Uses the Lambda_X = Sigma_X branch, for which Lambda_Y = Sigma_Y and
    nu_Y = Sigma_YX Sigma_X^{-1} nu_X.
    """
    sx, sy = g.sigma_x, g.sigma_y
    lam_x, lam_y = sx, sy
    nu_x = np.asarray(nu_x, dtype=float).reshape(-1)
    sx_inv = np.linalg.inv(sx)
    nu_y = g.sigma_yx @ sx_inv @ nu_x
    lx_inv, ly_inv, sy_inv = np.linalg.inv(lam_x), np.linalg.inv(lam_y), np.linalg.inv(sy)

    quad_l = lx_inv - sx_inv
    quad_r = beta_c * sx_inv @ g.sigma_xy @ (ly_inv - sy_inv) @ g.sigma_yx @ sx_inv
    lin_l = lx_inv @ nu_x
    lin_r = beta_c * sx_inv @ g.sigma_xy @ ly_inv @ nu_y
    const_l = nu_x @ lx_inv @ nu_x
    const_r = np.linalg.slogdet(sx)[1] - np.linalg.slogdet(lam_x)[1] + beta_c * (
        nu_y @ ly_inv @ nu_y
        + np.trace((ly_inv - sy_inv) @ g.sigma_y_given_x)
        - (np.linalg.slogdet(sy)[1] - np.linalg.slogdet(lam_y)[1])
    )
    return (
        float(np.max(np.abs(quad_l - quad_r))),
        float(np.max(np.abs(lin_l - lin_r))),
        float(abs(const_l - const_r)),
    )


def gaussian_mi_bits(rho: float) -> float:
    return float(-0.5 * np.log2(1.0 - rho * rho))


# Gauss-Legendre nodes on [-1, 1] for the per-bin integrals
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _bin_masses(edges_x: np.ndarray, edges_y: np.ndarray, rho: float) -> np.ndarray:
    """P(X in bin i, Y in bin j) for standard bivariate normal with correlation rho.

    Integrates phi(x) [Phi((b - rho x)/s) - Phi((a - rho x)/s)] over each x bin
    with 24-point Gauss-Legendre quadrature.
    """
    s = np.sqrt(1.0 - rho * rho)
    lo, hi = edges_x[:-1], edges_x[1:]
    half = 0.5 * (hi - lo)
    xs = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_NODES[None, :]  # (nx, k)
    wx = half[:, None] * _GL_WEIGHTS[None, :] * np.exp(-0.5 * xs * xs) / np.sqrt(2.0 * np.pi)
    cdf = ndtr((edges_y[None, None, :] - rho * xs[:, :, None]) / s)  # (nx, k, ny+1)
    py_given = np.diff(cdf, axis=2)
    return np.einsum("ik,ikj->ij", wx, py_given)


def discretize_gaussian(g: GaussianJoint, n_bins: int = 128, truncation: float = 5.0) -> JointDistribution:
    """Bin-mass discretization of a scalar-scalar Gaussian joint on a regular grid."""
    if g.d_x != 1 or g.d_y != 1:
        raise ValueError("discretize_gaussian handles scalar X and Y only")
    if n_bins < 16:
        raise ValueError("n_bins must be at least 16")
    sx = float(np.sqrt(g.sigma_x[0, 0]))
    sy = float(np.sqrt(g.sigma_y[0, 0]))
    rho = float(g.sigma_xy[0, 0] / (sx * sy))
    if abs(rho) >= 1.0 - 1e-12:
        raise ValueError("degenerate correlation |rho| = 1")
    edges = np.linspace(-truncation, truncation, n_bins + 1)
    p = _bin_masses(edges, edges, rho)
    centers = 0.5 * (edges[1:] + edges[:-1])
    widths = np.diff(edges)
    grid = {
        "x_centers": (centers * sx).tolist(),
        "x_widths": (widths * sx).tolist(),
        "y_centers": (centers * sy).tolist(),
        "y_widths": (widths * sy).tolist(),
        "covered_mass": float(p.sum()),
    }
    return JointDistribution.from_array(p, grid=grid, normalize=True)
