"""First-order onset theory: the perturbative encoder r(x) and beta_c.

``solve_onset`` runs the fixed-point iteration

    r(x)  <- r(x) / sum r
    r(y)  <- sum_x p(y|x) r(x)
    beta  <- KL[r(x)||p(x)] / KL[r(y)||p(y)]
    r(x)  <- p(x) exp(-beta (KL[p(y|x)||r(y)] - KL[p(y|x)||p(y)]))

from many random starts at once. Nontrivial fixed points are stationary
points of the KL ratio; the supremum of that ratio can also be approached
only in the limit r -> p along the maximal-correlation direction, in which
case eta_KL equals eta_chi2. Both candidates are considered and the smaller
beta_c wins.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import chi2
from .errors import ConvergenceError, InvalidDistributionError, NoOnsetError
from .probcore import JointDistribution, as_distribution, mutual_information, svd, divergence_transition_matrix

MIN_MI_BITS = 1e-10
BETA_INIT_RANGE = (1.0, 1e6)
WARMUP_ITER = 100

_CONVERGED, _COLLAPSED, _UNRESOLVED = 0, 1, 2


@dataclass(frozen=True, eq=False)
class OnsetSolution:
    """Critical trade-off parameter and the perturbative encoder.

    ``attained`` is False when no nontrivial fixed point beats the r -> p
    limit; ``r_x``/``r_y`` are then the marginals themselves and
    ``direction`` holds the limiting perturbation direction (sums to zero).
    """

    beta_c: float
    r_x: np.ndarray
    r_y: np.ndarray
    eta_kl: float
    restarts_used: int
    converged: bool
    attained: bool = True
    direction: np.ndarray | None = None
    candidates: tuple[float, ...] = field(default=())

    def to_json_dict(self) -> dict:
        return {
            "beta_c": self.beta_c,
            "eta_kl": self.eta_kl,
            "r_x": self.r_x.tolist(),
            "r_y": self.r_y.tolist(),
            "converged": self.converged,
            "restarts_used": self.restarts_used,
            "attained": self.attained,
        }


def _log_normalize(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return a - (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))


def _kl_rows(f: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Row-wise KL(f_i||p) in nats, accurate when f_i is close to p.

    Uses sum(f ln(f/p) - f + p) so every summand is nonnegative. Requires
    p > 0 everywhere.
    """
    d = f - p
    u = d / p
    with np.errstate(divide="ignore", invalid="ignore"):
        # log1p keeps precision near f = p; plain log survives f << p
        lg = np.where(np.abs(u) < 0.5, np.log1p(u), np.log(f / p))
        t = f * lg - d
    if not np.all(f > 0):
        t = np.where(f > 0, t, p)
    return t.sum(axis=-1)


def _onset_map(joint, logr):
    """One application of the onset map to each row of normalized ``logr``.

    Returns the new (normalized) log r and the beta computed on the way.
    """
    r = np.exp(logr)
    ry = r @ joint.p_y_given_x
    klx = _kl_rows(r, joint.px)
    kly = _kl_rows(ry, joint.py)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(kly > 0, klx / kly, np.inf)
    s = (np.log(np.maximum(ry, 1e-300)) - np.log(joint.py)) @ joint.p_y_given_x.T
    with np.errstate(invalid="ignore"):
        new = _log_normalize(np.log(joint.px) + np.where(np.isfinite(b), b, 0.0)[:, None] * s)
    return new, b


def _alg2_batch(joint, logr, beta_prev, tol, detect_eps, max_iter, alpha):
    """Iterate the onset map on a batch of starting points (rows of ``logr``)."""
    px = joint.px
    n = logr.shape[0]
    status = np.full(n, _UNRESOLVED)
    iters = np.zeros(n, dtype=int)
    beta = beta_prev.copy()
    active = np.ones(n, dtype=bool)
    logr = _log_normalize(logr)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,)).copy()

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        r = np.exp(logr[idx])
        new, b = _onset_map(joint, logr[idx])
        a = alpha[idx]
        damped = a < 1.0
        if np.any(damped):
            mixed = (1.0 - a[damped, None]) * r[damped] + a[damped, None] * np.exp(new[damped])
            new[damped] = np.log(mixed / mixed.sum(axis=1, keepdims=True))
        r_new = np.exp(new)
        delta = np.maximum(np.max(np.abs(r_new - r), axis=1), np.abs(b - beta[idx]))
        logr[idx] = new
        beta[idx] = b
        iters[idx] += 1

        collapsed = np.abs(r_new - px).sum(axis=1) <= detect_eps
        done = np.isfinite(delta) & (delta < tol)
        # r = p exactly gives KL[r_y||p_y] = 0 and an infinite ratio
        stuck = ~np.isfinite(b)
        status[idx[collapsed | stuck]] = _COLLAPSED
        status[idx[done & ~collapsed & ~stuck]] = _CONVERGED
        active[idx[collapsed | done | stuck]] = False

    return logr, beta, status, iters


def _anderson_refine(joint, logr, tol, detect_eps, max_iter, memory=6):
    """Anderson-accelerated iteration of the onset map for a single start.

    Used on starts whose plain iteration converges too slowly. The result is
    accepted only if one plain step from it passes the usual convergence test.
    """
    x = _log_normalize(logr[None, :])[0]
    xs, gs = [], []
    beta_prev = np.inf
    for it in range(1, max_iter + 1):
        g, b = _onset_map(joint, x[None, :])
        g, b = g[0], float(b[0])
        if not np.isfinite(b):
            return x, b, _COLLAPSED, it
        step = np.max(np.abs(np.exp(g) - np.exp(x)))
        if max(step, abs(b - beta_prev)) < tol:
            return g, b, _CONVERGED, it
        if np.abs(np.exp(g) - joint.px).sum() <= detect_eps:
            return g, b, _COLLAPSED, it
        beta_prev = b
        xs.append(x)
        gs.append(g)
        if len(xs) > memory + 1:
            xs.pop(0)
            gs.pop(0)
        if len(xs) == 1:
            x = g
            continue
        f = np.array(gs) - np.array(xs)
        df = np.diff(f, axis=0).T
        dg = np.diff(np.array(gs), axis=0).T
        gamma, *_ = np.linalg.lstsq(df, f[-1], rcond=None)
        x_new = g - dg @ gamma
        if not np.all(np.isfinite(x_new)):
            xs, gs = [], []
            x_new = g
        x = _log_normalize(x_new[None, :])[0]
    return x, beta_prev, _UNRESOLVED, max_iter


def _limit_direction(joint: JointDistribution) -> np.ndarray:
    u, _, _ = svd(divergence_transition_matrix(joint))
    d = np.sqrt(joint.px) * u[:, 1]
    d = d - d.sum() * joint.px  # remove rounding drift from the constant direction
    return d / np.abs(d).sum()


def solve_onset(
    joint: JointDistribution,
    tol: float = 1e-11,
    detect_eps: float = 1e-4,
    max_restarts: int = 32,
    max_iter: int = 5000,
    seed: int = 0,
    damping: float = 1.0,
) -> OnsetSolution:
    """Locate the learning onset of ``joint``.

    All ``max_restarts`` random starts are iterated together. Starts that
    converge with ``||r - p||_1 > detect_eps`` are candidates; the smallest
    candidate beta_c is compared with the r -> p limit 1/eta_chi2 and the
    smaller one is returned. Starts still unresolved after a short plain
    warm-up are finished with Anderson acceleration of the same map (a
    point is accepted only when one plain step moves it by less than
    ``tol``), then with damped plain iteration if needed.
    """
    if tol <= 0 or detect_eps <= 0:
        raise ValueError("tol and detect_eps must be positive")
    if max_restarts < 1:
        raise ValueError("max_restarts must be at least 1")
    mi = mutual_information(joint)
    if mi <= MIN_MI_BITS:
        raise NoOnsetError(f"I(X;Y) = {mi:.3g} bits; no learning onset (beta_c is infinite)")
    chi = chi2.eta_chi2(joint)
    if not chi.has_onset:
        raise NoOnsetError("second singular value of B vanishes; no learning onset")
    beta_lim = chi.beta_c_hat

    rng = np.random.default_rng(seed)
    nx = joint.shape[0]
    logr0 = np.log(joint.px)[None, :] + rng.standard_normal((max_restarts, nx))
    beta0 = np.clip(1.0 + rng.exponential(1.0, size=max_restarts), *BETA_INIT_RANGE)

    logr, beta, status, iters = _alg2_batch(
        joint, logr0, beta0, tol, detect_eps, min(WARMUP_ITER, max_iter), damping
    )

    def best_candidate():
        ok = status == _CONVERGED
        return float(np.min(beta[ok])) if np.any(ok) else math.inf

    # plain iteration converges linearly and often slowly; finish the rest with
    # Anderson acceleration, then fall back to damped plain iteration
    pending = np.flatnonzero(status == _UNRESOLVED)
    for k in pending[np.argsort(beta[pending])]:
        lr, b, st, it = _anderson_refine(joint, logr[k], tol, detect_eps, max_iter)
        logr[k], beta[k], status[k] = lr, b, st
        iters[k] += it
    pending = np.flatnonzero((status == _UNRESOLVED) & (beta < min(best_candidate(), beta_lim)))
    if pending.size:
        lr, b, st, it = _alg2_batch(joint, logr[pending], beta[pending], tol, detect_eps, max_iter, 0.5)
        logr[pending], beta[pending], status[pending] = lr, b, st
        iters[pending] += it

    best = min(best_candidate(), beta_lim)
    stubborn = (status == _UNRESOLVED) & (beta < best * (1.0 - 1e-9))
    if np.any(stubborn):
        raise ConvergenceError(
            "onset iteration did not settle for some starts that improve on every converged value",
            diagnostics={
                "unresolved_beta": beta[stubborn].tolist(),
                "best_converged_beta": best_candidate(),
                "chi2_limit_beta": beta_lim,
                "iterations": iters[stubborn].tolist(),
            },
        )

    candidates = tuple(sorted(float(b) for b in beta[status == _CONVERGED]))
    conv = np.flatnonzero(status == _CONVERGED)
    if conv.size and beta[conv].min() <= beta_lim:
        k = conv[np.argmin(beta[conv])]
        r_x = np.exp(logr[k])
        r_x = r_x / r_x.sum()
        r_y = r_x @ joint.p_y_given_x
        bc = float(beta[k])
        return OnsetSolution(
            beta_c=bc,
            r_x=r_x,
            r_y=r_y,
            eta_kl=1.0 / bc,
            restarts_used=max_restarts,
            converged=True,
            attained=True,
            candidates=candidates,
        )

    return OnsetSolution(
        beta_c=beta_lim,
        r_x=joint.px.copy(),
        r_y=joint.py.copy(),
        eta_kl=1.0 / beta_lim,
        restarts_used=max_restarts,
        converged=True,
        attained=False,
        direction=_limit_direction(joint),
        candidates=candidates,
    )


def eta_kl(joint: JointDistribution, **solver_params) -> float:
    """Contraction coefficient eta_KL(X -> Y) = 1 / beta_c."""
    return solve_onset(joint, **solver_params).eta_kl


def fixed_point_residual(joint: JointDistribution, sol: OnsetSolution) -> float:
    """Sup-norm of ln r(x) - ln p(x) + beta_c (KL[p(y|x)||r(y)] - KL[p(y|x)||p(y)])."""
    pygx = joint.p_y_given_x
    s = (np.log(sol.r_y) - np.log(joint.py)) @ pygx.T
    res = np.log(sol.r_x) - np.log(joint.px) - sol.beta_c * s
    return float(np.max(np.abs(res)))


def kl_ratio(f, joint: JointDistribution) -> float:
    """KL[f_y||p_y] / KL[f_x||p_x] with f_y the image of f through p(y|x)."""
    f = as_distribution(f, normalize=False)
    if f.size != joint.shape[0]:
        raise InvalidDistributionError("f must be a distribution over the x-states")
    if np.abs(f - joint.px).sum() < 1e-15:
        raise ValueError("kl_ratio is undefined (0/0) at f = p_x")
    fy = f @ joint.p_y_given_x
    return float(_kl_rows(fy, joint.py) / _kl_rows(f, joint.px))


def _ratio_batch(F: np.ndarray, joint: JointDistribution) -> np.ndarray:
    klx = _kl_rows(F, joint.px)
    kly = _kl_rows(F @ joint.p_y_given_x, joint.py)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(klx > 1e-30, kly / klx, -np.inf)
    return out


def _simplex_lattice(n_states: int, resolution: int) -> np.ndarray:
    pts = []
    for bars in itertools.combinations(range(resolution + n_states - 1), n_states - 1):
        edges = (-1, *bars, resolution + n_states - 1)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(n_states)])
    return np.asarray(pts, dtype=float) / resolution


_DEFAULT_RESOLUTION = {2: 4000, 3: 240, 4: 48}


def eta_kl_bruteforce(
    joint: JointDistribution,
    resolution: int | None = None,
    n_refine: int = 8,
    min_step: float = 1e-7,
) -> float:
    """Grid-search lower bound on eta_KL for |X| <= 4.

    Evaluates the KL ratio on a regular simplex lattice, then runs a
    shrinking pattern search around the ``n_refine`` best lattice points.
    Never uses the onset fixed-point map.
    """
    nx = joint.shape[0]
    if nx > 4:
        raise ValueError(f"brute force is limited to |X| <= 4 (got {nx})")
    if nx == 1:
        return 0.0
    resolution = resolution or _DEFAULT_RESOLUTION[nx]
    lattice = _simplex_lattice(nx, resolution)
    vals = _ratio_batch(lattice, joint)
    order = np.argsort(vals)[::-1][:n_refine]
    best = float(vals[order[0]])

    dirs = np.zeros((nx - 1, nx))
    for i in range(nx - 1):
        dirs[i, i] = 1.0
        dirs[i, -1] = -1.0
    offsets = np.array(list(itertools.product(range(-2, 3), repeat=nx - 1)), dtype=float) @ dirs

    for start in order:
        center = lattice[start]
        cval = float(vals[start])
        h = 1.0 / resolution
        for _ in range(2000):
            if h < min_step:
                break
            cand = center + h * offsets
            cand = cand[np.all(cand >= 0, axis=1)]
            cand = cand / cand.sum(axis=1, keepdims=True)
            cv = _ratio_batch(cand, joint)
            k = int(np.argmax(cv))
            if cv[k] > cval:
                center, cval = cand[k], float(cv[k])
            else:
                h *= 0.5
        best = max(best, cval)
    return best
