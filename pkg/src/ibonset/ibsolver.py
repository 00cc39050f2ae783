"""Exact discrete information bottleneck solver and frontier sweeps.

The update is the classic self-consistent iteration

    q(z)     <- sum_x q(z|x) p(x)
    q(y|z)   <- sum_x q(z|x) p(x,y) / q(z)
    q(z|x)   <- q(z) exp(-beta KL[p(y|x) || q(y|z)])
    q(z|x)   <- q(z|x) / sum_z' q(z'|x)

run until the sup-norm change of q(z|x) drops below ``tol``. Near the
onset the iteration slows down critically; warm starts (``frontier_sweep``)
and a generous ``max_iter`` are the remedy.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .probcore import LN2, Encoder, JointDistribution, encoder_informations_nats

DEAD_CLUSTER = 1e-14


@dataclass(frozen=True, eq=False)
class IBSolution:
    encoder: Encoder
    beta: float
    i_zx: float
    i_zy: float
    loss: float
    iterations: int
    converged: bool
    loss_history: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class FrontierPoint:
    beta: float
    i_zx: float
    i_zy: float
    loss: float
    converged: bool = True


class _IBProblem:
    """Precomputed tables for repeated updates on one joint."""

    def __init__(self, joint: JointDistribution):
        self.joint = joint
        self.px = joint.px
        self.pxy = joint.p
        self.pygx = joint.p_y_given_x
        pos = self.pygx > 0
        self.support = pos.astype(float)
        with np.errstate(divide="ignore"):
            self.neg_h = np.sum(np.where(pos, self.pygx * np.log(np.where(pos, self.pygx, 1.0)), 0.0), axis=1)

    def step(self, q: np.ndarray, beta: float) -> np.ndarray:
        qz = q @ self.px
        alive = qz > DEAD_CLUSTER
        qa = q[alive]
        qyz = (qa @ self.pxy) / qz[alive, None]
        zero = qyz <= 0
        with np.errstate(divide="ignore"):
            log_qyz = np.where(zero, 0.0, np.log(np.where(zero, 1.0, qyz)))
        # KL[p(y|x)||q(y|z)] as a (z, x) array; inf where supp p(y|x) is not covered
        kl = self.neg_h[None, :] - log_qyz @ self.pygx.T
        if np.any(zero):
            kl = np.where(zero.astype(float) @ self.support.T > 0, np.inf, kl)
        logq = np.log(qz[alive])[:, None] - beta * kl
        m = logq.max(axis=0, keepdims=True)
        w = np.exp(logq - m)
        out = np.zeros_like(q)
        out[alive] = w / w.sum(axis=0, keepdims=True)
        return out

    def loss_nats(self, q: np.ndarray, beta: float) -> tuple[float, float, float]:
        izx, izy = encoder_informations_nats(q, self.joint)
        return izx, izy, izx - beta * izy


def random_encoder(nz: int, nx: int, rng: np.random.Generator) -> np.ndarray:
    q = rng.uniform(0.0, 1.0, size=(nz, nx))
    return q / q.sum(axis=0, keepdims=True)


def _iterate(problem: _IBProblem, q: np.ndarray, beta: float, tol: float, max_iter: int, record: bool):
    history = []
    converged = False
    it = 0
    if record:
        history.append(problem.loss_nats(q, beta)[2] / LN2)
    for it in range(1, max_iter + 1):
        q_new = problem.step(q, beta)
        delta = np.max(np.abs(q_new - q))
        q = q_new
        if record:
            history.append(problem.loss_nats(q, beta)[2] / LN2)
        if delta < tol:
            converged = True
            break
    return q, it, converged, history


def _solution(problem, q, beta, it, converged, history) -> IBSolution:
    izx, izy, _ = problem.loss_nats(q, beta)
    # rounding can leave informations a few ulps below zero
    izx, izy = max(izx, 0.0) / LN2, max(izy, 0.0) / LN2
    # exact encoder columns may drift from 1 by a few ulps; renormalize for the Encoder check
    q = q / q.sum(axis=0, keepdims=True)
    return IBSolution(
        encoder=Encoder(q),
        beta=beta,
        i_zx=izx,
        i_zy=izy,
        loss=izx - beta * izy,
        iterations=it,
        converged=converged,
        loss_history=tuple(history),
    )


def _check_args(joint, beta, z_cardinality, tol):
    if beta < 0:
        raise ValueError(f"beta must be nonnegative (got {beta})")
    if tol <= 0:
        raise ValueError("tol must be positive")
    nx = joint.shape[0]
    nz = nx if z_cardinality is None else int(z_cardinality)
    if nz < 2:
        raise ValueError("z_cardinality must be at least 2")
    if nz > nx:
        warnings.warn(
            f"z_cardinality={nz} exceeds |X|={nx}; |Z|=|X| already suffices",
            stacklevel=3,
        )
    return nz


def solve_ib(
    joint: JointDistribution,
    beta: float,
    z_cardinality: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    seed: int | Sequence[int] = 0,
    init: np.ndarray | Encoder | None = None,
    record_loss: bool = False,
) -> IBSolution:
    """Run the IB iteration from one (seeded or given) starting encoder.

    ``init`` overrides the random initialization; its row count sets |Z|.
    Clusters whose mass q(z) falls below 1e-14 are frozen at zero.
    """
    if init is not None:
        q0 = np.array(init.q if isinstance(init, Encoder) else init, dtype=float)
        z_cardinality = q0.shape[0]
    nz = _check_args(joint, beta, z_cardinality, tol)
    if init is None:
        q0 = random_encoder(nz, joint.shape[0], np.random.default_rng(seed))
    problem = _IBProblem(joint)
    q, it, conv, hist = _iterate(problem, q0, float(beta), tol, max_iter, record_loss)
    return _solution(problem, q, float(beta), it, conv, hist)


def _restart_seed(seed, k: int):
    return seed if k == 0 else [int(seed), k]


def solve_ib_restarts(
    joint: JointDistribution,
    beta: float,
    z_cardinality: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    n_restarts: int = 8,
    seed: int = 0,
    inits: Sequence[np.ndarray] = (),
) -> IBSolution:
    """Best (minimum-loss) solution over ``n_restarts`` seeded starts.

    Restart 0 uses ``seed`` itself, so ``n_restarts=1`` reproduces
    :func:`solve_ib`. Encoders in ``inits`` are tried as extra starts.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be at least 1")
    best = None
    for k in range(n_restarts):
        sol = solve_ib(joint, beta, z_cardinality, tol, max_iter, seed=_restart_seed(seed, k))
        if best is None or sol.loss < best.loss:
            best = sol
    for q in inits:
        sol = solve_ib(joint, beta, tol=tol, max_iter=max_iter, init=q)
        if sol.loss < best.loss:
            best = sol
    return best


def frontier_sweep(
    joint: JointDistribution,
    beta_grid: Iterable[float],
    z_cardinality: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    seed: int = 0,
    n_restarts: int = 1,
    extra_init: Callable[[float], np.ndarray | None] | None = None,
) -> list[FrontierPoint]:
    """Trace the IB frontier along an increasing beta grid.

    Each beta is solved from ``n_restarts`` fresh random encoders and
    warm-started from the previous encoder; the lowest loss is kept. Just
    above the onset random starts can collapse onto the uninformative
    solution, so a few restarts are worthwhile there. ``extra_init(beta)``
    may supply one more starting encoder per grid point (for instance the
    second-order series encoder), or None.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be at least 1")
    betas = sorted(float(b) for b in beta_grid)
    points = []
    prev = None
    for k, beta in enumerate(betas):
        sol = None
        for m in range(n_restarts):
            s = _restart_seed(seed, k) if m == 0 else [int(seed), k, m]
            cand = solve_ib(joint, beta, z_cardinality, tol, max_iter, seed=s)
            if sol is None or cand.loss < sol.loss:
                sol = cand
        if prev is not None:
            warm = solve_ib(joint, beta, tol=tol, max_iter=max_iter, init=prev.encoder)
            if warm.loss <= sol.loss:
                sol = warm
        q = extra_init(beta) if extra_init is not None else None
        if q is not None:
            seeded = solve_ib(joint, beta, tol=tol, max_iter=max_iter, init=q)
            if seeded.loss < sol.loss:
                sol = seeded
        prev = sol
        points.append(FrontierPoint(beta, sol.i_zx, sol.i_zy, sol.loss, sol.converged))
    return points


def frontier_csv(points: Sequence[FrontierPoint], metadata: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in metadata:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "i_zx_bits", "i_zy_bits", "loss_bits", "converged"])
    for pt in sorted(points, key=lambda p: p.beta):
        w.writerow([repr(pt.beta), repr(pt.i_zx), repr(pt.i_zy), repr(pt.loss), int(pt.converged)])
    return buf.getvalue()
