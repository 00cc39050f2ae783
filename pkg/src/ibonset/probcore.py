"""Finite probability primitives.

Everything here works on small dense tables. Internally all logarithms are
natural; the public information-valued functions report bits.

Conventions
-----------
* A joint table ``p`` has shape ``(|X|, |Y|)``: rows are x-states.
* An encoder ``q`` has shape ``(|Z|, |X|)``: each column is q(.|x).
* ``p_y_given_x`` has shape ``(|X|, |Y|)`` (rows sum to one) and
  ``p_x_given_y`` has shape ``(|X|, |Y|)`` (columns sum to one).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import InvalidDistributionError

LN2 = math.log(2.0)
ZERO_PROB = 1e-15
SUM_TOL = 1e-12


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.array(p, dtype=float)
    p[np.abs(p) < ZERO_PROB] = 0.0
    return p


def _xlogy_ratio(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise a*ln(a/b) with 0*ln(0/b) = 0 and a>0, b=0 -> inf."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    a_b, b_b = np.broadcast_arrays(a, b)
    pos = a_b > 0
    bad = pos & (b_b <= 0)
    ok = pos & ~bad
    out[ok] = a_b[ok] * np.log(a_b[ok] / b_b[ok])
    out[bad] = np.inf
    return out


def as_distribution(v: Sequence[float], *, normalize: bool = False) -> np.ndarray:
    """Validate ``v`` as a probability vector and return a float copy."""
    v = _clean(v)
    if v.ndim != 1 or v.size == 0:
        raise InvalidDistributionError("a distribution must be a non-empty vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise InvalidDistributionError("distribution entries must be finite and nonnegative")
    s = v.sum()
    if normalize:
        if s <= 0:
            raise InvalidDistributionError("cannot normalize an all-zero vector")
        return v / s
    if abs(s - 1.0) > SUM_TOL:
        raise InvalidDistributionError(f"distribution sums to {s!r}, not 1")
    return v


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """A joint pmf p(x, y) with zero-marginal states removed.

    Build instances with :meth:`from_array` (or the IO helpers); the default
    constructor assumes its input is already validated.
    """

    p: np.ndarray
    x_labels: tuple[str, ...]
    y_labels: tuple[str, ...]
    grid: dict[str, Any] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_array(
        cls,
        p,
        x_labels: Sequence[Any] | None = None,
        y_labels: Sequence[Any] | None = None,
        grid: dict[str, Any] | None = None,
        normalize: bool = False,
    ) -> "JointDistribution":
        p = _clean(p)
        if p.ndim != 2 or p.size == 0:
            raise InvalidDistributionError("joint table must be a non-empty 2-d array")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidDistributionError("joint entries must be finite and nonnegative")
        s = p.sum()
        if normalize:
            if s <= 0:
                raise InvalidDistributionError("cannot normalize an all-zero table")
            p = p / s
        elif abs(s - 1.0) > SUM_TOL:
            raise InvalidDistributionError(f"joint table sums to {s!r}, not 1")

        nx, ny = p.shape
        xl = [str(v) for v in x_labels] if x_labels is not None else [str(i) for i in range(nx)]
        yl = [str(v) for v in y_labels] if y_labels is not None else [str(j) for j in range(ny)]
        if len(xl) != nx or len(yl) != ny:
            raise InvalidDistributionError("label count does not match table shape")

        rows = p.sum(axis=1) > 0
        cols = p.sum(axis=0) > 0
        if grid is not None:
            grid = dict(grid)
            for key, mask in (("x_centers", rows), ("x_widths", rows), ("y_centers", cols), ("y_widths", cols)):
                if key in grid:
                    grid[key] = [float(v) for v, keep in zip(grid[key], mask) if keep]
        p = np.ascontiguousarray(p[rows][:, cols])
        p.setflags(write=False)
        return cls(
            p=p,
            x_labels=tuple(v for v, keep in zip(xl, rows) if keep),
            y_labels=tuple(v for v, keep in zip(yl, cols) if keep),
            grid=grid,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    def _cached(self, key, fn):
        if key not in self._cache:
            val = fn()
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            self._cache[key] = val
        return self._cache[key]

    @property
    def px(self) -> np.ndarray:
        return self._cached("px", lambda: self.p.sum(axis=1))

    @property
    def py(self) -> np.ndarray:
        return self._cached("py", lambda: self.p.sum(axis=0))

    @property
    def p_y_given_x(self) -> np.ndarray:
        return self._cached("pygx", lambda: self.p / self.px[:, None])

    @property
    def p_x_given_y(self) -> np.ndarray:
        return self._cached("pxgy", lambda: self.p / self.py[None, :])

    def transpose(self) -> "JointDistribution":
        """The same joint with the roles of X and Y swapped."""
        grid = None
        if self.grid is not None:
            grid = {}
            for k, v in self.grid.items():
                if k.startswith("x_"):
                    grid["y_" + k[2:]] = v
                elif k.startswith("y_"):
                    grid["x_" + k[2:]] = v
                else:
                    grid[k] = v
        return JointDistribution.from_array(self.p.T, self.y_labels, self.x_labels, grid=grid)

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "p": self.p.tolist(),
            "x_labels": list(self.x_labels),
            "y_labels": list(self.y_labels),
        }
        if self.grid is not None:
            d["grid"] = self.grid
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "JointDistribution":
        try:
            d = json.loads(text)
            p = d["p"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InvalidDistributionError(f"malformed joint JSON: {exc}") from exc
        return cls.from_array(p, d.get("x_labels"), d.get("y_labels"), grid=d.get("grid"))

    def to_csv(self, metadata: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in metadata:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", *self.y_labels])
        for lab, row in zip(self.x_labels, self.p):
            w.writerow([lab, *(repr(float(v)) for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "JointDistribution":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        rows = list(csv.reader(lines))
        if len(rows) < 2:
            raise InvalidDistributionError("CSV needs a header row and at least one data row")
        header = rows[0]
        try:
            p = [[float(v) for v in r[1:]] for r in rows[1:]]
        except ValueError as exc:
            raise InvalidDistributionError(f"non-numeric CSV entry: {exc}") from exc
        if any(len(r) != len(header) - 1 for r in p):
            raise InvalidDistributionError("ragged CSV rows")
        return cls.from_array(p, [r[0] for r in rows[1:]], header[1:])

    def save(self, path: str | Path, metadata: Sequence[str] = ()) -> None:
        path = Path(path)
        if path.suffix.lower() == ".csv":
            path.write_text(self.to_csv(metadata))
        else:
            path.write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "JointDistribution":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".csv":
            return cls.from_csv(text)
        return cls.from_json(text)


@dataclass(frozen=True, eq=False)
class Encoder:
    """Column-stochastic map q(z|x), stored as a ``(|Z|, |X|)`` array."""

    q: np.ndarray

    def __post_init__(self):
        q = _clean(self.q)
        if q.ndim != 2:
            raise InvalidDistributionError("encoder must be a 2-d array")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise InvalidDistributionError("encoder entries must be finite and nonnegative")
        if np.max(np.abs(q.sum(axis=0) - 1.0)) > SUM_TOL:
            raise InvalidDistributionError("encoder columns must sum to 1")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, nz: int, nx: int) -> "Encoder":
        return cls(np.full((nz, nx), 1.0 / nz))

    @classmethod
    def identity(cls, nx: int) -> "Encoder":
        return cls(np.eye(nx))

    def qz(self, joint: JointDistribution) -> np.ndarray:
        return self.q @ joint.px

    def qz_given_y(self, joint: JointDistribution) -> np.ndarray:
        """q(z|y) as a ``(|Z|, |Y|)`` array."""
        return self.q @ joint.p_x_given_y


# -- conditionals and marginals -------------------------------------------


def marginals(joint: JointDistribution) -> tuple[np.ndarray, np.ndarray]:
    return joint.px.copy(), joint.py.copy()


def conditional_y_given_x(joint: JointDistribution) -> np.ndarray:
    """Rows are p(y|x)."""
    return joint.p_y_given_x.copy()


def conditional_x_given_y(joint: JointDistribution) -> np.ndarray:
    """Columns are p(x|y)."""
    return joint.p_x_given_y.copy()


# -- divergences and informations ------------------------------------------


def kl_nats(p, q) -> float:
    """KL(p||q) in nats; ``inf`` when p is not absolutely continuous w.r.t. q."""
    p = _clean(p)
    q = _clean(q)
    return float(np.sum(_xlogy_ratio(p, q)))


def kl_divergence(p, q) -> float:
    """KL(p||q) in bits.

    Returns ``math.inf`` (rather than raising) when supp(p) is not contained
    in supp(q).
    """
    return kl_nats(p, q) / LN2


def mi_nats_table(pab: np.ndarray) -> float:
    """Mutual information (nats) of an unnormalized-free joint table."""
    pab = _clean(pab)
    pa = pab.sum(axis=1, keepdims=True)
    pb = pab.sum(axis=0, keepdims=True)
    return float(np.sum(_xlogy_ratio(pab, pa * pb)))


def mutual_information(joint: JointDistribution) -> float:
    """I(X;Y) in bits."""
    return mi_nats_table(joint.p) / LN2


def entropy(p) -> float:
    """Shannon entropy in bits."""
    p = _clean(p)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)) / LN2)


def encoder_informations_nats(q: np.ndarray, joint: JointDistribution) -> tuple[float, float]:
    q = np.asarray(q, dtype=float)
    izx = mi_nats_table(q * joint.px[None, :])
    izy = mi_nats_table(q @ joint.p)
    return izx, izy


def encoder_informations(q, joint: JointDistribution) -> tuple[float, float]:
    """(I(Z;X), I(Z;Y)) in bits for encoder ``q`` (``Encoder`` or array)."""
    arr = q.q if isinstance(q, Encoder) else np.asarray(q, dtype=float)
    if arr.shape[1] != joint.shape[0]:
        raise InvalidDistributionError(
            f"encoder has {arr.shape[1]} input states but the joint has {joint.shape[0]}"
        )
    izx, izy = encoder_informations_nats(arr, joint)
    return izx / LN2, izy / LN2


# -- divergence transition matrix ------------------------------------------


def divergence_transition_matrix(joint: JointDistribution) -> np.ndarray:
    """B(x,y) = p(x,y)/sqrt(p(x)p(y)); zero-marginal states are already stripped."""
    return joint.p / np.sqrt(np.outer(joint.px, joint.py))


def singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values in descending order."""
    return np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)


def svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``a = u @ diag(s) @ vt`` with descending ``s``."""
    return np.linalg.svd(np.asarray(a, dtype=float), full_matrices=False)


def symmetric_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenpairs of a symmetric matrix (input is symmetrized first)."""
    a = np.asarray(a, dtype=float)
    return np.linalg.eigh(0.5 * (a + a.T))
