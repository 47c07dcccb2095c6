"""Design-space, design and information-matrix primitives."""

from __future__ import annotations

import math
from decimal import Decimal
from functools import cached_property

import numpy as np
import scipy.linalg as la

WEIGHT_TOL = 1e-12
PIVOT_FLOOR = 1e-300
PSD_TOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an information matrix is needed in inverted form but is singular."""


def _step_decimals(step: float) -> int:
    exponent = Decimal(repr(float(step))).normalize().as_tuple().exponent
    return max(0, -int(exponent))


class FactorGrid:
    """Cartesian product of finite, sorted factor level sets.

    The grid is never enumerated. Points are addressed either by their
    coordinates or by an integer array of level indices (one column per
    factor); most of the heavy lifting in the package uses indices.
    """

    def __init__(self, levels):
        levels = [np.asarray(lv, dtype=float).ravel() for lv in levels]
        if not levels:
            raise ValueError("a grid needs at least one factor")
        for i, lv in enumerate(levels):
            if lv.size == 0:
                raise ValueError(f"factor {i + 1} has no levels")
            if np.any(np.diff(lv) <= 0):
                raise ValueError(f"levels of factor {i + 1} must be strictly increasing")
            if not np.all(np.isfinite(lv)):
                raise ValueError(f"levels of factor {i + 1} must be finite")
            lv.setflags(write=False)
        self.levels = tuple(levels)

    @classmethod
    def from_ranges(cls, specs):
        """Build a grid from per-factor specs.

        Each spec is either ``(lo, hi, step)`` or an explicit sequence of levels
        wrapped in a list/array (anything that is not a 3-tuple).
        """
        levels = []
        for spec in specs:
            if isinstance(spec, tuple) and len(spec) == 3:
                levels.append(range_levels(*spec))
            else:
                levels.append(np.sort(np.asarray(spec, dtype=float)))
        return cls(levels)

    @property
    def k(self) -> int:
        return len(self.levels)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([lv.size for lv in self.levels], dtype=np.int64)

    @property
    def size(self) -> int:
        """Number of grid points as an exact Python integer."""
        return math.prod(int(c) for c in self.counts)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([lv[0] for lv in self.levels])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([lv[-1] for lv in self.levels])

    @cached_property
    def span(self) -> np.ndarray:
        """Per-factor range; factors with a single level get span 1."""
        s = self.upper - self.lower
        s[s == 0] = 1.0
        return s

    def coords(self, idx) -> np.ndarray:
        """Map an ``(n, k)`` array of level indices to coordinates."""
        idx = np.asarray(idx)
        out = np.empty(idx.shape, dtype=float)
        for i, lv in enumerate(self.levels):
            out[..., i] = lv[idx[..., i]]
        return out

    def indices(self, points) -> np.ndarray:
        """Inverse of :meth:`coords`; raises ``ValueError`` for off-grid points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.k:
            raise ValueError(f"points have {pts.shape[-1]} coordinates, grid has {self.k} factors")
        idx = np.empty(pts.shape, dtype=np.int64)
        for i, lv in enumerate(self.levels):
            j = np.clip(np.searchsorted(lv, pts[:, i]), 0, lv.size - 1)
            bad = lv[j] != pts[:, i]
            if np.any(bad):
                row = int(np.flatnonzero(bad)[0])
                raise ValueError(
                    f"point {pts[row].tolist()} is off-grid: {pts[row, i]!r} "
                    f"is not a level of factor {i + 1}"
                )
            idx[:, i] = j
        return idx

    def contains(self, point) -> bool:
        try:
            self.indices(point)
        except ValueError:
            return False
        return True

    def random_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform random grid points, drawn factor by factor."""
        return np.column_stack([rng.integers(0, c, size=n) for c in self.counts]).astype(np.int64)

    def __repr__(self):
        dims = " x ".join(str(int(c)) for c in self.counts)
        return f"FactorGrid({dims})"


def range_levels(lo: float, hi: float, step: float) -> np.ndarray:
    """Levels ``lo, lo + step, ..., hi`` rounded to the step's decimal precision."""
    if step <= 0 or hi < lo:
        raise ValueError(f"bad range spec ({lo}, {hi}, {step})")
    n = int(round((hi - lo) / step)) + 1
    dec = max(_step_decimals(step), _step_decimals(lo))
    lv = np.round(lo + step * np.arange(n), dec)
    lv[-1] = hi
    return lv


class Design:
    """Approximate design: distinct support points with positive weights summing to one."""

    def __init__(self, points, weights):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ValueError("number of points and weights differ")
        if w.size == 0:
            raise ValueError("a design needs at least one support point")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("design weights must be finite and strictly positive")
        total = w.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"design weights sum to {total}, expected 1")
        w = w / total
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("design points must be pairwise distinct")
        pts.setflags(write=False)
        w.setflags(write=False)
        self.points = pts
        self.weights = w

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def k(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"Design(s={self.size}, k={self.k})"


class ExactDesign:
    def __init__(self, points, counts):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.counts = np.asarray(counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ValueError("trial counts must be nonnegative")

    @property
    def N(self) -> int:
        return int(self.counts.sum())


class InfoMatrix:
    """Symmetric nonnegative definite ``m x m`` matrix with cached factorization.

    The instance is treated as immutable; caches are filled lazily.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("information matrix must be square")
        scale = max(np.abs(a).max(), 1e-300)
        if np.abs(a - a.T).max() > 1e-12 * scale:
            raise ValueError("information matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.entries = a

    @classmethod
    def from_regressors(cls, F, weights) -> "InfoMatrix":
        F = np.asarray(F, dtype=float)
        w = np.asarray(weights, dtype=float)
        a = F.T @ (w[:, None] * F)
        return cls(0.5 * (a + a.T))

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def cholesky(self):
        """Lower Cholesky factor, or ``None`` when the matrix is numerically singular."""
        try:
            L = la.cholesky(self.entries, lower=True, check_finite=False)
        except la.LinAlgError:
            return None
        if np.min(np.diag(L)) < math.sqrt(PIVOT_FLOOR) or not np.all(np.isfinite(L)):
            return None
        return L

    @cached_property
    def log_det(self) -> float:
        L = self.cholesky
        if L is not None:
            return 2.0 * float(np.sum(np.log(np.diag(L))))
        eig = np.linalg.eigvalsh(self.entries)
        norm = max(np.abs(eig).max(), 1e-300)
        if eig.min() < -PSD_TOL * norm:
            raise ValueError(f"matrix is indefinite (min eigenvalue {eig.min():.3e})")
        eig = np.clip(eig, 0.0, None)
        if eig.min() <= PIVOT_FLOOR:
            return -math.inf
        return float(np.sum(np.log(eig)))

    @property
    def singular(self) -> bool:
        return self.log_det == -math.inf

    @cached_property
    def inverse(self) -> np.ndarray:
        L = self.cholesky
        if L is None:
            raise SingularMatrixError("information matrix is singular")
        inv = la.cho_solve((L, True), np.eye(self.m), check_finite=False)
        return 0.5 * (inv + inv.T)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _as_info(M) -> InfoMatrix:
    return M if isinstance(M, InfoMatrix) else InfoMatrix(M)


def information_matrix(design: Design, model) -> InfoMatrix:
    """Normalized information matrix ``sum_x w(x) f(x) f(x)^T``."""
    F = model.regressors(design.points)
    if F.shape != (design.size, model.m):
        raise ValueError(f"model returned regressors of shape {F.shape}, expected ({design.size}, {model.m})")
    return InfoMatrix.from_regressors(F, design.weights)


def d_criterion(M) -> float:
    """D-criterion ``det(M)**(1/m)``; zero for singular matrices."""
    M = _as_info(M)
    ld = M.log_det
    if ld == -math.inf:
        return 0.0
    return math.exp(ld / M.m)


def log_d_criterion(M) -> float:
    M = _as_info(M)
    return M.log_det / M.m


def variance(F, Minv) -> np.ndarray:
    """Row-wise quadratic forms ``f^T Minv f`` for a regressor matrix ``F``."""
    F = np.asarray(F, dtype=float)
    return np.einsum("ij,ij->i", F @ Minv, F)


def variance_function(design: Design, model, x) -> np.ndarray | float:
    """Variance function of ``design`` evaluated at one point or an array of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Minv = information_matrix(design, model).inverse
    d = variance(model.regressors(np.atleast_2d(x)), Minv)
    return float(d[0]) if single else d


def efficiency_lower_bound(design: Design, model, candidate_max: float) -> float:
    """Lower bound ``m / max d`` on the D-efficiency of ``design``.

    ``candidate_max`` is the largest variance-function value the caller has
    found. Unless it is the maximum over the whole design space, the bound
    only holds relative to the probed points.
    """
    if not candidate_max > 0:
        raise ValueError("candidate_max must be positive")
    return model.m / candidate_max


def relative_efficiency(xi: Design, zeta: Design, model) -> float:
    ref = d_criterion(information_matrix(zeta, model))
    if ref <= 0:
        raise SingularMatrixError("reference design has a singular information matrix")
    return d_criterion(information_matrix(xi, model)) / ref


def round_to_exact(design: Design, N: int) -> ExactDesign:
    """Efficient apportionment of ``N`` trials to the support of ``design``."""
    w = design.weights
    s = w.size
    if N < s:
        raise ValueError(f"N = {N} is smaller than the support size {s}")
    n = np.ceil((N - s / 2.0) * w).astype(np.int64)
    while n.sum() < N:
        j = int(np.argmin(n / w))
        n[j] += 1
    while n.sum() > N:
        j = int(np.argmax((n - 1) / w))
        n[j] -= 1
    return ExactDesign(design.points, n)
