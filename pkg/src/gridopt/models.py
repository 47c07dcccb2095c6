"""Regression models and the registry of benchmark problems.

All models evaluate regressors in batches: ``model.regressors(X)`` takes an
``(n, k)`` array of design points and returns the ``(n, m)`` matrix whose rows
are the vectors ``f(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import log_ndtr

from .design import FactorGrid

GLM_FAMILIES = ("logistic", "probit", "poisson")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Model:
    """Base class. Subclasses implement :meth:`_regressors`."""

    def __init__(self, m: int, k: int, name: str = ""):
        if m < 2:
            raise ValueError("models need at least two parameters (m >= 2)")
        self.m = int(m)
        self.k = int(k)
        self.name = name

    def _regressors(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def regressors(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.k:
            raise ValueError(f"{self!r} expects {self.k} factors, got {X.shape[1]}")
        F = self._regressors(X)
        if F.shape != (X.shape[0], self.m):
            raise ValueError(f"{self!r} produced regressors of shape {F.shape}, expected {(X.shape[0], self.m)}")
        return F

    def regression_vector(self, x) -> np.ndarray:
        return self.regressors(np.asarray(x, dtype=float)[None, :])[0]

    def __repr__(self):
        return f"{type(self).__name__}({self.name or f'm={self.m}, k={self.k}'})"


class LinearModel(Model):
    """``f(x) = sqrt(w(x)) h(x)``; the weight function defaults to 1."""

    def __init__(self, h: Callable, m: int, k: int, weight: Callable | None = None, name: str = ""):
        super().__init__(m, k, name)
        self.h = h
        self.weight = weight

    def _regressors(self, X):
        H = np.asarray(self.h(X), dtype=float)
        if self.weight is not None:
            H = np.sqrt(self.weight(X))[:, None] * H
        return H


def glm_log_weight(family: str, z) -> np.ndarray:
    """Logarithm of the GLM information weight at linear predictor ``z``.

    Finite for all finite ``z``, including probit tails where the weight
    itself is below the smallest positive double.
    """
    z = np.asarray(z, dtype=float)
    if family == "logistic":
        return -np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z)))
    if family == "poisson":
        return z.copy()
    if family == "probit":
        # phi^2 / (Phi (1 - Phi)); the direct ratio is 0/0 in the tails
        return -z * z - 2.0 * _LOG_SQRT_2PI - log_ndtr(z) - log_ndtr(-z)
    raise ValueError(f"unknown GLM family {family!r}; expected one of {GLM_FAMILIES}")


def glm_weight(family: str, z) -> np.ndarray:
    """GLM information weight ``w`` as a function of the linear predictor ``z``."""
    z = np.asarray(z, dtype=float)
    if family == "logistic":
        e = np.exp(-np.abs(z))
        return e / (1.0 + e) ** 2
    return np.exp(glm_log_weight(family, z))


class GLMModel(Model):
    """Generalized linear model linearized at the nominal parameter ``theta0``."""

    def __init__(self, family: str, h: Callable, theta0, k: int, name: str = ""):
        if family not in GLM_FAMILIES:
            raise ValueError(f"unknown GLM family {family!r}; expected one of {GLM_FAMILIES}")
        theta0 = np.asarray(theta0, dtype=float)
        super().__init__(theta0.size, k, name)
        self.family = family
        self.h = h
        self.theta0 = theta0

    def _regressors(self, X):
        H = np.asarray(self.h(X), dtype=float)
        root_w = np.exp(0.5 * glm_log_weight(self.family, H @ self.theta0))
        return root_w[:, None] * H


def glm_regression_vector(model: GLMModel, x) -> np.ndarray:
    return model.regression_vector(x)


class NonlinearModel(Model):
    """Normal model with nonlinear mean ``eta(x, theta)``, linearized at ``theta0``.

    ``eta(X, theta)`` returns shape ``(n,)`` and ``grad_eta(X, theta)`` shape ``(n, m)``.
    """

    def __init__(self, eta: Callable, grad_eta: Callable, theta0, k: int, name: str = ""):
        theta0 = np.asarray(theta0, dtype=float)
        super().__init__(theta0.size, k, name)
        self.eta = eta
        self.grad_eta = grad_eta
        self.theta0 = theta0

    def _regressors(self, X):
        G = np.asarray(self.grad_eta(X, self.theta0), dtype=float)
        if not np.all(np.isfinite(G)):
            raise FloatingPointError(f"{self!r}: non-finite gradient of the mean function")
        return G


def linearized_regression_vector(model: NonlinearModel, x) -> np.ndarray:
    return model.regression_vector(x)


class ReparametrizedModel(Model):
    """``f~(x) = R f(x)`` for a nonsingular ``R``; leaves D-optimal designs unchanged."""

    def __init__(self, base: Model, R):
        R = np.asarray(R, dtype=float)
        if R.shape != (base.m, base.m):
            raise ValueError("reparametrization matrix has the wrong shape")
        if np.linalg.matrix_rank(R) < base.m:
            raise np.linalg.LinAlgError("reparametrization matrix is singular")
        super().__init__(base.m, base.k, base.name)
        self.base = base
        self.R = R

    def _regressors(self, X):
        return self.base.regressors(X) @ self.R.T


def inverse_sqrt(M) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition."""
    a = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh(a)
    if vals.min() <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


# ---------------------------------------------------------------------------
# benchmark problems


def _intercept(X, *cols):
    return np.column_stack([np.ones(X.shape[0]), *cols])


def _h_first_order(X):
    return _intercept(X, X)


def _h_p1(X):
    x1, x2 = X[:, 0], X[:, 1]
    return _intercept(X, x1, x2, x1 * x2)


def _eta_p1(X, th):
    return 1.0 / (1.0 + np.exp(_h_p1(X) @ th))


def _grad_p1(X, th):
    H = _h_p1(X)
    return -glm_weight("logistic", H @ th)[:, None] * H


def _eta_p2(X, th):
    x1, x2 = X[:, 0], X[:, 1]
    t1, t2, t3, t4, t5 = th
    return t1 + t2 * np.exp(-t3 * x1) + t4 / (t4 - t5) * (np.exp(-t5 * x2) - np.exp(-t4 * x2))


def _grad_p2(X, th):
    x1, x2 = X[:, 0], X[:, 1]
    t1, t2, t3, t4, t5 = th
    e3 = np.exp(-t3 * x1)
    e4 = np.exp(-t4 * x2)
    e5 = np.exp(-t5 * x2)
    c = t4 / (t4 - t5)
    bracket = e5 - e4
    q = (t4 - t5) ** 2
    return np.column_stack([
        np.ones_like(x1),
        e3,
        -t2 * x1 * e3,
        -t5 / q * bracket + c * x2 * e4,
        t4 / q * bracket - c * x2 * e5,
    ])


def _h_p3(X):
    x1, x2 = X[:, 0], X[:, 1]
    return _intercept(X, x1, x2, x1**2, x2**2, x1**3, x2**3)


def _h_p4(X):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    return _intercept(X, x1, x2, x3, x1**2, x2**2, x3**2, x1 * x2, x1 * x3, x2 * x3)


def _h_p10(X):
    x = [X[:, i] for i in range(10)]
    return _intercept(X, X, x[0] * x[8], x[1] * x[4], x[2] * x[3], x[5] * x[6], x[7] * x[9])


@dataclass(frozen=True)
class BenchmarkProblem:
    id: int
    grid: FactorGrid
    model: Model
    description: str
    phi_reference: float
    phi_competitor: float
    reparametrize: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.grid.k

    @property
    def m(self) -> int:
        return self.model.m


# Nominal parameters, transcribed as printed.
THETA0 = {
    1: (-2.0, 0.5, 0.5, 0.1),
    2: (1.0, 1.0, 2.0, 0.7, 0.2),
    4: (0.5, -0.2, 0.5, -0.2, -0.1, 0.2, -0.1, 0.2, -0.1, 0.2),
    5: (-1.0, 2.0, 0.5, -1.0, -0.25, 0.13),
    6: (0.5, 0.7, 0.18, -0.2, -0.58, 0.51),
    7: (0.5, 0.7, 0.18, -0.2, -0.58, 0.51),
    8: (-0.4926, -0.628, -0.3283, 0.4378, 0.5283, -0.612, -0.6837, -0.2061),
    9: (3.0, 0.5, 0.75, 1.25, 0.8, 0.5, 0.8, -0.4, -1.0, 2.65, 0.65),
    10: (3.0, 0.5, 0.75, 1.25, 0.8, 0.5, 0.8, -0.4, -1.0, 2.65, 0.65, 0.01, -0.02, 0.03, -0.04, 0.05),
}

# Best published criterion values: (this method, competing method).
REFERENCE_PHI = {
    1: (0.0338935, 0.0338904),
    2: (0.117578, 0.117578),
    3: (0.221567, 0.221567),
    4: (0.870542, 0.853086),
    5: (0.351996, 0.350217),
    6: (1.26609, 1.23457),
    7: (0.539359, 0.526315),
    # rows 8 and 9 follow the model definitions, not the order of the
    # published comparison table, whose two rows are transposed
    8: (1.07287, 1.06962),
    9: (0.0381948, 0.0381872),
    10: (0.0115145, 0.0114329),
}

_BIN = [-1.0, 1.0]


def _grid_specs(pid: int):
    if pid == 1:
        return [(0, 5, 0.001), (0, 1, 0.001)]
    if pid == 2:
        return [(0, 2, 0.001), (0, 10, 0.001)]
    if pid == 3:
        return [(-1, 1, 0.001)] * 2
    if pid == 4:
        return [(-1, 1, 0.001)] * 3
    if pid == 5:
        return [_BIN] * 4 + [(5, 35, 0.001)]
    if pid in (6, 7):
        return [(-2, 2, 0.001)] * 5
    if pid == 8:
        return [(-3, 3, 0.01)] * 7
    if pid in (9, 10):
        step9 = 0.001 if pid == 9 else 0.01
        return [_BIN] * 4 + [
            (50, 90, 0.01),
            (30, 55, 0.01),
            (0, 10, 0.01),
            (18, 48, 0.01),
            (0.125, 0.425, step9),
            (5, 15, 0.01),
        ]
    raise ValueError(f"unknown benchmark problem {pid}; ids run from 1 to 10")


def _model(pid: int) -> tuple[Model, str]:
    th = THETA0.get(pid)
    name = f"problem {pid}"
    if pid == 1:
        return NonlinearModel(_eta_p1, _grad_p1, th, 2, name), "normal, eta = 1/(1+exp(h'theta)), h = (1, x1, x2, x1x2)"
    if pid == 2:
        return NonlinearModel(_eta_p2, _grad_p2, th, 2, name), "normal, compartmental mean with two exponential terms"
    if pid == 3:
        return LinearModel(_h_p3, 7, 2, name=name), "linear, cubic in each factor without interactions"
    if pid == 4:
        return GLMModel("poisson", _h_p4, th, 3, name), "Poisson, full quadratic in three factors"
    if pid == 5:
        return GLMModel("logistic", _h_first_order, th, 5, name), "logistic, first order; four binary factors"
    if pid == 6:
        return GLMModel("probit", _h_first_order, th, 5, name), "probit, first order in five factors"
    if pid in (7, 8, 9):
        k = {7: 5, 8: 7, 9: 10}[pid]
        return GLMModel("logistic", _h_first_order, th, k, name), "logistic, first order"
    if pid == 10:
        return GLMModel("logistic", _h_p10, th, 10, name), "logistic, first order plus five interactions"
    raise ValueError(f"unknown benchmark problem {pid}; ids run from 1 to 10")


def benchmark(pid: int) -> BenchmarkProblem:
    """Benchmark problem ``pid`` (1..10) with its grid, model and reference values."""
    if not isinstance(pid, (int, np.integer)) or not 1 <= pid <= 10:
        raise ValueError(f"unknown benchmark problem {pid!r}; ids run from 1 to 10")
    pid = int(pid)
    grid = FactorGrid.from_ranges(_grid_specs(pid))
    model, desc = _model(pid)
    phi, phi_com = REFERENCE_PHI[pid]
    return BenchmarkProblem(pid, grid, model, desc, phi, phi_com, reparametrize=(pid == 10))


def all_benchmarks() -> list[BenchmarkProblem]:
    return [benchmark(i) for i in range(1, 11)]

