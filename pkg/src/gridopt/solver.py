"""D-optimal weights on a finite candidate set.

The working representation is a regressor matrix ``F`` (one row per
candidate point) plus a dense weight vector over its rows. Public wrappers
accept points and a model and return :class:`~gridopt.design.Design` objects.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .design import Design, InfoMatrix, SingularMatrixError, d_criterion, variance

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12


class DegenerateSetError(ValueError):
    """The regressors of the candidate set do not span R^m."""


@dataclass
class SolverConfig:
    eff_opt: float = 1 - 1e-6
    eff_grp: float = 1 - 1e-6
    max_iters: int = 10_000
    seed: int | None = 0

    def __post_init__(self):
        if not 0 < self.eff_opt < 1:
            raise ValueError("eff_opt must lie in (0, 1)")
        if not 0 < self.eff_grp <= 1:
            raise ValueError("eff_grp must lie in (0, 1]")


@dataclass
class SweepRecord:
    iteration: int
    phi: float
    max_d: float
    support_size: int


@dataclass
class SolverResult:
    weights: np.ndarray
    certified: bool
    max_d: float
    sweeps: int
    trace: list[SweepRecord] = field(default_factory=list)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def kumar_yildirim(F: np.ndarray, rng=None) -> np.ndarray:
    """Indices of ``m`` rows of ``F`` with linearly independent regressors.

    Greedy: the first row maximizes ``|u . f|`` for a random direction ``u``;
    each further row maximizes the absolute inner product with a random
    direction projected onto the orthogonal complement of the rows chosen so far.
    """
    rng = _rng(rng)
    n, m = F.shape
    if m < 2:
        raise ValueError("m must be at least 2")
    if n < m:
        raise DegenerateSetError(f"{n} candidate points cannot support {m} parameters")
    scale = np.abs(F).max()
    chosen: list[int] = []
    Q = np.zeros((m, 0))
    for _ in range(m):
        u = rng.standard_normal(m)
        u -= Q @ (Q.T @ u)
        u -= Q @ (Q.T @ u)
        u /= np.linalg.norm(u)
        score = np.abs(F @ u)
        j = int(np.argmax(score))
        if score[j] <= 1e-12 * scale:
            raise DegenerateSetError("candidate regressors are linearly dependent (f-degenerate set)")
        chosen.append(j)
        q = F[j] - Q @ (Q.T @ F[j])
        q -= Q @ (Q.T @ q)
        Q = np.column_stack([Q, q / np.linalg.norm(q)])
    return np.array(chosen)


def kumar_yildirim_init(points, model, seed=None) -> Design:
    """Uniform design on ``m`` points picked by :func:`kumar_yildirim`."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = kumar_yildirim(model.regressors(pts), seed)
    return Design(pts[idx], np.full(idx.size, 1.0 / idx.size))


def _inverse(F, w, support):
    Fs = F[support]
    M = Fs.T @ (w[support, None] * Fs)
    M = 0.5 * (M + M.T)
    try:
        L = la.cholesky(M, lower=True, check_finite=False)
    except la.LinAlgError:
        raise SingularMatrixError("information matrix of the current design is singular") from None
    diag = np.diag(L)
    if diag.min() <= 1e-150:
        raise SingularMatrixError("information matrix of the current design is singular")
    Minv = la.cho_solve((L, True), np.eye(M.shape[0]), check_finite=False)
    return 0.5 * (Minv + Minv.T), 2.0 * float(np.log(diag).sum()) / M.shape[0]


def exchange_step(du: float, dv: float, duv: float, wu: float, wv: float) -> float:
    """Weight moved from ``v`` to ``u`` that maximizes ``det M`` along the exchange.

    The determinant ratio is ``1 + a (du - dv) - a^2 (du dv - duv^2)``; the
    unconstrained maximizer is clipped to ``[-wu, wv]``.
    """
    num = du - dv
    den = 2.0 * (du * dv - duv * duv)
    if den <= 1e-14 * du * dv:
        # collinear regressors: the ratio is linear in the step
        if num > 0:
            return wv
        if num < 0:
            return -wu
        return 0.0
    return min(max(num / den, -wu), wv)


def _apply_exchange(Minv, fu, fv, a, b, du, dv, duv, delta):
    """Woodbury update of ``Minv`` for ``M + delta (fu fu' - fv fv')``."""
    # T = I + Q C with Q = [[du, duv], [duv, dv]] and C = diag(delta, -delta)
    t11 = 1.0 + delta * du
    t12 = -delta * duv
    t21 = delta * duv
    t22 = 1.0 - delta * dv
    det = t11 * t22 - t12 * t21
    # K = C T^{-1}
    k11 = delta * t22 / det
    k12 = -delta * t12 / det
    k21 = delta * t21 / det
    k22 = -delta * t11 / det
    p = k11 * a + k21 * b
    q = k12 * a + k22 * b
    Minv -= np.outer(a, p) + np.outer(b, q)
    return det


def rex(F, w0, eff_opt=1 - 1e-6, max_iters=10_000, rng=None, trace=None) -> SolverResult:
    """Randomized exchange optimization of D-optimal weights on the rows of ``F``.

    Each sweep computes the variance function on every row, stops if
    ``m / max d >= eff_opt``, and otherwise performs a leading exchange between
    the global maximizer of the variance and the support point of least
    variance, then optimal pairwise exchanges between a shortlist (the ``2m``
    rows of largest variance plus the support) and the support, in random order.
    """
    rng = _rng(rng)
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    w = np.array(w0, dtype=float)
    if w.shape != (n,):
        raise ValueError("initial weight vector has the wrong length")
    w[w < WEIGHT_FLOOR] = 0.0
    w /= w.sum()
    n_short = min(n, 2 * m)

    certified = False
    max_d = math.inf
    sweep = 0
    updates = 0
    while True:
        support = np.flatnonzero(w)
        Minv, log_phi = _inverse(F, w, support)
        d = variance(F, Minv)
        top = int(np.argmax(d))
        max_d = float(d[top])
        if trace is not None:
            trace.append(SweepRecord(sweep, math.exp(log_phi), max_d, support.size))
        if m / max_d >= eff_opt:
            certified = True
            break
        if sweep >= max_iters:
            log.warning("exchange solver hit max_iters=%d without certificate (eff bound %.9f)", max_iters, m / max_d)
            break
        sweep += 1

        v_lead = support[int(np.argmin(d[support]))]
        if n_short < n:
            shortlist = np.argpartition(d, n - n_short)[n - n_short:]
        else:
            shortlist = np.arange(n)
        cand = np.union1d(shortlist, support)
        pairs = [(top, v_lead)]
        uu, vv = np.meshgrid(cand, support, indexing="ij")
        order = rng.permutation(uu.size)
        pairs.extend(zip(uu.ravel()[order].tolist(), vv.ravel()[order].tolist()))

        for u, v in pairs:
            if u == v or w[v] == 0.0 and w[u] == 0.0:
                continue
            fu = F[u]
            fv = F[v]
            a = Minv @ fu
            b = Minv @ fv
            du = fu @ a
            dv = fv @ b
            duv = fu @ b
            delta = exchange_step(du, dv, duv, w[u], w[v])
            if delta == 0.0:
                continue
            # det ratio minus one, formed without the cancellation in 1 + ...
            gain = delta * (du - dv) - delta * delta * (du * dv - duv * duv)
            if gain <= 0.0:
                continue
            _apply_exchange(Minv, fu, fv, a, b, du, dv, duv, delta)
            w[u] += delta
            w[v] -= delta
            for j in (u, v):
                if w[j] < WEIGHT_FLOOR:
                    w[j] = 0.0
            updates += 1
            if updates % 1000 == 0:
                w /= w.sum()
                Minv, _ = _inverse(F, w, np.flatnonzero(w))
        w /= w.sum()
    return SolverResult(w, certified, max_d, sweep, trace if trace is not None else [])


def optimize_weights(points, model, init: Design, cfg: SolverConfig | None = None) -> tuple[Design, SolverResult]:
    """Optimize design weights over the finite set ``points`` starting from ``init``.

    ``init`` must be supported on a subset of ``points``. The result is
    certified ``eff_opt``-efficient relative to ``points`` unless
    ``result.certified`` is false.
    """
    cfg = cfg or SolverConfig()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    F = model.regressors(pts)
    w0 = _embed(pts, init)
    res = rex(F, w0, cfg.eff_opt, cfg.max_iters, cfg.seed, trace=[])
    supp = res.support
    return Design(pts[supp], res.weights[supp]), res


def _embed(pts, design: Design) -> np.ndarray:
    lookup = {tuple(p): i for i, p in enumerate(pts.tolist())}
    w = np.zeros(pts.shape[0])
    for p, wt in zip(design.points.tolist(), design.weights):
        try:
            w[lookup[tuple(p)]] = wt
        except KeyError:
            raise ValueError(f"initial design point {p} is not among the candidate points") from None
    return w


def nearest_pair(X: np.ndarray) -> tuple[int, int]:
    """Indices ``k < l`` of the closest pair of rows (first in row-major order on ties)."""
    diff = X[:, None, :] - X[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    dist[np.tril_indices(X.shape[0])] = np.inf
    flat = int(np.argmin(dist))
    return divmod(flat, X.shape[0])


def pool(F, X, w, eff_grp, scale=None):
    """Greedy nearest-pair pooling of a design given by rows ``F``/``X`` and weights ``w``.

    Returns the boolean mask of retained rows and the pooled weights.
    Efficiency of every accepted pooling is measured against the input design.
    """
    F = np.asarray(F, dtype=float)
    X = np.asarray(X, dtype=float)
    w = np.array(w, dtype=float)
    if scale is not None:
        X = X / scale
    keep = np.ones(w.size, dtype=bool)
    base = d_criterion(InfoMatrix.from_regressors(F, w))
    if base <= 0:
        raise SingularMatrixError("cannot pool a singular design")
    while keep.sum() > 1:
        live = np.flatnonzero(keep)
        i, j = nearest_pair(X[live])
        k, l = live[i], live[j]
        trial = w.copy()
        if trial[k] >= trial[l]:
            trial[k] += trial[l]
            trial[l] = 0.0
            drop = l
        else:
            trial[l] += trial[k]
            trial[k] = 0.0
            drop = k
        mask = keep.copy()
        mask[drop] = False
        phi = d_criterion(InfoMatrix.from_regressors(F[mask], trial[mask]))
        if phi / base < eff_grp:
            break
        w = trial
        keep = mask
    return keep, w


def grp_pooling(design: Design, model, cfg: SolverConfig | None = None, scale=None) -> Design:
    """Pool nearest support points while efficiency stays above ``eff_grp``.

    Distances use coordinates divided by ``scale`` (typically the factor
    ranges of the grid); without it raw coordinates are used.
    """
    cfg = cfg or SolverConfig()
    if design.size == 1:
        return design
    F = model.regressors(design.points)
    keep, w = pool(F, design.points, design.weights, cfg.eff_grp, scale)
    return Design(design.points[keep], w[keep])
