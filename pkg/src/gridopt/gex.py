"""Galaxy exploration: adaptive exploration sets on a factor grid.

The outer loop alternates between building a finite exploration set on the
grid (local maxima of the current variance function plus star sets around
the current support) and optimizing weights on it.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import Design, FactorGrid, InfoMatrix, d_criterion, variance
from .models import Model, ReparametrizedModel, inverse_sqrt
from .solver import SolverResult, kumar_yildirim, pool, rex

log = logging.getLogger(__name__)

MAX_INI_FACTORS = 20
# bound on rows evaluated at once during hill climbing
_CLIMB_BATCH_ROWS = 1_000_000


@dataclass
class GexConfig:
    eff_opt: float = 1 - 1e-6
    eff_grp: float = 1 - 1e-6
    eff_stop: float = 1 - 1e-6
    n_loc: int = 50
    n_rnd: int = 1000
    seed: int = 0
    reparametrize: bool = False
    max_rounds: int = 100
    max_iters: int = 10_000

    def __post_init__(self):
        for name in ("eff_opt", "eff_stop"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 < self.eff_grp <= 1:
            raise ValueError("eff_grp must lie in (0, 1]")
        if self.n_loc < 0 or self.n_rnd < 0:
            raise ValueError("n_loc and n_rnd must be nonnegative")


TAGS = ("grid", "random", "local-max", "star")


@dataclass
class ExplorationSet:
    """Deduplicated grid points (as level indices) with the provenance of each."""

    indices: np.ndarray
    tags: np.ndarray

    @classmethod
    def union(cls, parts) -> "ExplorationSet":
        """Union of ``(indices, tag)`` parts; a point keeps the tag of the first part it occurs in."""
        idx = np.concatenate([p for p, _ in parts], axis=0)
        tag = np.concatenate([np.full(len(p), TAGS.index(t), dtype=np.int8) for p, t in parts])
        uniq, first, inverse = np.unique(idx, axis=0, return_index=True, return_inverse=True)
        out = cls(uniq, tag[first])
        out.inverse = inverse.ravel()
        return out

    def __len__(self):
        return self.indices.shape[0]

    def tag_names(self):
        return [TAGS[t] for t in self.tags]


def median_level(levels) -> float:
    """The ``ceil(n/2)``-th smallest level (lower median for even counts)."""
    lv = np.sort(np.asarray(levels, dtype=float))
    return float(lv[math.ceil(lv.size / 2) - 1])


def _ini_levels(n: int) -> list[int]:
    if n >= 3:
        return [0, math.ceil(n / 2) - 1, n - 1]
    return list(range(n))


def ini_grid(grid: FactorGrid) -> np.ndarray:
    """Extreme levels of every factor combined with the medians of non-binary factors."""
    if grid.k > MAX_INI_FACTORS:
        raise ValueError(f"refusing a 3^k initial grid for k = {grid.k} > {MAX_INI_FACTORS} factors")
    axes = [np.array(_ini_levels(int(c))) for c in grid.counts]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([a.ravel() for a in mesh]).astype(np.int64)


def ini(grid: FactorGrid, n_rnd: int, seed=None) -> ExplorationSet:
    rng = np.random.default_rng(seed)
    parts = [(ini_grid(grid), "grid")]
    if n_rnd:
        parts.append((grid.random_indices(n_rnd, rng), "random"))
    return ExplorationSet.union(parts)


def _star_template(grid: FactorGrid):
    cols = np.concatenate([np.full(int(c), i) for i, c in enumerate(grid.counts)])
    levels = np.concatenate([np.arange(int(c)) for c in grid.counts])
    return cols, levels


def star_indices(grid: FactorGrid, centers) -> np.ndarray:
    """Star sets around each row of ``centers`` (level indices), shape ``(c, S, k)``.

    The centre itself occurs once per factor; rows are ordered by factor and
    then by level.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.int64))
    cols, levels = _star_template(grid)
    out = np.repeat(centers[:, None, :], cols.size, axis=1)
    out[:, np.arange(cols.size), cols] = levels
    return out


def star_set(grid: FactorGrid, x) -> np.ndarray:
    """Coordinates of all grid points differing from ``x`` in at most one coordinate.

    ``x`` comes first, followed by each factor's substitutions in level order.
    """
    centre = grid.indices(x)[0]
    rows = star_indices(grid, centre)[0]
    differs = np.any(rows != centre, axis=1)
    rows = np.concatenate([centre[None, :], rows[differs]])
    return grid.coords(rows)


def _evaluate_variance(grid, model, idx, Minv):
    return variance(model.regressors(grid.coords(idx)), Minv)


def hill_climb(grid: FactorGrid, model: Model, Minv: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Greedy maximization of the variance function from each start (level indices).

    Every step evaluates the whole star set of the current point and moves to
    its best point if that is a strict improvement; ties go to the smallest
    factor index and then the smallest level index. Returns terminal points.
    """
    cur = np.array(starts, dtype=np.int64, copy=True)
    cols, levels = _star_template(grid)
    S = cols.size
    # position of the centre in each star: factor 0's block at the current level
    active = np.arange(cur.shape[0])
    batch = max(1, _CLIMB_BATCH_ROWS // S)
    while active.size:
        still = []
        for lo in range(0, active.size, batch):
            ids = active[lo:lo + batch]
            stars = star_indices(grid, cur[ids])
            d = _evaluate_variance(grid, model, stars.reshape(-1, grid.k), Minv).reshape(len(ids), S)
            best = np.argmax(d, axis=1)
            centre_pos = cur[ids, 0]
            rows = np.arange(len(ids))
            improve = d[rows, best] > d[rows, centre_pos]
            moved = ids[improve]
            cur[moved, cols[best[improve]]] = levels[best[improve]]
            still.append(moved)
        active = np.concatenate(still) if still else np.empty(0, dtype=np.int64)
    return cur


def local_search(grid: FactorGrid, model: Model, design: Design, n_loc: int, seed=None) -> np.ndarray:
    """Terminal points (coordinates, deduplicated and sorted) of ``n_loc`` random-start hill climbs."""
    Minv = _design_info(design, model).inverse
    idx = _climb_from_random(grid, model, Minv, n_loc, np.random.default_rng(seed))
    return grid.coords(np.unique(idx, axis=0))


def _climb_from_random(grid, model, Minv, n_loc, rng):
    if n_loc == 0:
        return np.empty((0, grid.k), dtype=np.int64)
    starts = grid.random_indices(n_loc, rng)
    return np.unique(hill_climb(grid, model, Minv, starts), axis=0)


def _design_info(design: Design, model: Model) -> InfoMatrix:
    return InfoMatrix.from_regressors(model.regressors(design.points), design.weights)


def reparametrize(model: Model, ini_design: Design) -> ReparametrizedModel:
    """Model with regressors ``M^(-1/2) f`` where ``M`` is the information matrix of ``ini_design``."""
    M = _design_info(ini_design, model)
    if M.singular:
        raise np.linalg.LinAlgError("initial design has a singular information matrix")
    return ReparametrizedModel(model, inverse_sqrt(M.entries))


@dataclass
class RoundRecord:
    phi: float
    support_size: int
    exploration_size: int
    elapsed_ms: float
    max_d: float
    certified: bool
    sweeps: int
    n_local_maxima: int = 0


@dataclass
class RunReport:
    rounds: list[RoundRecord] = field(default_factory=list)
    phi: float = float("nan")
    certificate_bound: float = float("nan")
    converged: bool = False
    elapsed_s: float = 0.0
    design: Design | None = None
    phi_reparametrized: float | None = None

    def to_dict(self) -> dict:
        final = {
            "phi": self.phi,
            "certificate_bound": self.certificate_bound,
            "converged": self.converged,
            "elapsed_s": self.elapsed_s,
        }
        if self.design is not None:
            final["design"] = {
                "points": self.design.points.tolist(),
                "weights": self.design.weights.tolist(),
            }
        return {"rounds": [asdict(r) for r in self.rounds], "final": final}


class _Opt:
    """Weight optimization plus pooling on one exploration set."""

    def __init__(self, grid, model, cfg, rng):
        self.grid = grid
        self.model = model
        self.cfg = cfg
        self.rng = rng

    def __call__(self, idx: np.ndarray, w0: np.ndarray):
        F = self.model.regressors(self.grid.coords(idx))
        res: SolverResult = rex(F, w0, self.cfg.eff_opt, self.cfg.max_iters, self.rng)
        supp = res.support
        keep, w = pool(F[supp], self.grid.coords(idx[supp]), res.weights[supp], self.cfg.eff_grp, self.grid.span)
        supp_idx = idx[supp][keep]
        supp_w = w[keep]
        supp_w = supp_w / supp_w.sum()
        phi = d_criterion(InfoMatrix.from_regressors(F[supp][keep], supp_w))
        self.last_F = F
        return supp_idx, supp_w, phi, res


def run_gex(grid: FactorGrid, model: Model, cfg: GexConfig | None = None) -> tuple[Design, RunReport]:
    """Compute an approximately D-optimal design on ``grid`` for ``model``."""
    cfg = cfg or GexConfig()
    if model.k != grid.k:
        raise ValueError(f"model expects {model.k} factors but the grid has {grid.k}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    report = RunReport()

    exp = ini(grid, cfg.n_rnd, rng)
    F = model.regressors(grid.coords(exp.indices))
    ky = kumar_yildirim(F, rng)
    work_model = model
    M_ky = None
    if cfg.reparametrize:
        M_ky = InfoMatrix.from_regressors(F[ky], np.full(ky.size, 1.0 / ky.size))
        work_model = ReparametrizedModel(model, inverse_sqrt(M_ky.entries))
    opt = _Opt(grid, work_model, cfg, rng)

    w0 = np.zeros(len(exp))
    w0[ky] = 1.0 / ky.size
    supp_idx, supp_w, phi, res = opt(exp.indices, w0)
    report.rounds.append(_record(supp_idx, phi, exp, t0, res))
    log.info("round 0: phi=%.9g support=%d |X_exp|=%d", phi, supp_w.size, len(exp))

    for rnd in range(1, cfg.max_rounds + 1):
        old_idx, old_w, old_phi = supp_idx, supp_w, phi
        Minv = InfoMatrix.from_regressors(work_model.regressors(grid.coords(old_idx)), old_w).inverse
        loc = _climb_from_random(grid, work_model, Minv, cfg.n_loc, rng)
        stars = star_indices(grid, old_idx).reshape(-1, grid.k)
        exp = ExplorationSet.union([(old_idx, "star"), (stars, "star"), (loc, "local-max")])
        w0 = np.zeros(len(exp))
        w0[exp.inverse[: old_idx.shape[0]]] = old_w
        supp_idx, supp_w, phi, res = opt(exp.indices, w0)
        if phi < old_phi:
            # pooling may cost up to 1 - eff_grp; never step back
            supp_idx, supp_w, phi = old_idx, old_w, old_phi
        rec = _record(supp_idx, phi, exp, t0, res)
        rec.n_local_maxima = int(loc.shape[0])
        report.rounds.append(rec)
        log.info("round %d: phi=%.9g support=%d |X_exp|=%d", rnd, phi, supp_w.size, len(exp))
        if old_phi / phi > cfg.eff_stop:
            report.converged = True
            break
    else:
        log.warning("GEX stopped after max_rounds=%d without meeting the stopping rule", cfg.max_rounds)

    order = np.lexsort(supp_idx.T[::-1])
    design = Design(grid.coords(supp_idx[order]), supp_w[order])
    report.design = design
    report.phi = d_criterion(_design_info(design, model))
    if M_ky is not None:
        report.phi_reparametrized = phi
    # bound relative to the final exploration set only
    Minv = InfoMatrix.from_regressors(work_model.regressors(grid.coords(supp_idx)), supp_w).inverse
    report.certificate_bound = model.m / float(variance(opt.last_F, Minv).max())
    report.elapsed_s = time.perf_counter() - t0
    return design, report


def _record(supp_idx, phi, exp, t0, res) -> RoundRecord:
    return RoundRecord(
        phi=phi,
        support_size=int(supp_idx.shape[0]),
        exploration_size=len(exp),
        elapsed_ms=1000.0 * (time.perf_counter() - t0),
        max_d=res.max_d,
        certified=res.certified,
        sweeps=res.sweeps,
    )


def probe_variance(grid: FactorGrid, model: Model, design: Design, n_probes: int, seed=None):
    """Largest variance-function value found by hill climbs plus the design's star sets.

    Returns ``(max_d, argmax_point)``. This is a lower estimate of the maximum
    over the whole grid, not a certified one.
    """
    Minv = _design_info(design, model).inverse
    rng = np.random.default_rng(seed)
    supp = grid.indices(design.points)
    cands = [star_indices(grid, supp).reshape(-1, grid.k)]
    if n_probes:
        cands.append(hill_climb(grid, model, Minv, grid.random_indices(n_probes, rng)))
    idx = np.unique(np.concatenate(cands), axis=0)
    best_d, best = -np.inf, None
    for lo in range(0, idx.shape[0], _CLIMB_BATCH_ROWS):
        chunk = idx[lo:lo + _CLIMB_BATCH_ROWS]
        d = _evaluate_variance(grid, model, chunk, Minv)
        j = int(np.argmax(d))
        if d[j] > best_d:
            best_d, best = float(d[j]), grid.coords(chunk[j])
    return best_d, best
