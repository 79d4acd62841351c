"""Identified sets, confidence sets and the random-walk scanner for the entry game.

The criterion at a parameter vector is ``Q = sum_x w_x q_x`` where ``q_x`` is
the smallest uniform slack that makes every obedience inequality of bin ``x``
hold for some decision rule consistent with the bin's CCPs (exact, or free to
move inside a confidence box).  ``Q <= ZERO_THRESHOLD`` means accepted.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

from .data import BinnedData
from .discretize import make_grid
from .equilibria import ConceptSpec, assemble, is_rationalizable
from .game_core import BasicGame, CovariateBin, EntryGameTheta, build_entry_game
from .inference import CcpRegion
from .lp_backend import ZERO_THRESHOLD, LinearProgram, LpSolverError, solve

log = logging.getLogger(__name__)

__all__ = [
    "EntryModel",
    "ThetaPoint",
    "CriterionValue",
    "MinimizeResult",
    "ScanConfig",
    "ScanResult",
    "in_identified_set",
    "criterion",
    "minimize_criterion",
    "scan_set",
    "default_rho_grid",
]


def default_rho_grid() -> np.ndarray:
    return np.linspace(0.0, 0.99, 21)


@dataclass(frozen=True)
class EntryModel:
    """Parameterization of the two-player entry game over covariate bins.

    The parameter vector is ``(beta1_*, beta2_*, kappa1, kappa2, rho)``.
    ``free`` lists the coordinates that estimation may move; the rest stay at
    whatever value the caller supplies.  Bounds default to ``rho in [0, 0.99]``
    and the real line elsewhere.
    """

    covariates: tuple
    grid_n: int = 10
    free: tuple | None = None
    bounds: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = self.names
        free = tuple(names) if self.free is None else tuple(self.free)
        unknown = set(free) - set(names)
        if unknown:
            raise ValueError(f"unknown parameter names {sorted(unknown)}")
        object.__setattr__(self, "free", free)
        b = dict(self.bounds)
        for k in b:
            if k not in names:
                raise ValueError(f"bounds given for unknown parameter {k!r}")
        object.__setattr__(self, "bounds", tuple(sorted(b.items())))

    @property
    def names(self) -> list[str]:
        return EntryGameTheta.names(self.covariates)

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def free_index(self) -> np.ndarray:
        return np.array([self.names.index(n) for n in self.free], dtype=int)

    @property
    def rho_index(self) -> int:
        return self.n_params - 1

    def lower_upper(self):
        lo = np.full(self.n_params, -np.inf)
        hi = np.full(self.n_params, np.inf)
        lo[self.rho_index], hi[self.rho_index] = 0.0, 0.99
        for name, (a, b) in self.bounds:
            k = self.names.index(name)
            lo[k] = -np.inf if a is None else a
            hi[k] = np.inf if b is None else b
        return lo, hi

    def within_bounds(self, vec) -> bool:
        lo, hi = self.lower_upper()
        return bool(np.all(vec >= lo) and np.all(vec <= hi))

    def theta(self, vec) -> EntryGameTheta:
        if isinstance(vec, EntryGameTheta):
            return vec
        return EntryGameTheta.from_vector(vec, len(self.covariates))

    def vector(self, theta) -> np.ndarray:
        if isinstance(theta, EntryGameTheta):
            return theta.to_vector()
        vec = np.asarray(theta, dtype=float)
        if vec.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters {self.names}")
        return vec

    def game(self, theta, b: CovariateBin) -> BasicGame:
        th = self.theta(theta)
        return build_entry_game(th, b, make_grid(self.grid_n, th.rho))

    def gain_derivatives(self, game: BasicGame, meta: np.ndarray, b: CovariateBin) -> np.ndarray:
        """``d gain / d theta`` for each obedience entry described by ``meta`` rows ``(i, a, k, s)``."""
        ncov = len(self.covariates)
        i, a, k = meta[:, 0], meta[:, 1], meta[:, 2]
        prof = game.profiles
        own = prof[a, i]
        other = prof[a, 1 - i]
        sign = (k - own).astype(float)
        out = np.zeros((meta.shape[0], self.n_params))
        x = np.asarray(b.x, dtype=float)
        for c in range(ncov):
            for pl in (0, 1):
                sel = i == pl
                out[sel, pl * ncov + c] = sign[sel] * x[c]
        for pl in (0, 1):
            sel = i == pl
            out[sel, 2 * ncov + pl] = sign[sel] * other[sel]
        return out

    def log_prior_derivatives(self, theta) -> np.ndarray:
        """``d log psi / d theta`` per state, shape ``(n_states, n_params)``."""
        th = self.theta(theta)
        grid = make_grid(self.grid_n, th.rho)
        out = np.zeros((grid.prior.size, self.n_params))
        out[:, self.rho_index] = grid.prior_derivative() / grid.prior
        return out


@dataclass(frozen=True)
class ThetaPoint:
    theta: np.ndarray
    criterion: float

    @property
    def accepted(self) -> bool:
        return self.criterion <= ZERO_THRESHOLD


@dataclass(frozen=True, eq=False)
class CriterionValue:
    value: float
    gradient: np.ndarray | None
    per_bin: np.ndarray
    smooth: bool = True

    @property
    def accepted(self) -> bool:
        return self.value <= ZERO_THRESHOLD


def _check_data(data: BinnedData, region: CcpRegion | None):
    if region is not None and region.lower.shape != data.phi.shape:
        raise ValueError("confidence region does not match the bins")
    w = np.array([b.weight for b in data.bins])
    if np.any(w <= 0):
        raise ValueError("bin weights must be strictly positive")
    return w


def in_identified_set(theta, data: BinnedData, spec: ConceptSpec, model: EntryModel) -> bool:
    """Exact-CCP membership: every bin's CCP is rationalizable at ``theta``."""
    vec = model.vector(theta)
    for k, (b, phi) in enumerate(zip(data.bins, data.phi)):
        try:
            ok = is_rationalizable(model.game(vec, b), spec, phi)
        except LpSolverError as exc:
            raise LpSolverError(f"bin {k}: {exc}") from exc
        if not ok:
            return False
    return True


def _bin_program(system, phi, box):
    n = system.n_vars
    nA = system.n_profiles
    m = system.simplex.shape[0]
    nob = system.obedience.shape[0]
    free_phi = box is not None
    nphi = nA if free_phi else 0
    total = n + nphi + 1
    c = np.zeros(total)
    c[-1] = 1.0
    A_ub = sparse.hstack([
        system.obedience, sparse.csr_matrix((nob, nphi)), sparse.csr_matrix(-np.ones((nob, 1))),
    ]).tocsr()
    if free_phi:
        A_eq = sparse.vstack([
            sparse.hstack([system.consistency, -sparse.identity(nA), sparse.csr_matrix((nA, 1))]),
            sparse.hstack([system.simplex, sparse.csr_matrix((m, nA + 1))]),
            sparse.hstack([sparse.csr_matrix((1, n)), sparse.csr_matrix(np.ones((1, nA))), sparse.csr_matrix((1, 1))]),
        ]).tocsr()
        b_eq = np.concatenate([np.zeros(nA), np.ones(m), [1.0]])
        lo = np.concatenate([np.zeros(n), box[0], [0.0]])
        hi = np.concatenate([np.ones(n), box[1], [np.inf]])
    else:
        A_eq = sparse.vstack([
            sparse.hstack([system.consistency, sparse.csr_matrix((nA, 1))]),
            sparse.hstack([system.simplex, sparse.csr_matrix((m, 1))]),
        ]).tocsr()
        b_eq = np.concatenate([phi, np.ones(m)])
        lo = np.concatenate([np.zeros(n), [0.0]])
        hi = np.concatenate([np.ones(n), [np.inf]])
    return LinearProgram(c, A_ub, np.zeros(nob), A_eq, b_eq, lo, hi)


def _bin_value(model, spec, vec, b, phi, box, want_grad):
    game = model.game(vec, b)
    system = assemble(game, spec)
    sol = solve(_bin_program(system, phi, box))
    if not sol.optimal:
        raise LpSolverError(f"criterion program ended with status {sol.status}")
    if not want_grad:
        return sol.value, None
    z = sol.primal
    nA = system.n_profiles
    cell_w = system.cells.weight
    dlog = model.log_prior_derivatives(vec)[system.cells.state]      # (m, p)
    # obedience entries: value w_c * gain, derivative w_c * dgain + gain * dw_c
    rows, cols, meta = system.ob_row, system.ob_col, system.ob_meta
    cell = cols // nA
    gvals = np.zeros(meta.shape[0])
    for i, g in enumerate(game.gains):
        sel = meta[:, 0] == i
        gvals[sel] = g[meta[sel, 1], meta[sel, 2], meta[sel, 3]]
    dval = cell_w[cell, None] * (model.gain_derivatives(game, meta, b) + gvals[:, None] * dlog[cell])
    grad = -(sol.duals_ub[rows] * z[cols]) @ dval
    # consistency entries: row a, column (c, a), value w_c
    cc = np.arange(system.n_vars)
    ccell = cc // nA
    dw = cell_w[ccell, None] * dlog[ccell]
    grad -= (sol.duals_eq[cc % nA] * z[cc]) @ dw
    return sol.value, grad


def criterion(theta, data: BinnedData, spec: ConceptSpec, model: EntryModel,
              region: CcpRegion | None = None, gradient: bool = True,
              smoothness_check: bool = False, kink_step: float = 1e-4) -> CriterionValue:
    """Weighted minimal obedience slack, with its envelope-theorem gradient.

    With ``region`` the CCPs are decision variables restricted to the box
    (intersected with the simplex); without it they are fixed at ``data.phi``.
    With ``smoothness_check`` each free coordinate is probed with one-sided
    differences of size ``kink_step``; disagreeing slopes mark a kink and the
    gradient is reported as absent.
    """
    vec = model.vector(theta)
    w = _check_data(data, region)
    box = None
    if region is not None:
        lo, hi = region.clipped()
    per_bin = np.zeros(data.n_bins)
    grad = np.zeros(model.n_params) if gradient else None
    for k, (b, phi) in enumerate(zip(data.bins, data.phi)):
        if region is not None:
            box = (lo[k], hi[k])
        v, g = _bin_value(model, spec, vec, b, phi, box, gradient)
        per_bin[k] = max(v, 0.0)
        if gradient:
            grad += w[k] * g
    value = float(w @ per_bin)
    smooth = True
    if gradient and smoothness_check:
        smooth = _is_smooth(vec, value, data, spec, model, region, kink_step)
    return CriterionValue(value, grad if smooth else None, per_bin, smooth)


def _is_smooth(vec, value, data, spec, model, region, h) -> bool:
    lo, hi = model.lower_upper()
    for j in model.free_index:
        if vec[j] - h < lo[j] or vec[j] + h > hi[j]:
            return False
        up, dn = vec.copy(), vec.copy()
        up[j] += h
        dn[j] -= h
        fwd = (criterion(up, data, spec, model, region, gradient=False).value - value) / h
        bwd = (value - criterion(dn, data, spec, model, region, gradient=False).value) / h
        if abs(fwd - bwd) > 1e-2 * max(abs(fwd), abs(bwd)) + 1e-6:
            return False
    return True


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    point: ThetaPoint
    converged: bool
    by_rho: dict = field(default_factory=dict)

    @property
    def nonempty(self) -> bool:
        return self.point.accepted


def minimize_criterion(data: BinnedData, spec: ConceptSpec, model: EntryModel, starts,
                       region: CcpRegion | None = None, rho_grid=None,
                       maxiter: int = 200) -> MinimizeResult:
    """Outer grid over ``rho`` (when free), inner L-BFGS-B over the other free coordinates.

    Stops at the first point whose criterion is at most the zero threshold.
    """
    starts = [model.vector(s) for s in starts]
    if not starts:
        raise ValueError("need at least one starting point")
    lo, hi = model.lower_upper()
    free = model.free_index
    rho_free = model.rho_index in free
    inner = np.array([j for j in free if j != model.rho_index], dtype=int)
    if rho_free:
        rhos = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
        rhos = rhos[(rhos >= lo[model.rho_index]) & (rhos <= hi[model.rho_index])]
    else:
        rhos = [None]
    best: ThetaPoint | None = None
    any_ok = False
    by_rho = {}
    for rho in rhos:
        rho_best = math.inf
        for s in starts:
            x = s.copy()
            if rho is not None:
                x[model.rho_index] = rho
            x[inner] = np.clip(x[inner], lo[inner], hi[inner])

            def fun(y, base=x):
                full = base.copy()
                full[inner] = y
                cv = criterion(full, data, spec, model, region, gradient=True)
                return cv.value, cv.gradient[inner]

            if inner.size:
                try:
                    res = optimize.minimize(
                        fun, x[inner], jac=True, method="L-BFGS-B",
                        bounds=list(zip(lo[inner], hi[inner])),
                        options={"maxiter": maxiter, "ftol": 1e-12, "gtol": 1e-10},
                    )
                except LpSolverError as exc:
                    log.warning("start abandoned after solver failure: %s", exc)
                    continue
                x[inner] = res.x
                any_ok = any_ok or bool(res.success)
            else:
                any_ok = True
            val = criterion(x, data, spec, model, region, gradient=False).value
            rho_best = min(rho_best, val)
            if best is None or val < best.criterion:
                best = ThetaPoint(x.copy(), val)
            if best.accepted:
                break
        if rho is not None:
            by_rho[float(rho)] = rho_best
        if best is not None and best.accepted:
            break
    if best is None:
        raise LpSolverError("every start failed")
    if not any_ok:
        log.warning("no start converged; returning the best point found")
    return MinimizeResult(best, any_ok or best.accepted, by_rho)


@dataclass(frozen=True)
class ScanConfig:
    max_points: int = 200
    initial_step_sigma: float = 0.1
    step_adapt_up: float = 1.25
    step_adapt_down: float = 0.7
    min_step: float = 1e-3
    rng_seed: int = 0
    chains: int = 1
    max_proposals: int | None = None

    def __post_init__(self):
        if self.max_points < 1 or self.chains < 1:
            raise ValueError("max_points and chains must be positive")
        if not self.initial_step_sigma > 0 or not self.min_step > 0:
            raise ValueError("step sizes must be positive")
        if not self.step_adapt_up > 1 or not 0 < self.step_adapt_down < 1:
            raise ValueError("step_adapt_up must exceed 1 and step_adapt_down lie in (0, 1)")

    @property
    def proposal_cap(self) -> int:
        return self.max_proposals if self.max_proposals is not None else 20 * self.max_points


@dataclass(eq=False)
class ScanResult:
    """Every evaluated point of a scan, plus run metadata."""

    names: list
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def accepted(self) -> np.ndarray:
        pts = [r["theta"] for r in self.records if r["accepted"]]
        return np.array(pts).reshape(len(pts), len(self.names))

    def projections(self) -> dict:
        pts = self.accepted()
        if pts.shape[0] == 0:
            return {}
        return {n: [float(pts[:, j].min()), float(pts[:, j].max())] for j, n in enumerate(self.names)}

    def merge(self, other: "ScanResult") -> "ScanResult":
        if list(other.names) != list(self.names):
            raise ValueError("cannot merge scans over different parameters")
        recs = sorted(self.records + other.records,
                      key=lambda r: (r["chain"], r["step"], tuple(r["theta"])))
        return ScanResult(list(self.names), recs, dict(self.meta))

    def to_jsonl(self) -> str:
        lines = [json.dumps({"meta": self.meta, "names": list(self.names)}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "ScanResult":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = json.loads(lines[0])
        return cls(head["names"], [json.loads(ln) for ln in lines[1:]], head.get("meta", {}))


def _chain(c, seed_vec, stream, target, data, spec, model, region, config):
    rng = np.random.default_rng(stream)
    free = model.free_index
    lo, hi = model.lower_upper()
    theta = seed_vec.copy()
    val = criterion(theta, data, spec, model, region, gradient=False).value
    if val > ZERO_THRESHOLD:
        raise ValueError(f"chain {c}: seed point has criterion {val:.3g} > {ZERO_THRESHOLD}")
    recs = [{"theta": theta.tolist(), "criterion": val, "accepted": True, "chain": c, "step": 0}]
    step = config.initial_step_sigma
    count, proposals = 1, 0
    while count < target and proposals < config.proposal_cap:
        proposals += 1
        prop = theta.copy()
        prop[free] += step * rng.standard_normal(free.size)
        if np.any(prop < lo) or np.any(prop > hi):
            step = max(step * config.step_adapt_down, config.min_step)
            continue
        val = criterion(prop, data, spec, model, region, gradient=False).value
        ok = val <= ZERO_THRESHOLD
        recs.append({"theta": prop.tolist(), "criterion": val, "accepted": ok, "chain": c, "step": proposals})
        if ok:
            theta = prop
            count += 1
            step *= config.step_adapt_up
        else:
            step = max(step * config.step_adapt_down, config.min_step)
    return recs


def scan_set(data: BinnedData, spec: ConceptSpec, model: EntryModel, seeds,
             config: ScanConfig, region: CcpRegion | None = None, workers: int = 1) -> ScanResult:
    """Random-walk scan of the accepted set from one or more accepted seed points.

    Chain ``c`` starts at ``seeds[c % len(seeds)]`` and draws from its own
    stream spawned from ``config.rng_seed``.  Each chain stops after
    contributing its share of ``max_points`` accepted points (seed included)
    or after ``max_proposals`` proposals.
    """
    if isinstance(seeds, (np.ndarray, EntryGameTheta)) and np.ndim(model.vector(seeds)) == 1:
        seeds = [seeds]
    seeds = [model.vector(s) for s in seeds]
    streams = np.random.SeedSequence(config.rng_seed).spawn(config.chains)
    base, extra = divmod(config.max_points, config.chains)
    targets = [base + (c < extra) for c in range(config.chains)]
    jobs = [(c, seeds[c % len(seeds)], streams[c], max(targets[c], 1)) for c in range(config.chains)]
    run = lambda j: _chain(*j, data, spec, model, region, config)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    meta = {
        "concept": spec.concept,
        "info": spec.label,
        "alpha": None if region is None else region.alpha,
        "grid_n": model.grid_n,
        "free": list(model.free),
        "zero_threshold": ZERO_THRESHOLD,
        "config": {k: getattr(config, k) for k in config.__dataclass_fields__},
    }
    return ScanResult(model.names, [r for p in parts for r in p], meta)
