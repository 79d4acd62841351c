"""Bounds on expected counterfactual outcomes over all equilibria at a parameter.

At a fixed parameter the only restriction on behaviour is obedience, so the
expected value of ``h(a, state)`` ranges over an interval whose endpoints are
two linear programs per bin.  Across a set of parameters the bounds are
united: lowest lower bound, highest upper bound.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import BinnedData
from .equilibria import ConceptSpec, NoEquilibriumError, assemble
from .game_core import BasicGame
from .identify import EntryModel, ScanResult
from .lp_backend import LinearProgram, LpSolverError, solve


__all__ = [
    "Objective",
    "BoundTable",
    "bound_objective",
    "bound_at",
    "policy_experiment",
    "entry_objectives",
    "thin",
]

_KINDS = ("num_entrants", "firm_entry", "no_entry", "constant", "custom")


@dataclass(frozen=True, eq=False)
class Objective:
    """``h(a, state)``; built-in kinds depend on the action profile only.

    ``custom`` takes ``table`` of shape ``(n_profiles,)`` or ``(n_profiles, n_states)``.
    """

    kind: str
    player: int | None = None
    table: np.ndarray | None = None
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "firm_entry" and self.player is None:
            raise ValueError("firm_entry needs a player index")
        if self.kind == "custom" and self.table is None:
            raise ValueError("custom objectives need a table")

    @property
    def name(self) -> str:
        if self.kind == "firm_entry":
            return f"firm{self.player + 1}_entry"
        return self.kind

    def table_for(self, game: BasicGame) -> np.ndarray:
        """``h[a, s]`` matching the game's profiles and states."""
        nA, S = game.n_profiles, game.n_states
        prof = game.profiles
        if self.kind == "num_entrants":
            h = prof.sum(axis=1).astype(float)
        elif self.kind == "firm_entry":
            h = (prof[:, self.player] == 1).astype(float)
        elif self.kind == "no_entry":
            h = np.all(prof == 0, axis=1).astype(float)
        elif self.kind == "constant":
            h = np.full(nA, float(self.value))
        else:
            h = np.asarray(self.table, dtype=float)
        if h.shape == (nA,):
            return np.repeat(h[:, None], S, axis=1)
        if h.shape != (nA, S):
            raise ValueError(f"objective table of shape {h.shape} does not match ({nA}, {S})")
        return h

    def at_ccp(self, phi) -> float | None:
        """Expected value under a two-player binary CCP vector when ``h`` ignores the state."""
        nA = len(phi)
        if nA != 4 or (self.kind == "custom" and np.ndim(self.table) != 1):
            return None
        prof = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])
        if self.kind == "num_entrants":
            h = prof.sum(axis=1)
        elif self.kind == "firm_entry":
            h = prof[:, self.player] == 1
        elif self.kind == "no_entry":
            h = np.all(prof == 0, axis=1)
        elif self.kind == "constant":
            h = np.full(nA, self.value)
        else:
            h = np.asarray(self.table)
        return float(np.asarray(phi) @ h)


def entry_objectives() -> list[Objective]:
    return [Objective("num_entrants"), Objective("firm_entry", 0), Objective("firm_entry", 1),
            Objective("no_entry")]


def _bin_bound(game: BasicGame, spec: ConceptSpec, h: Objective, direction: str) -> float:
    system = assemble(game, spec)
    cells = system.cells
    table = h.table_for(game)
    coef = (cells.weight[:, None] * table[:, cells.state].T).ravel()
    sign = 1.0 if direction == "min" else -1.0
    n = system.n_vars
    lp = LinearProgram(
        sign * coef, A_ub=system.obedience, b_ub=np.zeros(system.obedience.shape[0]),
        A_eq=system.simplex, b_eq=np.ones(cells.size), lower=np.zeros(n), upper=np.ones(n),
    )
    sol = solve(lp)
    if sol.status == "infeasible":
        raise NoEquilibriumError("obedience polytope is empty")
    if not sol.optimal:
        raise LpSolverError(f"bound program ended with status {sol.status}")
    return sign * sol.value


def bound_at(games, weights, spec: ConceptSpec, h: Objective, direction: str) -> float:
    """Weighted bound over bins given the per-bin games; weights are rescaled to sum to one."""
    if direction not in ("min", "max"):
        raise ValueError("direction must be 'min' or 'max'")
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("bin weights must be strictly positive")
    w = w / w.sum()
    total = 0.0
    for k, (g, wk) in enumerate(zip(games, w)):
        try:
            total += wk * _bin_bound(g, spec, h, direction)
        except NoEquilibriumError as exc:
            raise NoEquilibriumError(f"bin {k}: {exc}") from exc
    return float(total)


def bound_objective(theta, spec: ConceptSpec, bins, h: Objective, direction: str,
                    model: EntryModel) -> float:
    """Lower (``min``) or upper (``max``) bound on ``sum_x w_x E[h]`` at ``theta``."""
    bins = bins.bins if isinstance(bins, BinnedData) else list(bins)
    vec = model.vector(theta)
    return bound_at([model.game(vec, b) for b in bins], [b.weight for b in bins], spec, h, direction)


def thin(points: np.ndarray, cap: int | None) -> np.ndarray:
    """Evenly spaced subset of at most ``cap`` rows (all rows when ``cap`` is None)."""
    if cap is None or len(points) <= cap:
        return points
    idx = np.unique(np.linspace(0, len(points) - 1, cap).round().astype(int))
    return points[idx]


@dataclass(eq=False)
class BoundTable:
    objectives: list
    pre: dict = field(default_factory=dict)       # name -> [lo, hi]
    post: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)      # name -> estimate or None
    n_points: int = 0
    excluded: int = 0

    def to_csv(self, header_lines=()) -> str:
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["objective", "data", "pre_lo", "pre_hi", "post_lo", "post_hi"])
        for name in self.objectives:
            d = self.data.get(name)
            w.writerow([name, "" if d is None else f"{d:.6f}",
                        *(f"{v:.6f}" for v in self.pre[name]), *(f"{v:.6f}" for v in self.post[name])])
        return out.getvalue()


def policy_experiment(theta_points, spec: ConceptSpec, model: EntryModel, bins_pre, bins_post,
                      objectives, cap: int | None = None, data: BinnedData | None = None) -> BoundTable:
    """Union over parameters of pre- and post-policy bounds for each objective.

    ``theta_points`` is a :class:`ScanResult` (accepted points are used) or an
    array of parameter vectors.  Parameters at which some bin has no
    equilibrium are excluded with a warning.
    """
    pts = theta_points.accepted() if isinstance(theta_points, ScanResult) else np.atleast_2d(theta_points)
    if len(pts) == 0:
        raise ValueError("no accepted parameter points")
    pts = thin(np.asarray(pts, dtype=float), cap)
    pre = bins_pre.bins if isinstance(bins_pre, BinnedData) else list(bins_pre)
    post = bins_post.bins if isinstance(bins_post, BinnedData) else list(bins_post)
    names = [h.name for h in objectives]
    table = BoundTable(names, {n: [np.inf, -np.inf] for n in names}, {n: [np.inf, -np.inf] for n in names})
    for vec in pts:
        try:
            res = {}
            for regime, bins in (("pre", pre), ("post", post)):
                games = [model.game(vec, b) for b in bins]
                wts = [b.weight for b in bins]
                res[regime] = {h.name: (bound_at(games, wts, spec, h, "min"), bound_at(games, wts, spec, h, "max"))
                               for h in objectives}
        except NoEquilibriumError as exc:
            table.excluded += 1
            warnings.warn(f"excluding parameter {vec.tolist()}: {exc}", stacklevel=2)
            continue
        table.n_points += 1
        for regime in ("pre", "post"):
            slot = getattr(table, regime)
            for n, (lo, hi) in res[regime].items():
                slot[n][0] = min(slot[n][0], lo)
                slot[n][1] = max(slot[n][1], hi)
    if table.n_points == 0:
        raise NoEquilibriumError("every parameter point was excluded")
    if data is not None:
        w = data.weights("count")
        for h in objectives:
            vals = [h.at_ccp(p) for p in data.phi]
            table.data[h.name] = None if any(v is None for v in vals) else float(w @ np.array(vals))
    return table
