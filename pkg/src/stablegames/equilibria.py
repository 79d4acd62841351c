"""Linear constraint systems for BSE, BCE and PSNE decision rules.

Decision-rule variables ``sigma[c, a]`` live on *cells*: (state, signal
profile) pairs that occur with positive probability.  Variable ``c * |A| + a``
is the probability of profile ``a`` in cell ``c``.  Every constraint is
multiplied through by the cell probability ``psi(state) * pi(signal | state)``
so that obedience is linear in ``sigma``.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .game_core import BasicGame, DecisionRule, InfoStructure, standard_info
from .lp_backend import LinearProgram, LpSolverError, feasible, solve

__all__ = [
    "CONCEPTS",
    "ConceptSpec",
    "Cells",
    "ConstraintSystem",
    "NoEquilibriumError",
    "cells_for",
    "assemble",
    "obedience_constraints",
    "consistency_constraints",
    "is_rationalizable",
    "find_equilibrium",
    "induced_ccp",
    "check_bse",
    "check_bce",
    "check_psne",
    "check_ree",
    "pure_nash_profiles",
]

CONCEPTS = ("bse", "bce", "psne")


class NoEquilibriumError(RuntimeError):
    """The obedience polytope is empty (e.g. no pure Nash profile at some state)."""


@dataclass(frozen=True)
class ConceptSpec:
    """Solution concept plus baseline information (a kind name or an explicit structure).

    The information structure is ignored for ``psne``, whose decision rules
    depend on the state only.
    """

    concept: str
    info: object = "null"

    def __post_init__(self):
        c = self.concept.lower()
        if c not in CONCEPTS:
            raise ValueError(f"unknown solution concept {self.concept!r}; expected one of {CONCEPTS}")
        object.__setattr__(self, "concept", c)

    def info_for(self, game: BasicGame) -> InfoStructure:
        if isinstance(self.info, InfoStructure):
            if self.info.n_states != game.n_states:
                raise ValueError("information structure and game disagree on the number of states")
            return self.info
        return standard_info(str(self.info), game)

    @property
    def label(self) -> str:
        if self.concept == "psne":
            return "psne"
        name = self.info.name if isinstance(self.info, InfoStructure) else str(self.info)
        return f"{self.concept}-{name}"


@dataclass(frozen=True, eq=False)
class Cells:
    state: np.ndarray
    signal: np.ndarray   # (m, I) signal indices
    weight: np.ndarray   # psi(state) * pi(signal | state) > 0
    group: np.ndarray    # (m, I) what player i conditions on: t_i, or eps_i for PSNE
    n_groups: tuple

    @property
    def size(self) -> int:
        return self.state.size


def cells_for(game: BasicGame, spec: ConceptSpec) -> Cells:
    if spec.concept == "psne":
        if not game.has_private_values():
            raise ValueError("PSNE programs require a private-values game")
        keep = np.flatnonzero(game.prior > 0)
        coord = game.coord_index[keep]
        return Cells(keep, coord, game.prior[keep], coord,
                     tuple(len(p) for p in game.marginal_points))
    info = spec.info_for(game)
    w = game.prior[info.state] * info.prob
    keep = np.flatnonzero(w > 0)
    # merge duplicate (state, signal) entries
    key = np.column_stack([info.state[keep], info.signal[keep]])
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    weight = np.bincount(inv, weights=w[keep], minlength=uniq.shape[0])
    signal = uniq[:, 1:]
    return Cells(uniq[:, 0], signal, weight, signal, tuple(len(s) for s in info.signals))


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Sparse blocks over the decision-rule variables of one game."""

    cells: Cells
    n_profiles: int
    obedience: sparse.csr_matrix    # rows: obedience <= 0
    labels: list
    consistency: sparse.csr_matrix  # rows: induced CCP per profile
    simplex: sparse.csr_matrix      # rows: sum_a sigma[c, a] == 1
    # unsummed obedience entries: row, column and (player, profile, deviation, state)
    ob_row: np.ndarray
    ob_col: np.ndarray
    ob_meta: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.cells.size * self.n_profiles


def _obedience_coo(game: BasicGame, spec: ConceptSpec, cells: Cells, include_identity: bool):
    nA = game.n_profiles
    m = cells.size
    ci = np.arange(m)
    rows, cols, vals, who = [], [], [], []
    labels = []
    r0 = 0
    for i, k_i in enumerate(game.n_actions):
        g = cells.group[:, i]
        G = cells.n_groups[i]
        gains = game.gains[i]
        if spec.concept in ("bse", "psne"):
            blocks = [((a,), int(game.profiles[a, i]), k) for a in range(nA) for k in range(k_i)]
        else:
            blocks = [
                (tuple(np.flatnonzero(game.profiles[:, i] == ai)), ai, k)
                for ai in range(k_i) for k in range(k_i)
            ]
        for prof_set, own, k in blocks:
            if k == own and not include_identity:
                continue
            for a in prof_set:
                rows.append(r0 + g)
                cols.append(ci * nA + a)
                vals.append(cells.weight * gains[a, k, cells.state])
                who.append(np.column_stack([np.full(m, i), np.full(m, a), np.full(m, k), cells.state]))
            tag = prof_set[0] if spec.concept in ("bse", "psne") else own
            labels.extend((spec.concept, i, gi, tag, k) for gi in range(G))
            r0 += G
    return rows, cols, vals, who, labels, r0


def assemble(game: BasicGame, spec: ConceptSpec, phi=None, include_identity: bool = False) -> ConstraintSystem:
    cells = cells_for(game, spec)
    nA = game.n_profiles
    m = cells.size
    n = m * nA
    rows, cols, vals, who, labels, nrows = _obedience_coo(game, spec, cells, include_identity)
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        meta = np.concatenate(who)
    else:
        r = c = np.zeros(0, dtype=int)
        v = np.zeros(0)
        meta = np.zeros((0, 4), dtype=int)
    ob = sparse.coo_matrix((v, (r, c)), shape=(nrows, n)).tocsr()
    ci = np.arange(m)
    cons = sparse.coo_matrix(
        (np.repeat(cells.weight, nA), (np.tile(np.arange(nA), m), np.repeat(ci, nA) * nA + np.tile(np.arange(nA), m))),
        shape=(nA, n),
    ).tocsr()
    simp = sparse.coo_matrix(
        (np.ones(n), (np.repeat(ci, nA), np.arange(n))), shape=(m, n)
    ).tocsr()
    sys_ = ConstraintSystem(cells, nA, ob, labels, cons, simp, r, c, meta)
    if phi is not None:
        _check_phi(phi, nA)
    return sys_


def _check_phi(phi, nA):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (nA,) or np.any(phi < -1e-12) or abs(phi.sum() - 1.0) > 1e-9:
        raise ValueError("phi must be a probability vector over action profiles")
    return phi


def obedience_constraints(game: BasicGame, spec: ConceptSpec, include_identity: bool = False):
    """Obedience rows ``A @ sigma <= 0`` with one label per row.

    Labels are ``(concept, player, group, profile_or_own_action, deviation)``.
    """
    s = assemble(game, spec, include_identity=include_identity)
    return s.obedience, s.labels


def consistency_constraints(game: BasicGame, spec: ConceptSpec, phi):
    """Rows ``C @ sigma == phi`` tying the induced profile distribution to ``phi``."""
    phi = _check_phi(phi, game.n_profiles)
    s = assemble(game, spec)
    return s.consistency, phi


def membership_program(system: ConstraintSystem, phi) -> LinearProgram:
    n = system.n_vars
    A_eq = sparse.vstack([system.consistency, system.simplex]).tocsr()
    b_eq = np.concatenate([phi, np.ones(system.simplex.shape[0])])
    return LinearProgram(
        np.zeros(n), A_ub=system.obedience, b_ub=np.zeros(system.obedience.shape[0]),
        A_eq=A_eq, b_eq=b_eq, lower=np.zeros(n), upper=np.ones(n),
    )


def is_rationalizable(game: BasicGame, spec: ConceptSpec, phi) -> bool:
    """Whether some decision rule meets obedience and reproduces ``phi`` exactly."""
    phi = _check_phi(phi, game.n_profiles)
    return feasible(membership_program(assemble(game, spec), phi))


def pure_nash_profiles(game: BasicGame, s: int, tol: float = 0.0) -> list[int]:
    return [a for a in range(game.n_profiles) if game.is_pure_nash(a, s, tol)]


def _rule(cells: Cells, probs: np.ndarray) -> DecisionRule:
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return DecisionRule(cells.state, cells.signal, probs)


def find_equilibrium(game: BasicGame, spec: ConceptSpec, selection_seed: int = 0,
                     selection: str = "random") -> DecisionRule:
    """An equilibrium decision rule picked by a seeded selection device.

    ``selection="random"`` minimizes a random linear objective over the
    obedience polytope (a reproducible stand-in for an arbitrary selection
    rule).  ``selection="uniform"`` (PSNE only) mixes uniformly over the pure
    Nash profiles of each state, which is the symmetric selection for
    symmetric games.
    """
    cells = cells_for(game, spec)
    nA = game.n_profiles
    if selection == "uniform":
        if spec.concept != "psne":
            raise ValueError("uniform selection is defined for PSNE only")
        probs = np.zeros((cells.size, nA))
        for r, s in enumerate(cells.state):
            ne = pure_nash_profiles(game, int(s))
            if not ne:
                raise NoEquilibriumError(f"no pure-strategy Nash profile at state {int(s)}")
            probs[r, ne] = 1.0 / len(ne)
        return _rule(cells, probs)
    if selection != "random":
        raise ValueError(f"unknown selection {selection!r}")
    system = assemble(game, spec)
    n = system.n_vars
    rng = np.random.default_rng(selection_seed)
    lp = LinearProgram(
        rng.standard_normal(n), A_ub=system.obedience, b_ub=np.zeros(system.obedience.shape[0]),
        A_eq=system.simplex, b_eq=np.ones(cells.size), lower=np.zeros(n), upper=np.ones(n),
    )
    sol = solve(lp)
    if sol.status == "infeasible":
        raise NoEquilibriumError(f"no {spec.label} decision rule exists for this game")
    if not sol.optimal:
        raise LpSolverError(f"equilibrium search ended with status {sol.status}")
    rule = _rule(cells, sol.primal.reshape(cells.size, nA))
    confirm = {"bse": check_bse, "bce": check_bce}
    ok = check_psne(game, rule) if spec.concept == "psne" else confirm[spec.concept](game, spec.info_for(game), rule)
    if not ok:
        raise LpSolverError("solver returned a rule that fails the direct obedience check")
    return rule


def induced_ccp(game: BasicGame, info: InfoStructure | None, sigma: DecisionRule) -> np.ndarray:
    """Distribution over action profiles induced by ``sigma``."""
    out = np.zeros(game.n_profiles)
    if info is None:
        for s, p in zip(sigma.state, sigma.probs):
            out += game.prior[s] * p
        return out
    rows = sigma.lookup()
    for s, t, pr in zip(info.state, info.signal, info.prob):
        w = game.prior[s] * pr
        if w > 0:
            out += w * sigma.probs[rows[(int(s), tuple(int(v) for v in t))]]
    return out


# Direct-summation checkers.  They walk the joint distribution explicitly and
# read payoffs straight from the tensor, sharing no code with the LP assembly.

def _obedience_sums(game: BasicGame, info: InfoStructure, sigma: DecisionRule, public: bool) -> dict:
    rows = sigma.lookup()
    acc: dict = defaultdict(float)
    for s, t, pr in zip(info.state, info.signal, info.prob):
        w = game.prior[s] * pr
        if w <= 0:
            continue
        key = (int(s), tuple(int(v) for v in t))
        if key not in rows:
            raise ValueError(f"decision rule is undefined at positive-probability cell {key}")
        row = sigma.probs[rows[key]]
        for a, prof in enumerate(game.profiles):
            if row[a] == 0:
                continue
            for i, k_i in enumerate(game.n_actions):
                here = game.payoff[i, a, s]
                for k in range(k_i):
                    dev = list(prof)
                    dev[i] = k
                    gain = game.payoff[i, game.profile_index(dev), s] - here
                    cond = a if public else int(prof[i])
                    acc[(i, key[1][i], cond, k)] += w * row[a] * gain
    return acc


def check_bse(game: BasicGame, info: InfoStructure, sigma: DecisionRule, tol: float = 1e-8) -> bool:
    """Obedience given own signal and the publicly observed full profile."""
    return all(v <= tol for v in _obedience_sums(game, info, sigma, public=True).values())


def check_bce(game: BasicGame, info: InfoStructure, sigma: DecisionRule, tol: float = 1e-8) -> bool:
    """Obedience given own signal and own recommended action only."""
    return all(v <= tol for v in _obedience_sums(game, info, sigma, public=False).values())


def check_psne(game: BasicGame, sigma: DecisionRule, tol: float = 1e-8) -> bool:
    """Every profile played with positive weight is a pure Nash profile at its state."""
    for s, row in zip(sigma.state, sigma.probs):
        for a in range(game.n_profiles):
            mass = game.prior[s] * row[a]
            if mass <= 0:
                continue
            for i in range(game.num_players):
                if mass * np.max(game.gains[i][a, :, s]) > tol:
                    return False
    return True


def check_ree(game: BasicGame, info: InfoStructure, delta: DecisionRule, tol: float = 1e-8) -> bool:
    """Rational-expectations condition for an outcome function ``delta`` (signal-measurable)."""
    if not delta.is_outcome_function():
        raise ValueError("an outcome function may not depend on the state beyond the signals")
    return check_bse(game, info, delta, tol)
