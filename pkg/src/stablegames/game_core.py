"""Game primitives: basic games, information structures and decision rules.

Action profiles are enumerated row-major over players (player 1 outermost),
so for two binary players the order is ``(0,0), (0,1), (1,0), (1,1)``.  Every
tensor indexed by profiles follows this order.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "BasicGame",
    "InfoStructure",
    "DecisionRule",
    "EntryGameTheta",
    "CovariateBin",
    "INFO_KINDS",
    "build_entry_game",
    "standard_info",
    "deviation_gain",
    "expand_with_public_signal",
    "profile_labels",
]

INFO_KINDS = ("complete", "private", "one_player", "null")
_INFO_ALIASES = {"1p": "one_player", "onep": "one_player", "one-player": "one_player"}

PROB_TOL = 1e-12


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BasicGame:
    """Players, finite action sets, a finite state grid, a prior and payoffs.

    ``states`` holds one row per state with a coordinate for each player and
    ``payoff[i, a, s]`` is player ``i``'s utility at profile ``a`` in state ``s``.
    Payoffs must depend on the state only through the player's own coordinate
    unless ``private_values=False`` is passed explicitly.
    """

    actions: tuple
    states: np.ndarray
    prior: np.ndarray
    payoff: np.ndarray
    private_values: bool = True

    def __post_init__(self):
        actions = tuple(tuple(a) for a in self.actions)
        if not actions or any(len(a) == 0 for a in actions):
            raise ValueError("every player needs at least one action")
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        prior = np.asarray(self.prior, dtype=float)
        payoff = np.asarray(self.payoff, dtype=float)
        n_prof = int(np.prod([len(a) for a in actions]))
        if states.shape[1] != len(actions):
            raise ValueError("each state needs one coordinate per player")
        if prior.shape != (states.shape[0],):
            raise ValueError("prior length must equal the number of states")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > PROB_TOL:
            raise ValueError("prior must be nonnegative and sum to one")
        if payoff.shape != (len(actions), n_prof, states.shape[0]):
            raise ValueError(
                f"payoff shape {payoff.shape} != (players, profiles, states) = "
                f"{(len(actions), n_prof, states.shape[0])}"
            )
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "prior", _frozen(prior))
        object.__setattr__(self, "payoff", _frozen(payoff))
        if self.private_values and not self.has_private_values():
            raise ValueError(
                "payoffs depend on other players' shocks; pass private_values=False to override"
            )

    @property
    def num_players(self) -> int:
        return len(self.actions)

    @property
    def n_actions(self) -> tuple:
        return tuple(len(a) for a in self.actions)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @cached_property
    def profiles(self) -> np.ndarray:
        """Action-index tuples, one row per profile, in canonical order."""
        return _frozen(list(itertools.product(*[range(k) for k in self.n_actions])), dtype=int)

    @property
    def n_profiles(self) -> int:
        return self.profiles.shape[0]

    def profile_index(self, profile: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(profile), self.n_actions))

    @cached_property
    def coord_index(self) -> np.ndarray:
        """Index of each state's coordinate within that player's sorted marginal support."""
        cols = [np.unique(self.states[:, i], return_inverse=True)[1] for i in range(self.num_players)]
        return _frozen(np.column_stack(cols), dtype=int)

    @cached_property
    def marginal_points(self) -> tuple:
        return tuple(np.unique(self.states[:, i]) for i in range(self.num_players))

    @cached_property
    def deviation_profile(self) -> tuple:
        """``dev[i][a, k]`` is the profile reached when player ``i`` switches to action ``k``."""
        out = []
        for i, k_i in enumerate(self.n_actions):
            dev = np.empty((self.n_profiles, k_i), dtype=int)
            for a, prof in enumerate(self.profiles):
                p = list(prof)
                for k in range(k_i):
                    p[i] = k
                    dev[a, k] = self.profile_index(p)
            dev.setflags(write=False)
            out.append(dev)
        return tuple(out)

    @cached_property
    def gains(self) -> tuple:
        """``gains[i][a, k, s]``: gain to ``i`` from switching to ``k`` at profile ``a``, state ``s``."""
        out = []
        for i in range(self.num_players):
            dev = self.deviation_profile[i]
            g = self.payoff[i][dev] - self.payoff[i][:, None, :]
            g.setflags(write=False)
            out.append(g)
        return tuple(out)

    def has_private_values(self, atol: float = 0.0) -> bool:
        """Audit: states agreeing in coordinate ``i`` give player ``i`` identical payoff rows."""
        for i in range(self.num_players):
            idx = np.unique(self.states[:, i], return_inverse=True)[1]
            ref = np.zeros((self.n_profiles, idx.max() + 1))
            ref[:, idx] = self.payoff[i]
            if np.max(np.abs(ref[:, idx] - self.payoff[i]), initial=0.0) > atol:
                return False
        return True

    def is_pure_nash(self, a: int, s: int, tol: float = 0.0) -> bool:
        return all(np.max(self.gains[i][a, :, s]) <= tol for i in range(self.num_players))

    def to_dict(self) -> dict:
        return {
            "players": self.num_players,
            "actions": [list(a) for a in self.actions],
            "states": self.states.tolist(),
            "prior": self.prior.tolist(),
            "payoff": self.payoff.tolist(),
            "private_values": self.private_values,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasicGame":
        return cls(
            tuple(tuple(a) for a in d["actions"]),
            np.asarray(d["states"], dtype=float),
            np.asarray(d["prior"], dtype=float),
            np.asarray(d["payoff"], dtype=float),
            private_values=d.get("private_values", True),
        )


def profile_labels(game: BasicGame) -> list[str]:
    """``"00"``, ``"01"``... for single-character action labels, else ``"a-b"`` joins."""
    labels = []
    for prof in game.profiles:
        parts = [str(game.actions[i][k]) for i, k in enumerate(prof)]
        labels.append("".join(parts) if all(len(p) == 1 for p in parts) else "-".join(parts))
    return labels


@dataclass(frozen=True, eq=False)
class InfoStructure:
    """Signal sets and a state-conditional distribution over signal profiles.

    The distribution is stored sparsely: entry ``k`` says that in state
    ``state[k]`` the signal profile ``signal[k]`` (signal indices per player)
    occurs with probability ``prob[k]``.
    """

    signals: tuple
    state: np.ndarray
    signal: np.ndarray
    prob: np.ndarray
    n_states: int
    name: str = "custom"

    def __post_init__(self):
        signals = tuple(tuple(s) for s in self.signals)
        state = np.asarray(self.state, dtype=int)
        signal = np.asarray(self.signal, dtype=int).reshape(state.size, len(signals))
        prob = np.asarray(self.prob, dtype=float)
        if prob.shape != state.shape or np.any(prob < 0):
            raise ValueError("signal probabilities must be nonnegative, one per entry")
        if state.size and (state.min() < 0 or state.max() >= self.n_states):
            raise ValueError("entry refers to an unknown state")
        for i, s in enumerate(signals):
            if signal.size and (signal[:, i].min() < 0 or signal[:, i].max() >= len(s)):
                raise ValueError(f"signal index out of range for player {i}")
        totals = np.bincount(state, weights=prob, minlength=self.n_states)
        if np.max(np.abs(totals - 1.0)) > PROB_TOL:
            raise ValueError("signal distribution must sum to one in every state")
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "state", _frozen(state, int))
        object.__setattr__(self, "signal", _frozen(signal, int))
        object.__setattr__(self, "prob", _frozen(prob))

    @property
    def num_players(self) -> int:
        return len(self.signals)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "signals": [list(s) for s in self.signals],
            "n_states": self.n_states,
            "table": [
                [int(s), [int(t) for t in sig], float(p)]
                for s, sig, p in zip(self.state, self.signal, self.prob)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InfoStructure":
        table = d["table"]
        return cls(
            tuple(tuple(s) for s in d["signals"]),
            [row[0] for row in table],
            [row[1] for row in table],
            [row[2] for row in table],
            int(d["n_states"]),
            d.get("name", "custom"),
        )


def dump_json(game: BasicGame, info: InfoStructure | None = None) -> str:
    doc = {"game": game.to_dict()}
    if info is not None:
        doc["info"] = info.to_dict()
    return json.dumps(doc)


def load_json(text: str):
    doc = json.loads(text)
    game = BasicGame.from_dict(doc["game"])
    info = InfoStructure.from_dict(doc["info"]) if "info" in doc else None
    return game, info


def standard_info(kind: str, game: BasicGame) -> InfoStructure:
    """Degenerate information structures of the entry-game literature.

    ``complete``: everybody sees the state; ``private``: each player sees her own
    shock; ``one_player``: player 1 sees her shock, the rest see nothing;
    ``null``: nobody sees anything.
    """
    kind = _INFO_ALIASES.get(kind.lower(), kind.lower())
    n, I = game.n_states, game.num_players
    states = np.arange(n)
    coord = game.coord_index
    zeros = np.zeros(n, dtype=int)
    if kind == "complete":
        signals = tuple(tuple(range(n)) for _ in range(I))
        sig = np.column_stack([states] * I)
    elif kind == "private":
        signals = tuple(tuple(game.marginal_points[i].tolist()) for i in range(I))
        sig = coord.copy()
    elif kind == "one_player":
        signals = (tuple(game.marginal_points[0].tolist()),) + tuple((0,) for _ in range(I - 1))
        sig = np.column_stack([coord[:, 0]] + [zeros] * (I - 1))
    elif kind == "null":
        signals = tuple((0,) for _ in range(I))
        sig = np.column_stack([zeros] * I)
    else:
        raise ValueError(f"unknown information structure {kind!r}; expected one of {INFO_KINDS}")
    return InfoStructure(signals, states, sig, np.ones(n), n, kind)


@dataclass(frozen=True, eq=False)
class DecisionRule:
    """Distribution over action profiles for each positive-probability (state, signal) cell.

    An outcome function is a decision rule whose rows coincide across states
    sharing a signal profile; see :meth:`is_outcome_function`.
    """

    state: np.ndarray
    signal: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        state = np.asarray(self.state, dtype=int)
        probs = np.asarray(self.probs, dtype=float)
        signal = np.asarray(self.signal, dtype=int).reshape(state.size, -1)
        if probs.ndim != 2 or probs.shape[0] != state.size:
            raise ValueError("probs must have one row per cell")
        if np.any(probs < -1e-9) or np.max(np.abs(probs.sum(axis=1) - 1.0), initial=0.0) > 1e-9:
            raise ValueError("each row of a decision rule must be a probability distribution")
        object.__setattr__(self, "state", _frozen(state, int))
        object.__setattr__(self, "signal", _frozen(signal, int))
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def n_cells(self) -> int:
        return self.state.size

    def lookup(self) -> dict:
        return {(int(s), tuple(int(x) for x in t)): r for r, (s, t) in enumerate(zip(self.state, self.signal))}

    def is_outcome_function(self, tol: float = 1e-12) -> bool:
        rows: dict = {}
        for t, p in zip(map(tuple, self.signal), self.probs):
            if t in rows and np.max(np.abs(rows[t] - p)) > tol:
                return False
            rows.setdefault(t, p)
        return True


@dataclass(frozen=True)
class EntryGameTheta:
    """Entry-game parameters: per-player covariate coefficients, spillovers and shock correlation."""

    beta: np.ndarray
    kappa: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        kappa = np.asarray(self.kappa, dtype=float).reshape(-1)
        if beta.shape[0] != kappa.size:
            raise ValueError("need one coefficient vector and one spillover per player")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must lie in [0, 1)")
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "kappa", _frozen(kappa))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def n_covariates(self) -> int:
        return self.beta.shape[1]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta.ravel(), self.kappa, [self.rho]])

    @classmethod
    def from_vector(cls, vec, n_covariates: int, num_players: int = 2) -> "EntryGameTheta":
        vec = np.asarray(vec, dtype=float)
        nb = n_covariates * num_players
        if vec.size != nb + num_players + 1:
            raise ValueError("parameter vector has the wrong length")
        return cls(vec[:nb].reshape(num_players, n_covariates), vec[nb:nb + num_players], float(vec[-1]))

    @staticmethod
    def names(covariates: Sequence[str], num_players: int = 2) -> list[str]:
        out = [f"beta{i + 1}_{c}" for i in range(num_players) for c in covariates]
        out += [f"kappa{i + 1}" for i in range(num_players)]
        return out + ["rho"]


@dataclass(frozen=True)
class CovariateBin:
    x: np.ndarray
    weight: float = 1.0
    count: int = 0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("bin weights must be strictly positive")
        if self.count < 0:
            raise ValueError("bin counts must be nonnegative")
        object.__setattr__(self, "x", _frozen(np.asarray(self.x, dtype=float)))


def entry_payoff_shift(theta: EntryGameTheta, x) -> np.ndarray:
    """Deterministic part of each player's entry payoff, ``beta_i @ x_i``."""
    x = np.asarray(x.x if isinstance(x, CovariateBin) else x, dtype=float)
    I = theta.kappa.size
    xs = np.broadcast_to(x, (I, x.shape[-1])) if x.ndim == 1 else x
    if xs.shape != theta.beta.shape:
        raise ValueError(f"covariates of shape {x.shape} do not match coefficients {theta.beta.shape}")
    return np.einsum("ik,ik->i", theta.beta, xs)


def build_entry_game(theta: EntryGameTheta, x, grid) -> BasicGame:
    """Two-player entry game: ``u_i = a_i (beta_i @ x_i + kappa_i a_j + eps_i)``.

    ``x`` is a :class:`CovariateBin` or a covariate vector shared by both
    players (or an ``(I, k)`` array of player-specific covariates).
    """
    if theta.kappa.size != 2 or grid.num_players != 2:
        raise ValueError("the entry game is defined for two players")
    shift = entry_payoff_shift(theta, x)
    states = grid.joint_states
    payoff = np.zeros((2, 4, states.shape[0]))
    for a, (a1, a2) in enumerate(itertools.product((0, 1), (0, 1))):
        payoff[0, a] = a1 * (shift[0] + theta.kappa[0] * a2 + states[:, 0])
        payoff[1, a] = a2 * (shift[1] + theta.kappa[1] * a1 + states[:, 1])
    return BasicGame(((0, 1), (0, 1)), states, grid.prior, payoff)


def deviation_gain(game: BasicGame, i: int, a, a_dev: int, eps_index: int) -> float:
    """Gain to player ``i`` from unilaterally switching to ``a_dev`` at profile ``a``."""
    a_idx = a if isinstance(a, (int, np.integer)) else game.profile_index(a)
    return float(game.gains[i][a_idx, a_dev, eps_index])


def expand_with_public_signal(game: BasicGame, info: InfoStructure, sigma: DecisionRule):
    """Expansion in which the decision rule becomes a commonly observed recommendation.

    Player ``i``'s expanded signal is ``(t_i, a)`` where ``a`` is drawn from
    ``sigma(.|state, t)``; the returned outcome function plays the recommended
    profile with certainty.  Zero-probability (state, signal) cells, where
    ``sigma`` is undefined, send the recommendation to profile 0.
    """
    nA = game.n_profiles
    rows = sigma.lookup()
    st, sig, pr = [], [], []
    for s, t, p in zip(info.state, info.signal, info.prob):
        key = (int(s), tuple(int(v) for v in t))
        rec = sigma.probs[rows[key]] if key in rows else np.eye(nA)[0]
        for a in np.flatnonzero(rec > 0):
            st.append(s)
            sig.append([int(ti) * nA + int(a) for ti in t])
            pr.append(p * rec[a])
    signals = tuple(tuple(itertools.product(labels, range(nA))) for labels in info.signals)
    expanded = InfoStructure(signals, st, sig, pr, info.n_states, f"{info.name}+public")
    cell_state, cell_signal, probs = [], [], []
    seen = set()
    for s, t, p in zip(expanded.state, expanded.signal, expanded.prob):
        key = (int(s), tuple(int(v) for v in t))
        if p <= 0 or game.prior[s] <= 0 or key in seen:
            continue
        seen.add(key)
        cell_state.append(s)
        cell_signal.append(t)
        probs.append(np.eye(nA)[int(t[0]) % nA])
    delta = DecisionRule(
        np.asarray(cell_state, dtype=int),
        np.asarray(cell_signal, dtype=int).reshape(len(cell_state), game.num_players),
        np.asarray(probs).reshape(len(cell_state), nA),
    )
    return expanded, delta
