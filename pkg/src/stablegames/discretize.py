"""Finite-state approximations of continuous payoff shocks.

Per-player supports are placed at the Kennan quantiles ``F^{-1}((2j-1)/(2N))``;
the joint support is their Cartesian product and correlation is introduced by
reweighting the product grid with a Gaussian copula density.  The multivariate
construction is a heuristic: only the univariate step has an optimality result.
"""
from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse, special

from .lp_backend import LinearProgram, LpSolverError, solve

__all__ = [
    "DiscreteGrid",
    "normal_quantile",
    "kennan_points",
    "copula_log_density",
    "copula_prior",
    "copula_prior_derivative",
    "make_grid",
    "grid_correlation",
    "approximation_error",
]


def normal_quantile(p):
    """Inverse standard normal CDF (shared by the grid and the CCP bands)."""
    return special.ndtri(p)


def kennan_points(n: int, cdf_inverse: Callable | None = None) -> np.ndarray:
    """Equally weighted ``n``-point support: ``cdf_inverse((2j-1)/(2n))``, j=1..n.

    With ``cdf_inverse=None`` the standard normal is used and the points are
    mirrored so that ``x_j == -x_{n+1-j}`` holds exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    probs = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    if cdf_inverse is not None:
        return np.asarray([float(cdf_inverse(p)) for p in probs])
    pts = normal_quantile(probs)
    half = n // 2
    pts[n - half:] = -pts[:half][::-1]
    if n % 2:
        pts[half] = 0.0
    return pts


def _equicorrelation_terms(z: np.ndarray, rho: float):
    # z: (m, I) normal scores; R = (1-rho) I + rho 11'
    dim = z.shape[1]
    denom = 1.0 + (dim - 1) * rho
    logdet = (dim - 1) * np.log1p(-rho) + np.log(denom)
    s = z.sum(axis=1)
    ss = (z * z).sum(axis=1)
    # R^{-1} = (I - rho/denom 11') / (1 - rho)
    quad_inv = (ss - rho / denom * s * s) / (1.0 - rho)
    return logdet, quad_inv, s, ss, denom


def copula_log_density(z: np.ndarray, rho: float) -> np.ndarray:
    """Log density of the equicorrelated Gaussian copula at normal scores ``z``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    logdet, quad_inv, _, ss, _ = _equicorrelation_terms(z, rho)
    return -0.5 * logdet - 0.5 * (quad_inv - ss)


def _joint(points_per_player: Sequence[Sequence[float]]) -> np.ndarray:
    return np.array(list(itertools.product(*points_per_player)), dtype=float)


def _check_rho(rho: float) -> None:
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho!r}")


def copula_prior(points_per_player: Sequence[Sequence[float]], rho: float) -> np.ndarray:
    """Probability weights on the product grid proportional to the copula density.

    Points are taken to be standard-normal shocks, so the normal scores are the
    points themselves.  ``rho == 0`` returns the exactly uniform vector.
    """
    _check_rho(rho)
    z = _joint(points_per_player)
    m = z.shape[0]
    if rho == 0.0:
        return np.full(m, 1.0 / m)
    logw = copula_log_density(z, rho)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def copula_prior_derivative(points_per_player: Sequence[Sequence[float]], rho: float) -> np.ndarray:
    """Derivative of :func:`copula_prior` with respect to ``rho``."""
    _check_rho(rho)
    z = _joint(points_per_player)
    dim = z.shape[1]
    psi = copula_prior(points_per_player, rho)
    _, _, s, ss, denom = _equicorrelation_terms(z, rho)
    dlogdet = -(dim - 1) / (1.0 - rho) + (dim - 1) / denom
    # y = R^{-1} z ; d(z'R^{-1}z)/drho = -(sum(y)^2 - sum(y^2))
    y = (z - (rho / denom) * s[:, None]) / (1.0 - rho)
    ysum = y.sum(axis=1)
    dquad = -(ysum * ysum - (y * y).sum(axis=1))
    dlog = -0.5 * dlogdet - 0.5 * dquad
    return psi * (dlog - psi @ dlog)


@dataclass(frozen=True, eq=False)
class DiscreteGrid:
    """Product grid of per-player shock points with a prior over joint states."""

    per_player_points: tuple
    joint_states: np.ndarray
    prior: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        pts = tuple(np.asarray(p, dtype=float) for p in self.per_player_points)
        for p in pts:
            if p.ndim != 1 or np.any(np.diff(p) <= 0):
                raise ValueError("per-player points must be strictly increasing")
        states = np.asarray(self.joint_states, dtype=float)
        prior = np.asarray(self.prior, dtype=float)
        if states.shape != (int(np.prod([len(p) for p in pts])), len(pts)):
            raise ValueError("joint_states does not match the product of per-player points")
        if prior.shape != (states.shape[0],) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ValueError("prior must be a probability vector over joint states")
        for arr in (states, prior):
            arr.setflags(write=False)
        object.__setattr__(self, "per_player_points", pts)
        object.__setattr__(self, "joint_states", states)
        object.__setattr__(self, "prior", prior)

    @property
    def n_points(self) -> int:
        return len(self.per_player_points[0])

    @property
    def num_players(self) -> int:
        return len(self.per_player_points)

    def prior_derivative(self) -> np.ndarray:
        return copula_prior_derivative(self.per_player_points, self.rho)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "per_player_points": [p.tolist() for p in self.per_player_points],
            "prior": self.prior.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteGrid":
        pts = [np.asarray(p, dtype=float) for p in d["per_player_points"]]
        return cls(tuple(pts), _joint(pts), np.asarray(d["prior"], dtype=float), float(d.get("rho", 0.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteGrid":
        return cls.from_dict(json.loads(text))


@functools.lru_cache(maxsize=256)
def make_grid(n: int, rho: float = 0.0, num_players: int = 2) -> DiscreteGrid:
    """Kennan normal grid with ``n`` points per player and copula weights for ``rho``."""
    pts = kennan_points(n)
    per_player = tuple(pts.copy() for _ in range(num_players))
    return DiscreteGrid(per_player, _joint(per_player), copula_prior(per_player, rho), float(rho))


def grid_correlation(grid: DiscreteGrid) -> float:
    """Correlation between the first two shock coordinates under the grid prior."""
    x, y = grid.joint_states[:, 0], grid.joint_states[:, 1]
    w = grid.prior
    mx, my = w @ x, w @ y
    cov = w @ ((x - mx) * (y - my))
    return float(cov / np.sqrt((w @ (x - mx) ** 2) * (w @ (y - my) ** 2)))


def approximation_error(game, phi) -> float:
    """Smallest uniform relaxation ``t`` making ``phi`` a PSNE-consistent CCP on ``game``.

    Solves ``min t`` subject to every pure-strategy obedience inequality being
    at most ``t`` and every consistency residual lying in ``[-t, t]``.
    """
    from . import equilibria

    phi = np.asarray(phi, dtype=float)
    system = equilibria.assemble(game, equilibria.ConceptSpec("psne"), phi=phi)
    nsig = system.n_vars
    ob = system.obedience
    cons = system.consistency
    # variables: sigma (nsig), t (1)
    tcol = sparse.csr_matrix(-np.ones((ob.shape[0], 1)))
    tcol_c = sparse.csr_matrix(-np.ones((cons.shape[0], 1)))
    A_ub = sparse.vstack([
        sparse.hstack([ob, tcol]),
        sparse.hstack([cons, tcol_c]),
        sparse.hstack([-cons, tcol_c]),
    ]).tocsr()
    b_ub = np.concatenate([np.zeros(ob.shape[0]), phi, -phi])
    A_eq = sparse.hstack([system.simplex, sparse.csr_matrix((system.simplex.shape[0], 1))]).tocsr()
    c = np.zeros(nsig + 1)
    c[-1] = 1.0
    lower = np.zeros(nsig + 1)
    upper = np.concatenate([np.ones(nsig), [np.inf]])
    lp = LinearProgram(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(A_eq.shape[0]), lower=lower, upper=upper)
    sol = solve(lp)
    if sol.status != "optimal":
        raise LpSolverError(f"approximation-error LP ended with status {sol.status}")
    return float(sol.value)
