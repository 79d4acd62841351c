"""Simultaneous confidence regions for conditional choice probabilities.

Each bin gets equal-width intervals ``phi_hat +/- z(beta / 4) / (2 sqrt(n))``
(Fitzpatrick-Scott), and the per-bin level ``beta`` is Sidak-corrected so the
product over independent bins covers with probability at least ``1 - alpha``.
"""
from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import BinnedData
from .discretize import normal_quantile


# the coverage guarantee 1 - beta needs beta at or below this level
FS_BETA_LIMIT = 0.032

__all__ = [
    "CcpRegion",
    "FS_BETA_LIMIT",
    "upper_quantile",
    "sidak_beta",
    "fs_halfwidth",
    "fs_region",
    "fs_coverage_bound",
    "coverage_mc",
    "coverage_table",
    "coverage_csv",
]


def upper_quantile(tau):
    """``z(tau)``: the point with upper-tail probability ``tau`` under N(0, 1)."""
    return -normal_quantile(tau)


def sidak_beta(alpha: float, num_bins: int) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if num_bins == 1:
        return float(alpha)
    # 1 - (1 - alpha)^(1/k) without cancellation
    return float(-np.expm1(np.log1p(-alpha) / num_bins))


def fs_halfwidth(n, beta: float):
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise ValueError("every bin needs at least one observation")
    return upper_quantile(beta / 4.0) / (2.0 * np.sqrt(n))


def fs_coverage_bound(beta: float) -> float:
    """Asymptotic per-bin coverage lower bound of the equal-width intervals.

    ``1 - beta`` for ``beta <= 0.032``; ``6 Phi(3 z(beta/4) / sqrt(8)) - 5`` on
    ``[0.032, 0.3]``.  Only a diagnostic: regions always use the equal-width
    construction.
    """
    if beta <= FS_BETA_LIMIT:
        return 1.0 - beta
    if beta <= 0.3:
        return float(6.0 * ndtr(3.0 * upper_quantile(beta / 4.0) / np.sqrt(8.0)) - 5.0)
    raise ValueError("no coverage bound is available for beta > 0.3")


@dataclass(frozen=True, eq=False)
class CcpRegion:
    """Per-bin, per-profile box ``lower <= phi <= upper`` (not truncated to [0, 1])."""

    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    beta: float
    center: np.ndarray | None = None

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_2d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("region bounds must have matching shapes with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, phi) -> bool:
        phi = np.atleast_2d(phi)
        return bool(np.all(phi >= self.lower) and np.all(phi <= self.upper))

    def clipped(self):
        """Bounds intersected with [0, 1], as imposed inside the programs."""
        return np.clip(self.lower, 0.0, 1.0), np.clip(self.upper, 0.0, 1.0)


def fs_region(data: BinnedData, alpha: float) -> CcpRegion:
    counts = data.counts
    if np.any(counts < 1):
        raise ValueError("confidence regions need n_obs >= 1 in every bin; drop empty bins first")
    beta = sidak_beta(alpha, data.n_bins)
    if beta > FS_BETA_LIMIT:
        if beta <= 0.3:
            detail = f"asymptotic per-bin coverage is only guaranteed down to {fs_coverage_bound(beta):.4f}"
        else:
            detail = "no asymptotic per-bin coverage bound is available"
        warnings.warn(f"per-bin level {beta:.4f} exceeds {FS_BETA_LIMIT}; {detail}", stacklevel=2)
    hw = fs_halfwidth(counts, beta)[:, None]
    return CcpRegion(data.phi - hw, data.phi + hw, alpha, beta, data.phi.copy())


def _coverage_block(seed_seq, trials, num_bins, n, hw, n_outcomes):
    rng = np.random.default_rng(seed_seq)
    u = rng.random((trials, num_bins, n_outcomes))
    phi = u / u.sum(axis=2, keepdims=True)
    draws = rng.multinomial(n, phi)
    phi_hat = draws / n
    inside = np.all(np.abs(phi_hat - phi) <= hw, axis=(1, 2))
    return int(inside.sum())


def coverage_mc(num_bins: int, n_per_bin: int, alpha: float, trials: int, seed,
                n_outcomes: int = 4, block: int = 2000, workers: int = 1) -> float:
    """Monte Carlo coverage of the Sidak-corrected region over random true CCPs.

    True CCPs are normalized uniform vectors, redrawn every trial.  Trials are
    split into fixed-size blocks with their own spawned RNG streams, so the
    result depends on ``seed`` only, not on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    beta = sidak_beta(alpha, num_bins)
    hw = float(fs_halfwidth(n_per_bin, beta))
    sizes = [block] * (trials // block) + ([trials % block] if trials % block else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(s, k, num_bins, n_per_bin, hw, n_outcomes) for s, k in zip(streams, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            hits = list(ex.map(lambda a: _coverage_block(*a), args))
    else:
        hits = [_coverage_block(*a) for a in args]
    return sum(hits) / trials


def coverage_table(bin_counts, sample_sizes, alphas, trials: int, seed: int) -> list[dict]:
    rows = []
    for ai, alpha in enumerate(alphas):
        for bi, nb in enumerate(bin_counts):
            for si, n in enumerate(sample_sizes):
                cell_seed = [seed, ai, bi, si]
                cov = coverage_mc(nb, n, alpha, trials, cell_seed)
                rows.append({"alpha": alpha, "num_bins": nb, "n": n, "coverage": cov})
    return rows


def coverage_csv(rows: list[dict], header_lines=()) -> str:
    """Rows ``N_X``, columns ``n``, one panel per alpha."""
    out = io.StringIO()
    for line in header_lines:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    alphas = sorted({r["alpha"] for r in rows}, reverse=True)
    for alpha in alphas:
        panel = [r for r in rows if r["alpha"] == alpha]
        ns = sorted({r["n"] for r in panel})
        w.writerow([f"alpha={alpha:g}"] + [f"n={n}" for n in ns])
        for nb in sorted({r["num_bins"] for r in panel}):
            cells = {r["n"]: r["coverage"] for r in panel if r["num_bins"] == nb}
            w.writerow([nb] + [f"{cells[n]:.4f}" if n in cells else "" for n in ns])
    return out.getvalue()
