"""Binned conditional choice probabilities and their CSV representation.

A bins file has one row per covariate bin::

    x_<name>,...,phi_00,phi_01,phi_10,phi_11,n_obs

Covariate columns are shared by both players.  ``n_obs == 0`` on every row
marks population (exact CCP) data.  Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from .game_core import CovariateBin

log = logging.getLogger(__name__)

ENTRY_PROFILES = ("00", "01", "10", "11")


@dataclass(frozen=True, eq=False)
class BinnedData:
    covariates: tuple
    bins: tuple
    phi: np.ndarray
    profiles: tuple = ENTRY_PROFILES

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        bins = tuple(self.bins)
        if phi.shape != (len(bins), len(self.profiles)):
            raise ValueError("need one CCP vector per bin with one entry per profile")
        if np.any(phi < -1e-12) or np.max(np.abs(phi.sum(axis=1) - 1.0), initial=0.0) > 1e-9:
            raise ValueError("every CCP row must be a probability vector")
        for b in bins:
            if b.x.size != len(self.covariates):
                raise ValueError("bin covariates do not match the covariate names")
        phi.setflags(write=False)
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "profiles", tuple(self.profiles))

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def counts(self) -> np.ndarray:
        return np.array([b.count for b in self.bins], dtype=int)

    @property
    def total_n(self) -> int:
        return int(self.counts.sum())

    @property
    def population(self) -> bool:
        return self.total_n == 0

    def weights(self, mode: str = "count") -> np.ndarray:
        """Bin weights summing to one: proportional to counts, or equal.

        ``count`` falls back to equal weights for population data.
        """
        if mode not in ("count", "uniform"):
            raise ValueError(f"unknown weights mode {mode!r}")
        if mode == "uniform" or self.population:
            w = np.ones(self.n_bins)
        else:
            w = self.counts.astype(float)
        return w / w.sum()

    def with_weights(self, mode: str = "count") -> "BinnedData":
        w = self.weights(mode)
        bins = tuple(CovariateBin(b.x, float(wi), b.count) for b, wi in zip(self.bins, w))
        return BinnedData(self.covariates, bins, self.phi, self.profiles)

    def drop_empty(self) -> "BinnedData":
        """Remove bins with no observations (sample data only)."""
        keep = [k for k, b in enumerate(self.bins) if b.count > 0]
        if len(keep) < self.n_bins:
            log.warning("dropping %d bin(s) with zero observations", self.n_bins - len(keep))
        if not keep:
            raise ValueError("every bin is empty")
        return BinnedData(self.covariates, [self.bins[k] for k in keep], self.phi[keep], self.profiles)

    def to_csv(self, header_lines=()) -> str:
        out = io.StringIO()
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"x_{c}" for c in self.covariates] + [f"phi_{p}" for p in self.profiles] + ["n_obs"])
        for b, row in zip(self.bins, self.phi):
            w.writerow([repr(float(v)) for v in b.x] + [repr(float(v)) for v in row] + [b.count])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BinnedData":
        rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.reader(rows)
        header = [h.strip() for h in next(reader)]
        xcols = [k for k, h in enumerate(header) if h.startswith("x_")]
        pcols = [k for k, h in enumerate(header) if h.startswith("phi_")]
        if "n_obs" not in header or not pcols:
            raise ValueError("bins CSV needs phi_<profile> columns and an n_obs column")
        ncol = header.index("n_obs")
        bins, phi = [], []
        for line in reader:
            if not line or not any(c.strip() for c in line):
                continue
            bins.append(CovariateBin([float(line[k]) for k in xcols], 1.0, int(float(line[ncol]))))
            phi.append([float(line[k]) for k in pcols])
        if not bins:
            raise ValueError("bins CSV has no data rows")
        data = cls(
            tuple(header[k][2:] for k in xcols), bins, np.asarray(phi),
            tuple(header[k][4:] for k in pcols),
        )
        # a mix of empty and nonempty bins cannot take count weights until drop_empty()
        mixed = 0 < np.count_nonzero(data.counts) < data.n_bins
        return data.with_weights("uniform" if mixed else "count")

    def save(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv(header_lines))

    @classmethod
    def load(cls, path) -> "BinnedData":
        with open(path, newline="") as fh:
            return cls.from_csv(fh.read())
