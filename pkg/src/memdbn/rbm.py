"""One restricted Boltzmann machine layer in mixed-signal form: crossbar
Gibbs sampling, ternary contrastive-divergence computation, and a signed
counter array that issues blind write pulses when a cell's accumulated
CD reaches the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossbar import CrossbarArray, ACTIVATION_MODES


@dataclass
class GibbsSample:
    """States from one CD-1 alternation: v -> h -> v' -> h'."""

    v: np.ndarray
    h: np.ndarray
    v_prime: np.ndarray
    h_prime: np.ndarray


class CdCounterArray:
    """Signed per-cell counters gating blind weight-update pulses.

    Counts move by at most 1 per accumulation, so with a flush after
    every sample they reach exactly +/-cd_th before resetting to zero.
    ``write_counts`` tallies pulses issued per logical cell.
    """

    def __init__(self, m: int, n: int, cd_th: int):
        if cd_th < 1:
            raise ValueError(f"cd_th must be >= 1, got {cd_th}")
        self.m = m
        self.n = n
        self.cd_th = cd_th
        self.counts = np.zeros((m, n), dtype=np.int32)
        self.write_counts = np.zeros((m, n), dtype=np.int64)

    def accumulate(self, cd):
        """Add a ternary CD matrix; return the cells due for a pulse as
        (rows, cols, signs) in row-major order, counters already reset."""
        cd = np.asarray(cd)
        if cd.shape != (self.m, self.n):
            raise ValueError(f"CD shape {cd.shape} != counter shape ({self.m}, {self.n})")
        if cd.size and np.abs(cd).max() > 1:
            raise ValueError("CD entries must be ternary (-1, 0, +1)")
        self.counts += cd
        flush = np.abs(self.counts) >= self.cd_th
        if not flush.any():
            return (np.empty(0, dtype=int),) * 3
        rows, cols = np.nonzero(flush)
        signs = np.sign(self.counts[rows, cols]).astype(np.int8)
        self.counts[rows, cols] = 0
        self.write_counts[rows, cols] += 1
        return rows, cols, signs


def compute_cd(sample: GibbsSample):
    """Ternary contrastive divergence v (x) h - v' (x) h'."""
    v = np.asarray(sample.v).astype(np.int8)
    h = np.asarray(sample.h).astype(np.int8)
    vp = np.asarray(sample.v_prime).astype(np.int8)
    hp = np.asarray(sample.h_prime).astype(np.int8)
    if v.shape != vp.shape or h.shape != hp.shape:
        raise ValueError("Gibbs sample state lengths disagree")
    return v[:, None] * h[None, :] - vp[:, None] * hp[None, :]


def reconstruction_error(v, v_prime) -> float:
    """Euclidean distance between an input and its reconstruction."""
    v = np.asarray(v, dtype=float)
    vp = np.asarray(v_prime, dtype=float)
    if v.shape != vp.shape:
        raise ValueError(f"shape mismatch {v.shape} vs {vp.shape}")
    return float(np.linalg.norm(vp - v))


class RbmLayer:
    """Crossbar plus CD counter array; the trainable unit of the DBN."""

    def __init__(self, array: CrossbarArray, cd_th: int, activation_mode: str = "ideal-sigmoid"):
        if activation_mode not in ACTIVATION_MODES:
            raise ValueError(f"unknown activation mode {activation_mode!r}")
        self.array = array
        self.counters = CdCounterArray(array.m, array.n, cd_th)
        self.activation_mode = activation_mode

    @property
    def m(self) -> int:
        return self.array.m

    @property
    def n(self) -> int:
        return self.array.n

    def _noisy(self) -> bool:
        return self.array.params.read_noise_frac > 0

    def sample_hidden(self, v, rng):
        """One forward VMM + stochastic binarization."""
        currents = self.array.forward_currents(v, self._noisy(), rng)
        i_ref = self.array.reference_current(v)
        return self.array.sample_output(currents, i_ref, self.activation_mode, rng)

    def sample_visible(self, h, rng):
        """One backward VMM + stochastic binarization."""
        currents = self.array.backward_currents(h, self._noisy(), rng)
        i_ref = self.array.reference_current(h, side="cols")
        return self.array.sample_output(currents, i_ref, self.activation_mode, rng)

    def gibbs_step(self, v, rng) -> GibbsSample:
        """CD-1 chain: exactly three VMM passes."""
        h = self.sample_hidden(v, rng)
        v_prime = self.sample_visible(h, rng)
        h_prime = self.sample_hidden(v_prime, rng)
        return GibbsSample(v=np.asarray(v, dtype=np.uint8), h=h, v_prime=v_prime, h_prime=h_prime)

    def accumulate_and_flush(self, cd, rng) -> int:
        """Accumulate a ternary CD matrix and fire any due pulses.

        Pulses to stuck cells are still issued and counted; the number of
        pulses issued is returned.
        """
        rows, cols, signs = self.counters.accumulate(cd)
        if rows.size:
            self.array.apply_update_pulses(rows, cols, signs, rng)
        return int(rows.size)

    def train_on_sample(self, v, rng) -> tuple[float, int]:
        """One training presentation; returns (reconstruction error,
        pulses issued)."""
        sample = self.gibbs_step(v, rng)
        cd = compute_cd(sample)
        pulses = self.accumulate_and_flush(cd, rng)
        return reconstruction_error(sample.v, sample.v_prime), pulses
