"""Memristive crossbar array: binary-input VMM with reference-column
subtraction, stochastic binarization of the output currents, and blind
update-pulse routing (including differential pairs).

Cell state is stored as conductance planes of shape (k, m, n): one plane
for single-device cells, two for differential pairs (plane 0 = positive
branch). Per-device update non-linearities, stuck flags and write counts
share that layout.
"""

from __future__ import annotations

import struct

import numpy as np

from . import device as dev
from .device import DeviceParams, POTENTIATE, DEPRESS

ACTIVATION_MODES = ("gaussian-comparator", "ideal-sigmoid", "deterministic")

# sigma of the comparator noise, in logical pre-activation units, for
# which the probit excitation curve best tracks the logistic sigmoid:
# sigmoid(x) ~ Phi(x / 1.702).
SIGMOID_MATCH_SIGMA = 1.702

CHECKPOINT_MAGIC = b"MDBN"
CHECKPOINT_VERSION = 1
_PAIRING_FLAGS = {
    "single": 0,
    "differential-potentiation-only": 1,
    "differential-depression-only": 2,
}
_PAIRING_FROM_FLAG = {v: k for k, v in _PAIRING_FLAGS.items()}


class CheckpointFormatError(ValueError):
    """Raised for malformed checkpoint bytes; carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _as_bits(v, length, what):
    v = np.asarray(v)
    if v.shape != (length,):
        raise ValueError(f"{what} has shape {v.shape}, expected ({length},)")
    if v.size and v.max() > 1:
        raise ValueError(f"{what} is not binary (max {v.max()})")
    return v.astype(np.float64, copy=False)


class CrossbarArray:
    """m-by-n grid of synaptic cells plus a reference column.

    All cells belong to one DeviceParams family. Forward reads drive rows
    with the binary input at ``v_read`` volts and sum column currents;
    backward reads are the exact transpose over the same conductances.
    """

    def __init__(
        self,
        m: int,
        n: int,
        params: DeviceParams,
        rng: np.random.Generator,
        g_ref: float | None = None,
        v_read: float = 1.0,
        weight_range: float = 4.0,
        i_noise_sigma: float | None = None,
    ):
        if m < 1 or n < 1:
            raise ValueError(f"array dimensions must be positive, got {m}x{n}")
        self.m = m
        self.n = n
        self.params = params
        self.v_read = v_read
        self.is_pair = params.pairing != "single"
        k = 2 if self.is_pair else 1

        if self.is_pair:
            # reference carries the negative branches' common mode; the
            # effective signed weight is the branch difference
            self.g_ref = params.g_min if g_ref is None else g_ref
            self.weight_scale = weight_range / params.g_range
        else:
            self.g_ref = 0.5 * (params.g_max + params.g_min) if g_ref is None else g_ref
            self.weight_scale = 2.0 * weight_range / params.g_range
        if not params.g_min <= self.g_ref <= params.g_max:
            raise ValueError(f"g_ref {self.g_ref} outside [{params.g_min}, {params.g_max}]")
        if i_noise_sigma is None:
            i_noise_sigma = SIGMOID_MATCH_SIGMA * self.v_read / self.weight_scale
        self.i_noise_sigma = i_noise_sigma

        # draw order per device: alpha_p plane, alpha_d plane, fault plane,
        # init plane (row-major within each plane, branch planes in order)
        shape = (k, m, n)
        self.alpha_p = np.maximum(
            params.alpha_p + params.sigma_alpha_p * rng.standard_normal(shape), dev.ALPHA_EPS)
        self.alpha_d = np.maximum(
            params.alpha_d + params.sigma_alpha_d * rng.standard_normal(shape), dev.ALPHA_EPS)
        fail = 1.0 - params.yield_fraction
        u_fault = rng.random(shape)
        self.stuck = np.zeros(shape, dtype=np.int8)
        self.stuck[u_fault < 0.5 * fail] = 1   # stuck-HRS -> g_min
        self.stuck[(u_fault >= 0.5 * fail) & (u_fault < fail)] = 2  # stuck-LRS -> g_max
        lo, _hi = dev.initial_band(params)
        self.g = lo + 0.1 * params.g_range * rng.random(shape)
        self.g[self.stuck == 1] = params.g_min
        self.g[self.stuck == 2] = params.g_max
        self.write_counts = np.zeros(shape, dtype=np.int64)

    # ------------------------------------------------------------------ reads

    def _noisy_planes(self, planes, rng):
        frac = self.params.read_noise_frac
        if self.params.read_noise_ref == "range":
            noisy = planes + frac * self.params.g_range * rng.standard_normal(planes.shape)
        else:
            noisy = planes * (1.0 + frac * rng.standard_normal(planes.shape))
        return np.maximum(noisy, 0.0)

    def _effective_rows(self, rows, noisy, rng):
        """Effective conductance for the given row subset, one fresh noise
        draw per physical device read when noisy."""
        planes = self.g[:, rows, :]
        if noisy and self.params.read_noise_frac > 0:
            planes = self._noisy_planes(planes, rng)
        if self.is_pair:
            return planes[0] - planes[1] + self.g_ref
        return planes[0]

    def forward_currents(self, v, noisy_read: bool = False, rng=None):
        """Column currents for binary row drive v (length m)."""
        bits = _as_bits(v, self.m, "input vector")
        active = np.flatnonzero(bits)
        if active.size == 0:
            return np.zeros(self.n)
        return self.v_read * self._effective_rows(active, noisy_read, rng).sum(axis=0)

    def backward_currents(self, h, noisy_read: bool = False, rng=None):
        """Row currents for binary column drive h (length n); exact
        transpose of the forward read over the same conductances."""
        bits = _as_bits(h, self.n, "input vector")
        active = np.flatnonzero(bits)
        if active.size == 0:
            return np.zeros(self.m)
        planes = self.g[:, :, active]
        if noisy_read and self.params.read_noise_frac > 0:
            planes = self._noisy_planes(planes, rng)
        if self.is_pair:
            eff = planes[0] - planes[1] + self.g_ref
        else:
            eff = planes[0]
        return self.v_read * eff.sum(axis=1)

    def reference_current(self, v, side: str = "rows"):
        """Current of the reference column under the same drive; ``side``
        selects the expected vector length (rows -> m, cols -> n)."""
        bits = _as_bits(v, self.m if side == "rows" else self.n, "input vector")
        return float(bits.sum() * self.v_read * self.g_ref)

    def activation(self, currents, i_ref):
        """Logical pre-activation: current difference rescaled so that
        logical weights are the unit."""
        return (np.asarray(currents, dtype=float) - i_ref) * self.weight_scale / self.v_read

    def sample_output(self, currents, i_ref, mode: str, rng=None):
        """Binarize output currents against the reference current.

        gaussian-comparator: one fresh normal draw per output per call;
        ideal-sigmoid: one uniform per output; deterministic: no draws.
        """
        currents = np.asarray(currents, dtype=float)
        diff = currents - i_ref
        if mode == "deterministic":
            return (diff >= 0).astype(np.uint8)
        if mode == "gaussian-comparator":
            noise = rng.normal(0.0, self.i_noise_sigma, size=currents.shape)
            return (diff >= noise).astype(np.uint8)
        if mode == "ideal-sigmoid":
            p = sigmoid(self.activation(currents, i_ref))
            return (rng.random(currents.shape) < p).astype(np.uint8)
        raise ValueError(f"unknown activation mode {mode!r}")

    # ------------------------------------------------------------- batch reads

    def forward_currents_batch(self, V, noisy_read: bool = False, rng=None):
        """Forward currents for a whole batch V of shape (B, m).

        Read noise is applied at the summed-current level using the exact
        per-output noise variance (sum of independent per-device reads);
        the rare below-zero clamp of a single device read is neglected.
        """
        V = np.asarray(V, dtype=np.float64)
        if self.is_pair:
            eff = self.g[0] - self.g[1] + self.g_ref
        else:
            eff = self.g[0]
        currents = self.v_read * (V @ eff)
        frac = self.params.read_noise_frac
        if noisy_read and frac > 0:
            if self.params.read_noise_ref == "range":
                var = (frac * self.params.g_range) ** 2 * V.sum(axis=1, keepdims=True)
                var = var * (2.0 if self.is_pair else 1.0) * np.ones_like(currents)
            else:
                sq = (self.g ** 2).sum(axis=0)
                var = frac ** 2 * (V @ sq)
            currents = currents + self.v_read * np.sqrt(var) * rng.standard_normal(currents.shape)
        return currents

    def reference_currents_batch(self, V):
        V = np.asarray(V, dtype=np.float64)
        return V.sum(axis=1) * self.v_read * self.g_ref

    def sample_output_batch(self, currents, i_ref, mode: str, rng=None):
        diff = np.asarray(currents, dtype=float) - np.asarray(i_ref, dtype=float)[:, None]
        if mode == "deterministic":
            return (diff >= 0).astype(np.uint8)
        if mode == "gaussian-comparator":
            return (diff >= rng.normal(0.0, self.i_noise_sigma, size=diff.shape)).astype(np.uint8)
        if mode == "ideal-sigmoid":
            p = sigmoid(diff * self.weight_scale / self.v_read)
            return (rng.random(diff.shape) < p).astype(np.uint8)
        raise ValueError(f"unknown activation mode {mode!r}")

    # ---------------------------------------------------------------- updates

    def _route(self, sign: int) -> tuple[int, str]:
        """Map a signed weight-update request to (plane, pulse direction)."""
        if self.params.pairing == "differential-potentiation-only":
            return (0, POTENTIATE) if sign > 0 else (1, POTENTIATE)
        if self.params.pairing == "differential-depression-only":
            return (1, DEPRESS) if sign > 0 else (0, DEPRESS)
        return (0, POTENTIATE) if sign > 0 else (0, DEPRESS)

    def _pulse_plane(self, plane, rows, cols, direction, rng):
        """Apply identical blind pulses to the given cells of one plane.

        Stuck devices receive the pulse (counted) but do not change and
        consume no noise draw; non-stuck devices consume one draw each
        when gamma > 0. Cells are processed in the order given.
        """
        self.write_counts[plane, rows, cols] += 1
        ok = self.stuck[plane, rows, cols] == 0
        if not ok.any():
            return
        r, c = rows[ok], cols[ok]
        g = self.g[plane, r, c]
        if direction == POTENTIATE:
            dg = dev.delta_g_potentiation(self.params, self.alpha_p[plane, r, c], g)
        else:
            dg = dev.delta_g_depression(self.params, self.alpha_d[plane, r, c], g)
        if self.params.gamma > 0:
            dg = dg + self.params.gamma * np.abs(dg) * rng.standard_normal(dg.shape)
        self.g[plane, r, c] = np.clip(g + dg, self.params.g_min, self.params.g_max)

    def apply_update_pulses(self, rows, cols, signs, rng):
        """Issue one signed update pulse per listed cell.

        Positive requests are processed before negative ones; within each
        group cells keep their given order (callers pass row-major order).
        """
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        signs = np.asarray(signs)
        for sign in (1, -1):
            sel = signs == sign
            if not sel.any():
                continue
            plane, direction = self._route(sign)
            self._pulse_plane(plane, rows[sel], cols[sel], direction, rng)

    def apply_update_pulse(self, i: int, j: int, direction: str, rng):
        """Single-cell update: potentiate/depress the logical weight."""
        if not (0 <= i < self.m and 0 <= j < self.n):
            raise IndexError(f"cell ({i}, {j}) outside {self.m}x{self.n} array")
        sign = 1 if direction == POTENTIATE else -1
        self.apply_update_pulses(np.array([i]), np.array([j]), np.array([sign]), rng)

    # ------------------------------------------------------------- inspection

    def logical_weights(self):
        """Signed logical weight matrix w = weight_scale * (G_eff - g_ref)."""
        if self.is_pair:
            return self.weight_scale * (self.g[0] - self.g[1])
        return self.weight_scale * (self.g[0] - self.g_ref)

    def set_logical_weights(self, w):
        """Force conductances to encode the given logical weights (test and
        calibration plumbing; ignores stuck flags)."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.m, self.n):
            raise ValueError(f"weight shape {w.shape} != ({self.m}, {self.n})")
        if self.is_pair:
            mid = 0.5 * (self.params.g_max + self.params.g_min)
            half = 0.5 * w / self.weight_scale
            self.g[0] = np.clip(mid + half, self.params.g_min, self.params.g_max)
            self.g[1] = np.clip(mid - half, self.params.g_min, self.params.g_max)
        else:
            self.g[0] = np.clip(self.g_ref + w / self.weight_scale,
                                self.params.g_min, self.params.g_max)

    def export_conductance_csv(self, path):
        """Conductance planes as CSV (pairs: positive plane, blank line,
        negative plane)."""
        with open(path, "w") as fh:
            for plane in range(self.g.shape[0]):
                np.savetxt(fh, self.g[plane], delimiter=",")
                if plane + 1 < self.g.shape[0]:
                    fh.write("\n")

    # ------------------------------------------------------------- checkpoint

    def write_block(self, fh) -> None:
        """Serialize the cell state: magic, version, m, n, pairing flag,
        row-major float64-LE conductance plane(s), then per plane a
        stuck-HRS bitmap and a stuck-LRS bitmap (little-endian bit order)."""
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIII", CHECKPOINT_VERSION, self.m, self.n,
                             _PAIRING_FLAGS[self.params.pairing]))
        for plane in range(self.g.shape[0]):
            fh.write(self.g[plane].astype("<f8").tobytes())
        for plane in range(self.g.shape[0]):
            for state in (1, 2):
                bits = (self.stuck[plane] == state).reshape(-1)
                fh.write(np.packbits(bits, bitorder="little").tobytes())

    def read_block(self, fh) -> None:
        """Load cell state written by write_block into this array."""
        offset = fh.tell()
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}", offset)
        header = fh.read(16)
        if len(header) < 16:
            raise CheckpointFormatError("truncated block header", fh.tell())
        version, m, n, flag = struct.unpack("<IIII", header)
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported version {version}", offset + 4)
        if (m, n) != (self.m, self.n):
            raise CheckpointFormatError(
                f"block is {m}x{n}, array is {self.m}x{self.n}", offset + 8)
        if _PAIRING_FROM_FLAG.get(flag) != self.params.pairing:
            raise CheckpointFormatError(f"pairing flag {flag} does not match array", offset + 16)
        k = self.g.shape[0]
        for plane in range(k):
            raw = fh.read(8 * m * n)
            if len(raw) < 8 * m * n:
                raise CheckpointFormatError("truncated conductance plane", fh.tell())
            self.g[plane] = np.frombuffer(raw, dtype="<f8").reshape(m, n)
        nbytes = (m * n + 7) // 8
        self.stuck[:] = 0
        for plane in range(k):
            for state in (1, 2):
                raw = fh.read(nbytes)
                if len(raw) < nbytes:
                    raise CheckpointFormatError("truncated stuck bitmap", fh.tell())
                bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                                     count=m * n, bitorder="little").reshape(m, n)
                self.stuck[plane][bits == 1] = state
