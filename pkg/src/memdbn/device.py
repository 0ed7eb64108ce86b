"""Empirical memristive synaptic device model.

Conductance update rules for identical potentiation/depression pulses,
cycle-to-cycle and device-to-device variation, yield faults, read noise,
differential pairing, preset parameter sets for published devices, and
least-squares fitting of the model to measured pulse traces.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

# Below this non-linearity the update rule is replaced by its analytic
# linear limit (g_max - g_min) / n; avoids cancellation in 1/(1 - e^-a).
ALPHA_EPS = 1e-6

PAIRING_MODES = ("single", "differential-potentiation-only", "differential-depression-only")
STUCK_STATES = ("none", "stuck-hrs", "stuck-lrs")

POTENTIATE = "potentiate"
DEPRESS = "depress"


class DeviceParameterError(ValueError):
    """Raised for physically inconsistent device parameters."""


class FitError(RuntimeError):
    """Raised when a pulse trace cannot be fitted by the device model."""


@dataclass
class DeviceParams:
    """Parameters of the empirical synaptic update model.

    Conductances are in siemens for the physical presets; any consistent
    unit works. ``read_noise_ref`` selects whether read noise scales with
    the individual device conductance ("device") or with the full
    conductance range ("range").
    """

    g_max: float
    g_min: float
    n_p: int
    n_d: int
    alpha_p: float
    alpha_d: float
    gamma: float = 0.0
    sigma_alpha_p: float = 0.0
    sigma_alpha_d: float = 0.0
    yield_fraction: float = 1.0
    read_noise_frac: float = 0.0
    read_noise_ref: str = "device"
    pairing: str = "single"

    def __post_init__(self):
        if not self.g_max > self.g_min:
            raise DeviceParameterError(f"g_max ({self.g_max}) must exceed g_min ({self.g_min})")
        if self.g_min < 0:
            raise DeviceParameterError(f"g_min ({self.g_min}) must be >= 0")
        if self.n_p < 1 or self.n_d < 1:
            raise DeviceParameterError(f"pulse counts must be >= 1 (n_p={self.n_p}, n_d={self.n_d})")
        if self.alpha_p < 0 or self.alpha_d < 0:
            raise DeviceParameterError("non-linearities must be >= 0")
        if self.gamma < 0 or self.sigma_alpha_p < 0 or self.sigma_alpha_d < 0:
            raise DeviceParameterError("variation parameters must be >= 0")
        if not 0.0 <= self.yield_fraction <= 1.0:
            raise DeviceParameterError(f"yield_fraction ({self.yield_fraction}) outside [0, 1]")
        if self.read_noise_frac < 0:
            raise DeviceParameterError("read_noise_frac must be >= 0")
        if self.read_noise_ref not in ("device", "range"):
            raise DeviceParameterError(f"unknown read_noise_ref {self.read_noise_ref!r}")
        if self.pairing not in PAIRING_MODES:
            raise DeviceParameterError(f"unknown pairing mode {self.pairing!r}")

    @property
    def g_range(self) -> float:
        return self.g_max - self.g_min

    def with_overrides(self, **overrides) -> "DeviceParams":
        """Copy with selected fields replaced (validates the result)."""
        return replace(self, **overrides)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        fields = json.loads(Path(path).read_text())
        return cls(**fields)


@dataclass
class SynapticCell:
    """State of a single memristive device."""

    g: float
    alpha_p_local: float
    alpha_d_local: float
    stuck: str = "none"


@dataclass
class DifferentialPairCell:
    """Two devices whose conductance difference encodes a signed weight."""

    positive: SynapticCell
    negative: SynapticCell

    @property
    def difference(self) -> float:
        return self.positive.g - self.negative.g


@dataclass
class PulseTrace:
    """Recorded conductance after each pulse of a write sequence."""

    pulse_index: list[int] = field(default_factory=list)
    direction: list[str] = field(default_factory=list)
    g_after: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pulse_index)

    def append(self, index: int, direction: str, g_after: float) -> None:
        self.pulse_index.append(index)
        self.direction.append(direction)
        self.g_after.append(g_after)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pulse_index", "direction", "g_after"])
            for row in zip(self.pulse_index, self.direction, self.g_after):
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "PulseTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["pulse_index", "direction", "g_after"]:
                raise ValueError(f"bad pulse trace header in {path}: {header}")
            for row in reader:
                trace.append(int(row[0]), row[1], float(row[2]))
        return trace


def delta_g_potentiation(params: DeviceParams, alpha_p_local, g):
    """Ideal conductance increase for one potentiation pulse.

    Accepts scalars or numpy arrays for ``alpha_p_local`` and ``g``.
    Non-linearities below ALPHA_EPS use the linear limit g_range / n_p.
    """
    g_range = params.g_range
    alpha = np.asarray(alpha_p_local, dtype=float)
    g = np.asarray(g, dtype=float)
    safe_alpha = np.maximum(alpha, ALPHA_EPS)
    full = g_range / -np.expm1(-safe_alpha)
    dg = (full - (g - params.g_min)) * -np.expm1(-safe_alpha / params.n_p)
    dg = np.where(alpha < ALPHA_EPS, g_range / params.n_p, dg)
    return float(dg) if dg.ndim == 0 else dg


def delta_g_depression(params: DeviceParams, alpha_d_local, g):
    """Ideal conductance change (<= 0) for one depression pulse."""
    g_range = params.g_range
    alpha = np.asarray(alpha_d_local, dtype=float)
    g = np.asarray(g, dtype=float)
    safe_alpha = np.maximum(alpha, ALPHA_EPS)
    full = g_range / -np.expm1(-safe_alpha)
    dg = -(full - (params.g_max - g)) * -np.expm1(-safe_alpha / params.n_d)
    dg = np.where(alpha < ALPHA_EPS, -g_range / params.n_d, dg)
    return float(dg) if dg.ndim == 0 else dg


def apply_pulse(cell: SynapticCell, params: DeviceParams, direction: str, rng: np.random.Generator) -> SynapticCell:
    """Apply one blind write pulse to a cell (in place).

    Stuck cells are untouched and consume no random draws. With gamma > 0
    exactly one normal draw is consumed per effective pulse.
    """
    if cell.stuck != "none":
        return cell
    if direction == POTENTIATE:
        dg = delta_g_potentiation(params, cell.alpha_p_local, cell.g)
    elif direction == DEPRESS:
        dg = delta_g_depression(params, cell.alpha_d_local, cell.g)
    else:
        raise ValueError(f"unknown pulse direction {direction!r}")
    if params.gamma > 0:
        dg += params.gamma * abs(dg) * rng.standard_normal()
    cell.g = min(max(cell.g + dg, params.g_min), params.g_max)
    return cell


def sample_cell(params: DeviceParams, rng: np.random.Generator) -> SynapticCell:
    """Draw a fresh device from the family.

    Draw order per cell is fixed: alpha_p normal, alpha_d normal, one
    uniform for the yield fault, one uniform for the initial conductance.
    Faulty cells split evenly between stuck-HRS (g_min) and stuck-LRS
    (g_max); working cells start in the middle 10% conductance band.
    """
    alpha_p = params.alpha_p + params.sigma_alpha_p * rng.standard_normal()
    alpha_d = params.alpha_d + params.sigma_alpha_d * rng.standard_normal()
    alpha_p = max(alpha_p, ALPHA_EPS)
    alpha_d = max(alpha_d, ALPHA_EPS)
    u_fault = rng.random()
    u_init = rng.random()
    fail_prob = 1.0 - params.yield_fraction
    if u_fault < 0.5 * fail_prob:
        return SynapticCell(params.g_min, alpha_p, alpha_d, stuck="stuck-hrs")
    if u_fault < fail_prob:
        return SynapticCell(params.g_max, alpha_p, alpha_d, stuck="stuck-lrs")
    g = initial_band(params)[0] + 0.1 * params.g_range * u_init
    return SynapticCell(g, alpha_p, alpha_d)


def initial_band(params: DeviceParams) -> tuple[float, float]:
    """Conductance band for fresh working cells.

    Single devices start in the middle 10% band so logical weights begin
    near zero. Differential pairs start hugging the rail they update away
    from: both branches low for potentiation-only devices, both high for
    depression-only devices (the pair still encodes a near-zero weight).
    """
    width = 0.1 * params.g_range
    if params.pairing == "differential-potentiation-only":
        return params.g_min, params.g_min + width
    if params.pairing == "differential-depression-only":
        return params.g_max - width, params.g_max
    mid = 0.5 * (params.g_max + params.g_min)
    return mid - 0.5 * width, mid + 0.5 * width


def sample_pair(params: DeviceParams, rng: np.random.Generator) -> DifferentialPairCell:
    """Draw a differential pair (positive branch first)."""
    return DifferentialPairCell(sample_cell(params, rng), sample_cell(params, rng))


def read_conductance(cell: SynapticCell, params: DeviceParams, rng: np.random.Generator, noisy: bool) -> float:
    """Read the cell conductance, optionally with one noise draw."""
    if not noisy or params.read_noise_frac == 0:
        return cell.g
    z = rng.standard_normal()
    if params.read_noise_ref == "range":
        g = cell.g + params.read_noise_frac * params.g_range * z
    else:
        g = cell.g * (1.0 + params.read_noise_frac * z)
    return max(g, 0.0)


def simulate_pulse_train(
    params: DeviceParams,
    pulses,
    rng: np.random.Generator,
    g_start: float | None = None,
) -> PulseTrace:
    """Apply a pulse sequence to one fresh device and record the trace.

    ``g_start`` defaults to g_min when the first pulse potentiates and
    g_max when it depresses, matching a full characterization sweep. The
    device uses the family's nominal non-linearities (no d2d sampling).
    """
    trace = PulseTrace()
    pulses = list(pulses)
    if not pulses:
        return trace
    if g_start is None:
        g_start = params.g_min if pulses[0] == POTENTIATE else params.g_max
    cell = SynapticCell(g_start, params.alpha_p, params.alpha_d)
    for k, direction in enumerate(pulses):
        apply_pulse(cell, params, direction, rng)
        trace.append(k, direction, cell.g)
    return trace


def potentiation_curve(k, g_min, g_max, alpha, n):
    """Closed-form conductance after k potentiation pulses from g_min."""
    k = np.asarray(k, dtype=float)
    alpha = max(float(alpha), ALPHA_EPS)
    return g_min + (g_max - g_min) * np.expm1(-alpha * k / n) / np.expm1(-alpha)


def depression_curve(k, g_min, g_max, alpha, n):
    """Closed-form conductance after k depression pulses from g_max."""
    k = np.asarray(k, dtype=float)
    alpha = max(float(alpha), ALPHA_EPS)
    return g_max - (g_max - g_min) * np.expm1(-alpha * k / n) / np.expm1(-alpha)


@dataclass
class FitConfig:
    """Knobs for fit_device_model."""

    monotone_tol: float = 0.05  # tolerated backward step, fraction of observed range
    max_nfev: int = 2000


@dataclass
class FitResult:
    params: DeviceParams
    residual: float
    n_points: int


def _split_runs(trace: PulseTrace) -> list[tuple[str, np.ndarray]]:
    runs = []
    start = 0
    for i in range(1, len(trace) + 1):
        if i == len(trace) or trace.direction[i] != trace.direction[start]:
            runs.append((trace.direction[start], np.asarray(trace.g_after[start:i], dtype=float)))
            start = i
    return runs


def fit_device_model(trace: PulseTrace, fit_config: FitConfig | None = None) -> FitResult:
    """Least-squares fit of (g_max, g_min, alpha_p, alpha_d) to a trace.

    Pulse counts n_p / n_d are read off the run lengths; the noiseless
    closed-form update curves are fitted to the recorded conductances.
    The trace must hold one full potentiation run and/or one full
    depression run (each run assumed to start at the opposite rail).
    """
    cfg = fit_config or FitConfig()
    if len(trace) < 2:
        raise FitError(f"trace too short to fit ({len(trace)} pulses)")
    runs = _split_runs(trace)
    pot = next((g for d, g in runs if d == POTENTIATE), None)
    dep = next((g for d, g in runs if d == DEPRESS), None)
    if pot is None and dep is None:
        raise FitError("trace contains no potentiation or depression run")

    g_all = np.asarray(trace.g_after, dtype=float)
    span = g_all.max() - g_all.min()
    if span <= 0:
        raise FitError("trace is flat; nothing to fit")
    for name, g, sign in (("potentiation", pot, 1.0), ("depression", dep, -1.0)):
        if g is None or len(g) < 2:
            continue
        backstep = (sign * -np.diff(g)).max()
        if backstep > cfg.monotone_tol * span:
            raise FitError(
                f"{name} run is non-monotone beyond tolerance "
                f"(worst backward step {backstep:.3g} vs allowed {cfg.monotone_tol * span:.3g})"
            )

    n_p = len(pot) if pot is not None else 1
    n_d = len(dep) if dep is not None else 1

    def residuals(theta):
        g_max, g_min, a_p, a_d = theta
        res = []
        if pot is not None:
            k = np.arange(1, len(pot) + 1)
            res.append(potentiation_curve(k, g_min, g_max, a_p, n_p) - pot)
        if dep is not None:
            k = np.arange(1, len(dep) + 1)
            res.append(depression_curve(k, g_min, g_max, a_d, n_d) - dep)
        return np.concatenate(res) / span

    x0 = np.array([g_all.max(), g_all.min(), 1.0, 1.0])
    lo = np.array([g_all.min(), min(0.0, g_all.min()), ALPHA_EPS, ALPHA_EPS])
    hi = np.array([g_all.max() * 2 + span, g_all.max(), 50.0, 50.0])
    sol = least_squares(residuals, x0, bounds=(lo, hi), max_nfev=cfg.max_nfev)
    if not sol.success:
        raise FitError(f"least-squares did not converge: {sol.message}")
    g_max, g_min, a_p, a_d = sol.x
    if not g_max > g_min:
        raise FitError(f"degenerate fit: g_max {g_max} <= g_min {g_min}")
    params = DeviceParams(
        g_max=float(g_max), g_min=float(g_min), n_p=n_p, n_d=n_d,
        alpha_p=float(a_p), alpha_d=float(a_d),
    )
    residual = float(np.sqrt(np.mean(residuals(sol.x) ** 2))) * span
    return FitResult(params=params, residual=residual, n_points=len(trace))


PRESET_NAMES = (
    "sige-epiram", "sige-epiram-b", "sige-epiram-c",
    "pcmo", "ecram", "oxrram", "pcm", "ideal-linear",
)


def device_preset(name: str) -> DeviceParams:
    """Load a named device parameter set from the packaged registry."""
    if name not in PRESET_NAMES:
        raise LookupError(f"unknown device preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    ref = resources.files("memdbn").joinpath(f"presets/{name}.json")
    return DeviceParams(**json.loads(ref.read_text()))


def load_preset_dir(directory) -> dict[str, DeviceParams]:
    """Read every *.json device file in a directory into a registry."""
    registry = {}
    for path in sorted(Path(directory).glob("*.json")):
        registry[path.stem] = DeviceParams.from_json(path)
    return registry
