"""Forward simulation of dual-output spatial-fringe density profiles.

Each run produces a 1D vertical column-density profile containing both
interferometer outputs: two Gaussian envelopes, each modulated by a sinusoid
at the common fringe wavenumber, plus configurable shot-to-shot noise.
"""

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .constants import MICROGAL
from .phases import (
    BraggOrder,
    DetuningRamp,
    DualTiming,
    LaserConfig,
    Ordering,
    PhysicalState,
    SequenceTiming,
    interior_reference_correction,
    open_mz_phase,
    wrap_phase,
)
from .tides import TideModel, tide_at

MIN_SAMPLES_PER_FRINGE = 8


class GridTooCoarse(Exception):
    """Raised when the position grid undersamples the fringe period."""


@dataclass(frozen=True)
class FringeModelParams:
    """Parameters of the dual-output fringe model.

    The model evaluated on a grid z is

        offset + sum_i amp_i * exp(-(z - center_i)^2 / (2 sigma_i^2))
                       * (1 - contrast_i * sin(k_fringe*(z - z0) - phase_i))

    for i in {ref, sig}.  ``z0`` is the shared phase-reference position; it is
    a configuration constant, not a fitted quantity.
    """

    amp_ref: float  # atoms/m
    amp_sig: float  # atoms/m
    center_ref: float  # m
    center_sig: float  # m
    sigma_ref: float  # m
    sigma_sig: float  # m
    contrast_ref: float
    contrast_sig: float
    offset: float  # atoms/m
    phase_ref: float  # rad
    phase_sig: float  # rad
    fringe_wavenumber: float  # rad/m
    z0: float  # m

    def __post_init__(self):
        if self.amp_ref < 0.0 or self.amp_sig < 0.0:
            raise ValueError("amplitudes must be >= 0")
        if self.sigma_ref <= 0.0 or self.sigma_sig <= 0.0:
            raise ValueError("envelope widths must be > 0")
        for c in (self.contrast_ref, self.contrast_sig):
            if not 0.0 <= c <= 1.0:
                raise ValueError("contrasts must lie in [0, 1]")
        if self.fringe_wavenumber <= 0.0:
            raise ValueError("fringe_wavenumber must be > 0")

    def replace(self, **kwargs) -> "FringeModelParams":
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class NoiseModel:
    """Shot-to-shot noise configuration for the synthesizer.

    ``sigma_detect`` is the per-sample additive density noise std expressed as
    a fraction of ``amp_sig``.  ``pixel_drift_rate``/``pixel_jitter``/
    ``pixel_offset`` displace the camera phase reference z0; the mirror phase
    noise hits the signal interferometer only.
    """

    sigma_v0: float = 0.0  # m/s
    sigma_detect: float = 0.0  # fraction of amp_sig
    pixel_drift_rate: float = 0.0  # m per second of wall clock
    pixel_jitter: float = 0.0  # m per shot
    mirror_phase_sigma: float = 0.0  # rad per shot, signal arm only
    pixel_offset: float = 0.0  # m, constant reference displacement
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("sigma_v0", "sigma_detect", "pixel_jitter", "mirror_phase_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(eq=False)
class DensityProfile:
    """1D vertical atomic density samples on a uniform position grid."""

    z_grid: np.ndarray  # m, uniformly spaced
    density: np.ndarray  # atoms/m
    run_index: int = 0
    timestamp: float = 0.0  # s

    def __post_init__(self):
        self.z_grid = np.asarray(self.z_grid, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.z_grid.ndim != 1 or self.z_grid.size < 2:
            raise ValueError("z_grid must be a 1D array with >= 2 samples")
        if self.density.shape != self.z_grid.shape:
            raise ValueError("density and z_grid shapes differ")
        steps = np.diff(self.z_grid)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("z_grid spacing must be constant")
        if not np.all(np.isfinite(self.density)):
            raise ValueError("density must be finite")

    @property
    def z_step(self) -> float:
        return float(self.z_grid[1] - self.z_grid[0])


@dataclass(frozen=True)
class DualScenario:
    """Complete description of one simulated dual-interferometer campaign."""

    laser: LaserConfig
    orders: tuple[BraggOrder, BraggOrder]  # (signal, reference)
    dual: DualTiming
    ramps: tuple[DetuningRamp, DetuningRamp]  # (signal, reference)
    state: PhysicalState  # baseline gravity; v0 is the mean release velocity
    fringe_defaults: FringeModelParams
    noise: NoiseModel
    gravity_signal: TideModel | None = None
    shot_period: float = 12.0  # s
    grid_start: float = 0.0  # m
    grid_step: float = 6.45e-6  # m, camera pixel size
    grid_samples: int = 1036

    def __post_init__(self):
        if self.shot_period <= 0.0:
            raise ValueError("shot_period must be > 0")
        if self.grid_step <= 0.0 or self.grid_samples < 2:
            raise ValueError("invalid grid specification")

    def g_estimate(self) -> float:
        """Gravity estimate implied by the shared chirp rate (m/s^2)."""
        return self.ramps[0].g_estimate(self.laser)


@dataclass(frozen=True)
class RunTruth:
    """Per-run ground truth logged alongside each synthesized profile."""

    run_index: int
    timestamp: float  # s
    v0: float  # m/s, drawn shot value
    phi_sig_true: float  # rad, unwrapped, incl. mirror noise
    phi_ref_true: float  # rad, unwrapped
    g_true: float  # m/s^2 at this shot
    z0_shift: float  # m, camera reference displacement


def fringe_wavenumber(
    laser: LaserConfig, order: BraggOrder, timing: SequenceTiming
) -> float:
    """Spatial frequency of the output fringes, 2*n*k*delta_t/t_drop (rad/m)."""
    if timing.t_drop <= 0.0:
        raise ValueError("t_drop must be > 0")
    return 2.0 * order.n * laser.wavenumber_k * timing.delta_t / timing.t_drop


def make_grid(start: float, step: float, n: int) -> np.ndarray:
    """Uniform position grid of n samples starting at ``start`` (m)."""
    if step <= 0.0 or n < 2:
        raise ValueError("need step > 0 and n >= 2")
    return start + step * np.arange(n, dtype=float)


def fringe_model(params: FringeModelParams, z: np.ndarray) -> np.ndarray:
    """Evaluate the noiseless dual-output fringe model on positions z."""
    z = np.asarray(z, dtype=float)
    carrier = params.fringe_wavenumber * (z - params.z0)
    out = np.full_like(z, params.offset)
    for amp, center, sigma, contrast, phase in (
        (params.amp_ref, params.center_ref, params.sigma_ref,
         params.contrast_ref, params.phase_ref),
        (params.amp_sig, params.center_sig, params.sigma_sig,
         params.contrast_sig, params.phase_sig),
    ):
        envelope = amp * np.exp(-0.5 * ((z - center) / sigma) ** 2)
        out += envelope * (1.0 - contrast * np.sin(carrier - phase))
    return out


def synthesize_profile(
    params: FringeModelParams,
    z_grid: np.ndarray,
    run_index: int = 0,
    timestamp: float = 0.0,
) -> DensityProfile:
    """Noiseless profile from the fringe model; the caller should supply a
    grid covering both envelopes to at least +-4 sigma."""
    z_grid = np.asarray(z_grid, dtype=float)
    step = float(z_grid[1] - z_grid[0])
    period = 2.0 * math.pi / params.fringe_wavenumber
    if period / step < MIN_SAMPLES_PER_FRINGE:
        raise GridTooCoarse(
            f"{period / step:.2f} samples per fringe period; "
            f"need >= {MIN_SAMPLES_PER_FRINGE}"
        )
    return DensityProfile(
        z_grid=z_grid,
        density=fringe_model(params, z_grid),
        run_index=run_index,
        timestamp=timestamp,
    )


def _run_rng(seed: int, run_index: int) -> np.random.Generator:
    # Counter-based stream: fully determined by (seed, run_index), so runs can
    # be generated independently and in parallel.
    return np.random.default_rng(np.random.SeedSequence((seed, run_index)))


def _sample_run_truth(
    scenario: DualScenario, run_index: int, wallclock: float
) -> tuple[DensityProfile, RunTruth]:
    noise = scenario.noise
    rng = _run_rng(noise.rng_seed, run_index)
    # Fixed draw order keeps streams comparable across noise settings.
    v0_draw = rng.normal(0.0, noise.sigma_v0)
    mirror = rng.normal(0.0, noise.mirror_phase_sigma)
    jitter = rng.normal(0.0, noise.pixel_jitter)

    g_run = scenario.state.g_true
    if scenario.gravity_signal is not None:
        g_run += MICROGAL * tide_at(scenario.gravity_signal, wallclock)
    state = PhysicalState(g_true=g_run, v0=scenario.state.v0 + v0_draw)

    phi_sig = open_mz_phase(
        scenario.laser, scenario.orders[0], scenario.dual.signal,
        scenario.ramps[0], state,
    )
    if scenario.dual.ordering is Ordering.REFERENCE_INTERIOR:
        phi_sig += interior_reference_correction(
            scenario.laser, scenario.orders, scenario.dual
        )
    phi_sig += mirror
    phi_ref = open_mz_phase(
        scenario.laser, scenario.orders[1], scenario.dual.reference,
        scenario.ramps[1], state,
    )

    z0_shift = noise.pixel_offset + noise.pixel_drift_rate * wallclock + jitter
    defaults = scenario.fringe_defaults
    params = defaults.replace(
        phase_sig=wrap_phase(defaults.phase_sig + phi_sig),
        phase_ref=wrap_phase(defaults.phase_ref + phi_ref),
        z0=defaults.z0 + z0_shift,
    )
    z_grid = scenario_grid(scenario)
    profile = synthesize_profile(params, z_grid, run_index, wallclock)
    if noise.sigma_detect > 0.0:
        profile.density += rng.normal(
            0.0, noise.sigma_detect * defaults.amp_sig, z_grid.size
        )
    truth = RunTruth(
        run_index=run_index,
        timestamp=wallclock,
        v0=state.v0,
        phi_sig_true=phi_sig,
        phi_ref_true=phi_ref,
        g_true=g_run,
        z0_shift=z0_shift,
    )
    return profile, truth


_GRID_CACHE: dict[tuple[float, float, int], np.ndarray] = {}


def scenario_grid(scenario: DualScenario) -> np.ndarray:
    """The camera position grid of the scenario (shared, read-only array)."""
    key = (scenario.grid_start, scenario.grid_step, scenario.grid_samples)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        grid = make_grid(*key)
        grid.setflags(write=False)
        if len(_GRID_CACHE) > 32:
            _GRID_CACHE.clear()
        _GRID_CACHE[key] = grid
    return grid


def sample_run(
    scenario: DualScenario, run_index: int, wallclock: float
) -> DensityProfile:
    """One noisy measurement, deterministic given (rng_seed, run_index)."""
    profile, _ = _sample_run_truth(scenario, run_index, wallclock)
    return profile


def iter_campaign(scenario: DualScenario, n_runs: int):
    """Yield (profile, truth) pairs at timestamps run_index * shot_period."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    for i in range(n_runs):
        yield _sample_run_truth(scenario, i, i * scenario.shot_period)


def simulate_campaign(
    scenario: DualScenario, n_runs: int
) -> tuple[list[DensityProfile], list[RunTruth]]:
    """Materialize a campaign: profiles plus the ground-truth sidecar."""
    profiles: list[DensityProfile] = []
    truths: list[RunTruth] = []
    for profile, truth in iter_campaign(scenario, n_runs):
        profiles.append(profile)
        truths.append(truth)
    return profiles, truths


# ----------------------------------------------------------------------------
# On-disk formats: one CSV per campaign, ground truth as JSON lines.

def write_campaign_csv(path, profiles) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        first = True
        for p in profiles:
            if first:
                cols = ",".join(f"d{i:04d}" for i in range(p.density.size))
                fh.write(f"run_index,timestamp_s,{cols}\n")
                first = False
            samples = ",".join(f"{v:.9e}" for v in p.density)
            fh.write(f"{p.run_index},{p.timestamp!r},{samples}\n")


def load_campaign_csv(path, z_grid: np.ndarray) -> list[DensityProfile]:
    z_grid = np.asarray(z_grid, dtype=float)
    profiles = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("run_index,timestamp_s,"):
            raise ValueError(f"{path}: not a campaign CSV")
        for line in fh:
            fields = line.rstrip("\n").split(",")
            density = np.array(fields[2:], dtype=float)
            profiles.append(
                DensityProfile(
                    z_grid=z_grid,
                    density=density,
                    run_index=int(fields[0]),
                    timestamp=float(fields[1]),
                )
            )
    return profiles


def write_truth_jsonl(path, truths) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in truths:
            fh.write(json.dumps(dataclasses.asdict(t), sort_keys=True) + "\n")


def load_truth_jsonl(path) -> list[RunTruth]:
    truths = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                truths.append(RunTruth(**json.loads(line)))
    return truths
