"""Campaign configuration: defaults, strict INI parsing, and round-tripping.

All physical quantities carry explicit unit suffixes in their key names.
Parsing is strict: every key is required and unknown sections or keys are
rejected, so a config file (or its echo in a manifest) fully determines a
campaign.
"""

import configparser
import io
import math
from dataclasses import dataclass

from .constants import MICROGAL, RB87_D2_WAVELENGTH, RB87_MASS
from .fitting import FitConfig
from .phases import (
    BraggOrder,
    DetuningRamp,
    DualTiming,
    LaserConfig,
    Ordering,
    PhysicalState,
    SequenceTiming,
    scale_factor,
)
from .profiles import DualScenario, FringeModelParams, NoiseModel, fringe_wavenumber
from .tides import TideModel, TideConstituent, CONSTITUENT_PERIODS_H


class ConfigError(Exception):
    """Configuration file is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class AnalyzeOptions:
    moving_average_window: int = 800
    bin_width_s: float = 3600.0
    comparison_scale: str = "instrument"  # scale for signal/reference series
    sources: str = "both"  # both | dual | signal
    closed_mz_enabled: bool = True
    closed_mz_t_s: float = 0.015
    closed_mz_single_shot_ugal: float = 1200.0


@dataclass(frozen=True)
class CampaignConfig:
    scenario: DualScenario
    n_runs: int
    seed: int
    output_dir: str
    fit: FitConfig
    min_convergence: float
    analyze: AnalyzeOptions
    sections: dict  # raw key/value echo for manifests

    def with_seed(self, seed: int) -> "CampaignConfig":
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections["campaign"]["seed"] = repr(int(seed))
        return parse_sections(sections)


# --------------------------------------------------------------------------
# Default campaign: experiment-like timings with a calibrated noise budget.

PAPER_TIMINGS_MS = {
    "t_sig_ms": 70.0,
    "t_ref_ms": 1.0,
    "delta_t_ms": 0.45,
    "t_sep_sig_ms": 8.0,
    "t_sep_ref_ms": 8.05,
    "t_exp_sig_ms": 67.55,  # release to first splitter; makes t_drop = 216 ms
    "t_split_ms": 0.5,
}

DEFAULT_SEED = 20260810


def calibrated_noise_levels(
    laser: LaserConfig,
    order: BraggOrder,
    dual: DualTiming,
    dual_single_shot_ugal: float = 200.0,
    phase_correlation: float = 0.89,
) -> tuple[float, float]:
    """(sigma_v0, mirror_phase_sigma) hitting a target dual single-shot noise
    and signal/reference phase correlation.

    The shared velocity phase n*2k*delta_t*v0 is common mode, so the dual
    phase noise equals the mirror term alone while the correlation fixes the
    common/independent split.
    """
    if not 0.0 < phase_correlation < 1.0:
        raise ValueError("phase_correlation must lie in (0, 1)")
    s_dual = abs(scale_factor(laser, order, dual))
    sigma_mirror = s_dual * dual_single_shot_ugal * MICROGAL
    sigma_common = (
        sigma_mirror * phase_correlation / math.sqrt(1.0 - phase_correlation**2)
    )
    velocity_gain = abs(
        2.0 * order.n * laser.wavenumber_k * dual.signal.delta_t
    )
    return sigma_common / velocity_gain, sigma_mirror


def default_sections() -> dict:
    """The built-in campaign definition as a sections/keys/strings mapping."""
    laser = LaserConfig(2.0 * math.pi / RB87_D2_WAVELENGTH)
    order = BraggOrder(1, 1)
    t = PAPER_TIMINGS_MS
    sig = SequenceTiming(
        t_exp=t["t_exp_sig_ms"] * 1e-3,
        t_interrogation=t["t_sig_ms"] * 1e-3,
        delta_t=t["delta_t_ms"] * 1e-3,
        t_sep=t["t_sep_sig_ms"] * 1e-3,
        t_split=t["t_split_ms"] * 1e-3,
    )
    t_exp_ref = sig.t_drop - (
        2.0 * t["t_ref_ms"] * 1e-3 + t["delta_t_ms"] * 1e-3 + t["t_sep_ref_ms"] * 1e-3
    )
    ref = SequenceTiming(
        t_exp=t_exp_ref,
        t_interrogation=t["t_ref_ms"] * 1e-3,
        delta_t=t["delta_t_ms"] * 1e-3,
        t_sep=t["t_sep_ref_ms"] * 1e-3,
        t_split=t["t_split_ms"] * 1e-3,
    )
    dual = DualTiming(sig, ref, Ordering.EXPERIMENT_OVERLAP)
    sigma_v0, sigma_mirror = calibrated_noise_levels(laser, order, dual)
    return {
        "campaign": {
            "n_runs": "2000",
            "shot_period_s": "12.0",
            "seed": repr(DEFAULT_SEED),
            "output_dir": "campaign_out",
        },
        "laser": {
            "wavelength_m": repr(RB87_D2_WAVELENGTH),
            "atom_mass_kg": repr(RB87_MASS),
        },
        "orders": {
            "n": "1",
            "nbar_signal": "1",
            "nbar_reference": "-5",
        },
        "timing": {
            **{k: repr(v) for k, v in PAPER_TIMINGS_MS.items()},
            "ordering": "experiment_overlap",
        },
        "gravity": {
            "g_true_m_s2": "9.7996",
            "g_estimate_m_s2": "9.7996",
            "v0_mean_m_s": "0.0",
            "v0_estimate_m_s": "0.0",
        },
        "fringe": {
            "amp_sig_per_m": "1.0e9",
            "amp_ref_per_m": "5.6e8",
            "center_sig_mm": "2.2",
            "center_ref_mm": "4.5",
            "sigma_sig_mm": "0.25",
            "sigma_ref_mm": "0.30",
            "contrast_sig": "0.35",
            "contrast_ref": "0.35",
            "offset_per_m": "2.0e7",
            "phase_sig_rad": "0.0",
            "phase_ref_rad": "0.0",
            "z0_mm": "0.0",
            "grid_start_mm": "0.0",
            "grid_step_um": "6.45",
            "grid_samples": "1036",
        },
        "noise": {
            "sigma_v0_m_s": repr(sigma_v0),
            "sigma_detect_frac": "0.01",
            "pixel_drift_rate_m_s": "3.0e-11",
            "pixel_jitter_m": "5.0e-8",
            "mirror_phase_sigma_rad": repr(sigma_mirror),
            "pixel_offset_m": "0.0",
        },
        "tide": {
            "enabled": "true",
            "mean_offset_ugal": "0.0",
            "constituents": "M2:50.0:0.0, O1:30.0:1.3, K1:30.0:2.1",
        },
        "fit": {
            "max_iterations": "60",
            "gradient_tolerance": "1e-10",
            "step_tolerance": "1e-12",
            "min_convergence": "0.90",
        },
        "analyze": {
            "moving_average_window": "800",
            "bin_width_s": "3600.0",
            "comparison_scale": "instrument",
            "sources": "both",
            "closed_mz_enabled": "true",
            "closed_mz_t_ms": "15.0",
            "closed_mz_single_shot_ugal": "1200.0",
        },
    }


# --------------------------------------------------------------------------
# Strict parsing

def _parse_float(sections, section, key):
    raw = sections[section][key]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from None


def _parse_int(sections, section, key):
    raw = sections[section][key]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not an integer: {raw!r}") from None


def _parse_bool(sections, section, key):
    raw = sections[section][key].strip().lower()
    if raw in ("true", "yes", "1", "on"):
        return True
    if raw in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: not a boolean: {raw!r}")


def _parse_constituents(raw: str):
    entries = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(
                f"[tide] constituents: expected name:amplitude_ugal:phase_rad, got {chunk!r}"
            )
        name = parts[0].strip()
        if name not in CONSTITUENT_PERIODS_H:
            raise ConfigError(f"[tide] constituents: unknown constituent {name!r}")
        try:
            entries.append((name, float(parts[1]), float(parts[2])))
        except ValueError:
            raise ConfigError(
                f"[tide] constituents: bad numbers in {chunk!r}"
            ) from None
    return entries


_SCHEMA = {
    "campaign": {"n_runs", "shot_period_s", "seed", "output_dir"},
    "laser": {"wavelength_m", "atom_mass_kg"},
    "orders": {"n", "nbar_signal", "nbar_reference"},
    "timing": set(PAPER_TIMINGS_MS) | {"ordering"},
    "gravity": {"g_true_m_s2", "g_estimate_m_s2", "v0_mean_m_s", "v0_estimate_m_s"},
    "fringe": {
        "amp_sig_per_m", "amp_ref_per_m", "center_sig_mm", "center_ref_mm",
        "sigma_sig_mm", "sigma_ref_mm", "contrast_sig", "contrast_ref",
        "offset_per_m", "phase_sig_rad", "phase_ref_rad", "z0_mm",
        "grid_start_mm", "grid_step_um", "grid_samples",
    },
    "noise": {
        "sigma_v0_m_s", "sigma_detect_frac", "pixel_drift_rate_m_s",
        "pixel_jitter_m", "mirror_phase_sigma_rad", "pixel_offset_m",
    },
    "tide": {"enabled", "mean_offset_ugal", "constituents"},
    "fit": {
        "max_iterations", "gradient_tolerance", "step_tolerance",
        "min_convergence",
    },
    "analyze": {
        "moving_average_window", "bin_width_s", "comparison_scale", "sources",
        "closed_mz_enabled", "closed_mz_t_ms", "closed_mz_single_shot_ugal",
    },
}

_ORDERINGS = {o.value: o for o in Ordering}


def parse_sections(sections: dict) -> CampaignConfig:
    """Validate a sections mapping and build the campaign configuration."""
    for section, keys in _SCHEMA.items():
        if section not in sections:
            raise ConfigError(f"missing section [{section}]")
        present = set(sections[section])
        unknown = present - keys
        if unknown:
            raise ConfigError(f"[{section}]: unknown key(s) {sorted(unknown)}")
        missing = keys - present
        if missing:
            raise ConfigError(f"[{section}]: missing key(s) {sorted(missing)}")
    unknown_sections = set(sections) - set(_SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown section(s) {sorted(unknown_sections)}")

    try:
        laser = LaserConfig(
            2.0 * math.pi / _parse_float(sections, "laser", "wavelength_m"),
            atom_mass=_parse_float(sections, "laser", "atom_mass_kg"),
        )
        orders = (
            BraggOrder(
                _parse_int(sections, "orders", "n"),
                _parse_int(sections, "orders", "nbar_signal"),
            ),
            BraggOrder(
                _parse_int(sections, "orders", "n"),
                _parse_int(sections, "orders", "nbar_reference"),
            ),
        )
        tms = {k: _parse_float(sections, "timing", k) * 1e-3 for k in PAPER_TIMINGS_MS}
        ordering_raw = sections["timing"]["ordering"].strip().lower()
        if ordering_raw not in _ORDERINGS:
            raise ConfigError(
                f"[timing] ordering: expected one of {sorted(_ORDERINGS)}"
            )
        sig = SequenceTiming(
            t_exp=tms["t_exp_sig_ms"],
            t_interrogation=tms["t_sig_ms"],
            delta_t=tms["delta_t_ms"],
            t_sep=tms["t_sep_sig_ms"],
            t_split=tms["t_split_ms"],
        )
        t_exp_ref = sig.t_drop - (
            2.0 * tms["t_ref_ms"] + tms["delta_t_ms"] + tms["t_sep_ref_ms"]
        )
        ref = SequenceTiming(
            t_exp=t_exp_ref,
            t_interrogation=tms["t_ref_ms"],
            delta_t=tms["delta_t_ms"],
            t_sep=tms["t_sep_ref_ms"],
            t_split=tms["t_split_ms"],
        )
        dual = DualTiming(sig, ref, _ORDERINGS[ordering_raw])

        g_est = _parse_float(sections, "gravity", "g_estimate_m_s2")
        v0_est = _parse_float(sections, "gravity", "v0_estimate_m_s")
        ramps = (
            DetuningRamp.resonant(laser, orders[0], g_est, v0_est),
            DetuningRamp.resonant(laser, orders[1], g_est, v0_est),
        )
        state = PhysicalState(
            g_true=_parse_float(sections, "gravity", "g_true_m_s2"),
            v0=_parse_float(sections, "gravity", "v0_mean_m_s"),
        )

        fr = sections["fringe"]
        k_fringe = fringe_wavenumber(laser, orders[0], sig)
        fringe = FringeModelParams(
            amp_ref=_parse_float(sections, "fringe", "amp_ref_per_m"),
            amp_sig=_parse_float(sections, "fringe", "amp_sig_per_m"),
            center_ref=_parse_float(sections, "fringe", "center_ref_mm") * 1e-3,
            center_sig=_parse_float(sections, "fringe", "center_sig_mm") * 1e-3,
            sigma_ref=_parse_float(sections, "fringe", "sigma_ref_mm") * 1e-3,
            sigma_sig=_parse_float(sections, "fringe", "sigma_sig_mm") * 1e-3,
            contrast_ref=_parse_float(sections, "fringe", "contrast_ref"),
            contrast_sig=_parse_float(sections, "fringe", "contrast_sig"),
            offset=_parse_float(sections, "fringe", "offset_per_m"),
            phase_ref=_parse_float(sections, "fringe", "phase_ref_rad"),
            phase_sig=_parse_float(sections, "fringe", "phase_sig_rad"),
            fringe_wavenumber=k_fringe,
            z0=_parse_float(sections, "fringe", "z0_mm") * 1e-3,
        )

        seed = _parse_int(sections, "campaign", "seed")
        noise = NoiseModel(
            sigma_v0=_parse_float(sections, "noise", "sigma_v0_m_s"),
            sigma_detect=_parse_float(sections, "noise", "sigma_detect_frac"),
            pixel_drift_rate=_parse_float(sections, "noise", "pixel_drift_rate_m_s"),
            pixel_jitter=_parse_float(sections, "noise", "pixel_jitter_m"),
            mirror_phase_sigma=_parse_float(
                sections, "noise", "mirror_phase_sigma_rad"
            ),
            pixel_offset=_parse_float(sections, "noise", "pixel_offset_m"),
            rng_seed=seed,
        )

        tide = None
        if _parse_bool(sections, "tide", "enabled"):
            tide = TideModel(
                tuple(
                    TideConstituent.named(n, a, p)
                    for n, a, p in _parse_constituents(sections["tide"]["constituents"])
                ),
                mean_offset_ugal=_parse_float(sections, "tide", "mean_offset_ugal"),
            )

        scenario = DualScenario(
            laser=laser,
            orders=orders,
            dual=dual,
            ramps=ramps,
            state=state,
            fringe_defaults=fringe,
            noise=noise,
            gravity_signal=tide,
            shot_period=_parse_float(sections, "campaign", "shot_period_s"),
            grid_start=_parse_float(sections, "fringe", "grid_start_mm") * 1e-3,
            grid_step=_parse_float(sections, "fringe", "grid_step_um") * 1e-6,
            grid_samples=_parse_int(sections, "fringe", "grid_samples"),
        )

        n_runs = _parse_int(sections, "campaign", "n_runs")
        if n_runs < 1:
            raise ConfigError("[campaign] n_runs must be >= 1")
        min_conv = _parse_float(sections, "fit", "min_convergence")
        if not 0.0 <= min_conv <= 1.0:
            raise ConfigError("[fit] min_convergence must lie in [0, 1]")
        fit_cfg = FitConfig(
            max_iterations=_parse_int(sections, "fit", "max_iterations"),
            gradient_tolerance=_parse_float(sections, "fit", "gradient_tolerance"),
            step_tolerance=_parse_float(sections, "fit", "step_tolerance"),
        )
        comparison_scale = sections["analyze"]["comparison_scale"].strip().lower()
        if comparison_scale not in ("instrument", "own"):
            raise ConfigError("[analyze] comparison_scale must be instrument or own")
        sources = sections["analyze"]["sources"].strip().lower()
        if sources not in ("both", "dual", "signal"):
            raise ConfigError("[analyze] sources must be both, dual or signal")
        analyze = AnalyzeOptions(
            moving_average_window=_parse_int(sections, "analyze", "moving_average_window"),
            bin_width_s=_parse_float(sections, "analyze", "bin_width_s"),
            comparison_scale=comparison_scale,
            sources=sources,
            closed_mz_enabled=_parse_bool(sections, "analyze", "closed_mz_enabled"),
            closed_mz_t_s=_parse_float(sections, "analyze", "closed_mz_t_ms") * 1e-3,
            closed_mz_single_shot_ugal=_parse_float(
                sections, "analyze", "closed_mz_single_shot_ugal"
            ),
        )
    except ConfigError:
        raise
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc

    echo = {section: dict(sections[section]) for section in _SCHEMA}
    return CampaignConfig(
        scenario=scenario,
        n_runs=n_runs,
        seed=seed,
        output_dir=sections["campaign"]["output_dir"].strip(),
        fit=fit_cfg,
        min_convergence=min_conv,
        analyze=analyze,
        sections=echo,
    )


def default_campaign_config() -> CampaignConfig:
    return parse_sections(default_sections())


def load_config_file(path) -> CampaignConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    sections = {name: dict(parser[name]) for name in parser.sections()}
    return parse_sections(sections)


def render_sections(sections: dict) -> str:
    """Sections mapping as INI text (the inverse of load_config_file)."""
    buf = io.StringIO()
    for section, keys in sections.items():
        buf.write(f"[{section}]\n")
        for key, value in keys.items():
            buf.write(f"{key} = {value}\n")
        buf.write("\n")
    return buf.getvalue()


def paper_scenario(
    seed: int = DEFAULT_SEED,
    tide_enabled: bool = True,
    **noise_overrides,
) -> DualScenario:
    """The default experiment-like scenario, optionally with noise overrides.

    Handy for tests: ``paper_scenario(sigma_v0=0.0, sigma_detect=0.0, ...)``.
    """
    cfg = default_campaign_config()
    scenario = cfg.scenario
    noise_kwargs = {
        "sigma_v0": scenario.noise.sigma_v0,
        "sigma_detect": scenario.noise.sigma_detect,
        "pixel_drift_rate": scenario.noise.pixel_drift_rate,
        "pixel_jitter": scenario.noise.pixel_jitter,
        "mirror_phase_sigma": scenario.noise.mirror_phase_sigma,
        "pixel_offset": scenario.noise.pixel_offset,
        "rng_seed": seed,
    }
    noise_kwargs.update(noise_overrides)
    import dataclasses

    return dataclasses.replace(
        scenario,
        noise=NoiseModel(**noise_kwargs),
        gravity_signal=scenario.gravity_signal if tide_enabled else None,
    )


def quiet_scenario(seed: int = DEFAULT_SEED, tide_enabled: bool = False) -> DualScenario:
    """Noiseless variant of the default scenario (all noise terms zero)."""
    return paper_scenario(
        seed=seed,
        tide_enabled=tide_enabled,
        sigma_v0=0.0,
        sigma_detect=0.0,
        pixel_drift_rate=0.0,
        pixel_jitter=0.0,
        mirror_phase_sigma=0.0,
        pixel_offset=0.0,
    )
