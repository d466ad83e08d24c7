"""Dual open atom interferometer gravimetry: forward simulation of
spatial-fringe density profiles and the full inverse pipeline (fringe
fitting, dual-phase differencing, gravity inversion, stability analysis).
"""

__version__ = "0.1.0"

from .constants import (
    HBAR,
    MICROGAL,
    RB87_D2_WAVELENGTH,
    RB87_D2_WAVENUMBER,
    RB87_MASS,
    recoil_frequency,
)
from .phases import (
    BraggOrder,
    DetuningRamp,
    DualTiming,
    LaserConfig,
    Ordering,
    PhysicalState,
    SequenceTiming,
    ZeroScaleFactor,
    detuning_at,
    dual_phase,
    dual_phase_interior,
    interior_reference_correction,
    invert_gravity,
    open_mz_phase,
    open_scale_factor,
    scale_factor,
    wrap_phase,
)
from .profiles import (
    DensityProfile,
    DualScenario,
    FringeModelParams,
    GridTooCoarse,
    NoiseModel,
    RunTruth,
    fringe_model,
    fringe_wavenumber,
    iter_campaign,
    make_grid,
    sample_run,
    scenario_grid,
    simulate_campaign,
    synthesize_profile,
)
from .fitting import (
    BoundsViolation,
    FitConfig,
    FitRecord,
    FitResult,
    InsufficientData,
    NotConverged,
    SingularJacobian,
    TwoCloudsNotFound,
    calibrate_magnification,
    fit_campaign,
    fit_dual_profile,
    initial_guess,
    quadrature_demod,
)
from .series import (
    GravitySeries,
    PhaseSeries,
    Source,
    TimestampMismatch,
    campaign_gravity,
    campaign_phase_series,
    dual_difference,
    phase_series_from_fits,
    pixel_reference_phase,
    to_gravity,
    unwrap_series,
)
from .stability import (
    AllanCurve,
    BinnedSeries,
    ResidualReport,
    ScaleComparison,
    SeriesTooShort,
    WindowTooLarge,
    allan_deviation,
    bin_by_time,
    closed_mz_scale_comparison,
    compact_series,
    default_taus,
    moving_average,
    residuals_vs_tide,
)
from .tides import TideConstituent, TideModel, default_tide_model, tide_at
from .config import (
    AnalyzeOptions,
    CampaignConfig,
    ConfigError,
    calibrated_noise_levels,
    default_campaign_config,
    default_sections,
    load_config_file,
    paper_scenario,
    parse_sections,
    quiet_scenario,
    render_sections,
)
