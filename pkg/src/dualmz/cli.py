"""Config-driven campaign pipeline: simulate, fit, analyze, calibrate.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 convergence-rate failure.
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    CampaignConfig,
    ConfigError,
    default_campaign_config,
    default_sections,
    load_config_file,
    parse_sections,
    render_sections,
)
from .constants import MICROGAL
from .fitting import (
    calibrate_magnification,
    fit_campaign,
    fit_records_from_jsonl,
    fit_records_to_jsonl,
)
from .phases import SequenceTiming, open_scale_factor, scale_factor
from .profiles import (
    fringe_wavenumber,
    iter_campaign,
    load_campaign_csv,
    scenario_grid,
    write_campaign_csv,
    write_truth_jsonl,
)
from .series import campaign_gravity, campaign_phase_series, unwrap_series
from .stability import (
    allan_deviation,
    bin_by_time,
    closed_mz_scale_comparison,
    compact_series,
    default_taus,
    moving_average,
    residuals_vs_tide,
    tide_at,
)

log = logging.getLogger("dualmz")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONVERGENCE = 4

MANIFEST_NAME = "campaign_manifest.json"
PROFILES_NAME = "profiles.csv"
TRUTH_NAME = "truth.jsonl"
FITS_NAME = "fits.jsonl"


class ConvergenceFailure(Exception):
    pass


def _load_config(args) -> CampaignConfig:
    if getattr(args, "config", None):
        cfg = load_config_file(args.config)
    else:
        cfg = default_campaign_config()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg: CampaignConfig) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(cfg.output_dir)


def _manifest(cfg: CampaignConfig) -> dict:
    scenario = cfg.scenario
    laser, orders, dual = scenario.laser, scenario.orders, scenario.dual
    config_text = render_sections(cfg.sections)
    return {
        "format": "dualmz-campaign/1",
        "version": __version__,
        "config": cfg.sections,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": cfg.seed,
        "n_runs": cfg.n_runs,
        "derived": {
            "k_fringe_rad_per_m": fringe_wavenumber(laser, orders[0], dual.signal),
            "z0_m": scenario.fringe_defaults.z0,
            "g_estimate_m_s2": scenario.g_estimate(),
            "scale_dual_rad_per_m_s2": scale_factor(laser, orders[0], dual),
            "scale_signal_rad_per_m_s2": open_scale_factor(
                laser, orders[0], dual.signal
            ),
            "scale_reference_rad_per_m_s2": open_scale_factor(
                laser, orders[1], dual.reference
            ),
            "t_exp_ref_s": dual.reference.t_exp,
            "t_drop_s": dual.t_drop,
            "grid": {
                "start_m": scenario.grid_start,
                "step_m": scenario.grid_step,
                "samples": scenario.grid_samples,
            },
        },
        "files": {"profiles": PROFILES_NAME, "truth": TRUTH_NAME},
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _read_manifest(out: Path) -> dict:
    path = out / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no campaign manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    log.info("simulating %d runs into %s", cfg.n_runs, out)
    truths = []

    def profiles():
        for profile, truth in iter_campaign(cfg.scenario, cfg.n_runs):
            truths.append(truth)
            yield profile

    write_campaign_csv(out / PROFILES_NAME, profiles())
    write_truth_jsonl(out / TRUTH_NAME, truths)
    _write_json(out / MANIFEST_NAME, _manifest(cfg))
    log.info("wrote %s, %s, %s", PROFILES_NAME, TRUTH_NAME, MANIFEST_NAME)
    return EXIT_OK


def _campaign_inputs(out: Path):
    manifest = _read_manifest(out)
    cfg = parse_sections(manifest["config"])
    grid = scenario_grid(cfg.scenario)
    return manifest, cfg, grid


def cmd_fit(args) -> int:
    cfg = _load_config(args) if args.config else None
    out = _out_dir(args, cfg) if cfg else Path(args.out or "campaign_out")
    manifest, cfg, grid = _campaign_inputs(out)
    profiles = load_campaign_csv(out / PROFILES_NAME, grid)
    if not profiles:
        raise FileNotFoundError(f"no profiles found in {out / PROFILES_NAME}")
    k_fringe = args.k_fringe or manifest["derived"]["k_fringe_rad_per_m"]
    z0 = manifest["derived"]["z0_m"]
    log.info("fitting %d profiles (jobs=%d)", len(profiles), args.jobs)
    records = fit_campaign(
        profiles, k_fringe, z0=z0, cfg=cfg.fit, jobs=args.jobs
    )
    fit_records_to_jsonl(out / FITS_NAME, records)
    n_conv = sum(rec.converged for rec in records)
    rate = n_conv / len(records)
    _write_json(out / "fit_summary.json", {
        "n_profiles": len(records),
        "n_converged": n_conv,
        "convergence_rate": rate,
        "min_convergence": cfg.min_convergence,
        "k_fringe_rad_per_m": k_fringe,
    })
    log.info("converged %d/%d (%.1f%%)", n_conv, len(records), 100.0 * rate)
    if rate < cfg.min_convergence:
        raise ConvergenceFailure(
            f"convergence rate {rate:.3f} below threshold {cfg.min_convergence}"
        )
    return EXIT_OK


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v!r}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _phase_figures(out, phases, window):
    for name, fig in (("reference", "fig2b"), ("signal", "fig2c"), ("dual", "fig2d")):
        series = unwrap_series(phases[name])
        w = min(window, series.timestamps.size)
        avg = moving_average(series, w)
        rows = [
            (float(t), float(v))
            for t, v, q in zip(avg.timestamps, avg.values, avg.quality)
            if q
        ]
        _write_csv(out / f"{fig}.csv", "timestamp_s,phase_rad", rows)


def cmd_analyze(args) -> int:
    out = Path(args.out or "campaign_out")
    manifest, cfg, _ = _campaign_inputs(out)
    records = fit_records_from_jsonl(out / FITS_NAME)
    if not records:
        raise FileNotFoundError(f"no fit records in {out / FITS_NAME}")
    scenario = cfg.scenario
    opts = cfg.analyze
    g_hat = scenario.g_estimate()
    tide = scenario.gravity_signal

    phases = campaign_phase_series(records)
    _phase_figures(out, phases, opts.moving_average_window)

    gravity = campaign_gravity(records, scenario, opts.comparison_scale)
    rows = []
    for name, gs in gravity.items():
        for t, g, q in zip(gs.timestamps, gs.g_values, gs.quality):
            rows.append((float(t), float(g / MICROGAL), name, int(q)))
    rows.sort(key=lambda r: (r[0], r[2]))
    _write_csv(out / "gravity_series.csv", "timestamp_s,g_uGal,source,quality", rows)

    # Hour-binned comparison against the tide model, fig 2(e)/(f) style.
    def rel_ugal(gs):
        return (gs.g_values - g_hat) / MICROGAL

    dual_bins = bin_by_time(gravity["dual"], opts.bin_width_s)
    sig_bins = bin_by_time(gravity["signal"], opts.bin_width_s)
    tide_col = (
        tide_at(tide, dual_bins.bin_centers) if tide is not None
        else np.zeros_like(dual_bins.bin_centers)
    )
    e_rows = [
        (float(t), float(d - g_hat / MICROGAL), float(dse), float(s - g_hat / MICROGAL),
         float(sse), float(tv))
        for t, d, dse, s, sse, tv in zip(
            dual_bins.bin_centers, dual_bins.means, dual_bins.standard_errors,
            sig_bins.means, sig_bins.standard_errors, tide_col,
        )
    ]
    _write_csv(
        out / "fig2e.csv",
        "bin_center_s,dual_ugal,dual_se_ugal,signal_ugal,signal_se_ugal,tide_ugal",
        e_rows,
    )

    from .tides import TideModel

    model = tide if tide is not None else TideModel()
    shifted_dual = _shift_bins(dual_bins, -g_hat / MICROGAL)
    shifted_sig = _shift_bins(sig_bins, -g_hat / MICROGAL)
    report = residuals_vs_tide(shifted_dual, model, other=shifted_sig)
    _write_csv(
        out / "fig2f.csv",
        "bin_center_s,dual_resid_ugal,signal_resid_ugal",
        [
            (float(t), float(d), float(s))
            for t, d, s in zip(
                report.timestamps, report.residuals_ugal,
                residuals_vs_tide(shifted_sig, model).residuals_ugal,
            )
        ],
    )
    _write_json(out / "residual_report.json", {
        "dual_se_ugal": report.se_ugal,
        "signal_se_ugal": report.other_se_ugal,
        "ratio_signal_to_dual": report.se_ratio,
        "bin_width_s": opts.bin_width_s,
    })

    # Allan deviations of tide-corrected gravity, fig 3 style.
    fig3_rows = []
    for name, gs in gravity.items():
        corrected = gs.g_ugal - (tide_at(tide, gs.timestamps) if tide else 0.0)
        from .series import GravitySeries

        corrected_series = GravitySeries(
            gs.timestamps, corrected * MICROGAL, gs.source, gs.quality
        )
        compacted = compact_series(corrected_series)
        n = compacted.timestamps.size
        if n < 4:
            continue
        taus = default_taus(n, scenario.shot_period)
        curve = allan_deviation(compacted, taus)
        fig3_rows += [
            (name, float(t), float(a), int(m))
            for t, a, m in zip(curve.taus, curve.adev, curve.n_samples_per_tau)
        ]
    if opts.closed_mz_enabled:
        closed = closed_mz_scale_comparison(
            SequenceTiming(
                t_exp=scenario.dual.signal.t_exp,
                t_interrogation=opts.closed_mz_t_s,
                delta_t=0.0,
                t_sep=scenario.dual.signal.t_sep,
            ),
            scenario.dual, scenario.laser, scenario.orders[0],
            closed_single_shot_ugal=opts.closed_mz_single_shot_ugal,
            n_samples=cfg.n_runs,
            seed=cfg.seed + 1,
        )
        rng = np.random.default_rng(cfg.seed + 2)
        synth = rng.normal(0.0, opts.closed_mz_single_shot_ugal, cfg.n_runs)
        from .series import GravitySeries, Source

        closed_series = GravitySeries(
            scenario.shot_period * np.arange(cfg.n_runs),
            synth * MICROGAL,
            Source.SIGNAL,
            np.ones(cfg.n_runs, dtype=bool),
        )
        curve = allan_deviation(
            closed_series, default_taus(cfg.n_runs, scenario.shot_period)
        )
        fig3_rows += [
            ("closed_mz_synthetic", float(t), float(a), int(m))
            for t, a, m in zip(curve.taus, curve.adev, curve.n_samples_per_tau)
        ]
        _write_json(out / "closed_mz_comparison.json", {
            "scale_ratio": closed.scale_ratio,
            "sensitivity_ratio": closed.sensitivity_ratio,
            "dual_single_shot_ugal": closed.dual_single_shot_ugal,
            "closed_single_shot_ugal": closed.closed_single_shot_ugal,
        })
    _write_csv(out / "fig3.csv", "source,tau_s,adev_ugal,n_avg", fig3_rows)
    log.info("analysis written to %s", out)
    return EXIT_OK


def _shift_bins(bins, offset_ugal):
    from .stability import BinnedSeries

    return BinnedSeries(
        bins.bin_centers, bins.means + offset_ugal,
        bins.standard_errors, bins.counts,
    )


def cmd_pipeline(args) -> int:
    code = cmd_simulate(args)
    if code:
        return code
    code = cmd_fit(args)
    if code:
        return code
    return cmd_analyze(args)


def cmd_calibrate(args) -> int:
    out = Path(args.out or "campaign_out")
    manifest, cfg, grid = _campaign_inputs(out)
    profiles = load_campaign_csv(out / PROFILES_NAME, grid)
    if not profiles:
        raise FileNotFoundError(f"no profiles found in {out / PROFILES_NAME}")
    subset = profiles[: args.max_profiles]
    nominal = manifest["derived"]["k_fringe_rad_per_m"]
    calibrated = calibrate_magnification(
        subset, nominal, z0=manifest["derived"]["z0_m"], cfg=cfg.fit
    )
    payload = {
        "nominal_k_fringe_rad_per_m": nominal,
        "calibrated_k_fringe_rad_per_m": calibrated,
        "magnification_ratio": calibrated / nominal,
        "n_profiles": len(subset),
    }
    _write_json(out / "calibration.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_print_config(args) -> int:
    if getattr(args, "config", None):
        cfg = load_config_file(args.config)
        print(render_sections(cfg.sections), end="")
    else:
        print(render_sections(default_sections()), end="")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualmz",
        description="Dual open atom interferometer campaign simulator and analyzer",
    )
    parser.add_argument("--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False, kf=False):
        p.add_argument("--config", help="campaign INI file (default: built-in)")
        p.add_argument("--out", help="campaign output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker processes for fitting")
        if kf:
            p.add_argument("--k-fringe", type=float, default=None,
                           help="override the a-priori fringe wavenumber (rad/m)")

    p = sub.add_parser("simulate", help="synthesize a measurement campaign")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit fringe profiles of a campaign")
    common(p, jobs=True, kf=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", help="phase/gravity series, tides and Allan curves")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="simulate, fit and analyze in one go")
    common(p, jobs=True, kf=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("calibrate", help="imaging magnification from free-wavenumber fits")
    common(p)
    p.add_argument("--max-profiles", type=int, default=50)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("print-config", help="write the resolved config INI to stdout")
    p.add_argument("--config", help="campaign INI file (default: built-in)")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except ConvergenceFailure as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
