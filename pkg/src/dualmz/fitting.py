"""Nonlinear least-squares extraction of fringe phases from density profiles.

The dual-output model (two Gaussian envelopes, each with a sinusoidal
modulation at the common fringe wavenumber) is fit by damped Gauss-Newton
iterations with an analytic Jacobian.  The fringe wavenumber is known a
priori and held fixed except during magnification calibration.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .profiles import DensityProfile, FringeModelParams, fringe_model
from .phases import wrap_phase

PARAM_NAMES = (
    "amp_ref", "center_ref", "sigma_ref", "contrast_ref", "phase_ref",
    "amp_sig", "center_sig", "sigma_sig", "contrast_sig", "phase_sig",
    "offset",
)
FRINGE_WAVENUMBER = "fringe_wavenumber"


class TwoCloudsNotFound(Exception):
    """The smoothed profile does not show two separated envelopes."""


class SingularJacobian(Exception):
    """A parameter is unidentifiable at the solution (e.g. zero contrast)."""


class BoundsViolation(Exception):
    """Initial guess lies outside the configured parameter bounds."""


class InsufficientData(Exception):
    """Too few profiles for a calibration."""


class NotConverged(Exception):
    """Iteration limit reached; carries the best-so-far result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 60
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    fix_fringe_wavenumber: bool = True
    bounds: dict | None = None  # per-parameter (lo, hi) overrides

    def __post_init__(self):
        if self.gradient_tolerance <= 0.0 or self.step_tolerance <= 0.0:
            raise ValueError("tolerances must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class FitResult:
    params: FringeModelParams
    param_stddevs: dict[str, float]
    residual_rms: float
    iterations: int
    converged: bool
    chi2_reduced: float
    covariance: np.ndarray | None = None


@dataclass
class FitRecord:
    """Outcome of fitting one profile within a campaign."""

    run_index: int
    timestamp: float
    converged: bool
    result: FitResult | None = None
    error: str | None = None


def _pack(params: FringeModelParams, free_kf: bool) -> np.ndarray:
    vec = [getattr(params, name) for name in PARAM_NAMES]
    if free_kf:
        vec.append(params.fringe_wavenumber)
    return np.array(vec, dtype=float)


def _unpack(vec: np.ndarray, k_fringe: float, z0: float) -> FringeModelParams:
    kw = dict(zip(PARAM_NAMES, vec))
    if vec.size == len(PARAM_NAMES) + 1:
        k_fringe = vec[-1]
    kw["phase_ref"] = wrap_phase(kw["phase_ref"])
    kw["phase_sig"] = wrap_phase(kw["phase_sig"])
    kw["contrast_ref"] = min(max(kw["contrast_ref"], 0.0), 1.0)
    kw["contrast_sig"] = min(max(kw["contrast_sig"], 0.0), 1.0)
    return FringeModelParams(fringe_wavenumber=k_fringe, z0=z0, **kw)


def _model_and_jacobian(vec, z, z0, k_fixed):
    """Model values and analytic Jacobian at the packed parameter vector."""
    free_kf = k_fixed is None
    kf = vec[-1] if free_kf else k_fixed
    carrier = kf * (z - z0)
    f = np.full_like(z, vec[10])
    jac = np.empty((z.size, vec.size))
    jac[:, 10] = 1.0
    if free_kf:
        dk = np.zeros_like(z)
    for base in (0, 5):
        amp, center, sigma, contrast, phase = vec[base:base + 5]
        u = (z - center) / sigma
        env = np.exp(-0.5 * u * u)
        theta = carrier - phase
        sin_t = np.sin(theta)
        cos_t = np.cos(theta)
        mod = 1.0 - contrast * sin_t
        env_mod = env * mod
        f += amp * env_mod
        jac[:, base + 0] = env_mod
        jac[:, base + 1] = amp * env_mod * u / sigma
        jac[:, base + 2] = amp * env_mod * u * u / sigma
        jac[:, base + 3] = -amp * env * sin_t
        jac[:, base + 4] = amp * env * contrast * cos_t
        if free_kf:
            dk -= amp * env * contrast * cos_t * (z - z0)
    if free_kf:
        jac[:, -1] = dk
    return f, jac


def default_bounds(z_grid: np.ndarray) -> dict:
    """Physically-motivated bounds preventing envelope/fringe role swaps."""
    step = float(z_grid[1] - z_grid[0])
    span = float(z_grid[-1] - z_grid[0])
    lo, hi = float(z_grid[0]), float(z_grid[-1])
    return {
        "amp_ref": (0.0, math.inf),
        "amp_sig": (0.0, math.inf),
        "center_ref": (lo, hi),
        "center_sig": (lo, hi),
        "sigma_ref": (2.0 * step, span),
        "sigma_sig": (2.0 * step, span),
        "contrast_ref": (0.0, 1.0),
        "contrast_sig": (0.0, 1.0),
        "offset": (-math.inf, math.inf),
        "phase_ref": (-math.inf, math.inf),
        "phase_sig": (-math.inf, math.inf),
        FRINGE_WAVENUMBER: (0.0, math.inf),
    }


def _bounds_arrays(names, z_grid, overrides):
    table = default_bounds(z_grid)
    if overrides:
        for key, pair in overrides.items():
            if key not in table:
                raise ValueError(f"unknown bounded parameter {key!r}")
            table[key] = (
                -math.inf if pair[0] is None else pair[0],
                math.inf if pair[1] is None else pair[1],
            )
    lo = np.array([table[n][0] for n in names])
    hi = np.array([table[n][1] for n in names])
    return lo, hi


def fit_dual_profile(
    profile: DensityProfile,
    guess: FringeModelParams,
    cfg: FitConfig | None = None,
) -> FitResult:
    """Levenberg-Marquardt fit of the dual fringe model to one profile.

    Damped iterations never increase the cost; on convergence the covariance
    is residual_variance * (J^T J)^-1.  Raises ``NotConverged`` at the
    iteration limit (the exception carries the best result so far) and
    ``SingularJacobian`` when a parameter is unidentifiable at the solution,
    e.g. a phase whose contrast fitted to zero.
    """
    cfg = cfg or FitConfig()
    z = profile.z_grid
    y = profile.density
    free_kf = not cfg.fix_fringe_wavenumber
    k_fixed = None if free_kf else guess.fringe_wavenumber
    names = PARAM_NAMES + ((FRINGE_WAVENUMBER,) if free_kf else ())

    x = _pack(guess, free_kf)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial guess must be finite")
    lo, hi = _bounds_arrays(names, z, cfg.bounds)
    if np.any(x < lo) or np.any(x > hi):
        bad = [names[i] for i in np.flatnonzero((x < lo) | (x > hi))]
        raise BoundsViolation(f"guess outside bounds for {bad}")

    f, jac = _model_and_jacobian(x, z, guess.z0, k_fixed)
    r = y - f
    cost = float(r @ r)
    lam = 1e-3
    iterations = 0
    converged = False
    flat_count = 0

    while iterations < cfg.max_iterations and not converged:
        iterations += 1
        col_norm = np.sqrt(np.einsum("ij,ij->j", jac, jac))
        scale = np.where(col_norm > 0.0, col_norm, 1.0)
        jac_s = jac / scale
        normal = jac_s.T @ jac_s
        rhs = jac_s.T @ r
        grad_scale = float(np.max(np.abs(rhs))) / (math.sqrt(cost) + 1e-300)

        accepted = False
        for _ in range(40):
            try:
                step_s = np.linalg.solve(
                    normal + lam * np.eye(len(x)), rhs
                )
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = np.clip(x + step_s / scale, lo, hi)
            f_new, jac_new = _model_and_jacobian(x_new, z, guess.z0, k_fixed)
            r_new = y - f_new
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                rel_step = np.linalg.norm(x_new - x) / (np.linalg.norm(x) + 1e-300)
                rel_drop = (cost - cost_new) / (cost + 1e-300)
                x, f, jac, r, cost = x_new, f_new, jac_new, r_new, cost_new
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                if rel_step < cfg.step_tolerance:
                    converged = True
                flat_count = flat_count + 1 if rel_drop < 1e-14 else 0
                if flat_count >= 2 or cost == 0.0:
                    converged = True
                break
            lam *= 3.0
        if not accepted:
            # No downhill step within the damping search: stationary point.
            converged = True
        if grad_scale < cfg.gradient_tolerance:
            converged = True

    result = _finalize(x, z, y, cost, jac, guess, k_fixed, names, iterations)
    if not converged:
        result.converged = False
        raise NotConverged(
            f"no convergence in {cfg.max_iterations} iterations", result
        )
    return result


def _finalize(x, z, y, cost, jac, guess, k_fixed, names, iterations):
    n_pts, n_par = jac.shape
    dof = max(n_pts - n_par, 1)
    col_norm = np.sqrt(np.einsum("ij,ij->j", jac, jac))
    max_norm = float(np.max(col_norm)) if col_norm.size else 0.0
    dead = col_norm <= 1e-12 * max(max_norm, 1e-300)
    if np.any(dead):
        weak = [names[i] for i in np.flatnonzero(dead)]
        raise SingularJacobian(f"unidentifiable parameter(s) at solution: {weak}")
    jac_s = jac / col_norm
    normal = jac_s.T @ jac_s
    eigvals = np.linalg.eigvalsh(normal)
    if eigvals[0] <= 1e-12 * eigvals[-1]:
        idx = int(np.argmax(np.abs(np.linalg.eigh(normal)[1][:, 0])))
        raise SingularJacobian(
            f"normal equations singular at solution (weakest: {names[idx]})"
        )
    resid_var = cost / dof
    cov_scaled = np.linalg.inv(normal)
    cov = resid_var * cov_scaled / np.outer(col_norm, col_norm)
    stddevs = dict(zip(names, np.sqrt(np.maximum(np.diag(cov), 0.0))))
    params = _unpack(x, guess.fringe_wavenumber, guess.z0)
    return FitResult(
        params=params,
        param_stddevs=stddevs,
        residual_rms=math.sqrt(cost / n_pts),
        iterations=iterations,
        converged=True,
        chi2_reduced=resid_var,
        covariance=cov,
    )


# ----------------------------------------------------------------------------
# Initial guess

def _smooth(values: np.ndarray, width: int) -> np.ndarray:
    width = max(int(width) | 1, 1)
    kernel = np.ones(width) / width
    out = np.convolve(values, kernel, mode="same")
    # compensate the shrinking window at the edges
    norm = np.convolve(np.ones_like(values), kernel, mode="same")
    return out / norm


def quadrature_demod(z, values, k_fringe, z0):
    """Least-squares sine/cosine coefficients of ``values`` at k_fringe.

    Solves values ~ a*sin(k(z-z0)) + b*cos(k(z-z0)); for a fringe term
    -B*sin(k(z-z0) - phi) this gives a = -B cos(phi), b = B sin(phi).
    """
    arg = k_fringe * (z - z0)
    s, c = np.sin(arg), np.cos(arg)
    gram = np.array([[s @ s, s @ c], [s @ c, c @ c]])
    proj = np.array([s @ values, c @ values])
    a, b = np.linalg.solve(gram, proj)
    return float(a), float(b)


def _window_moments(z, height, peak_idx):
    weights = np.clip(height, 0.0, None)
    total = weights.sum()
    if total <= 0.0:
        raise TwoCloudsNotFound("no density above the background in a window")
    center = float((z * weights).sum() / total)
    width = math.sqrt(float(((z - center) ** 2 * weights).sum() / total))
    amp = float(height[peak_idx])
    return amp, center, width


def initial_guess(
    profile: DensityProfile,
    k_fringe: float,
    z0: float | None = None,
    ref_at_larger_z: bool = True,
) -> FringeModelParams:
    """Starting parameters from profile moments and quadrature demodulation.

    The two clouds are located on a one-fringe-period smoothed profile; the
    reference cloud is, by default, the one further along the fall direction
    (larger position).  Raises ``TwoCloudsNotFound`` for profiles without two
    separated maxima.
    """
    z = profile.z_grid
    y = profile.density
    if z0 is None:
        z0 = float(z[0])
    period = 2.0 * math.pi / k_fringe
    step = profile.z_step
    n_edge = max(int(0.05 * z.size), 2)
    background = float(np.concatenate([y[:n_edge], y[-n_edge:]]).mean())

    smoothed = _smooth(y, round(period / step))
    height = smoothed - background
    interior = np.zeros_like(height, dtype=bool)
    interior[1:-1] = (height[1:-1] >= height[:-2]) & (height[1:-1] > height[2:])
    peak_candidates = np.flatnonzero(interior & (height > 0.0))
    if peak_candidates.size < 2:
        raise TwoCloudsNotFound("fewer than two maxima above the background")

    order = peak_candidates[np.argsort(height[peak_candidates])[::-1]]
    first = order[0]
    min_sep = 3.0 * period
    second = None
    for idx in order[1:]:
        if abs(z[idx] - z[first]) >= min_sep and height[idx] >= 0.1 * height[first]:
            second = idx
            break
    if second is None:
        raise TwoCloudsNotFound("no second separated maximum found")

    left, right = sorted((first, second))
    split = left + int(np.argmin(smoothed[left:right + 1]))
    windows = [(slice(0, split + 1), left), (slice(split, z.size), right)]
    if ref_at_larger_z:
        win_sig, win_ref = windows
    else:
        win_ref, win_sig = windows

    guesses = {}
    for label, (win, peak) in (("sig", win_sig), ("ref", win_ref)):
        zw = z[win]
        amp, center, width = _window_moments(
            zw, height[win], peak - win.start
        )
        width = min(max(width, 2.0 * step), float(z[-1] - z[0]))
        envelope = amp * np.exp(-0.5 * ((zw - center) / width) ** 2)
        core = envelope >= 0.2 * amp
        normalized = (y[win][core] - background) / envelope[core] - 1.0
        a, b = quadrature_demod(zw[core], normalized, k_fringe, z0)
        contrast = min(max(math.hypot(a, b), 0.05), 1.0)
        phase = math.atan2(b, -a)
        guesses[label] = (amp, center, width, contrast, phase)

    amp_s, c_s, w_s, b_s, p_s = guesses["sig"]
    amp_r, c_r, w_r, b_r, p_r = guesses["ref"]
    return FringeModelParams(
        amp_ref=amp_r, amp_sig=amp_s,
        center_ref=c_r, center_sig=c_s,
        sigma_ref=w_r, sigma_sig=w_s,
        contrast_ref=b_r, contrast_sig=b_s,
        offset=background,
        phase_ref=wrap_phase(p_r), phase_sig=wrap_phase(p_s),
        fringe_wavenumber=k_fringe, z0=z0,
    )


# ----------------------------------------------------------------------------
# Campaign fitting and magnification calibration

def _fit_one(args):
    profile, k_fringe, z0, cfg, ref_at_larger_z = args
    try:
        guess = initial_guess(profile, k_fringe, z0, ref_at_larger_z)
        result = fit_dual_profile(profile, guess, cfg)
        return FitRecord(
            profile.run_index, profile.timestamp, True, result=result
        )
    except NotConverged as exc:
        return FitRecord(
            profile.run_index, profile.timestamp, False,
            result=exc.result, error=str(exc),
        )
    except (TwoCloudsNotFound, SingularJacobian, BoundsViolation,
            np.linalg.LinAlgError, ValueError) as exc:
        return FitRecord(
            profile.run_index, profile.timestamp, False,
            error=f"{type(exc).__name__}: {exc}",
        )


def fit_campaign(
    profiles,
    k_fringe: float,
    z0: float | None = None,
    cfg: FitConfig | None = None,
    ref_at_larger_z: bool = True,
    jobs: int = 1,
) -> list[FitRecord]:
    """Fit every profile; failures are recorded, not raised.

    Records are returned in run-index order regardless of completion order.
    """
    tasks = [(p, k_fringe, z0, cfg, ref_at_larger_z) for p in profiles]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_fit_one, tasks, chunksize=32))
    else:
        records = [_fit_one(t) for t in tasks]
    return sorted(records, key=lambda rec: rec.run_index)


def _demod_power(z, y, background, envelopes, k, z0):
    power = 0.0
    for win, envelope, core in envelopes:
        normalized = (y[win][core] - background) / envelope[core] - 1.0
        a, b = quadrature_demod(z[win][core], normalized, k, z0)
        power += a * a + b * b
    return power


def calibrate_magnification(
    profiles,
    nominal_k_fringe: float,
    z0: float | None = None,
    cfg: FitConfig | None = None,
    scan_halfwidth: float = 0.1,
) -> float:
    """Mean fitted fringe wavenumber with the wavenumber left free (rad/m).

    A coarse demodulation-power scan over +-``scan_halfwidth`` (fractional)
    seeds each free-wavenumber fit; downstream fits should then fix the
    returned value.  Requires at least 10 profiles.
    """
    profiles = list(profiles)
    if len(profiles) < 10:
        raise InsufficientData(
            f"magnification calibration needs >= 10 profiles, got {len(profiles)}"
        )
    cfg = cfg or FitConfig()
    cfg_free = FitConfig(
        max_iterations=cfg.max_iterations,
        gradient_tolerance=cfg.gradient_tolerance,
        step_tolerance=cfg.step_tolerance,
        fix_fringe_wavenumber=False,
        bounds=cfg.bounds,
    )
    fitted = []
    scan = nominal_k_fringe * np.linspace(
        1.0 - scan_halfwidth, 1.0 + scan_halfwidth, 161
    )
    for profile in profiles:
        z0_p = float(profile.z_grid[0]) if z0 is None else z0
        # Coarse scan: the guess machinery needs a k close enough that the
        # demodulated phase is meaningful across each cloud.
        powers = []
        guess0 = initial_guess(profile, nominal_k_fringe, z0_p)
        envelopes = _guess_windows(profile, guess0)
        for k in scan:
            powers.append(
                _demod_power(profile.z_grid, profile.density, guess0.offset,
                             envelopes, k, z0_p)
            )
        k_seed = float(scan[int(np.argmax(powers))])
        guess = initial_guess(profile, k_seed, z0_p)
        result = fit_dual_profile(profile, guess, cfg_free)
        fitted.append(result.params.fringe_wavenumber)
    return float(np.mean(fitted))


def _guess_windows(profile, guess):
    """Envelope evaluation windows reused across a calibration k-scan."""
    z = profile.z_grid
    out = []
    for amp, center, width in (
        (guess.amp_ref, guess.center_ref, guess.sigma_ref),
        (guess.amp_sig, guess.center_sig, guess.sigma_sig),
    ):
        envelope = amp * np.exp(-0.5 * ((z - center) / width) ** 2)
        core = envelope >= 0.2 * amp
        out.append((slice(0, z.size), envelope, core))
    return out


# ----------------------------------------------------------------------------
# JSON-lines serialization of campaign fit records

def fit_records_to_jsonl(path, records) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {
                "run_index": rec.run_index,
                "timestamp_s": rec.timestamp,
                "converged": rec.converged,
                "error": rec.error,
            }
            if rec.result is not None:
                res = rec.result
                row.update(
                    iterations=res.iterations,
                    residual_rms=res.residual_rms,
                    chi2_reduced=res.chi2_reduced,
                    params={
                        name: getattr(res.params, name)
                        for name in PARAM_NAMES + (FRINGE_WAVENUMBER, "z0")
                    },
                    stddevs=res.param_stddevs,
                )
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def fit_records_from_jsonl(path) -> list[FitRecord]:
    import json

    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            result = None
            if "params" in row:
                result = FitResult(
                    params=FringeModelParams(**row["params"]),
                    param_stddevs=row["stddevs"],
                    residual_rms=row["residual_rms"],
                    iterations=row["iterations"],
                    converged=row["converged"],
                    chi2_reduced=row["chi2_reduced"],
                )
            records.append(
                FitRecord(
                    run_index=row["run_index"],
                    timestamp=row["timestamp_s"],
                    converged=row["converged"],
                    result=result,
                    error=row.get("error"),
                )
            )
    return records
