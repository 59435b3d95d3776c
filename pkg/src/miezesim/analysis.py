"""Fitting and witness extraction from counts data.

The analysis chain mirrors how beamline data are reduced:

1. ``fit_time_series`` fits one scan point's time channels with
   ``A + B cos(w_m t + phi)`` (Poisson weights).
2. ``fit_global`` fits intensity versus the combined phase ``alpha + gamma``
   across scan points with ``A + B cos(theta + phi0)``.
3. ``expectation_grid`` turns a fit into the four spin-energy correlations
   ``E(alpha_i, gamma_j) = C cos(alpha_i + gamma_j + phi0)``.
4. ``witness`` sums them into ``S = E11 + E12 + E21 - E22`` and classifies.

Three independent witness routes are provided and reported side by side
rather than collapsed: the primary global-fit route
(``analyze_records`` / ``witness_from_fit``), a per-point route that fits
every scan point's time series and pools the contrasts and phases
(``channel_fits_witness``), and a direct count-ratio route that picks the
recorded points nearest the requested analyzer settings
(``counts_witness``).  Agreement between them is a cross-check of the whole
reduction, so none of them reuses another's fitted numbers.

All fits share one engine: a coarse grid of phase starts (each with an exact
weighted linear subproblem for the mean and amplitude) followed by
Levenberg-Marquardt refinement with an analytic Jacobian.  Amplitudes are
reported non-negative with the sign absorbed into the phase, and parameter
covariances come from the Jacobian at the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from .beamline import BeamlineConfig, energy_phase, mieze_frequency, spin_phase
from .errors import ConfigError, DegenerateDataError, DiagnosticError, FitError
from .quantum import (
    WitnessSettings,
    classify,
    expectation_from_counts,
)
from .synth import CountsRecord

Array = np.ndarray

__all__ = [
    "FitResult",
    "WitnessResult",
    "PointSample",
    "AnalysisReport",
    "BootstrapResult",
    "fit_global",
    "fit_time_series",
    "expectation_grid",
    "witness",
    "witness_from_fit",
    "witness_from_contrast",
    "single_channel_points",
    "channel_fits_witness",
    "counts_witness",
    "analyze_records",
    "bootstrap_uncertainty",
]

_N_PHASE_STARTS = 16
_MAX_ITER = 200
_SIGN_MATRIX = np.array([[1.0, 1.0], [1.0, -1.0]])


def _wrap(phase: float) -> float:
    """Wrap a phase to (-pi, pi]."""
    wrapped = math.remainder(phase, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class FitResult:
    """Cosine-fit parameters ``y = A + B cos(theta + phi0)`` with covariance.

    ``covariance`` is 3x3 over (mean_level, amplitude, phase); ``amplitude``
    is non-negative by convention with the sign folded into ``phase``.
    """

    mean_level: float
    amplitude: float
    phase: float
    covariance: Array
    chi_square: float
    dof: int

    def __post_init__(self) -> None:
        if not (self.mean_level > 0.0 and math.isfinite(self.mean_level)):
            raise FitError(f"fitted mean level must be positive, got {self.mean_level!r}")
        if not (self.amplitude >= 0.0 and math.isfinite(self.amplitude)):
            raise FitError(f"fitted amplitude must be non-negative, got {self.amplitude!r}")
        if not math.isfinite(self.phase):
            raise FitError(f"fitted phase must be finite, got {self.phase!r}")
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (3, 3) or not np.all(np.isfinite(cov)):
            raise FitError("covariance must be a finite 3x3 matrix")
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)
        if not (self.chi_square >= 0.0 and math.isfinite(self.chi_square)):
            raise FitError(f"chi-square must be non-negative, got {self.chi_square!r}")
        if self.dof < 0:
            raise FitError(f"degrees of freedom must be >= 0, got {self.dof!r}")

    @property
    def contrast(self) -> float:
        return self.amplitude / self.mean_level

    @property
    def parameter_sigmas(self) -> tuple[float, float, float]:
        diag = np.clip(np.diag(self.covariance), 0.0, None)
        return tuple(float(s) for s in np.sqrt(diag))

    @property
    def contrast_sigma(self) -> float:
        grad = np.array([-self.amplitude / self.mean_level**2, 1.0 / self.mean_level, 0.0])
        var = float(grad @ self.covariance @ grad)
        return math.sqrt(max(var, 0.0))

    def model(self, theta) -> Array:
        return self.mean_level + self.amplitude * np.cos(np.asarray(theta) + self.phase)


@dataclass(frozen=True)
class WitnessResult:
    """Four correlations, their sum S, its uncertainty and classification."""

    e_matrix: Array
    e_sigma: Array
    s: float
    sigma_s: float
    classification: str

    def __post_init__(self) -> None:
        for name in ("e_matrix", "e_sigma"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (2, 2) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be a finite 2x2 matrix")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not math.isfinite(self.s):
            raise ValueError(f"S must be finite, got {self.s!r}")
        if not (self.sigma_s >= 0.0 and math.isfinite(self.sigma_s)):
            raise ValueError(f"sigma_S must be non-negative, got {self.sigma_s!r}")


def _validate_xy(theta, y, sigma) -> tuple[Array, Array, Array]:
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if theta.ndim != 1 or theta.shape != y.shape or theta.shape != sigma.shape:
        raise FitError("phase, intensity and sigma arrays must be 1-d and equal length")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(y))):
        raise FitError("phase and intensity values must be finite")
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0.0):
        raise FitError("sigma values must be positive and finite")
    return theta, y, sigma


def _fit_cosine(theta: Array, y: Array, sigma: Array) -> FitResult:
    """Weighted fit of y = A + B cos(theta + phi); see module docstring."""
    weight = 1.0 / sigma
    best: tuple[float, float, float, float] | None = None
    for start in np.arange(_N_PHASE_STARTS) * (2.0 * math.pi / _N_PHASE_STARTS):
        design = np.column_stack([np.ones_like(theta), np.cos(theta + start)])
        coef, *_ = np.linalg.lstsq(design * weight[:, None], y * weight, rcond=None)
        resid = (design @ coef - y) * weight
        chi2 = float(resid @ resid)
        if best is None or chi2 < best[0]:
            best = (chi2, float(coef[0]), float(coef[1]), float(start))
    _, a0, b0, phi0 = best
    if b0 < 0.0:
        b0, phi0 = -b0, phi0 + math.pi

    def residuals(p):
        return (p[0] + p[1] * np.cos(theta + p[2]) - y) * weight

    def jacobian(p):
        arg = theta + p[2]
        return np.column_stack([weight, np.cos(arg) * weight, -p[1] * np.sin(arg) * weight])

    result = least_squares(
        residuals,
        x0=np.array([a0, max(b0, 0.0), phi0]),
        jac=jacobian,
        method="lm",
        xtol=1e-10,
        max_nfev=_MAX_ITER,
    )
    if not result.success:
        raise FitError(
            f"cosine fit did not converge after {result.nfev} evaluations: {result.message}"
        )
    a, b, phi = (float(v) for v in result.x)
    if b < 0.0:
        b, phi = -b, phi + math.pi
    phi = _wrap(phi)
    jac = jacobian(np.array([a, b, phi]))
    cov = np.linalg.pinv(jac.T @ jac)
    chi2 = float(np.sum(residuals(np.array([a, b, phi])) ** 2))
    return FitResult(
        mean_level=a,
        amplitude=b,
        phase=phi,
        covariance=cov,
        chi_square=chi2,
        dof=max(theta.size - 3, 0),
    )


def fit_global(points) -> FitResult:
    """Fit ``intensity = A + B cos(phase + phi0)`` over (phase, intensity, sigma) points.

    Requires at least four points spanning more than pi of phase.
    """
    rows = list(points)
    if len(rows) < 4:
        raise FitError(f"need at least 4 points, got {len(rows)}")
    theta, y, sigma = _validate_xy(
        [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]
    )
    span = float(np.max(theta) - np.min(theta))
    if span <= math.pi:
        raise FitError(
            f"insufficient phase coverage: span {span:.4g} rad, need more than pi"
        )
    return _fit_cosine(theta, y, sigma)


def fit_time_series(record: CountsRecord, omega_m: float) -> FitResult:
    """Fit one scan point's time channels with ``A + B cos(w_m t + phi)``.

    Channels are the period-folded bins ``t_i = i T / n``; Poisson weighting
    uses ``sigma^2 = max(counts, 1)``.
    """
    if not (omega_m > 0.0 and math.isfinite(omega_m)):
        raise ValueError(f"omega_m must be positive, got {omega_m!r}")
    counts = np.asarray(record.counts, dtype=float)
    if counts.size < 4:
        raise FitError(f"need at least 4 time channels, got {counts.size}")
    if not np.any(counts > 0):
        raise DegenerateDataError("all-zero counts: nothing to fit")
    theta = 2.0 * math.pi * np.arange(counts.size) / counts.size
    sigma = np.sqrt(np.maximum(counts, 1.0))
    return _fit_cosine(theta, counts, sigma)


def _setting_pairs(settings: WitnessSettings):
    alphas = (settings.alpha1, settings.alpha2)
    gammas = (settings.gamma1, settings.gamma2)
    return alphas, gammas


def _expectation_gradients(fit: FitResult, settings: WitnessSettings):
    """E matrix, per-element gradients wrt (A, B, phi), per-element sigma."""
    alphas, gammas = _setting_pairs(settings)
    a, b, phi = fit.mean_level, fit.amplitude, fit.phase
    e = np.empty((2, 2))
    grads = np.empty((2, 2, 3))
    sig = np.empty((2, 2))
    for i, alpha in enumerate(alphas):
        for j, gamma in enumerate(gammas):
            arg = alpha + gamma + phi
            c, s = math.cos(arg), math.sin(arg)
            e[i, j] = (b / a) * c
            grads[i, j] = (-b * c / a**2, c / a, -(b / a) * s)
            var = float(grads[i, j] @ fit.covariance @ grads[i, j])
            sig[i, j] = math.sqrt(max(var, 0.0))
    return e, grads, sig


def expectation_grid(fit: FitResult, settings: WitnessSettings) -> tuple[Array, Array]:
    """Correlations E(alpha_i, gamma_j) = C cos(alpha_i + gamma_j + phi0) and sigmas."""
    e, _, sig = _expectation_gradients(fit, settings)
    return e, sig


def witness(e_matrix, sigma_matrix=None) -> WitnessResult:
    """Combine four correlations into S = E11 + E12 + E21 - E22 and classify.

    ``sigma_matrix`` sigmas are combined in quadrature (treated independent);
    use ``witness_from_fit`` when the values share fit parameters.
    """
    e = np.asarray(e_matrix, dtype=float)
    if e.shape != (2, 2) or not np.all(np.isfinite(e)):
        raise ValueError("expected a finite 2x2 matrix of correlations")
    if sigma_matrix is None:
        sig = np.zeros((2, 2))
    else:
        sig = np.asarray(sigma_matrix, dtype=float)
        if sig.shape != (2, 2) or not np.all(np.isfinite(sig)) or np.any(sig < 0):
            raise ValueError("sigma matrix must be finite, non-negative and 2x2")
    s = float(np.sum(_SIGN_MATRIX * e))
    sigma_s = float(np.sqrt(np.sum(sig**2)))
    return WitnessResult(
        e_matrix=e, e_sigma=sig, s=s, sigma_s=sigma_s, classification=classify(s)
    )


def witness_from_fit(fit: FitResult, settings: WitnessSettings) -> WitnessResult:
    """Witness from a global fit, propagating the full parameter covariance.

    Unlike :func:`witness` on the separate sigmas, this accounts for the
    correlations the four E values inherit from sharing (A, B, phi0).
    """
    e, grads, sig = _expectation_gradients(fit, settings)
    s = float(np.sum(_SIGN_MATRIX * e))
    grad_s = np.tensordot(_SIGN_MATRIX, grads, axes=([0, 1], [0, 1]))
    var_s = float(grad_s @ fit.covariance @ grad_s)
    return WitnessResult(
        e_matrix=e,
        e_sigma=sig,
        s=s,
        sigma_s=math.sqrt(max(var_s, 0.0)),
        classification=classify(s),
    )


def witness_from_contrast(contrast: float) -> float:
    """Expected witness 2*sqrt(2)*C for a maximally entangled state at contrast C."""
    if not (0.0 <= contrast <= 1.0):
        raise ValueError(f"contrast must be in [0, 1], got {contrast!r}")
    return 2.0 * math.sqrt(2.0) * contrast


def _record_phase(cfg: BeamlineConfig, record: CountsRecord, scan_kind: str,
                  channel: int) -> float:
    """Model phase of one record's given time channel."""
    n = len(record.counts)
    omega_m = mieze_frequency(cfg)
    t_channel = channel * (2.0 * math.pi / omega_m) / n
    phase = spin_phase(cfg, record.current) + omega_m * t_channel
    if scan_kind == "detuning":
        return phase - 2.0 * record.coord * t_channel
    return phase + energy_phase(cfg, record.coord)


def single_channel_points(cfg: BeamlineConfig, records, channel: int = 0,
                          scan_kind: str = "offset") -> list[tuple[float, float, float]]:
    """(phase, counts, sigma) of one time channel across all scan points."""
    records = list(records)
    if not records:
        raise ConfigError("no records to analyze")
    if scan_kind not in ("offset", "detuning"):
        raise ConfigError(f"unknown scan kind {scan_kind!r}")
    n = len(records[0].counts)
    if not (0 <= channel < n):
        raise ConfigError(f"channel {channel} out of range for {n} time channels")
    points = []
    for rec in records:
        count = float(rec.counts[channel])
        points.append(
            (_record_phase(cfg, rec, scan_kind, channel), count, math.sqrt(max(count, 1.0)))
        )
    return points


def channel_fits_witness(cfg: BeamlineConfig, records, settings: WitnessSettings,
                         scan_kind: str = "offset") -> tuple[WitnessResult, FitResult]:
    """Witness from per-point time-series fits (the 'cosine fits' route).

    Every record's channels are fitted separately; the contrasts are pooled
    by inverse-variance weighting and the fitted phases, referenced to each
    point's model phase, are pooled circularly into a global phase offset.
    The pooled (C, phi) pair is then evaluated at the witness settings.
    Returns the witness plus the pooled two-stage fit summary.
    """
    records = list(records)
    if not records:
        raise ConfigError("no records to analyze")
    omega_m = mieze_frequency(cfg)
    contrasts, c_weights = [], []
    sin_sum = cos_sum = phi_weight = 0.0
    chi2 = 0.0
    dof = 0
    for rec in records:
        fit = fit_time_series(rec, omega_m)
        var_c = max(fit.contrast_sigma**2, 1e-300)
        contrasts.append(fit.contrast)
        c_weights.append(1.0 / var_c)
        base = _record_phase(cfg, rec, scan_kind, channel=0)
        offset = fit.phase - base
        var_phi = max(float(fit.covariance[2, 2]), 1e-300)
        sin_sum += math.sin(offset) / var_phi
        cos_sum += math.cos(offset) / var_phi
        phi_weight += 1.0 / var_phi
        chi2 += fit.chi_square
        dof += fit.dof
    c_weights = np.asarray(c_weights)
    c_hat = float(np.dot(contrasts, c_weights) / c_weights.sum())
    sigma_c = math.sqrt(1.0 / c_weights.sum())
    phi_hat = math.atan2(sin_sum, cos_sum)
    sigma_phi = math.sqrt(1.0 / phi_weight)
    pooled = FitResult(
        mean_level=1.0,
        amplitude=max(c_hat, 0.0),
        phase=phi_hat,
        covariance=np.diag([0.0, sigma_c**2, sigma_phi**2]),
        chi_square=chi2,
        dof=dof,
    )
    return witness_from_fit(pooled, settings), pooled


def _wrap_distance(a: float, b: float) -> float:
    return abs(_wrap(a - b))


def counts_witness(cfg: BeamlineConfig, records, settings: WitnessSettings,
                   scan_kind: str = "offset") -> WitnessResult:
    """Witness from raw count ratios at the grid points nearest the settings.

    For each (alpha_i, gamma_j) cell the four projector outcomes are read
    from the recorded counts whose realized phases are nearest to
    alpha_i + k pi (via the coil current) and gamma_j + l pi (via detector
    offset and time channel), k, l in {0, 1}.  Ties prefer the smaller
    |current|, then the smaller |offset| and channel index.  Independent
    Poisson statistics give sigma_E^2 = (1 - E^2) / N_total.
    """
    if scan_kind != "offset":
        raise ConfigError("count-ratio witness requires an offset scan")
    records = list(records)
    if not records:
        raise ConfigError("no records to analyze")
    n = len(records[0].counts)
    omega_m = mieze_frequency(cfg)

    by_point: dict[tuple[float, float], CountsRecord] = {}
    for rec in records:
        by_point[(rec.current, rec.coord)] = rec
    currents = sorted({rec.current for rec in records}, key=lambda c: (abs(c), c))
    offsets = sorted({rec.coord for rec in records}, key=lambda d: (abs(d), d))

    def pick_current(target: float) -> float:
        return min(currents, key=lambda c: (_wrap_distance(spin_phase(cfg, c), target), abs(c)))

    def pick_gamma(target: float) -> tuple[float, int]:
        best = None
        for delta in offsets:
            gamma0 = energy_phase(cfg, delta)
            for ch in range(n):
                value = gamma0 + omega_m * ch * (2.0 * math.pi / omega_m) / n
                key = (_wrap_distance(value, target), abs(delta), ch)
                if best is None or key < best[0]:
                    best = (key, delta, ch)
        return best[1], best[2]

    alphas, gammas = _setting_pairs(settings)
    e = np.empty((2, 2))
    sig = np.empty((2, 2))
    for i, alpha in enumerate(alphas):
        for j, gamma in enumerate(gammas):
            outcome_counts = {}
            for k in (0, 1):
                current = pick_current(alpha + k * math.pi)
                for l in (0, 1):
                    delta, ch = pick_gamma(gamma + l * math.pi)
                    outcome_counts[(k, l)] = float(by_point[(current, delta)].counts[ch])
            e[i, j] = expectation_from_counts(outcome_counts)
            total = sum(outcome_counts.values())
            sig[i, j] = math.sqrt(max(1.0 - e[i, j] ** 2, 0.0) / total)
    return witness(e, sig)


class PointSample(NamedTuple):
    """One plotted point: phase, measured intensity, its sigma, model value."""

    phase: float
    intensity: float
    sigma: float
    model: float


@dataclass(frozen=True)
class AnalysisReport:
    """Everything the witness report serializes for one counts table."""

    witness: WitnessResult
    fit: FitResult
    points: tuple[PointSample, ...]
    count_witness: WitnessResult | None = None
    channel_witness: WitnessResult | None = None
    diagnostics: dict = field(default_factory=dict)


def analyze_records(cfg: BeamlineConfig, records, settings: WitnessSettings,
                    channel: int = 0, scan_kind: str = "offset") -> AnalysisReport:
    """Full reduction of a counts table to a witness report.

    Primary route: single-channel intensities versus combined phase, global
    cosine fit, witness with full covariance.  The count-ratio route (offset
    scans) and the per-point fit route are computed alongside as
    cross-checks.
    """
    records = list(records)
    points = single_channel_points(cfg, records, channel=channel, scan_kind=scan_kind)
    fit = fit_global(points)
    primary = witness_from_fit(fit, settings)
    samples = tuple(
        PointSample(phase=p[0], intensity=p[1], sigma=p[2], model=float(fit.model(p[0])))
        for p in points
    )
    count_route = None
    if scan_kind == "offset":
        count_route = counts_witness(cfg, records, settings, scan_kind=scan_kind)
    channel_route, _ = channel_fits_witness(cfg, records, settings, scan_kind=scan_kind)
    diagnostics = {
        "method": "single_channel_global_fit",
        "channel": channel,
        "n_points": len(points),
        "chi_square": fit.chi_square,
        "dof": fit.dof,
        "reduced_chi_square": fit.chi_square / fit.dof if fit.dof else math.nan,
        "contrast": fit.contrast,
        "contrast_sigma": fit.contrast_sigma,
        "fitted_phase_offset": fit.phase,
    }
    return AnalysisReport(
        witness=primary,
        fit=fit,
        points=samples,
        count_witness=count_route,
        channel_witness=channel_route,
        diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class BootstrapResult:
    """Resampled witness spread alongside the analytic error bar."""

    sigma_s: float
    resamples: int
    failures: int
    s_values: tuple[float, ...]


def bootstrap_uncertainty(cfg: BeamlineConfig, records, settings: WitnessSettings,
                          resamples: int = 200, seed: int = 0, channel: int = 0,
                          scan_kind: str = "offset") -> BootstrapResult:
    """Parametric Poisson bootstrap of the single-channel witness.

    Each resample redraws every channel count around the observed value, so
    the spread of refitted S values estimates sigma_S without assuming the
    propagation linearization.  Resample streams are counter-partitioned from
    the seed, making the estimate independent of batching.  More than 5%
    failed refits raises a diagnostic error.
    """
    if resamples < 100:
        raise ConfigError(f"resamples must be >= 100, got {resamples}")
    records = list(records)
    base_points = single_channel_points(cfg, records, channel=channel, scan_kind=scan_kind)
    theta = np.array([p[0] for p in base_points])
    observed = np.array([p[1] for p in base_points])
    s_values = []
    failures = 0
    for index in range(resamples):
        rng = np.random.Generator(np.random.Philox(key=seed, counter=index * 2**128))
        counts = rng.poisson(observed).astype(float)
        sigma = np.sqrt(np.maximum(counts, 1.0))
        try:
            fit = _fit_cosine(theta, counts, sigma)
            s_values.append(witness_from_fit(fit, settings).s)
        except FitError:
            failures += 1
    if failures > 0.05 * resamples:
        raise DiagnosticError(
            f"{failures}/{resamples} bootstrap refits failed; counts data too degenerate"
        )
    if len(s_values) < 2:
        raise DiagnosticError("not enough successful bootstrap refits to estimate sigma_S")
    return BootstrapResult(
        sigma_s=float(np.std(s_values, ddof=1)),
        resamples=resamples,
        failures=failures,
        s_values=tuple(s_values),
    )
