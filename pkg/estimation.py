"""
Estimation Module

Statistics on simulated datasets: Ramsey fringe fits, single-shot phase
noise, squeezing, imaging calibration (alpha) and the conversion of a
phase uncertainty into frequency and field sensitivity.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import constants, stats

from chip_field import MW_SHIFT_HZ_PER_G2
from errors import (
    ConditioningError,
    FitError,
    InvalidArgumentError,
    MissingParameterError,
)
from noise_mc import Dataset

log = logging.getLogger(__name__)

# Bohr magneton over Planck constant, ~1.3996 MHz/G
MU_B_OVER_H_HZ_PER_T = constants.physical_constants["Bohr magneton in Hz/T"][0]
TESLA_PER_GAUSS = 1e-4

QUADRATIC_SHIFT_HZ_PER_G2 = MW_SHIFT_HZ_PER_G2

MIN_PHASE_NOISE_SHOTS = 30
MID_FRINGE_FRACTION = 0.2   # |<n>| must stay below this fraction of C

DatasetOrValues = Union[Dataset, Sequence[float], np.ndarray]


# ---------- Fringe fits ----------

@dataclass(frozen=True, eq=False)
class RamseyFit:
    contrast: float
    phase: float            # rad, in (-pi, pi]
    offset: float
    covariance: np.ndarray  # over (contrast, phase, offset)
    residual_std: float
    n_points: int

    @property
    def contrast_sigma(self) -> float:
        return float(np.sqrt(self.covariance[0, 0]))

    @property
    def phase_sigma(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))

    @property
    def offset_sigma(self) -> float:
        return float(np.sqrt(self.covariance[2, 2]))

    def predict(self, thetas) -> np.ndarray:
        return self.contrast * np.sin(np.asarray(thetas, dtype=float) + self.phase) + self.offset


def _circular_span(angles: np.ndarray) -> float:
    """Smallest arc covering all angles."""
    points = np.sort(np.unique(np.round(np.mod(angles, 2 * np.pi), 9)))
    if points.size < 2:
        return 0.0
    gaps = np.diff(np.append(points, points[0] + 2 * np.pi))
    return float(2 * np.pi - gaps.max())


def fit_sine(thetas, n, weights=None) -> RamseyFit:
    """
    Fit n = C sin(theta + phi) + offset.

    Linear least squares in (C cos phi, C sin phi, offset), then
    reparameterized with the Jacobian carrying the covariance over.

    Args:
        thetas: readout phases in rad
        n: measured imbalances, same shape
        weights: optional inverse variances; without them the covariance is
            scaled by the residual variance

    Returns:
        RamseyFit
    """
    thetas = np.asarray(thetas, dtype=float)
    n = np.asarray(n, dtype=float)
    if thetas.ndim != 1 or thetas.shape != n.shape:
        raise InvalidArgumentError("thetas and n must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(n))):
        raise InvalidArgumentError("thetas and n must be finite")

    distinct = np.unique(np.round(np.mod(thetas, 2 * np.pi), 9))
    if distinct.size < 4:
        raise FitError(f"need at least 4 distinct theta values, got {distinct.size}")
    if _circular_span(thetas) <= np.pi:
        raise FitError("theta values must span more than pi")

    design = np.column_stack([np.sin(thetas), np.cos(thetas), np.ones_like(thetas)])
    if weights is None:
        w = np.ones_like(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != n.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be positive, finite and match n")
    root_w = np.sqrt(w)
    weighted = design * root_w[:, None]
    if np.linalg.matrix_rank(weighted) < 3:
        raise FitError("fringe design matrix is rank deficient")

    (a, b, offset), *_ = np.linalg.lstsq(weighted, n * root_w, rcond=None)
    contrast = float(np.hypot(a, b))
    if contrast == 0:
        raise FitError("fitted contrast is zero; phase undefined")

    residuals = n - design @ np.array([a, b, offset])
    dof = n.size - 3
    normal_inverse = np.linalg.inv(weighted.T @ weighted)
    if weights is None:
        scale = float(residuals @ residuals / dof) if dof > 0 else 0.0
        linear_cov = scale * normal_inverse
    else:
        linear_cov = normal_inverse

    jacobian = np.array([
        [a / contrast, b / contrast, 0.0],
        [-b / contrast**2, a / contrast**2, 0.0],
        [0.0, 0.0, 1.0],
    ])
    covariance = jacobian @ linear_cov @ jacobian.T
    return RamseyFit(
        contrast=contrast,
        phase=float(np.arctan2(b, a)),
        offset=float(offset),
        covariance=covariance,
        residual_std=float(np.std(residuals)),
        n_points=int(n.size),
    )


def fringe_points(data: Dataset, corrected: bool = True) -> pd.DataFrame:
    """Mean n, its standard error and shot count per theta."""
    frame = pd.DataFrame({"theta": data.thetas(), "n": data.n_values(corrected)})
    grouped = frame.groupby("theta")["n"]
    points = grouped.agg(["mean", "std", "count"]).reset_index()
    points["sem"] = points["std"] / np.sqrt(points["count"])
    return points


def fit_ramsey(data: Dataset, corrected: bool = True, inverse_variance: bool = False) -> RamseyFit:
    """Sine fit to the per-theta means of a fringe dataset."""
    points = fringe_points(data, corrected)
    weights = None
    if inverse_variance:
        sem = points["sem"].to_numpy()
        if np.any(~np.isfinite(sem)) or np.any(sem <= 0):
            raise FitError("inverse-variance weights need at least 2 shots and spread at every theta")
        weights = 1.0 / sem**2
    fit = fit_sine(points["theta"].to_numpy(), points["mean"].to_numpy(), weights)
    log.debug("Ramsey fit: C=%.4f phi=%.4f rad over %d theta values", fit.contrast, fit.phase, fit.n_points)
    return fit


@dataclass(frozen=True)
class PhaseShift:
    delta: float   # rad, wrapped to (-pi, pi]
    sigma: float


def phase_shift(fit_with: RamseyFit, fit_without: RamseyFit) -> PhaseShift:
    delta = float(np.angle(np.exp(1j * (fit_with.phase - fit_without.phase))))
    return PhaseShift(delta, float(np.hypot(fit_with.phase_sigma, fit_without.phase_sigma)))


# ---------- Phase noise and squeezing ----------

@dataclass(frozen=True)
class PhaseNoise:
    sigma_phi: float   # rad
    sigma_err: float   # rad, jackknife
    mean_n: float
    contrast: float
    shots: int


@dataclass(frozen=True)
class SqueezingEstimate:
    xi2: float
    xi2_db: float
    xi2_err_db: float
    atom_count: int
    shots: int
    # variance with the detection contribution removed; noise budgets only
    xi2_det_subtracted: Optional[float] = None
    xi2_det_subtracted_db: Optional[float] = None


def _n_array(data: DatasetOrValues, corrected: bool) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.n_values(corrected)
    values = np.asarray(data, dtype=float)
    if values.ndim != 1:
        raise InvalidArgumentError("n values must be 1-D")
    return values


def _jackknife_std(values: np.ndarray) -> Tuple[float, float]:
    k = values.size
    total, total_sq = values.sum(), (values**2).sum()
    loo_mean = (total - values) / (k - 1)
    loo_var = (total_sq - values**2 - (k - 1) * loo_mean**2) / (k - 2)
    loo_std = np.sqrt(np.maximum(loo_var, 0.0))
    err = np.sqrt((k - 1) / k * np.sum((loo_std - loo_std.mean()) ** 2))
    return float(np.std(values, ddof=1)), float(err)


def phase_noise(data: DatasetOrValues, contrast: float, corrected: bool = True) -> PhaseNoise:
    """sigma_phi = std(n) / C for mid-fringe shots."""
    if not np.isfinite(contrast) or contrast <= 0:
        raise InvalidArgumentError(f"contrast must be > 0, got {contrast}")
    n = _n_array(data, corrected)
    if n.size < MIN_PHASE_NOISE_SHOTS:
        raise InvalidArgumentError(f"need at least {MIN_PHASE_NOISE_SHOTS} shots, got {n.size}")
    mean_n = float(n.mean())
    if abs(mean_n) >= MID_FRINGE_FRACTION * contrast:
        raise InvalidArgumentError(
            f"<n>={mean_n:.3f} is not mid-fringe (|<n>| must be < {MID_FRINGE_FRACTION}*C)"
        )
    std, err = _jackknife_std(n)
    return PhaseNoise(std / contrast, err / contrast, mean_n, float(contrast), int(n.size))


def squeezing_from_data(
    data: DatasetOrValues,
    atom_count: int,
    contrast: float,
    detection_sigma_n: Optional[float] = None,
    corrected: bool = True,
) -> SqueezingEstimate:
    """
    xi^2 = N var(n) / C^2, detection noise included.

    With detection_sigma_n the subtracted variant N (var(n) - sigma_det^2) / C^2
    is reported alongside.
    """
    if atom_count < 1:
        raise InvalidArgumentError(f"atom_count must be >= 1, got {atom_count}")
    noise = phase_noise(data, contrast, corrected)
    xi2 = atom_count * noise.sigma_phi**2
    xi2_err = 2 * atom_count * noise.sigma_phi * noise.sigma_err
    subtracted = subtracted_db = None
    if detection_sigma_n is not None:
        subtracted = atom_count * ((noise.sigma_phi * contrast) ** 2 - detection_sigma_n**2) / contrast**2
        subtracted_db = float(10 * np.log10(subtracted)) if subtracted > 0 else float("-inf")
    return SqueezingEstimate(
        xi2=float(xi2),
        xi2_db=float(10 * np.log10(xi2)),
        xi2_err_db=float(10 / np.log(10) * xi2_err / xi2),
        atom_count=int(atom_count),
        shots=noise.shots,
        xi2_det_subtracted=None if subtracted is None else float(subtracted),
        xi2_det_subtracted_db=subtracted_db,
    )


def model_phase_noise(T_R, xi2_db: float, atom_count: int, tech_sigma_f: float) -> np.ndarray:
    """State noise plus quasi-static technical noise, in rad."""
    T_R = np.asarray(T_R, dtype=float)
    return np.sqrt(10 ** (xi2_db / 10) / atom_count + (2 * np.pi * tech_sigma_f * T_R) ** 2)


def model_sql_crossing(xi2_db: float, atom_count: int, tech_sigma_f: float) -> float:
    """Interrogation time at which the modeled phase noise reaches the SQL."""
    xi2 = 10 ** (xi2_db / 10)
    if xi2 >= 1:
        return 0.0
    if tech_sigma_f <= 0:
        return float("inf")
    return float(np.sqrt((1 - xi2) / atom_count) / (2 * np.pi * tech_sigma_f))


def sql_crossing(T_R, xi2_db) -> Optional[float]:
    """First time the measured xi^2 (dB) rises through 0, linear in dB; None if it never does."""
    T_R = np.asarray(T_R, dtype=float)
    xi2_db = np.asarray(xi2_db, dtype=float)
    order = np.argsort(T_R)
    T_R, xi2_db = T_R[order], xi2_db[order]
    if xi2_db.size == 0:
        raise InvalidArgumentError("no points to search")
    if xi2_db[0] >= 0:
        return float(T_R[0])
    for i in range(1, xi2_db.size):
        if xi2_db[i] >= 0:
            t0, t1, y0, y1 = T_R[i - 1], T_R[i], xi2_db[i - 1], xi2_db[i]
            return float(t0 + (t1 - t0) * (-y0) / (y1 - y0))
    return None


# ---------- Imaging calibration ----------

@dataclass(frozen=True, eq=False)
class AlphaCalibration:
    alpha: float
    sigma: float
    ci_low: float
    ci_high: float
    confidence: float
    points: pd.DataFrame   # mean_N, var_n, shots, y, y_sigma

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _calibration_points(datasets: Sequence[Dataset]) -> pd.DataFrame:
    rows = []
    for data in datasets:
        n = data.n_values(corrected=False)
        if n.size < 3:
            raise InvalidArgumentError("each calibration dataset needs at least 3 shots")
        rows.append({
            "mean_N": float(data.detected_N().mean()),
            "var_n": float(np.var(n, ddof=1)),
            "shots": int(n.size),
        })
    return pd.DataFrame(rows)


def calibrate_alpha(
    datasets: Sequence[Dataset],
    det_sigmas: Tuple[float, float],
    confidence: float = 0.95,
) -> AlphaCalibration:
    """
    Fit <N>^2 var(n) = alpha <N> + sigma_N1^2 + sigma_N2^2 on coherent mid-fringe data.

    The detection term is fixed, so the slope is a weighted fit through the
    origin of y = <N>^2 var(n) - sigma_det^2. Weights come from the sampling
    variance of var(n), re-evaluated once at the first-pass slope.
    """
    points = _calibration_points(datasets)
    x = points["mean_N"].to_numpy()
    if np.unique(np.round(x)).size < 3 or np.ptp(x) < 1e-3 * x.mean():
        raise ConditioningError("calibration needs at least 3 distinct mean atom numbers")
    det_var = float(det_sigmas[0] ** 2 + det_sigmas[1] ** 2)
    dof = points["shots"].to_numpy() - 1
    y = x**2 * points["var_n"].to_numpy() - det_var

    y_var = x**4 * 2 * points["var_n"].to_numpy() ** 2 / dof
    alpha = float(np.sum(x * y / y_var) / np.sum(x**2 / y_var))
    # refine weights on the model variance to avoid favoring low draws
    y_var = 2 * (alpha * x + det_var) ** 2 / dof
    alpha = float(np.sum(x * y / y_var) / np.sum(x**2 / y_var))
    sigma = float(np.sqrt(1.0 / np.sum(x**2 / y_var)))

    z = float(stats.norm.ppf(0.5 + confidence / 2))
    points = points.assign(y=y, y_sigma=np.sqrt(y_var))
    log.info("Imaging calibration: alpha=%.3f +/- %.3f from %d points", alpha, sigma, len(points))
    return AlphaCalibration(alpha, sigma, alpha - z * sigma, alpha + z * sigma, confidence, points)


def apply_alpha_correction(data: Dataset, alpha: float) -> Dataset:
    """Divide detected counts (and the noise snapshot's detection sigmas) by alpha."""
    if not np.isfinite(alpha) or alpha <= 0:
        raise InvalidArgumentError(f"alpha must be > 0, got {alpha}")
    records = tuple(
        replace(r, N1_detected=r.N1_detected / alpha, N2_detected=r.N2_detected / alpha)
        for r in data.records
    )
    noise = replace(
        data.noise,
        det_sigma_N1=data.noise.det_sigma_N1 / alpha,
        det_sigma_N2=data.noise.det_sigma_N2 / alpha,
        imaging_alpha=data.noise.imaging_alpha / alpha,
    )
    return Dataset(records, data.sequence, noise)


# ---------- Sensitivity ----------

@dataclass(frozen=True)
class SensitivityReport:
    sigma_phi: float                 # rad
    interrogation_time: float        # s, T_mw or T_R
    cycle_time: float                # s
    delta_nu: float                  # Hz
    delta_B_nearres: float           # T
    per_root_Hz: float               # T/sqrt(Hz)
    operating_field: Optional[float] = None     # T
    delta_B_quadratic: Optional[float] = None   # T

    def as_dict(self) -> dict:
        return {
            "sigma_phi_rad": self.sigma_phi,
            "interrogation_time_s": self.interrogation_time,
            "cycle_time_s": self.cycle_time,
            "delta_nu_hz": self.delta_nu,
            "delta_B_nearres_t": self.delta_B_nearres,
            "per_root_hz_t": self.per_root_Hz,
            "operating_field_t": self.operating_field,
            "delta_B_quadratic_t": self.delta_B_quadratic,
        }


def sensitivity_report(
    sigma_phi: float,
    interrogation_time: float,
    cycle_time: float,
    operating_field: Optional[float] = None,
    quadratic: bool = False,
    component: str = "pi",
) -> SensitivityReport:
    """
    Convert a single-shot phase uncertainty into frequency and field noise.

    Args:
        sigma_phi: rad
        interrogation_time: s, the time the sensed shift acts (see sequence_engine.sensing_time)
        cycle_time: s, experimental repetition time
        operating_field: mw field amplitude (T) for the quadratic-shift slope
        quadratic: require the quadratic-shift field equivalent
        component: polarization whose shift coefficient sets the slope

    Returns:
        SensitivityReport
    """
    for name, value in (("sigma_phi", sigma_phi), ("interrogation_time", interrogation_time),
                        ("cycle_time", cycle_time)):
        if not np.isfinite(value) or value <= 0:
            raise InvalidArgumentError(f"{name} must be > 0, got {value}")
    if component not in QUADRATIC_SHIFT_HZ_PER_G2:
        raise InvalidArgumentError(f"unknown polarization component {component!r}")
    if quadratic and operating_field is None:
        raise MissingParameterError("quadratic field sensitivity needs operating_field")

    delta_nu = sigma_phi / (2 * np.pi * interrogation_time)
    delta_B = delta_nu / MU_B_OVER_H_HZ_PER_T
    quadratic_B = None
    if operating_field is not None:
        if not np.isfinite(operating_field) or operating_field <= 0:
            raise InvalidArgumentError(f"operating_field must be > 0, got {operating_field}")
        slope_hz_per_g = 2 * QUADRATIC_SHIFT_HZ_PER_G2[component] * operating_field / TESLA_PER_GAUSS
        quadratic_B = float(delta_nu / slope_hz_per_g * TESLA_PER_GAUSS)
    return SensitivityReport(
        sigma_phi=float(sigma_phi),
        interrogation_time=float(interrogation_time),
        cycle_time=float(cycle_time),
        delta_nu=float(delta_nu),
        delta_B_nearres=float(delta_B),
        per_root_Hz=float(delta_B * np.sqrt(cycle_time)),
        operating_field=None if operating_field is None else float(operating_field),
        delta_B_quadratic=quadratic_B,
    )
