import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import estimation
import noise_mc
from errors import ConditioningError, FitError, InvalidArgumentError, MissingParameterError
from noise_mc import NoiseModel


# ---------- fringe fits ----------

def test_fit_sine_exact():
    thetas = np.linspace(-np.pi, np.pi, 9, endpoint=False)
    fit = estimation.fit_sine(thetas, 0.8 * np.sin(thetas + 0.7) + 0.05)
    assert fit.contrast == pytest.approx(0.8, abs=1e-10)
    assert fit.phase == pytest.approx(0.7, abs=1e-10)
    assert fit.offset == pytest.approx(0.05, abs=1e-10)
    assert fit.residual_std == pytest.approx(0.0, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(contrast=st.floats(0.05, 1.0), phase=st.floats(-3.1, 3.1), offset=st.floats(-0.2, 0.2),
       points=st.integers(4, 16))
def test_fit_sine_recovers_parameters(contrast, phase, offset, points):
    thetas = np.linspace(0, 2 * np.pi, points, endpoint=False)
    fit = estimation.fit_sine(thetas, contrast * np.sin(thetas + phase) + offset)
    assert fit.contrast == pytest.approx(contrast, abs=1e-9)
    assert np.angle(np.exp(1j * (fit.phase - phase))) == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(fit.predict(thetas), contrast * np.sin(thetas + phase) + offset, atol=1e-9)


@pytest.mark.parametrize("thetas", [
    [0.0, 0.5, 1.0],
    [0.0, 0.5, 1.0, 2 * np.pi],
    [0.0, 0.5, 1.0, 1.5, 2.0],
])
def test_fit_sine_needs_coverage(thetas):
    thetas = np.array(thetas)
    with pytest.raises(FitError):
        estimation.fit_sine(thetas, np.sin(thetas))


def test_fit_sine_rejects_mismatched_input():
    with pytest.raises(InvalidArgumentError):
        estimation.fit_sine([0, 1, 2, 3], [0, 1, 2])
    with pytest.raises(InvalidArgumentError):
        estimation.fit_sine([0, 1, 2, 3], [0, np.nan, 2, 3])


def test_weighted_fit_covariance_scales_with_weights():
    thetas = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    n = 0.9 * np.sin(thetas + 0.2)
    loose = estimation.fit_sine(thetas, n, weights=np.full(8, 1e2))
    tight = estimation.fit_sine(thetas, n, weights=np.full(8, 1e4))
    assert loose.phase_sigma == pytest.approx(10 * tight.phase_sigma)
    # equal weights 1/s^2 on an even grid: var(phi) = 2 s^2 / (points C^2)
    assert loose.phase_sigma == pytest.approx(np.sqrt(2 * 1e-2 / (8 * 0.81)))


def test_fit_ramsey_on_simulated_fringe(coherent_ramsey, quiet_noise):
    seq = coherent_ramsey(detuning_hz=10.0)
    data = noise_mc.run_fringe_scan(seq, quiet_noise, np.linspace(-np.pi, np.pi, 8, endpoint=False), 40, 2)
    fit = estimation.fit_ramsey(data, inverse_variance=True)
    assert abs(fit.phase - 2 * np.pi * 10.0 * 5e-3) < 5 * fit.phase_sigma
    assert fit.contrast == pytest.approx(1.0, abs=0.05)


def test_phase_shift_wraps():
    def fit(phase):
        return estimation.RamseyFit(1.0, phase, 0.0, np.diag([0.0, 0.01**2, 0.0]), 0.0, 8)
    shift = estimation.phase_shift(fit(3.0), fit(-3.0))
    assert shift.delta == pytest.approx(6.0 - 2 * np.pi)
    assert shift.sigma == pytest.approx(0.01 * np.sqrt(2))


# ---------- phase noise and squeezing ----------

def test_phase_noise_at_sql():
    rng = np.random.default_rng(0)
    n = rng.normal(0.0, 1 / np.sqrt(1400), size=1000)
    noise = estimation.phase_noise(n, 1.0)
    assert noise.sigma_phi == pytest.approx(1 / np.sqrt(1400), rel=0.08)
    assert noise.sigma_err == pytest.approx(noise.sigma_phi / np.sqrt(2 * 999), rel=0.35)
    sq = estimation.squeezing_from_data(n, 1400, 1.0)
    assert sq.xi2_db == pytest.approx(0.0, abs=0.7)


def test_phase_noise_divides_by_contrast():
    n = np.tile([-0.01, 0.01], 20)
    assert estimation.phase_noise(n, 0.5).sigma_phi == pytest.approx(2 * np.std(n, ddof=1))


@pytest.mark.parametrize("n, contrast", [
    (np.zeros(10), 1.0),
    (np.full(40, 0.5), 1.0),
    (np.zeros(40), 0.0),
])
def test_phase_noise_errors(n, contrast):
    with pytest.raises(InvalidArgumentError):
        estimation.phase_noise(n, contrast)


def test_detection_subtracted_squeezing():
    n = np.tile([-0.02, 0.02], 50)
    sq = estimation.squeezing_from_data(n, 1000, 1.0, detection_sigma_n=0.01)
    var = np.var(n, ddof=1)
    assert sq.xi2 == pytest.approx(1000 * var)
    assert sq.xi2_det_subtracted == pytest.approx(1000 * (var - 1e-4))
    assert estimation.squeezing_from_data(n, 1000, 1.0, detection_sigma_n=1.0).xi2_det_subtracted_db == float("-inf")


def test_model_phase_noise():
    assert float(estimation.model_phase_noise(0.02, float("-inf"), 1400, 0.15)) == pytest.approx(18.85e-3, abs=1e-5)
    assert float(estimation.model_phase_noise(0.0, 0.0, 1400, 0.15)) == pytest.approx(1 / np.sqrt(1400))


def test_model_sql_crossing():
    assert estimation.model_sql_crossing(-4.0, 1400, 0.15) == pytest.approx(0.0220, abs=2e-4)
    assert estimation.model_sql_crossing(0.5, 1400, 0.15) == 0.0
    assert estimation.model_sql_crossing(-4.0, 1400, 0.0) == float("inf")
    t = estimation.model_sql_crossing(-4.0, 1400, 0.15)
    assert float(estimation.model_phase_noise(t, -4.0, 1400, 0.15)) == pytest.approx(1 / np.sqrt(1400))


def test_sql_crossing_interpolates():
    assert estimation.sql_crossing([0.02, 0.01, 0.03], [-1.0, -3.0, 1.0]) == pytest.approx(0.025)
    assert estimation.sql_crossing([0.01, 0.02], [-3.0, -1.0]) is None
    assert estimation.sql_crossing([0.01, 0.02], [0.5, 1.0]) == 0.01
    with pytest.raises(InvalidArgumentError):
        estimation.sql_crossing([], [])


# ---------- imaging calibration ----------

def coherent_calibration_runs(coherent_ramsey, alpha, grid=(100, 200, 300, 400), shots=600, det_sigma=1.0):
    runs = []
    for i, atoms in enumerate(grid):
        noise = NoiseModel(mean_N=atoms, prep_sigma_N=0.0, det_sigma_N1=det_sigma, det_sigma_N2=det_sigma,
                           det_sigma_n_far=None, tech_sigma_f=0.0, meanfield_coeff=0.0,
                           correction_enabled=False, imaging_alpha=alpha)
        seq = coherent_ramsey(atom_count=atoms, ramsey_time_s=100e-6)
        runs.append(noise_mc.run_experiment(seq, noise, shots, base_seed=100 + i))
    return runs


def test_calibrate_alpha_recovers_injected_value(coherent_ramsey):
    runs = coherent_calibration_runs(coherent_ramsey, 0.82)
    cal = estimation.calibrate_alpha(runs, (1.0, 1.0))
    assert abs(cal.alpha - 0.82) < 3.5 * cal.sigma
    assert cal.ci_low < cal.alpha < cal.ci_high
    assert list(cal.points.columns[:3]) == ["mean_N", "var_n", "shots"]


def test_alpha_correction_makes_refit_unity(coherent_ramsey):
    runs = coherent_calibration_runs(coherent_ramsey, 0.82, shots=200)
    cal = estimation.calibrate_alpha(runs, (1.0, 1.0))
    corrected = [estimation.apply_alpha_correction(d, cal.alpha) for d in runs]
    refit = estimation.calibrate_alpha(corrected, (1.0 / cal.alpha, 1.0 / cal.alpha))
    assert refit.alpha == pytest.approx(1.0, rel=1e-9)
    assert corrected[0].noise.imaging_alpha == pytest.approx(0.82 / cal.alpha)


def test_calibrate_alpha_needs_distinct_atom_numbers(coherent_ramsey):
    runs = coherent_calibration_runs(coherent_ramsey, 1.0, grid=(200, 200, 300), shots=20, det_sigma=0.0)
    with pytest.raises(ConditioningError):
        estimation.calibrate_alpha(runs, (1.0, 1.0))


def test_apply_alpha_correction_rejects_bad_alpha(coherent_ramsey, quiet_noise):
    data = noise_mc.run_experiment(coherent_ramsey(), quiet_noise, 3, 1)
    for alpha in (0.0, -1.0, float("nan")):
        with pytest.raises(InvalidArgumentError):
            estimation.apply_alpha_correction(data, alpha)


# ---------- sensitivity ----------

def test_sensitivity_chain():
    report = estimation.sensitivity_report(1 / np.sqrt(1400), 0.02, 11.0)
    assert report.delta_nu == pytest.approx(0.2127, abs=1e-3)
    assert report.delta_B_nearres == pytest.approx(15.2e-12, rel=0.01)
    assert report.per_root_Hz == pytest.approx(report.delta_B_nearres * np.sqrt(11.0))
    assert report.per_root_Hz == pytest.approx(50e-12, rel=0.02)
    assert report.delta_B_quadratic is None


def test_sensitivity_scales_inversely_with_time():
    short = estimation.sensitivity_report(0.03, 80e-6, 11.0)
    long = estimation.sensitivity_report(0.03, 160e-6, 11.0)
    assert short.delta_nu == pytest.approx(2 * long.delta_nu)


def test_quadratic_field_equivalent():
    field = 1e-6
    report = estimation.sensitivity_report(0.03, 80e-6, 11.0, operating_field=field, quadratic=True)
    slope_hz_per_t = 2 * estimation.QUADRATIC_SHIFT_HZ_PER_G2["pi"] * field / estimation.TESLA_PER_GAUSS**2
    assert report.delta_B_quadratic == pytest.approx(report.delta_nu / slope_hz_per_t)
    with pytest.raises(MissingParameterError):
        estimation.sensitivity_report(0.03, 80e-6, 11.0, quadratic=True)


@pytest.mark.parametrize("kwargs", [
    {"sigma_phi": 0.0},
    {"interrogation_time": -1.0},
    {"cycle_time": 0.0},
    {"component": "sigma0"},
])
def test_sensitivity_rejects_bad_input(kwargs):
    args = {"sigma_phi": 0.03, "interrogation_time": 0.02, "cycle_time": 11.0}
    args.update(kwargs)
    with pytest.raises(InvalidArgumentError):
        estimation.sensitivity_report(**args)
