import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.stats import binom
from sympy import Rational
from sympy.physics.quantum.cg import CG

import spin_core
from errors import CalibrationError, DegenerateStateError, InvalidArgumentError, UnsupportedSizeError
from spin_core import DickeState, RotationSpec


def random_state(atom_count, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=atom_count + 1) + 1j * rng.normal(size=atom_count + 1)
    return amps / np.linalg.norm(amps)


def dense_generator(atom_count, axis):
    s_x, s_y, s_z = (op.toarray() for op in spin_core.spin_operators(atom_count))
    ax, ay, az = np.asarray(axis) / np.linalg.norm(axis)
    return ax * s_x + ay * s_y + az * s_z


axes = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


# ---------- states and moments ----------

@pytest.mark.parametrize("atom_count", [1, 10, 1400])
def test_coherent_state_moments(atom_count):
    mom = spin_core.moments(spin_core.coherent_state(atom_count, np.pi / 2, 0.0))
    np.testing.assert_allclose(mom.mean_spin, [atom_count / 2, 0, 0], atol=1e-8 * atom_count)
    assert mom.covariance[1, 1] == pytest.approx(atom_count / 4, rel=1e-9)
    assert mom.covariance[2, 2] == pytest.approx(atom_count / 4, rel=1e-9)
    assert mom.contrast_proxy == pytest.approx(1.0)


def test_coherent_state_is_not_squeezed():
    assert spin_core.squeezing_wineland(spin_core.coherent_state(200, np.pi / 2, 0.3)) == pytest.approx(1.0)


def test_coherent_state_points_where_asked():
    mom = spin_core.moments(spin_core.coherent_state(40, 1.1, -0.7))
    assert mom.polar == pytest.approx(1.1)
    assert mom.azimuth == pytest.approx(-0.7)


def test_equatorial_measurement_is_binomial():
    probs = spin_core.measure_distribution(spin_core.coherent_state(30, np.pi / 2))
    np.testing.assert_allclose(probs, binom.pmf(np.arange(31), 30, 0.5), atol=1e-12)


def test_state_construction_checks():
    with pytest.raises(InvalidArgumentError):
        DickeState(3, np.ones(3))
    with pytest.raises(InvalidArgumentError):
        DickeState(3, np.ones(4))
    with pytest.raises(InvalidArgumentError):
        DickeState(0, np.ones(1))
    with pytest.raises(InvalidArgumentError):
        RotationSpec((0, 0, 0), 1.0)
    with pytest.raises(InvalidArgumentError):
        RotationSpec("w", 1.0)


def test_zero_mean_spin_is_degenerate():
    amps = np.zeros(5)
    amps[2] = 1.0  # m = 0
    with pytest.raises(DegenerateStateError):
        spin_core.squeezing_wineland(DickeState(4, amps))


# ---------- rotations ----------

@settings(max_examples=50, deadline=None)
@given(atom_count=st.integers(1, 16), axis=axes, angle=st.floats(-2 * np.pi, 2 * np.pi), seed=st.integers(0, 2**32 - 1))
def test_rotation_matches_matrix_exponential(atom_count, axis, angle, seed):
    psi = random_state(atom_count, seed)
    expected = expm(-1j * angle * dense_generator(atom_count, axis)) @ psi
    got = spin_core.rotate(DickeState(atom_count, psi), RotationSpec(axis, angle)).amplitudes
    np.testing.assert_allclose(got, expected, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(atom_count=st.integers(1, 16), axis=axes, a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**32 - 1))
def test_rotations_about_one_axis_compose(atom_count, axis, a, b, seed):
    psi = random_state(atom_count, seed)
    unit = RotationSpec(axis, 0.0).axis
    twice = spin_core.apply_rotation(spin_core.apply_rotation(psi, atom_count, unit, a), atom_count, unit, b)
    once = spin_core.apply_rotation(psi, atom_count, unit, a + b)
    np.testing.assert_allclose(twice, once, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(atom_count=st.integers(1, 16), mu=st.floats(-1, 1), angle=st.floats(-3, 3), seed=st.integers(0, 2**32 - 1))
def test_twist_commutes_with_z_rotation(atom_count, mu, angle, seed):
    state = DickeState(atom_count, random_state(atom_count, seed))
    rz = RotationSpec("z", angle)
    a = spin_core.rotate(spin_core.twist(state, mu), rz).amplitudes
    b = spin_core.twist(spin_core.rotate(state, rz), mu).amplitudes
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_batched_rotation_equals_columnwise():
    batch = np.column_stack([random_state(12, s) for s in range(4)])
    axis = RotationSpec((0.3, -0.5, 0.8), 0.0).axis
    out = spin_core.apply_rotation(batch, 12, axis, 1.3)
    for column in range(4):
        np.testing.assert_allclose(out[:, column], spin_core.apply_rotation(batch[:, column], 12, axis, 1.3), atol=1e-12)


def test_rotation_preserves_norm_at_large_n():
    state = spin_core.coherent_state(1400, np.pi / 2)
    rotated = spin_core.rotate(state, RotationSpec((1, 1, 1), 0.7))
    assert rotated.norm() == pytest.approx(1.0, abs=1e-10)


# ---------- squeezing ----------

@pytest.mark.parametrize("atom_count", [10, 50, 200])
@pytest.mark.parametrize("mu", [1e-3, 0.01, 0.05])
def test_one_axis_twisting_closed_form(atom_count, mu):
    numeric = spin_core.squeezing_wineland(spin_core.squeezed_state(atom_count, mu))
    assert numeric == pytest.approx(spin_core.one_axis_twisting_xi2(atom_count, mu), rel=1e-8)


def test_twisted_mean_spin():
    mom = spin_core.moments(spin_core.squeezed_state(300, 0.02))
    assert mom.mean_spin[0] == pytest.approx(spin_core.twisted_mean_spin(300, 0.02), rel=1e-10)


def test_calibrate_twist_reaches_target():
    cal = spin_core.calibrate_twist(1400, -4.3)
    assert cal.xi2_db == pytest.approx(-4.3, abs=1e-6)
    assert 0 < cal.mu < spin_core.twist_scan_limit(1400)
    assert len(cal.mu_grid) == len(cal.xi2_db_grid) == 400


def test_calibrate_twist_takes_smallest_twist():
    cal = spin_core.calibrate_twist(200, -3.0, grid_points=120)
    lower = [db for mu, db in zip(cal.mu_grid, cal.xi2_db_grid) if mu < cal.mu]
    assert all(db > -3.0 for db in lower)


def test_calibrate_twist_edges():
    assert spin_core.calibrate_twist(100, 0.0).mu == 0.0
    with pytest.raises(InvalidArgumentError):
        spin_core.calibrate_twist(100, 1.0)
    with pytest.raises(CalibrationError):
        spin_core.calibrate_twist(4, -20.0)


def test_alignment_rotation_removes_tilt():
    state = spin_core.squeezed_state(200, spin_core.calibrate_twist(200, -3.0).mu)
    tilt = spin_core.anti_squeezed_tilt(state)
    assert 0 < tilt < np.pi / 2
    aligned = spin_core.rotate(state, RotationSpec("x", -tilt))
    assert spin_core.anti_squeezed_tilt(aligned) == pytest.approx(0.0, abs=1e-8)
    assert spin_core.squeezing_wineland(aligned) == pytest.approx(spin_core.squeezing_wineland(state), rel=1e-9)


def test_match_twist_tilt_recovers_twist():
    mu = spin_core.calibrate_twist(200, -3.0).mu
    tilt = spin_core.anti_squeezed_tilt(spin_core.squeezed_state(200, mu))
    assert spin_core.match_twist_tilt(200, tilt) == pytest.approx(mu, rel=1e-6)


def test_match_twist_tilt_out_of_reach():
    with pytest.raises(CalibrationError):
        spin_core.match_twist_tilt(50, np.radians(80))


def test_db_helpers():
    assert spin_core.standard_quantum_limit(1400) == pytest.approx(0.026726, rel=1e-4)
    assert spin_core.to_db(0.5) == pytest.approx(-3.0103, abs=1e-4)
    assert spin_core.from_db(-10.0) == pytest.approx(0.1)
    with pytest.raises(InvalidArgumentError):
        spin_core.to_db(0.0)


# ---------- Wigner ----------

@pytest.mark.parametrize("atom_count", [1, 2, 3, 4, 5])
def test_wigner_polynomials_are_multipole_diagonals(atom_count):
    rows = spin_core._gram_polynomials(atom_count)
    s = Rational(atom_count, 2)
    for k in range(atom_count + 1):
        for i in range(atom_count + 1):
            m = -s + i
            expected = (-1) ** (atom_count - i) * float(CG(s, m, s, -m, k, 0).doit())
            assert rows[k, i] == pytest.approx(expected, abs=1e-12)


def test_wigner_integrates_over_sphere():
    state = spin_core.rotate(spin_core.squeezed_state(6, 0.3), RotationSpec((0.2, 1, 0.4), 0.9))
    x, w = np.polynomial.legendre.leggauss(24)
    azimuth = np.linspace(0, 2 * np.pi, 48, endpoint=False)
    values = spin_core.wigner(state, np.arccos(x)[:, None], azimuth[None, :])
    integral = float(w @ values.sum(axis=1)) * 2 * np.pi / 48
    assert integral == pytest.approx(np.sqrt(4 * np.pi / 7), rel=1e-10)


def test_wigner_peaks_on_coherent_direction():
    state = spin_core.coherent_state(20, 1.0, 0.5)
    peak = float(spin_core.wigner(state, 1.0, 0.5))
    _, _, raster = spin_core.wigner_grid(state, 31, 61)
    assert peak > 0 and peak >= raster.max() - 1e-12


def test_wigner_anisotropy_follows_anti_squeezed_axis():
    state = spin_core.squeezed_state(20, 0.05)
    x, w = np.polynomial.legendre.leggauss(32)
    azimuth = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    polar = np.arccos(x)[:, None]
    values = spin_core.wigner(state, polar, azimuth[None, :])
    # second moments of the direction in the (y, z) plane transverse to <S> = +x
    n_y = np.sin(polar) * np.sin(azimuth)[None, :]
    n_z = np.cos(polar) * np.ones_like(azimuth)[None, :]
    block = np.array([[float(w @ (values * a * b).sum(axis=1)) for b in (n_y, n_z)] for a in (n_y, n_z)])
    along, up = np.linalg.eigh(block)[1][:, -1]
    if along < 0:
        along, up = -along, -up
    expected = spin_core.anti_squeezed_tilt(state)
    assert abs(expected) > np.radians(10)
    assert np.degrees(np.arctan2(up, along)) == pytest.approx(np.degrees(expected), abs=1.0)


def test_wigner_grid_shape():
    polar, azimuth, w = spin_core.wigner_grid(spin_core.coherent_state(8, np.pi / 2), 7, 13)
    assert w.shape == (7, 13) and polar.size == 7 and azimuth.size == 13


def test_wigner_size_limit():
    with pytest.raises(UnsupportedSizeError):
        spin_core.wigner(spin_core.coherent_state(300, np.pi / 2), 0.0, 0.0)
