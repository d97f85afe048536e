import numpy as np
import pytest
import yaml
from scipy import constants

import chip_field
from chip_field import ChipGeometry, MwComponents, MwFieldSample, WireSegment
from errors import ConfigError, FieldDomainError, InvalidArgumentError, QuantizationAxisError


@pytest.fixture
def long_wire():
    """1 A along +x, 20 cm long, bias cancelling its field 100 um above it."""
    wire = WireSegment((-0.1, 0.0, 0.0), (0.1, 0.0, 0.0), 1.0, name="wire")
    return ChipGeometry((wire,), bias=(1e-4, 2e-3, 0.0))


@pytest.fixture
def layout():
    return chip_field.default_layout()


@pytest.fixture
def layout_doc():
    with open(chip_field.DEFAULT_GEOMETRY_PATH) as f:
        return yaml.safe_load(f)


# ---------- Biot-Savart ----------

def test_long_wire_field(long_wire):
    bare = ChipGeometry(long_wire.segments)
    field = chip_field.biot_savart(bare, (0.0, 0.0, 1e-3))
    expected = constants.mu_0 / (2 * np.pi * 1e-3)
    np.testing.assert_allclose(field, [0.0, -expected, 0.0], rtol=1e-4, atol=1e-12)


def test_fields_of_many_points(long_wire):
    points = np.array([[0.0, 0.0, 1e-3], [0.01, 2e-3, -1e-3], [0.0, -5e-4, 5e-4]])
    batch = chip_field.biot_savart(long_wire, points)
    for point, field in zip(points, batch):
        np.testing.assert_allclose(field, chip_field.biot_savart(long_wire, point))


def test_closed_form_matches_quadrature(layout):
    geom = layout.geometry(layout.eta_config(0.8))
    point = (2e-6, 5e-6, 30e-6)
    np.testing.assert_allclose(chip_field.biot_savart_quadrature(geom, point),
                               chip_field.biot_savart(geom, point), rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(chip_field.biot_savart_quadrature(geom, point, "mw"),
                               chip_field.mw_field(geom, point), rtol=1e-8, atol=1e-14)


def test_on_wire_points(long_wire):
    with pytest.raises(FieldDomainError):
        chip_field.biot_savart(long_wire, (0.05, 0.0, 0.0))
    field = chip_field.biot_savart(long_wire, np.array([[0.05, 0.0, 0.0], [0.0, 0.0, 1e-3]]), strict=False)
    assert np.all(np.isnan(field[0])) and np.all(np.isfinite(field[1]))


def test_wire_extension_has_no_field(long_wire):
    bare = ChipGeometry(long_wire.segments)
    np.testing.assert_array_equal(chip_field.biot_savart(bare, (0.2, 0.0, 0.0)), np.zeros(3))


@pytest.mark.parametrize("kwargs", [
    {"start": (0, 0, 0), "end": (0, 0, 0), "current": 1.0},
    {"start": (0, 0, 0), "end": (1, 0, 0), "current": 1j},
    {"start": (0, 0, 0), "end": (1, 0, 0), "current": 1.0, "role": "rf"},
    {"start": (0, 0, np.inf), "end": (1, 0, 0), "current": 1.0},
])
def test_segment_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        WireSegment(**kwargs)


def test_field_map_marks_wire_nodes(long_wire):
    grid = chip_field.field_map(long_wire, [0.0, 0.01], [0.0], [0.0, 1e-3])
    assert len(grid) == 4
    assert grid["b_t"].isna().sum() == 2


# ---------- traps ----------

def test_wire_guide_matches_infinite_wire(long_wire):
    height = chip_field.infinite_wire_trap_height(1.0, 2e-3)
    assert height == pytest.approx(1e-4)
    trap = chip_field.transverse_trap(long_wire, (0.0, 0.0, 0.8e-4))
    assert trap.position[2] == pytest.approx(height, rel=1e-4)
    assert trap.position[1] == pytest.approx(0.0, abs=1e-9)
    assert trap.bottom_field == pytest.approx(1e-4, rel=1e-4)
    assert np.isnan(trap.frequencies[0])

    # quadrupole gradient b' = B_bias / h, f = sqrt(g_F m_F mu_B b'^2 / (m B0)) / 2 pi
    gradient = 2e-3 / height
    expected = np.sqrt(chip_field.GF_MF * chip_field.MU_B * gradient**2 / (chip_field.RB87_MASS_KG * 1e-4)) / (2 * np.pi)
    assert trap.frequencies[1] == pytest.approx(expected, rel=1e-2)
    assert trap.frequencies[2] == pytest.approx(expected, rel=1e-2)


def test_default_layout_trap(layout):
    trap = chip_field.find_trap(layout.geometry(layout.eta_config(1.0)), layout.trap_guess)
    f_x, f_y, f_z = trap.frequencies
    assert 35e-6 < trap.position[2] - layout.surface_z < 45e-6
    assert trap.bottom_field == pytest.approx(chip_field.MAGIC_FIELD_T, abs=chip_field.MAGIC_FIELD_TOLERANCE_T)
    assert 90 < f_x < 140
    assert 420 < f_y < 660 and 420 < f_z < 660


def test_transport_moves_toward_surface(layout):
    path = chip_field.transport_trajectory(1.0, 0.5, 6, layout)
    distances = [p.surface_distance for p in path]
    assert [p.eta for p in path][0] == 1.0 and path[-1].eta == 0.5
    assert all(a > b for a, b in zip(distances, distances[1:]))
    assert 14e-6 < distances[-1] < 18e-6


def test_transport_holds_magic_field(layout):
    path = chip_field.transport_trajectory(1.0, 0.5, 11, layout)
    bottoms = np.array([p.bottom_field for p in path])
    np.testing.assert_allclose(bottoms, chip_field.MAGIC_FIELD_T, atol=chip_field.MAGIC_FIELD_TOLERANCE_T)


def test_transport_arguments(layout):
    with pytest.raises(InvalidArgumentError):
        chip_field.transport_trajectory(1.0, 0.5, 1, layout)
    with pytest.raises(InvalidArgumentError):
        chip_field.transport_trajectory(1.0, 0.4, 3, layout)


def test_smooth_ramp_endpoints():
    ramp = chip_field.smooth_ramp(1.0, 0.5, 5)
    assert ramp[0] == 1.0 and ramp[-1] == 0.5
    assert np.all(np.diff(ramp) < 0)


# ---------- layout ----------

def test_eta_scaling(layout):
    config = layout.eta_config(0.5)
    assert config.main_current == pytest.approx(layout.main_current * 0.25)
    assert config.dimple_current == pytest.approx(layout.dimple_current / 16)
    assert config.bias == pytest.approx((layout.bias_x, layout.bias_y * 0.5, 0.0))
    with pytest.raises(InvalidArgumentError):
        layout.eta_config(0.45)


def test_mw_amplitude_from_rms(layout):
    assert layout.mw_amplitude == pytest.approx(np.sqrt(2) * 5e-3 * 0.2)


@pytest.mark.parametrize("edit", [
    lambda doc: doc.update(colour="red"),
    lambda doc: doc["base"].update(bias_z_t=0.0),
    lambda doc: doc["base"].pop("main_current_a"),
    lambda doc: doc["segments"][0].update(group="ground"),
    lambda doc: doc.update(schema_version=2),
    lambda doc: doc.update(segments=[]),
])
def test_layout_errors(layout_doc, edit):
    edit(layout_doc)
    with pytest.raises(ConfigError):
        chip_field.layout_from_dict(layout_doc)


def test_missing_layout_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        chip_field.load_layout(tmp_path / "nowhere.yaml")


# ---------- microwave potential ----------

def test_linear_polarization_splits_into_sigma():
    sample = MwFieldSample(np.array([1e-5, 0.0, 0.0]), (0.0, 0.0, 0.0))
    parts = chip_field.mw_components(sample, (0.0, 0.0, 3e-4))
    assert parts.pi == pytest.approx(0.0, abs=1e-20)
    assert parts.sigma_plus == pytest.approx(1e-5 / np.sqrt(2))
    assert parts.sigma_minus == pytest.approx(1e-5 / np.sqrt(2))


def test_circular_polarization():
    sample = MwFieldSample(np.array([1e-5, 1e-5j, 0.0]), (0.0, 0.0, 0.0))
    parts = chip_field.mw_components(sample, (0.0, 0.0, 3e-4))
    assert parts.sigma_plus == pytest.approx(np.sqrt(2) * 1e-5)
    assert parts.sigma_minus == pytest.approx(0.0, abs=1e-20)


def test_potential_coefficients():
    assert MwComponents(pi=1e-4, sigma_plus=0.0, sigma_minus=0.0).potential_hz() == pytest.approx(71e3)


def test_quantization_axis_needs_a_field():
    sample = MwFieldSample(np.array([1e-5, 0.0, 0.0]), (0.0, 0.0, 0.0))
    with pytest.raises(QuantizationAxisError):
        chip_field.mw_components(sample, (0.0, 0.0, 1e-13))


def test_no_drive_no_potential(layout):
    geom = layout.geometry(layout.eta_config(1.0), mw_amplitude=0.0)
    assert chip_field.v_mw((-13e-6, 0.0, 40e-6), geom) == 0.0


def test_potential_profile(layout):
    profile = chip_field.mw_potential_profile([0.5, 1.0], 80e-6, layout)
    assert list(profile["eta"]) == [1.0, 0.5]
    near, close = profile["v_mw_hz"]
    assert 120 < near < 180
    assert 1800 < close < 2250
    assert close > 10 * near
    np.testing.assert_allclose(profile["delta_phi_rad"], 2 * np.pi * profile["v_mw_hz"] * 80e-6)
    np.testing.assert_allclose(profile["delta_phi_quadrature_rad"], profile["delta_phi_rad"], rtol=1e-6)


def test_potential_scales_with_drive_squared(layout):
    config = layout.eta_config(1.0)
    point = (-13e-6, 0.0, 40e-6)
    single = chip_field.v_mw(point, layout.geometry(config, layout.mw_amplitude))
    double = chip_field.v_mw(point, layout.geometry(config, 2 * layout.mw_amplitude))
    assert double == pytest.approx(4 * single)
