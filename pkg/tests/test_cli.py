import json

import numpy as np
import pytest
import yaml

import main
from dataset_io import read_table
from errors import ConfigError

SMALL = {"sequence": {"atom_count": 100}, "noise": {"mean_atoms": 100, "prep_sigma_atoms": 5.0}}


def small_squeeze(**changes):
    settings = {"atom_count": 200, "target_db": -3.0, "grid_points": 80, "wigner_atoms": 40,
                "wigner_polar_points": 9, "wigner_azimuth_points": 17, "oracle_atoms": 16}
    settings.update(changes)
    return settings


def small_fig3():
    return {"ramsey_times_s": [1e-3, 20e-3], "shots": 60, "contrast": 0.95,
            "fringe_points": 6, "fringe_shots_per_point": 10}


# ---------- squeeze ----------

def test_squeeze_outputs(scenario, tmp_path):
    report = main.cmd_squeeze(scenario("squeeze", squeeze=small_squeeze()))
    out = tmp_path / "squeeze"
    for name in ("twist_curve.csv", "oracle.csv", "wigner.csv", "report.json", "squeeze.svg"):
        assert (out / name).exists()
    assert report["xi2_db"] == pytest.approx(-3.0, abs=1e-6)
    assert report["oracle"]["max_abs_diff_db"] < 1e-6
    assert report["alignment_deg"] == pytest.approx(-report["anti_squeezed_tilt_deg"])
    wigner, header = read_table(out / "wigner.csv")
    assert len(wigner) == 9 * 17
    assert header["scenario"] == "squeeze"
    assert json.loads((out / "report.json").read_text())["wigner"]["atom_count"] == 40


def test_squeeze_without_twist(scenario):
    report = main.cmd_squeeze(scenario("squeeze", squeeze=small_squeeze(target_db=0.0)))
    assert report["mu_rad"] == 0.0
    assert report["combined_rotation_deg"] == pytest.approx(90.0)
    assert report["wigner"]["mu_rad"] == 0.0


# ---------- fig3 ----------

def test_fig3_report(scenario, tmp_path):
    report = main.cmd_fig3(scenario("fig3", fig3=small_fig3(), **SMALL))
    out = tmp_path / "fig3"
    for name in ("shots.csv", "phase_noise.csv", "fringe.csv", "model.csv", "report.json", "fig3.svg"):
        assert (out / name).exists()
    assert set(report["sql_crossing_s"]) == {"squeezed", "coherent"}
    assert report["sql_rad"] == pytest.approx(0.1)
    assert report["contrast_decay"] > 0
    table, _ = read_table(out / "phase_noise.csv")
    assert len(table) == 4
    assert table["shots"].eq(60).all()


# Scaled to N = 100: technical, preparation and detection noise keep the
# same share of the projection noise as the 1400-atom setup.
SCALED_FIG3_NOISE = {"mean_atoms": 100, "prep_sigma_atoms": 3.0, "det_sigma_n1_atoms": 0.41,
                     "det_sigma_n2_atoms": 0.30, "tech_sigma_hz": 0.561, "meanfield_hz_per_atom": 0.254}


def test_fig3_crossings_over_seeds(scenario, tmp_path):
    settings = {"ramsey_times_s": [1e-3, 10e-3, 15e-3, 20e-3, 25e-3, 30e-3], "shots": 240,
                "contrast": 0.981, "fringe_points": 4, "fringe_shots_per_point": 5}
    squeezed, raw, coherent_short = [], [], []
    for seed in range(10):
        report = main.cmd_fig3(scenario("fig3", out=tmp_path / str(seed), seed=seed, fig3=settings,
                                        sequence={"atom_count": 100}, noise=SCALED_FIG3_NOISE))
        assert report["sql_crossing_s"]["squeezed"] is not None
        assert report["sql_crossing_raw_s"]["squeezed"] is not None
        squeezed.append(report["sql_crossing_s"]["squeezed"])
        raw.append(report["sql_crossing_raw_s"]["squeezed"])
        coherent_short.append(report["short_time_xi2_db"]["coherent"])
    assert 15e-3 <= np.mean(squeezed) <= 25e-3
    assert 8e-3 <= np.mean(raw) <= 15e-3
    assert np.mean(raw) < np.mean(squeezed)
    assert np.mean(coherent_short) == pytest.approx(0.2, abs=0.4)


def test_fig3_shots_do_not_depend_on_threads(scenario, tmp_path):
    main.cmd_fig3(scenario("fig3", out=tmp_path / "a", threads=1, fig3=small_fig3(), **SMALL))
    main.cmd_fig3(scenario("fig3", out=tmp_path / "b", threads=3, fig3=small_fig3(), **SMALL))
    first = (tmp_path / "a" / "fig3" / "shots.csv").read_bytes()
    second = (tmp_path / "b" / "fig3" / "shots.csv").read_bytes()
    assert first == second


# ---------- scan ----------

def test_scan_measures_mw_phase(scenario, tmp_path):
    settings = {"etas": [1.0, 0.5], "shots": 60, "fringe_points": 6,
                "fringe_shots_per_point": 10, "trajectory_steps": 3}
    report = main.cmd_scan(scenario("scan", scan=settings, **SMALL))
    assert report["positions"] == 2
    scan, _ = read_table(tmp_path / "scan" / "scan.csv")
    assert list(scan["eta"]) == [1.0, 0.5]
    np.testing.assert_allclose(scan["delta_phi_rad"], scan["expected_delta_phi_rad"], atol=0.15)
    assert scan["expected_delta_phi_rad"].iloc[1] > 3 * scan["expected_delta_phi_rad"].iloc[0]
    trajectory, _ = read_table(tmp_path / "scan" / "trajectory.csv")
    assert len(trajectory) == 3


@pytest.mark.parametrize("enabled", [True, False])
def test_scan_correction_removes_transport_meanfield(scenario, enabled):
    noise = {"mean_atoms": 100, "prep_sigma_atoms": 30.0, "det_sigma_n1_atoms": 0.5, "det_sigma_n2_atoms": 0.5,
             "meanfield_hz_per_atom": 0.05, "meanfield_transport_fraction": 1.0, "correction_enabled": enabled}
    settings = {"etas": [0.5], "shots": 200, "fringe_points": 4,
                "fringe_shots_per_point": 5, "trajectory_steps": 2}
    report = main.cmd_scan(scenario("scan", scan=settings, sequence={"atom_count": 100}, noise=noise))
    assert report["correction_enabled"] is enabled
    if enabled:
        assert report["mean_xi2_raw_db"] > report["mean_xi2_db"] + 3
    else:
        assert report["mean_xi2_db"] == pytest.approx(report["mean_xi2_raw_db"])


def test_drive_override(scenario):
    config = scenario("scan", chip={"mw_current_rms_a": 0.0}, **SMALL)
    assert main._layout(config).mw_amplitude == 0.0
    with pytest.raises(ConfigError):
        main._layout(scenario("scan", chip={"mw_current_rms_a": -1.0}, **SMALL))


# ---------- sensitivity ----------

def test_sensitivity_rows(scenario, tmp_path):
    report = main.cmd_sensitivity(scenario("sensitivity", sensitivity={"shots": 60}, **SMALL))
    rows = {row["label"]: row for row in report["rows"]}
    assert list(rows) == ["SQL reference", "squeezed Ramsey", "mw pulse"]
    assert rows["SQL reference"]["sigma_phi_rad"] == pytest.approx(0.1)
    assert rows["SQL reference"]["delta_nu_hz"] == pytest.approx(0.1 / (2 * np.pi * 20e-3))
    for row in rows.values():
        assert row["per_root_hz_t"] == pytest.approx(row["delta_B_nearres_t"] * np.sqrt(11.0))
    assert rows["mw pulse"]["mode"] == "pulse"
    assert rows["mw pulse"]["interrogation_time_s"] == pytest.approx(80e-6)
    assert rows["squeezed Ramsey"]["interrogation_time_s"] == pytest.approx(20e-3)
    table, _ = read_table(tmp_path / "sensitivity" / "sensitivity.csv")
    assert len(table) == 3


# ---------- calibrate ----------

def test_calibrate_recovers_alpha(scenario, tmp_path):
    settings = {"mean_atoms_grid": [100, 200, 400], "shots": 300}
    report = main.cmd_calibrate(scenario("calibrate", calibrate=settings,
                                         noise={"prep_sigma_atoms": 5.0}))
    assert abs(report["alpha"] - 0.82) < 4 * report["sigma"]
    assert report["corrected_alpha"] == pytest.approx(1.0, rel=1e-9)
    points, _ = read_table(tmp_path / "calibrate" / "points.csv")
    assert len(points) == 6


def test_calibrate_interval_coverage(scenario, tmp_path):
    settings = {"mean_atoms_grid": [100, 200, 400], "shots": 300}
    hits = sum(
        main.cmd_calibrate(scenario("calibrate", out=tmp_path / str(seed), seed=seed, calibrate=settings,
                                    noise={"prep_sigma_atoms": 5.0}))["contains_injected"]
        for seed in range(20)
    )
    assert hits >= 16


# ---------- command line ----------

def write_config(tmp_path, doc):
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_main_runs_a_scenario(tmp_path):
    path = write_config(tmp_path, {"squeeze": small_squeeze(wigner_atoms=0)})
    report = main.main(["squeeze", "--config", path, "--out", str(tmp_path / "out"), "-q"])
    assert report["wigner"] is None
    assert (tmp_path / "out" / "squeeze" / "report.json").exists()


def test_main_accepts_mode_flag(tmp_path):
    path = write_config(tmp_path, {"squeeze": small_squeeze(wigner_atoms=0)})
    report = main.main(["--mode", "squeeze", "--config", path, "--out", str(tmp_path / "out"), "-q"])
    assert report["atom_count"] == 200


@pytest.mark.parametrize("argv", [[], ["fig3", "--mode", "scan"], ["teleport"]])
def test_main_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main.main(argv)
    assert info.value.code == 2


def test_main_config_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        main.main(["fig3", "--config", str(tmp_path / "missing.yaml"), "-q"])
    assert info.value.code == 1

    path = write_config(tmp_path, {"fig3": {"colour": "blue"}})
    with pytest.raises(SystemExit) as info:
        main.main(["fig3", "--config", path, "-q"])
    assert info.value.code == 2


def test_failed_run_is_quarantined(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path, {"squeeze": small_squeeze(target_db=0.0, wigner_atoms=300)})
    with pytest.raises(SystemExit) as info:
        main.main(["squeeze", "--config", path, "--out", str(out), "-q"])
    assert info.value.code == 2
    assert not (out / "squeeze").exists()
    assert (out / "quarantine" / "squeeze" / "twist_curve.csv").exists()
    assert (out / "quarantine" / "squeeze" / "oracle.csv").exists()
