#!/usr/bin/env python3
"""
Main Orchestration Script

Runs the scanning-probe interferometer scenarios: twist calibration,
phase noise versus Ramsey time, the microwave near-field scan, the field
sensitivity chain and the imaging calibration.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import spin_core
from chip_field import ChipLayout, load_layout, mw_potential_profile, transport_trajectory
from config import VERBS, ScenarioConfig, load_scenario
from dataset_io import quarantine, run_metadata, write_datasets, write_report, write_table
from errors import ConfigError, DegenerateStateError, SimulationError
from estimation import (
    apply_alpha_correction,
    calibrate_alpha,
    fit_ramsey,
    model_phase_noise,
    model_sql_crossing,
    phase_noise,
    phase_shift,
    sensitivity_report,
    sql_crossing,
    squeezing_from_data,
)
from explain import explain_calibration, explain_fig3, explain_scan, explain_sensitivity, explain_squeeze
from noise_mc import (
    Dataset,
    ExperimentJob,
    NoiseModel,
    fringe_jobs,
    mid_fringe_sequence,
    nominal_readout,
    run_batch,
)
from plots import plot_calibration, plot_fig3, plot_scan, plot_squeeze
from sequence_engine import (
    QUOTED_ALIGNMENT_DEG,
    PulseSequence,
    alignment_angles,
    build_paper_sequence,
    contrast_decay_for,
    final_eta,
    sensing_time,
)

log = logging.getLogger(__name__)

PACKAGE_DIR = Path(__file__).parent


class ShotAllocator:
    """Hands out non-overlapping shot-index ranges under one base seed."""

    def __init__(self):
        self.next_index = 0

    def take(self, shots: int) -> int:
        start = self.next_index
        self.next_index += int(shots)
        return start


# ---------- Shared helpers ----------

def _verb_dir(config: ScenarioConfig) -> Path:
    return Path(config.output_dir) / config.name


def _meta(config: ScenarioConfig) -> Dict[str, object]:
    return run_metadata(config.config_hash, config.seed, scenario=config.name)


def _sequence_params(config: ScenarioConfig) -> dict:
    """Sequence section with the twist calibrated once up front."""
    params = dict(config.sequence)
    if params["twist_mu_rad"] is None:
        calibration = spin_core.calibrate_twist(int(params["atom_count"]), float(params["target_squeezing_db"]))
        params["twist_mu_rad"] = calibration.mu
    return params


def _layout(config: ScenarioConfig) -> ChipLayout:
    chip = config.chip
    path = Path(chip["geometry_path"])
    if not path.is_absolute():
        path = PACKAGE_DIR / path
    layout = load_layout(path)
    rms = chip["mw_current_rms_a"]
    if rms is not None:
        if not np.isfinite(rms) or rms < 0:
            raise ConfigError(f"chip.mw_current_rms_a must be >= 0, got {rms!r}")
        layout = replace(layout, mw_current_rms=float(rms))
    return layout


def _fringe_thetas(points: int) -> np.ndarray:
    return np.linspace(-np.pi, np.pi, int(points), endpoint=False)


def _readout_row(data: Dataset, seq: PulseSequence, noise: NoiseModel) -> Dict[str, float]:
    """Phase noise and squeezing of a mid-fringe dataset, corrected and raw."""
    contrast, _ = nominal_readout(seq, noise)
    det_sigma_n = float(np.hypot(*noise.detection_sigmas(final_eta(seq))) / noise.mean_N)
    noise_est = phase_noise(data, contrast, corrected=True)
    squeezing = squeezing_from_data(data, noise.mean_N, contrast, det_sigma_n, corrected=True)
    raw = squeezing_from_data(data, noise.mean_N, contrast, corrected=False)
    return {
        "contrast": contrast,
        "mean_n": noise_est.mean_n,
        "sigma_phi_rad": noise_est.sigma_phi,
        "sigma_err_rad": noise_est.sigma_err,
        "xi2_db": squeezing.xi2_db,
        "xi2_err_db": squeezing.xi2_err_db,
        "xi2_raw_db": raw.xi2_db,
        "xi2_det_subtracted_db": squeezing.xi2_det_subtracted_db,
        "shots": noise_est.shots,
    }


def _closed_form_db(atom_count: int, mu: float) -> float:
    try:
        return spin_core.to_db(spin_core.one_axis_twisting_xi2(atom_count, mu))
    except DegenerateStateError:
        return float("inf")


def _mean_db(values_db) -> float:
    return float(10 * np.log10(np.mean(10 ** (np.asarray(values_db, dtype=float) / 10))))


# ---------- Commands ----------

def cmd_squeeze(config: ScenarioConfig) -> dict:
    """Calibrate the twist, cross-check it against the closed form, draw the Wigner raster."""
    s = config.settings
    out, meta = _verb_dir(config), _meta(config)
    n_atoms = int(s["atom_count"])

    calibration = spin_core.calibrate_twist(n_atoms, float(s["target_db"]), int(s["grid_points"]))
    curve = pd.DataFrame({"mu_rad": calibration.mu_grid, "xi2_db": calibration.xi2_db_grid})
    curve["xi2_db_closed_form"] = [
        _closed_form_db(n_atoms, mu) for mu in curve["mu_rad"]
    ]
    write_table(curve, out / "twist_curve.csv", meta,
                units={"mu_rad": "rad", "xi2_db": "dB", "xi2_db_closed_form": "dB"}, label="points")

    oracle_n = int(s["oracle_atoms"])
    oracle_mu = np.linspace(0.0, spin_core.twist_scan_limit(oracle_n), 41)[1:]
    oracle = pd.DataFrame({
        "mu_rad": oracle_mu,
        "xi2_db_state": [spin_core.to_db(spin_core.squeezing_wineland(spin_core.squeezed_state(oracle_n, mu)))
                         for mu in oracle_mu],
        "xi2_db_closed_form": [_closed_form_db(oracle_n, mu) for mu in oracle_mu],
    })
    oracle["diff_db"] = oracle["xi2_db_state"] - oracle["xi2_db_closed_form"]
    write_table(oracle, out / "oracle.csv", meta,
                units={"mu_rad": "rad", "xi2_db_state": "dB", "xi2_db_closed_form": "dB", "diff_db": "dB"},
                label="points")

    alignment, combined = alignment_angles(n_atoms, calibration.mu)
    tilt = -alignment

    wigner_table, wigner_info = None, None
    wigner_n = int(s["wigner_atoms"])
    if wigner_n > 0:
        mu_w = 0.0 if calibration.mu == 0 else spin_core.match_twist_tilt(wigner_n, tilt)
        polar, azimuth, w = spin_core.wigner_grid(
            spin_core.squeezed_state(wigner_n, mu_w),
            int(s["wigner_polar_points"]), int(s["wigner_azimuth_points"]),
        )
        pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
        wigner_table = pd.DataFrame({"polar_rad": pp.ravel(), "azimuth_rad": aa.ravel(), "w": w.ravel()})
        write_table(wigner_table, out / "wigner.csv", meta,
                    units={"polar_rad": "rad", "azimuth_rad": "rad"}, label="raster points")
        wigner_info = {"atom_count": wigner_n, "mu_rad": mu_w}

    report = {
        "atom_count": n_atoms,
        "target_db": calibration.target_db,
        "mu_rad": calibration.mu,
        "xi2_db": calibration.xi2_db,
        "anti_squeezed_tilt_deg": float(np.degrees(tilt)),
        "alignment_deg": float(np.degrees(alignment)),
        "combined_rotation_deg": float(np.degrees(combined)),
        "quoted_alignment_deg": QUOTED_ALIGNMENT_DEG,
        "oracle": {
            "atom_count": oracle_n,
            "points": len(oracle),
            "max_abs_diff_db": float(oracle["diff_db"].abs().max()),
        },
        "wigner": wigner_info,
    }
    write_report(report, out / "report.json", meta)
    plot_squeeze(curve, calibration.mu, calibration.target_db, wigner_table, out / "squeeze.svg")
    explain_squeeze(report)
    return report


def cmd_fig3(config: ScenarioConfig) -> dict:
    """Squeezed and coherent phase noise over the Ramsey-time grid."""
    s = config.settings
    out, meta = _verb_dir(config), _meta(config)
    noise = config.noise_model()
    params = _sequence_params(config)
    n_atoms = int(params["atom_count"])
    shots = int(s["shots"])
    ramsey_times = [float(t) for t in s["ramsey_times_s"]]

    probe = build_paper_sequence("fig3_squeezed", {
        **params, "ramsey_time_s": float(s["fringe_ramsey_time_s"]), "contrast_decay": 0.0,
    })
    state_contrast, _ = nominal_readout(probe, noise)
    gamma = contrast_decay_for(float(s["contrast"]), state_contrast)
    kinds = {
        "squeezed": ("fig3_squeezed", {**params, "contrast_decay": gamma}),
        "coherent": ("fig3_coherent", {**params, "twist_mu_rad": 0.0, "combined_rotation_deg": "auto",
                                        "contrast_decay": 0.0}),
    }

    allocator = ShotAllocator()
    labels, jobs = [], []
    for kind, (seq_kind, kind_params) in kinds.items():
        for t in ramsey_times:
            seq = mid_fringe_sequence(build_paper_sequence(seq_kind, {**kind_params, "ramsey_time_s": t}), noise)
            jobs.append(ExperimentJob(seq, noise, shots, config.seed, allocator.take(shots)))
            labels.append({"kind": kind, "ramsey_time_s": t})

    fringe_seq = build_paper_sequence("fig3_squeezed", {
        **kinds["squeezed"][1], "ramsey_time_s": float(s["fringe_ramsey_time_s"]),
    })
    thetas = _fringe_thetas(s["fringe_points"])
    per_theta = int(s["fringe_shots_per_point"])
    inset_jobs = fringe_jobs(fringe_seq, noise, thetas, per_theta, config.seed,
                             allocator.take(per_theta * len(thetas)))

    print(f"Simulating {allocator.next_index} shots...")
    results = run_batch(jobs + inset_jobs, threads=config.threads)
    datasets, inset = results[:len(jobs)], Dataset.merge(results[len(jobs):])

    write_datasets(list(zip(labels, datasets)), out / "shots.csv", meta, units={"ramsey_time_s": "s"})
    table = pd.DataFrame([
        {**label, **_readout_row(data, job.seq, noise)}
        for label, data, job in zip(labels, datasets, jobs)
    ])
    write_table(table, out / "phase_noise.csv", meta, col_order=["kind", "ramsey_time_s"],
                units={"ramsey_time_s": "s", "sigma_phi_rad": "rad", "sigma_err_rad": "rad",
                       "xi2_db": "dB", "xi2_err_db": "dB", "xi2_raw_db": "dB", "xi2_det_subtracted_db": "dB"})

    fit = fit_ramsey(inset, corrected=False)
    fringe = pd.DataFrame({"theta_rad": inset.thetas(), "n": inset.n_values(corrected=False)})
    fringe["n_fit"] = fit.predict(fringe["theta_rad"])
    write_table(fringe, out / "fringe.csv", meta, units={"theta_rad": "rad"}, label="shots")

    t_model = np.linspace(0.0, 1.1 * max(ramsey_times), 221)
    model = pd.DataFrame({
        "ramsey_time_s": t_model,
        "sql_rad": np.full(t_model.size, spin_core.standard_quantum_limit(n_atoms)),
        "squeezed_model_rad": model_phase_noise(t_model, float(s["model_squeezed_db"]), n_atoms, noise.tech_sigma_f),
        "coherent_model_rad": model_phase_noise(t_model, float(s["model_coherent_db"]), n_atoms, noise.tech_sigma_f),
    })
    write_table(model, out / "model.csv", meta,
                units={"ramsey_time_s": "s", "sql_rad": "rad", "squeezed_model_rad": "rad",
                       "coherent_model_rad": "rad"}, label="points")

    crossings, raw_crossings, short_time = {}, {}, {}
    for kind, rows in table.groupby("kind", sort=False):
        crossings[kind] = sql_crossing(rows["ramsey_time_s"], rows["xi2_db"])
        raw_crossings[kind] = sql_crossing(rows["ramsey_time_s"], rows["xi2_raw_db"])
        short_time[kind] = float(rows.sort_values("ramsey_time_s")["xi2_db"].iloc[0])

    report = {
        "atom_count": n_atoms,
        "shots_per_point": shots,
        "contrast": float(s["contrast"]),
        "contrast_decay": gamma,
        "twist_mu_rad": float(params["twist_mu_rad"]),
        "sql_rad": spin_core.standard_quantum_limit(n_atoms),
        "sql_crossing_s": crossings,
        "sql_crossing_raw_s": raw_crossings,
        "model_sql_crossing_s": model_sql_crossing(float(s["model_squeezed_db"]), n_atoms, noise.tech_sigma_f),
        "short_time_xi2_db": short_time,
        "fringe": {
            "ramsey_time_s": float(s["fringe_ramsey_time_s"]),
            "contrast": fit.contrast,
            "contrast_sigma": fit.contrast_sigma,
            "phase_rad": fit.phase,
        },
    }
    write_report(report, out / "report.json", meta)
    plot_fig3(table, model, fringe, out / "fig3.svg")
    explain_fig3(table, report)
    return report


def cmd_scan(config: ScenarioConfig) -> dict:
    """Phase shift and squeezing at each probe position along the transport."""
    s = config.settings
    out, meta = _verb_dir(config), _meta(config)
    noise = config.noise_model()
    params = _sequence_params(config)
    layout = _layout(config)
    etas = [float(e) for e in s["etas"]]
    mw_pulse = float(params["mw_pulse_s"])
    shots = int(s["shots"])

    trajectory = transport_trajectory(1.0, min(etas), int(s["trajectory_steps"]), layout)
    write_table(pd.DataFrame([{
        "eta": p.eta,
        "x_m": p.position[0], "y_m": p.position[1], "z_m": p.position[2],
        "distance_m": p.surface_distance,
        "bottom_field_t": p.bottom_field,
        "f_x_hz": p.frequencies[0], "f_y_hz": p.frequencies[1], "f_z_hz": p.frequencies[2],
    } for p in trajectory]), out / "trajectory.csv", meta,
        units={"x_m": "m", "y_m": "m", "z_m": "m", "distance_m": "m", "bottom_field_t": "T",
               "f_x_hz": "Hz", "f_y_hz": "Hz", "f_z_hz": "Hz"}, label="trap positions")

    profile = mw_potential_profile(etas, mw_pulse, layout)
    write_table(profile, out / "mw_profile.csv", meta,
                units={"distance_m": "m", "x_m": "m", "y_m": "m", "z_m": "m", "bottom_field_t": "T",
                       "v_mw_hz": "Hz", "delta_phi_rad": "rad", "delta_phi_quadrature_rad": "rad"},
                label="positions")

    allocator = ShotAllocator()
    thetas = _fringe_thetas(s["fringe_points"])
    per_theta = int(s["fringe_shots_per_point"])
    jobs: List[ExperimentJob] = []
    plan: List[Tuple[dict, slice, slice, int]] = []
    for _, position in profile.iterrows():
        eta = float(position["eta"])
        base = {**params, "probe_eta": eta}
        reference = build_paper_sequence("scanning_probe", {**base, "mw_potential_hz": 0.0})
        pulsed = build_paper_sequence("scanning_probe", {**base, "mw_potential_hz": float(position["v_mw_hz"])})

        start = len(jobs)
        jobs += fringe_jobs(reference, noise, thetas, per_theta, config.seed, allocator.take(per_theta * len(thetas)))
        ref_slice = slice(start, len(jobs))
        jobs += fringe_jobs(pulsed, noise, thetas, per_theta, config.seed, allocator.take(per_theta * len(thetas)))
        pulse_slice = slice(ref_slice.stop, len(jobs))
        jobs.append(ExperimentJob(mid_fringe_sequence(pulsed, noise), noise, shots, config.seed,
                                  allocator.take(shots)))
        plan.append((position.to_dict(), ref_slice, pulse_slice, len(jobs) - 1))

    print(f"Simulating {allocator.next_index} shots at {len(plan)} positions...")
    results = run_batch(jobs, threads=config.threads)

    rows, parts = [], []
    for position, ref_slice, pulse_slice, mid_index in plan:
        eta = position["eta"]
        reference = Dataset.merge(results[ref_slice])
        pulsed = Dataset.merge(results[pulse_slice])
        mid = results[mid_index]
        fit_ref, fit_pulse = fit_ramsey(reference), fit_ramsey(pulsed)
        shift = phase_shift(fit_pulse, fit_ref)
        readout = _readout_row(mid, jobs[mid_index].seq, noise)
        rows.append({
            "eta": eta,
            "distance_m": position["distance_m"],
            "v_mw_hz": position["v_mw_hz"],
            "expected_delta_phi_rad": position["delta_phi_rad"],
            "delta_phi_rad": shift.delta,
            "delta_phi_sigma_rad": shift.sigma,
            "reference_phase_rad": fit_ref.phase,
            "pulsed_phase_rad": fit_pulse.phase,
            "fringe_contrast": fit_pulse.contrast,
            "sigma_phi_deg": float(np.degrees(readout["sigma_phi_rad"])),
            **readout,
        })
        parts += [({"eta": eta, "run": "reference"}, reference),
                  ({"eta": eta, "run": "pulsed"}, pulsed),
                  ({"eta": eta, "run": "mid_fringe"}, mid)]

    scan = pd.DataFrame(rows)
    write_datasets(parts, out / "shots.csv", meta)
    write_table(scan, out / "scan.csv", meta, col_order=["eta", "distance_m"],
                units={"distance_m": "m", "v_mw_hz": "Hz", "expected_delta_phi_rad": "rad",
                       "delta_phi_rad": "rad", "delta_phi_sigma_rad": "rad", "reference_phase_rad": "rad",
                       "pulsed_phase_rad": "rad", "sigma_phi_deg": "deg", "sigma_phi_rad": "rad",
                       "sigma_err_rad": "rad", "xi2_db": "dB", "xi2_err_db": "dB", "xi2_raw_db": "dB",
                       "xi2_det_subtracted_db": "dB"}, label="positions")

    report = {
        "positions": len(scan),
        "mw_amplitude_a": layout.mw_amplitude,
        "mw_pulse_s": mw_pulse,
        "shots_per_position": shots,
        "mean_xi2_db": _mean_db(scan["xi2_db"]),
        "mean_xi2_raw_db": _mean_db(scan["xi2_raw_db"]),
        "mean_sigma_phi_deg": float(np.degrees(np.sqrt(np.mean(scan["sigma_phi_rad"] ** 2)))),
        "max_abs_delta_phi_rad": float(scan["delta_phi_rad"].abs().max()),
        "correction_enabled": noise.correction_enabled,
    }
    write_report(report, out / "report.json", meta)
    plot_scan(scan, out / "scan.svg")
    explain_scan(scan, report)
    return report


def cmd_sensitivity(config: ScenarioConfig) -> dict:
    """Phase noise of the free-evolution and mw-pulse probes turned into field sensitivity."""
    s = config.settings
    out, meta = _verb_dir(config), _meta(config)
    noise = config.noise_model()
    params = _sequence_params(config)
    layout = _layout(config)
    n_atoms = int(params["atom_count"])
    shots, cycle = int(s["shots"]), float(s["cycle_s"])
    ramsey_time, mw_pulse = float(s["ramsey_time_s"]), float(s["mw_pulse_s"])
    eta = float(s["probe_eta"])
    operating = s["operating_field_t"]
    operating = None if operating is None else float(operating)

    profile = mw_potential_profile([eta], mw_pulse, layout, with_quadrature=False)
    v_mw = float(profile["v_mw_hz"].iloc[0])

    free_seq = mid_fringe_sequence(
        build_paper_sequence("fig3_squeezed", {**params, "ramsey_time_s": ramsey_time}), noise)
    pulse_seq = mid_fringe_sequence(build_paper_sequence("scanning_probe", {
        **params, "probe_eta": eta, "mw_pulse_s": mw_pulse, "mw_potential_hz": v_mw,
    }), noise)
    allocator = ShotAllocator()
    jobs = [ExperimentJob(seq, noise, shots, config.seed, allocator.take(shots)) for seq in (free_seq, pulse_seq)]
    free_data, pulse_data = run_batch(jobs, threads=config.threads)
    write_datasets([({"probe": "free"}, free_data), ({"probe": "pulse"}, pulse_data)],
                   out / "shots.csv", meta)

    free_noise = phase_noise(free_data, nominal_readout(free_seq, noise)[0])
    pulse_noise = phase_noise(pulse_data, nominal_readout(pulse_seq, noise)[0])
    entries = [
        ("SQL reference", spin_core.standard_quantum_limit(n_atoms), 0.0, free_seq, "free"),
        ("squeezed Ramsey", free_noise.sigma_phi, free_noise.sigma_err, free_seq, "free"),
        ("mw pulse", pulse_noise.sigma_phi, pulse_noise.sigma_err, pulse_seq, "pulse"),
    ]
    rows = []
    for label, sigma_phi, sigma_err, seq, mode in entries:
        duration = sensing_time(seq, mode)
        result = sensitivity_report(sigma_phi, duration, cycle, operating, quadratic=operating is not None)
        rows.append({"label": label, "mode": mode, "sigma_err_rad": sigma_err, **result.as_dict()})
    table = pd.DataFrame(rows)
    write_table(table, out / "sensitivity.csv", meta, col_order=["label", "mode"],
                units={"sigma_phi_rad": "rad", "sigma_err_rad": "rad", "interrogation_time_s": "s",
                       "cycle_time_s": "s", "delta_nu_hz": "Hz", "delta_B_nearres_t": "T",
                       "per_root_hz_t": "T/sqrt(Hz)", "operating_field_t": "T", "delta_B_quadratic_t": "T"})

    report = {
        "atom_count": n_atoms,
        "probe_eta": eta,
        "v_mw_hz": v_mw,
        "rows": rows,
    }
    write_report(report, out / "report.json", meta)
    explain_sensitivity(report)
    return report


def cmd_calibrate(config: ScenarioConfig) -> dict:
    """Coherent mid-fringe data over an atom-number grid, fitted for alpha."""
    s = config.settings
    out, meta = _verb_dir(config), _meta(config)
    injected = float(s["injected_alpha"])
    shots, confidence = int(s["shots"]), float(s["confidence"])
    params = dict(config.sequence)

    allocator = ShotAllocator()
    jobs = []
    for mean_atoms in s["mean_atoms_grid"]:
        noise = config.noise_model(mean_atoms=int(mean_atoms), imaging_alpha=injected)
        seq = build_paper_sequence("fig3_coherent", {
            **params, "atom_count": int(mean_atoms), "twist_mu_rad": 0.0, "combined_rotation_deg": "auto",
            "ramsey_time_s": float(s["ramsey_time_s"]), "contrast_decay": 0.0,
        })
        jobs.append(ExperimentJob(mid_fringe_sequence(seq, noise), noise, shots, config.seed, allocator.take(shots)))

    print(f"Simulating {allocator.next_index} shots at {len(jobs)} atom numbers...")
    datasets = run_batch(jobs, threads=config.threads)
    write_datasets([({"mean_atoms": int(job.noise.mean_N)}, data) for job, data in zip(jobs, datasets)],
                   out / "shots.csv", meta, units={"mean_atoms": "atoms"})

    det_sigmas = jobs[0].noise.detection_sigmas(1.0)
    fit = calibrate_alpha(datasets, det_sigmas, confidence)
    corrected = [apply_alpha_correction(data, fit.alpha) for data in datasets]
    refit = calibrate_alpha(corrected, (det_sigmas[0] / fit.alpha, det_sigmas[1] / fit.alpha), confidence)

    points = pd.concat([fit.points.assign(counts="detected"), refit.points.assign(counts="corrected")],
                       ignore_index=True)
    write_table(points, out / "points.csv", meta, col_order=["counts"],
                units={"mean_N": "atoms", "y": "atoms", "y_sigma": "atoms"}, label="points")

    report = {
        "injected_alpha": injected,
        "alpha": fit.alpha,
        "sigma": fit.sigma,
        "ci_low": fit.ci_low,
        "ci_high": fit.ci_high,
        "confidence": confidence,
        "contains_injected": fit.contains(injected),
        "corrected_alpha": refit.alpha,
        "corrected_ci_low": refit.ci_low,
        "corrected_ci_high": refit.ci_high,
        "corrected_contains_one": refit.contains(1.0),
        "det_sigmas_atoms": list(det_sigmas),
    }
    write_report(report, out / "report.json", meta)
    det_var = float(det_sigmas[0] ** 2 + det_sigmas[1] ** 2)
    plot_calibration(fit.points, fit.alpha, det_var, out / "calibration.svg")
    explain_calibration(report, fit.points)
    return report


COMMANDS = {
    "squeeze": cmd_squeeze,
    "fig3": cmd_fig3,
    "scan": cmd_scan,
    "sensitivity": cmd_sensitivity,
    "calibrate": cmd_calibrate,
}


# ---------- CLI ----------

def _run(verb: str, args) -> dict:
    try:
        config = load_scenario(verb, args.config, seed=args.seed, shots=args.shots,
                               threads=args.threads, output_dir=args.out)
    except FileNotFoundError as e:
        print(f"Error: {e} not found")
        sys.exit(1)
    except ConfigError as e:
        print(f"Error: {e}")
        sys.exit(2)

    print("=" * 70)
    print(f"RUNNING {verb.upper()} (seed {config.seed}, config {config.config_hash[:12]})")
    print("=" * 70)
    try:
        report = COMMANDS[verb](config)
    except (SimulationError, FileNotFoundError) as e:
        missing = isinstance(e, FileNotFoundError)
        print(f"Error: {e} not found" if missing else f"Error: {e}")
        target = quarantine(config.output_dir, verb)
        if target is not None:
            print(f"Partial outputs moved to {target}")
        sys.exit(1 if missing else 2)
    print(f"\nOutputs in {_verb_dir(config)}")
    return report


def run_squeeze(args):
    """Calibrate the twist strength"""
    return _run("squeeze", args)


def run_fig3(args):
    """Phase noise versus Ramsey time"""
    return _run("fig3", args)


def run_scan(args):
    """Microwave near-field scan"""
    return _run("scan", args)


def run_sensitivity(args):
    """Field sensitivity chain"""
    return _run("sensitivity", args)


def run_calibrate(args):
    """Imaging calibration factor"""
    return _run("calibrate", args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Scanning-probe atom interferometer with spin-squeezed states",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Twist calibration and Wigner raster
  python main.py squeeze

  # Phase noise vs. Ramsey time with fewer shots
  python main.py fig3 --shots 120 --threads 4

  # Near-field scan with a custom scenario file
  python main.py --mode scan --config my_scan.yaml --out results/

  # Sensitivity chain and imaging calibration
  python main.py sensitivity
  python main.py calibrate --seed 7
        """
    )
    parser.add_argument("verb", nargs="?", choices=VERBS, help="Scenario to run")
    parser.add_argument("--mode", choices=VERBS, help="Scenario to run (same as the positional verb)")
    parser.add_argument("--config", help="Scenario YAML (default: data/scenarios/<verb>.yaml)")
    parser.add_argument("--seed", type=int, help="Base seed for every random stream")
    parser.add_argument("--out", help="Output directory (default: results)")
    parser.add_argument("--shots", type=int, help="Shots per data point")
    parser.add_argument("--threads", type=int, help="Worker threads; never changes results")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More log output (-vv for debug)")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log errors")
    return parser


def main(argv: Optional[List[str]] = None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb and args.mode and args.verb != args.mode:
        parser.error(f"conflicting scenarios: {args.verb} and --mode {args.mode}")
    verb = args.verb or args.mode
    if verb is None:
        parser.error("choose a scenario: " + ", ".join(VERBS))

    if args.quiet:
        level = logging.ERROR
    else:
        level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    mode_handlers = {
        "squeeze": run_squeeze,
        "fig3": run_fig3,
        "scan": run_scan,
        "sensitivity": run_sensitivity,
        "calibrate": run_calibrate,
    }
    handler = mode_handlers[verb]
    return handler(args)


if __name__ == "__main__":
    main()
