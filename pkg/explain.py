"""
Explanation Module

Human-readable console summaries of each command's report.
"""

from typing import Dict, Optional

import numpy as np
import pandas as pd


def _banner(title: str) -> None:
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def _bar(value: float, max_value: float, width: int = 30) -> str:
    if not np.isfinite(value) or max_value <= 0:
        return ""
    return "█" * int(min(abs(value), max_value) / max_value * width)


def _fmt(value, spec: str = ".3f", missing: str = "n/a") -> str:
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return missing
    return format(value, spec)


def explain_squeeze(report: Dict) -> None:
    """Print the twist calibration and its cross-checks."""
    _banner(f"SQUEEZING: N = {report['atom_count']} atoms")

    print(f"\n🎯 Calibrated Twist:")
    print(f"   Target xi^2:      {report['target_db']:+.2f} dB")
    print(f"   Reached xi^2:     {report['xi2_db']:+.3f} dB")
    print(f"   mu*:              {report['mu_rad']:.6g} rad")

    print(f"\n🧭 Alignment:")
    print(f"   Ellipse tilt:     {report['anti_squeezed_tilt_deg']:+.2f} deg")
    print(f"   Alignment pulse:  {report['alignment_deg']:+.2f} deg "
          f"(quoted {report['quoted_alignment_deg']:+.0f} deg)")
    print(f"   Combined pulse:   {report['combined_rotation_deg']:+.2f} deg")

    oracle = report.get("oracle")
    if oracle:
        print(f"\n🔍 Closed-form check (N = {oracle['atom_count']}, {oracle['points']} points):")
        print(f"   max |state - closed form| = {oracle['max_abs_diff_db']:.2e} dB")

    wigner = report.get("wigner")
    if wigner:
        print(f"\n🌐 Wigner raster: N = {wigner['atom_count']}, mu = {wigner['mu_rad']:.6g} rad")

    print("\n" + "=" * 70 + "\n")


def explain_fig3(phase_noise: pd.DataFrame, report: Dict) -> None:
    """Print phase noise per Ramsey time with dB bars relative to the SQL."""
    _banner("RAMSEY PHASE NOISE VS. INTERROGATION TIME")

    print(f"\n📋 Setup:")
    print(f"   Atoms:            {report['atom_count']}")
    print(f"   SQL:              {np.degrees(report['sql_rad']):.3f} deg")
    print(f"   Squeezed C:       {report['contrast']:.3f}")

    span = max(1.0, float(np.nanmax(np.abs(phase_noise["xi2_db"]))))
    for kind, rows in phase_noise.groupby("kind", sort=False):
        print(f"\n📈 {kind.capitalize()} input:")
        print("-" * 70)
        print(f"   {'T_R (ms)':>9s} {'sigma_phi':>10s} {'xi^2 dB':>9s} {'raw dB':>8s}")
        for _, r in rows.iterrows():
            bar = _bar(r["xi2_db"], span, 20)
            side = "<" if r["xi2_db"] < 0 else ">"
            print(f"   {r['ramsey_time_s'] * 1e3:9.1f} {np.degrees(r['sigma_phi_rad']):9.3f}° "
                  f"{r['xi2_db']:+9.2f} {r['xi2_raw_db']:+8.2f}  {side} {bar}")

    print(f"\n⏱️  SQL crossing:")
    for kind, t in report["sql_crossing_s"].items():
        shown = "never" if t is None else f"{t * 1e3:.1f} ms"
        print(f"   {kind:10s}: {shown}")
    model = report.get("model_sql_crossing_s")
    if model is not None:
        print(f"   {'model':10s}: {model * 1e3:.1f} ms")

    print("\n" + "=" * 70 + "\n")


def explain_scan(scan: pd.DataFrame, report: Dict) -> None:
    """Print the distance-resolved phase shifts and squeezing."""
    _banner("MICROWAVE NEAR-FIELD SCAN")

    print(f"\n📋 Positions: {len(scan)}")
    print(f"   {'eta':>5s} {'d (um)':>7s} {'dphi (rad)':>12s} {'model':>8s} {'xi^2 dB':>8s} {'raw dB':>8s}")
    print("-" * 70)
    for _, r in scan.iterrows():
        print(f"   {r['eta']:5.2f} {r['distance_m'] * 1e6:7.1f} "
              f"{r['delta_phi_rad']:+7.3f}±{r['delta_phi_sigma_rad']:.3f} "
              f"{r['expected_delta_phi_rad']:+8.3f} {r['xi2_db']:+8.2f} {r['xi2_raw_db']:+8.2f}")

    print(f"\n📊 Averages over positions:")
    print(f"   <xi^2> corrected:   {report['mean_xi2_db']:+.2f} dB")
    print(f"   <xi^2> uncorrected: {report['mean_xi2_raw_db']:+.2f} dB")
    print(f"   sigma_phi:          {report['mean_sigma_phi_deg']:.2f} deg")

    print("\n" + "=" * 70 + "\n")


def explain_sensitivity(report: Dict) -> None:
    """Print the sensitivity chain for each evaluated operating point."""
    _banner("FIELD SENSITIVITY")

    for row in report["rows"]:
        print(f"\n🎯 {row['label']} ({row['mode']} mode, T = {row['interrogation_time_s'] * 1e3:.3f} ms):")
        print(f"   sigma_phi:        {row['sigma_phi_rad'] * 1e3:8.2f} mrad")
        print(f"   delta_nu:         {row['delta_nu_hz']:8.4g} Hz")
        print(f"   delta_B:          {row['delta_B_nearres_t'] * 1e12:8.4g} pT")
        print(f"   per root Hz:      {row['per_root_hz_t'] * 1e12:8.4g} pT/√Hz "
              f"(cycle {row['cycle_time_s']:.1f} s)")
        if row.get("delta_B_quadratic_t") is not None:
            print(f"   quadratic delta_B:{row['delta_B_quadratic_t'] * 1e12:8.4g} pT "
                  f"at {row['operating_field_t'] * 1e6:.3g} uT")

    print("\n" + "=" * 70 + "\n")


def explain_calibration(report: Dict, points: Optional[pd.DataFrame] = None) -> None:
    """Print the imaging calibration fit."""
    _banner("IMAGING CALIBRATION (alpha)")

    pct = int(round(100 * report["confidence"]))
    print(f"\n🎯 Fit:")
    print(f"   alpha:            {report['alpha']:.3f} ± {report['sigma']:.3f}")
    print(f"   {pct}% interval:     [{report['ci_low']:.3f}, {report['ci_high']:.3f}]")
    if report.get("injected_alpha") is not None:
        verdict = "inside" if report["contains_injected"] else "OUTSIDE"
        print(f"   injected:         {report['injected_alpha']:.3f} ({verdict} interval)")
    print(f"   after correction: {_fmt(report.get('corrected_alpha'))} "
          f"[{_fmt(report.get('corrected_ci_low'))}, {_fmt(report.get('corrected_ci_high'))}]")

    if points is not None and len(points):
        print(f"\n📊 Points:")
        print("-" * 70)
        top = float(points["y"].max())
        for _, r in points.iterrows():
            print(f"   <N> = {r['mean_N']:7.1f}  {_bar(r['y'], top):30s} {r['y']:8.1f}")

    print("\n" + "=" * 70 + "\n")
