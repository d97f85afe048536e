"""
Plotting Module

SVG figures drawn from the tables each command writes. Nothing here
computes physics; every plotted number is already in a CSV next to the
figure.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

# stable element ids so unchanged data gives unchanged SVG text
plt.rcParams["svg.hashsalt"] = "atom-interferometer"

KIND_STYLE = {
    "squeezed": {"color": "tab:blue", "marker": "o", "label": "squeezed"},
    "coherent": {"color": "tab:red", "marker": "D", "label": "coherent"},
}


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    print(f"Wrote plot to {path}")
    return path


def plot_squeeze(curve: pd.DataFrame, mu_star: float, target_db: float,
                 wigner: Optional[pd.DataFrame], path: PathLike) -> Path:
    """xi^2 versus twist with the calibrated point; Wigner raster alongside when given."""
    ncols = 2 if wigner is not None and len(wigner) else 1
    fig, axes = plt.subplots(1, ncols, figsize=(6 * ncols, 4.5), squeeze=False)
    ax = axes[0, 0]
    finite = curve[np.isfinite(curve["xi2_db"])]
    ax.semilogx(finite["mu_rad"], finite["xi2_db"], "b-", lw=2, label="state vector")
    if "xi2_db_closed_form" in curve:
        ax.semilogx(curve["mu_rad"], curve["xi2_db_closed_form"], "k--", lw=1, label="closed form")
    if mu_star > 0:
        ax.plot([mu_star], [target_db], "ro", label=f"mu* = {mu_star:.3g} rad")
    ax.axhline(0, color="k", linestyle=":", alpha=0.5)
    ax.set_xlabel("twist mu (rad)")
    ax.set_ylabel("xi^2 (dB)")
    ax.legend()
    ax.grid(True, alpha=0.4)

    if ncols == 2:
        raster = wigner.pivot(index="polar_rad", columns="azimuth_rad", values="w")
        ax = axes[0, 1]
        image = ax.pcolormesh(np.degrees(raster.columns.to_numpy()), np.degrees(raster.index.to_numpy()),
                              raster.to_numpy(), shading="auto", cmap="RdBu_r")
        ax.invert_yaxis()
        ax.set_xlabel("azimuth (deg)")
        ax.set_ylabel("polar angle (deg)")
        ax.set_title("Wigner function")
        fig.colorbar(image, ax=ax)
    return _save(fig, path)


def plot_fig3(phase_noise: pd.DataFrame, model: pd.DataFrame, fringe: Optional[pd.DataFrame],
              path: PathLike) -> Path:
    """Phase noise versus Ramsey time, SQL and model curves; fringe inset if given."""
    ncols = 2 if fringe is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(6 * ncols, 4.5), squeeze=False)
    ax = axes[0, 0]
    t_model = model["ramsey_time_s"] * 1e3
    ax.plot(t_model, np.degrees(model["sql_rad"]), "k-", lw=1, label="SQL")
    ax.plot(t_model, np.degrees(model["squeezed_model_rad"]), "b--", lw=1)
    ax.plot(t_model, np.degrees(model["coherent_model_rad"]), "r--", lw=1)
    for kind, rows in phase_noise.groupby("kind", sort=False):
        style = KIND_STYLE.get(kind, {"color": "k", "marker": "s", "label": kind})
        ax.errorbar(rows["ramsey_time_s"] * 1e3, np.degrees(rows["sigma_phi_rad"]),
                    yerr=np.degrees(rows["sigma_err_rad"]), linestyle="none", **style)
    ax.set_xlabel("Ramsey time (ms)")
    ax.set_ylabel("phase noise (deg)")
    ax.legend()
    ax.grid(True, alpha=0.4)

    if fringe is not None:
        ax = axes[0, 1]
        ax.plot(fringe["theta_rad"], fringe["n"], "bo", ms=3, alpha=0.5)
        ax.plot(fringe["theta_rad"], fringe["n_fit"], "k-", lw=1)
        ax.set_xlabel("theta (rad)")
        ax.set_ylabel("n")
        ax.set_title("Ramsey fringe")
        ax.grid(True, alpha=0.4)
    return _save(fig, path)


def plot_scan(scan: pd.DataFrame, path: PathLike) -> Path:
    """Phase shift and squeezing versus atom-surface distance."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
    distance = scan["distance_m"] * 1e6
    top.errorbar(distance, scan["delta_phi_rad"], yerr=scan["delta_phi_sigma_rad"], fmt="bo", label="measured")
    top.plot(distance, scan["expected_delta_phi_rad"], "k--", lw=1, label="field model")
    top.set_ylabel("phase shift (rad)")
    top.legend()
    top.grid(True, alpha=0.4)

    bottom.errorbar(distance, scan["xi2_db"], yerr=scan["xi2_err_db"], fmt="bo", label="corrected")
    bottom.plot(distance, scan["xi2_raw_db"], "rs", label="uncorrected")
    bottom.axhline(0, color="k", linestyle=":", alpha=0.5)
    bottom.set_xlabel("distance from surface (um)")
    bottom.set_ylabel("xi^2 (dB)")
    bottom.legend()
    bottom.grid(True, alpha=0.4)
    return _save(fig, path)


def plot_calibration(points: pd.DataFrame, alpha: float, det_var: float, path: PathLike) -> Path:
    """<N>^2 var(n) against <N> with the fitted line."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    x = points["mean_N"]
    ax.errorbar(x, points["y"] + det_var, yerr=points["y_sigma"], fmt="ko")
    line = np.linspace(0.0, float(x.max()) * 1.05, 50)
    ax.plot(line, alpha * line + det_var, "b-", label=f"alpha = {alpha:.3f}")
    ax.set_xlabel("<N> (atoms)")
    ax.set_ylabel("<N>^2 var(n)")
    ax.legend()
    ax.grid(True, alpha=0.4)
    return _save(fig, path)
