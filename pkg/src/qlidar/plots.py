"""Figure rendering for CLI reports.

All functions draw to files through the Agg backend; nothing here opens
a display.  Figures are companions to the delimited tables the CLI
writes, not the primary data product, so they favor legibility over
configurability.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .lidar import ImageCube
from .montecarlo import SaturationScan
from .tagcount import Histogram

__all__ = [
    "save_density_figure",
    "save_count_figure",
    "save_sweep_figure",
    "save_scan_figure",
    "save_saturation_figure",
]

_DPI = 130


def save_density_figure(
    path,
    time_ps: np.ndarray,
    curves: dict[str, np.ndarray],
    mc_overlays: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
    window: tuple[float, float] | None = None,
    ylabel: str = "rate density (counts / s / ps)",
) -> None:
    """Analytic arrival-difference densities with optional MC histograms."""
    fig, (ax_lin, ax_log) = plt.subplots(1, 2, figsize=(11, 4.2))
    for ax in (ax_lin, ax_log):
        if window is not None:
            ax.axvspan(window[0], window[1], color="0.9", label="window")
        for label, y in curves.items():
            ax.plot(time_ps, y, lw=1.4, label=label)
        if mc_overlays:
            for label, (centers, y) in mc_overlays.items():
                ax.step(centers, y, lw=0.8, alpha=0.75, where="mid", label=label)
        ax.set_xlabel("arrival-time difference (ps)")
        ax.set_ylabel(ylabel)
    ax_log.set_yscale("log")
    top = max(float(np.max(y)) for y in curves.values())
    ax_log.set_ylim(top * 1e-8, top * 3.0)
    ax_lin.legend(fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_count_figure(path, hist: Histogram, window: tuple[float, float] | None = None) -> None:
    """Coincidence histogram with the counting window marked."""
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    ax.step(hist.centers, hist.counts, lw=0.9, where="mid", color="tab:blue")
    if window is not None:
        ax.axvspan(window[0], window[1], color="tab:orange", alpha=0.25, label="window")
        ax.legend(fontsize=8)
    ax.set_xlabel("arrival-time difference (ps)")
    ax.set_ylabel("pairs per bin")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_sweep_figure(
    path,
    x: np.ndarray,
    series: dict[str, tuple[np.ndarray, np.ndarray | None]],
    xlabel: str,
    ylabel: str = "SNR (dB)",
    logx: bool = False,
) -> None:
    """One line (with optional error bars) per labeled series."""
    fig, ax = plt.subplots(figsize=(7.5, 4.6))
    for label, (y, yerr) in series.items():
        y = np.asarray(y, dtype=float)
        finite = np.isfinite(y)
        if yerr is None:
            ax.plot(np.asarray(x)[finite], y[finite], marker="o", ms=3.5, lw=1.3, label=label)
        else:
            ax.errorbar(
                np.asarray(x)[finite],
                y[finite],
                yerr=np.asarray(yerr, dtype=float)[finite],
                marker="s",
                ms=3.0,
                lw=1.0,
                ls="--",
                capsize=2.5,
                label=label,
            )
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_scan_figure(path, cube: ImageCube) -> None:
    """Intensity and depth maps of one scanned acquisition."""
    fig, (ax_i, ax_d) = plt.subplots(1, 2, figsize=(10.5, 4.4))
    im0 = ax_i.imshow(cube.intensity, cmap="viridis", origin="upper")
    ax_i.set_title(f"{cube.scheme} intensity (counts / pixel)")
    fig.colorbar(im0, ax=ax_i, shrink=0.85)

    depth = cube.depth_cm
    if np.all(~np.isfinite(depth)):
        ax_d.text(0.5, 0.5, "no per-pixel ranging", ha="center", va="center")
        ax_d.set_axis_off()
    else:
        masked = np.ma.masked_invalid(depth)
        im1 = ax_d.imshow(masked, cmap="magma", origin="upper")
        ax_d.set_title("depth (cm)")
        fig.colorbar(im1, ax=ax_d, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_saturation_figure(path, scan: SaturationScan) -> None:
    """Accepted vs offered rate for pulsed and uniform illumination."""
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.loglog(scan.offered_hz, scan.accepted_cw_hz, marker="o", ms=3.5, label="uniform")
    ax.loglog(scan.offered_hz, scan.accepted_pulsed_hz, marker="s", ms=3.5, label="pulsed")
    ax.loglog(
        scan.offered_hz, scan.offered_hz, ls=":", color="0.5", lw=1.0, label="no dead time"
    )
    for onset, color in ((scan.onset_cw_hz, "tab:blue"), (scan.onset_pulsed_hz, "tab:orange")):
        if math.isfinite(onset):
            ax.axvline(onset, color=color, ls="--", lw=0.9, alpha=0.7)
    ax.set_xlabel("offered rate (counts/s)")
    ax.set_ylabel("accepted rate (counts/s)")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
