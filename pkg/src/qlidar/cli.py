"""Command line interface.

Four subcommands cover the instrument workflows:

* ``histograms``  arrival-time-difference densities for the coincidence
  schemes, analytic curves plus a simulated overlay.
* ``sweep``       SNR versus background, probe loss, window width, or
  pair rate; analytic curves with Monte Carlo points.
* ``scan``        scanned imaging of the configured letter scene with
  per-pixel intensity, depth, and classification scoring.
* ``count``       coincidence analysis of a recorded tag file.

Every command writes delimited tables (CSV by default, JSON on request),
rendered PNG figures, and a ``summary.json`` with the headline numbers,
into the output directory.  Progress and diagnostics go to stderr;
failures print a one-line JSON error object to stderr and exit nonzero
(2 for input/config problems, 1 for internal errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .chrono import sigma_to_fwhm
from .config import (
    ConfigError,
    RunConfig,
    SceneSpec,
    config_digest,
    default_run_config,
    load_config,
)
from .detection import scheme_densities, scheme_snr, scheme_variants
from .fftprop import GridResolutionError
from .lidar import (
    classification_accuracy,
    make_letter_scene,
    scan_scene,
    write_mask_pgm,
)
from .montecarlo import run_snr_experiment, simulate_run
from .tagcount import (
    TagFileError,
    accidental_estimate,
    coincidence_histogram,
    count_in_window,
    estimate_peak_fwhm,
    read_tags,
)

_log = logging.getLogger("qlidar")

_SWEEP_KINDS = ("noise", "probe", "window", "pairrate")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        summary = args.handler(args)
    except (ConfigError, TagFileError, FileNotFoundError, ValueError) as exc:
        _emit_error("input", exc)
        return 2
    except GridResolutionError as exc:
        _emit_error("resolution", exc)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        _emit_error("internal", exc)
        return 1

    out = Path(args.out)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _log.info("wrote %s", summary_path)
    return 0


def _emit_error(kind: str, exc: Exception) -> None:
    payload = {"error": {"type": kind, "message": str(exc), "class": type(exc).__name__}}
    print(json.dumps(payload), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlidar",
        description="Simulate and analyze dispersion-compensated entangled-photon LiDAR.",
    )
    parser.add_argument("--version", action="version", version=f"qlidar {__version__}")

    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (defaults used otherwise)")
        p.add_argument("--out", default="qlidar-out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument(
            "--format", choices=("csv", "json"), default="csv", help="table format"
        )
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_hist = sub.add_parser(
        "histograms", help="arrival-difference densities, analytic and simulated"
    )
    common(p_hist)
    p_hist.add_argument("--bin", type=float, default=5.0, help="histogram bin (ps)")
    p_hist.add_argument("--span", type=float, default=5000.0, help="half range (ps)")
    p_hist.add_argument(
        "--duration", type=float, default=0.5, help="simulated acquisition time (s)"
    )
    p_hist.add_argument("--mc-off", action="store_true", help="skip the simulation overlay")
    p_hist.set_defaults(handler=cmd_histograms)

    p_sweep = sub.add_parser("sweep", help="SNR sweeps with analytic and simulated points")
    common(p_sweep)
    p_sweep.add_argument("kind", choices=_SWEEP_KINDS, help="sweep variable")
    p_sweep.add_argument("--points", type=int, default=0, help="grid size (0 = default)")
    p_sweep.add_argument(
        "--duration", type=float, default=0.05, help="simulated time per point (s)"
    )
    p_sweep.add_argument("--mc-off", action="store_true", help="analytic curves only")
    p_sweep.set_defaults(handler=cmd_sweep)

    p_scan = sub.add_parser("scan", help="scan the configured letter scene")
    common(p_scan)
    p_scan.add_argument(
        "--scheme",
        choices=("ctd", "nctd", "dnctd"),
        help="override the configured scheme",
    )
    p_scan.add_argument(
        "--duration", type=float, default=0.0, help="dwell per pixel (s, 0 = config)"
    )
    p_scan.set_defaults(handler=cmd_scan)

    p_count = sub.add_parser("count", help="analyze a recorded time-tag file")
    common(p_count)
    p_count.add_argument("input", help="tag file (.csv or binary)")
    p_count.add_argument("--bin", type=float, default=1.0, help="histogram bin (ps)")
    p_count.add_argument("--span", type=float, default=5000.0, help="half range (ps)")
    p_count.add_argument("--center", type=float, default=0.0, help="histogram center (ps)")
    p_count.add_argument(
        "--window", type=float, default=0.0, help="window (ps, 0 = config value)"
    )
    p_count.add_argument(
        "--offset", type=float, default=None, help="window center (ps, default --center)"
    )
    p_count.set_defaults(handler=cmd_count)

    return parser


def _load(args) -> tuple[RunConfig, SceneSpec]:
    if args.config:
        run, scene = load_config(args.config)
    else:
        run, scene = default_run_config(), SceneSpec()
    return run, scene


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(args, run: RunConfig, scene: SceneSpec | None = None) -> dict:
    return {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "config_digest": config_digest(run, scene),
    }


def _write_table(out: Path, stem: str, fmt: str, meta: dict, columns, rows) -> str:
    """Write one table as CSV (with provenance comments) or JSON."""
    path = out / f"{stem}.{fmt}"
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in meta.items():
                fh.write(f"# {key}: {value}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
    else:
        payload = {"meta": meta, "columns": list(columns), "rows": [list(r) for r in rows]}
        path.write_text(json.dumps(payload) + "\n")
    _log.info("wrote %s (%d rows)", path, len(rows))
    return path.name


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.10g}"
    return str(value)


def _variants(run: RunConfig):
    if run.scheme.gdd_probe_ps2 != 0.0:
        return scheme_variants(run.scheme)
    default = default_run_config().scheme
    return scheme_variants(
        run.scheme, default.gdd_probe_ps2, default.gdd_reference_ps2
    )


def _finite_or_none(x: float) -> float | None:
    return float(x) if x is not None and math.isfinite(x) else None


# --------------------------------------------------------------------------
# histograms


def cmd_histograms(args) -> dict:
    run, scene = _load(args)
    out = _ensure_out(args)
    meta = _meta(args, run)
    state = run.build_state()
    variants = _variants(run)
    window = (
        run.scheme.window_offset_ps - 0.5 * run.scheme.window_ps,
        run.scheme.window_offset_ps + 0.5 * run.scheme.window_ps,
    )

    n_bins = int(round(2.0 * args.span / args.bin))
    grid = np.linspace(-args.span, args.span, 2 * n_bins + 1)

    curves: dict[str, np.ndarray] = {}
    files: list[str] = []
    analytic_rows = [list(grid)]
    columns = ["delta_ps"]
    summary_schemes: dict[str, dict] = {}

    eta = run.detector.efficiency
    for name in ("nctd", "dnctd"):
        cfg = variants[name]
        true_density, false_density = scheme_densities(cfg, run.detector, state)
        snr = scheme_snr(cfg, run.detector, state, run.rep_rate_hz)
        # Rate densities: windowless totals distributed over the densities.
        true_total = (
            cfg.pair_rate_hz * cfg.probe_transmission
            * cfg.reference_transmission * eta**2
        )
        curves[f"{name} true"] = true_total * true_density.pdf(grid)
        if cfg.noise_mode == "pulsed":
            false_total = (
                cfg.noise_rate_hz * (cfg.pair_rate_hz / run.rep_rate_hz)
                * cfg.reference_transmission * eta**2
            )
            curves[f"{name} false"] = false_total * false_density.pdf(grid)
        else:
            # Uniform background: flat accidental density.
            floor = (
                cfg.noise_rate_hz * eta
                * cfg.pair_rate_hz * cfg.reference_transmission * eta
                * 1.0e-12
            )
            curves[f"{name} false"] = np.full_like(grid, floor)
        analytic_rows.append(list(curves[f"{name} true"]))
        analytic_rows.append(list(curves[f"{name} false"]))
        columns += [f"{name}_true_rate_density", f"{name}_false_rate_density"]
        summary_schemes[name] = {
            "true_fwhm_ps": true_density.fwhm,
            "false_fwhm_ps": false_density.fwhm,
            "true_capture": snr.capture_true,
            "false_capture": snr.capture_false,
            "true_rate_hz": snr.true_rate_hz,
            "false_rate_hz": snr.false_rate_hz,
            "snr_db": _finite_or_none(snr.snr_db),
        }

    files.append(
        _write_table(
            out, "analytic_densities", args.format, meta, columns,
            list(zip(*analytic_rows)),
        )
    )

    mc_overlays = {}
    if not args.mc_off:
        seeds = np.random.SeedSequence(args.seed).spawn(2)
        for name, seed in zip(("nctd", "dnctd"), seeds):
            cfg = replace(run, scheme=variants[name])
            t0 = time.perf_counter()
            sim = simulate_run(cfg, args.duration, seed)
            hist = coincidence_histogram(
                sim.probe.times, sim.reference.times, args.bin, args.span
            )
            _log.info(
                "%s simulation: %d probe / %d reference clicks in %.2f s",
                name, sim.probe.n, sim.reference.n, time.perf_counter() - t0,
            )
            rate_density = hist.counts / (args.duration * args.bin)
            mc_overlays[f"{name} simulated"] = (hist.centers, rate_density)
            files.append(
                _write_table(
                    out, f"mc_histogram_{name}", args.format, meta,
                    ["delta_ps", "pairs_per_bin", "rate_density"],
                    list(zip(hist.centers, hist.counts, rate_density)),
                )
            )
            summary_schemes[name]["mc_peak_fwhm_ps"] = _finite_or_none(
                estimate_peak_fwhm(hist)
            )
            summary_schemes[name]["mc_pairs_total"] = hist.total

    figure = out / "histograms.png"
    from .plots import save_density_figure

    save_density_figure(figure, grid, curves, mc_overlays or None, window)
    files.append(figure.name)

    jitter_fwhm = sigma_to_fwhm(run.detector.jitter_sigma_ps)
    return {
        **meta,
        "jitter_fwhm_ps": jitter_fwhm,
        "window_ps": run.scheme.window_ps,
        "schemes": summary_schemes,
        "files": files,
    }


# --------------------------------------------------------------------------
# sweep


def _sweep_grid(kind: str, run: RunConfig, points: int) -> np.ndarray:
    if kind == "noise":
        n = points or 9
        return np.linspace(-5.0, 35.0, n)
    if kind == "probe":
        n = points or 9
        return np.geomspace(0.01, 1.0, n)
    if kind == "window":
        n = points or 13
        return np.geomspace(10.0, 500.0, n)
    n = points or 9
    hi = min(run.rep_rate_hz * 0.05, 2.7e6)
    return np.geomspace(2.7e4, hi, n)


def _sweep_config(kind: str, base, value: float):
    if kind == "noise":
        rate = 10.0 ** (value / 10.0) * base.pair_rate_hz * base.probe_transmission
        return replace(base, noise_rate_hz=rate)
    if kind == "probe":
        return replace(base, probe_transmission=float(value))
    if kind == "window":
        return replace(base, window_ps=float(value))
    return replace(base, pair_rate_hz=float(value))


_SWEEP_XLABEL = {
    "noise": "normalized background (dB)",
    "probe": "probe transmission",
    "window": "coincidence window (ps)",
    "pairrate": "pair rate (1/s)",
}


def cmd_sweep(args) -> dict:
    run, scene = _load(args)
    out = _ensure_out(args)
    meta = {**_meta(args, run), "kind": args.kind}
    state = run.build_state()
    variants = _variants(run)
    grid = _sweep_grid(args.kind, run, args.points)
    schemes = ("nctd", "dnctd") if args.kind == "window" else ("ctd", "nctd", "dnctd")

    seeds = np.random.SeedSequence(args.seed).spawn(len(grid) * len(schemes))
    columns = [args.kind]
    for name in schemes:
        columns += [f"{name}_snr_db"]
        if not args.mc_off:
            columns += [f"{name}_mc_snr_db", f"{name}_mc_err_db"]

    rows = []
    analytic: dict[str, list[float]] = {s: [] for s in schemes}
    mc_vals: dict[str, list[float]] = {s: [] for s in schemes}
    mc_errs: dict[str, list[float]] = {s: [] for s in schemes}

    for i, value in enumerate(grid):
        row: list[float] = [float(value)]
        for j, name in enumerate(schemes):
            cfg_s = _sweep_config(args.kind, variants[name], float(value))
            res = scheme_snr(cfg_s, run.detector, state, run.rep_rate_hz)
            analytic[name].append(res.snr_db)
            row.append(res.snr_db)
            if not args.mc_off:
                mc_cfg = replace(run, scheme=cfg_s)
                mc_res, _, _ = run_snr_experiment(
                    mc_cfg, args.duration, seeds[i * len(schemes) + j]
                )
                mc_vals[name].append(mc_res.snr_db)
                mc_errs[name].append(
                    mc_res.snr_db_err if mc_res.snr_db_err is not None else math.nan
                )
                row += [mc_res.snr_db, mc_errs[name][-1]]
        rows.append(row)
        _log.info("sweep %s: %s = %.4g done", args.kind, args.kind, value)

    files = [
        _write_table(out, f"sweep_{args.kind}", args.format, meta, columns, rows)
    ]

    series: dict[str, tuple[np.ndarray, np.ndarray | None]] = {}
    for name in schemes:
        series[f"{name} analytic"] = (np.array(analytic[name]), None)
        if not args.mc_off:
            series[f"{name} simulated"] = (
                np.array(mc_vals[name]), np.array(mc_errs[name])
            )

    figure = out / f"sweep_{args.kind}.png"
    from .plots import save_sweep_figure

    save_sweep_figure(
        figure, grid, series, _SWEEP_XLABEL[args.kind],
        logx=args.kind in ("probe", "window", "pairrate"),
    )
    files.append(figure.name)

    summary: dict = {**meta, "files": files, "grid": [float(v) for v in grid]}
    a = {s: np.array(v) for s, v in analytic.items()}
    if args.kind == "window":
        adv = a["dnctd"] - a["nctd"]
        summary["advantage_db_first"] = float(adv[0])
        summary["advantage_db_last"] = float(adv[-1])
        summary["advantage_delta_db"] = float(adv[0] - adv[-1])
    else:
        finite = np.isfinite(a["dnctd"]) & np.isfinite(a["nctd"])
        summary["mean_dnctd_over_nctd_db"] = float(
            np.mean(a["dnctd"][finite] - a["nctd"][finite])
        )
        if "ctd" in a:
            finite_c = np.isfinite(a["nctd"]) & np.isfinite(a["ctd"])
            summary["mean_nctd_over_ctd_db"] = float(
                np.mean(a["nctd"][finite_c] - a["ctd"][finite_c])
            )
    if args.kind == "pairrate":
        log_x = 10.0 * np.log10(grid)
        y = a["dnctd"]
        ok = np.isfinite(y)
        slope = float(np.polyfit(log_x[ok], y[ok], 1)[0]) if ok.sum() >= 2 else math.nan
        summary["dnctd_db_slope_per_db"] = slope
    return summary


# --------------------------------------------------------------------------
# scan


def cmd_scan(args) -> dict:
    run, scene_spec = _load(args)
    out = _ensure_out(args)
    if args.scheme:
        run = replace(run, scheme=_variants(run)[args.scheme])
    meta = {**_meta(args, run, scene_spec), "scheme": run.scheme.scheme}

    scene = make_letter_scene(scene_spec)
    dwell = args.duration if args.duration > 0.0 else scene_spec.dwell_s
    t0 = time.perf_counter()
    cube = scan_scene(scene, run, dwell, seed=args.seed)
    _log.info(
        "scan %s: %dx%d pixels, dwell %.3g s, %.1f s wall",
        cube.scheme, *cube.shape, dwell, time.perf_counter() - t0,
    )

    cls = classification_accuracy(cube.intensity, scene.letter_mask)

    h, w = cube.shape
    ys, xs = np.mgrid[0:h, 0:w]
    rows = list(
        zip(
            xs.ravel().tolist(),
            ys.ravel().tolist(),
            cube.intensity.ravel(),
            cube.depth_cm.ravel(),
            cube.depth_err_cm.ravel(),
        )
    )
    files = [
        _write_table(
            out, f"image_{cube.scheme}", args.format, meta,
            ["x", "y", "intensity", "depth_cm", "depth_err_cm"], rows,
        )
    ]

    truth_path = out / "truth_mask.pgm"
    write_mask_pgm(truth_path, scene.letter_mask)
    files.append(truth_path.name)
    pred_path = out / f"predicted_mask_{cube.scheme}.pgm"
    write_mask_pgm(pred_path, cls.predicted_letters)
    files.append(pred_path.name)

    figure = out / f"scan_{cube.scheme}.png"
    from .plots import save_scan_figure

    save_scan_figure(figure, cube)
    files.append(figure.name)

    valid = np.isfinite(cube.depth_cm)
    mirror = ~scene.letter_mask
    resid = cube.depth_cm[valid] - scene.depth_cm[valid]
    depth_stats = {
        "valid_fraction": float(np.mean(valid)),
        "valid_fraction_mirror": float(np.mean(valid[mirror]))
        if mirror.any()
        else 0.0,
        "rmse_cm": float(np.sqrt(np.mean(resid**2))) if resid.size else None,
        "mean_reported_err_cm": float(np.nanmean(cube.depth_err_cm))
        if valid.any()
        else None,
    }
    return {
        **meta,
        "dwell_s": dwell,
        "noise_db": scene.noise_db,
        "accuracy": cls.accuracy,
        "threshold": cls.threshold,
        "depth": depth_stats,
        "flags": list(cube.flags),
        "files": files,
    }


# --------------------------------------------------------------------------
# count


def cmd_count(args) -> dict:
    run, _ = _load(args)
    out = _ensure_out(args)
    meta = {**_meta(args, run), "input": str(args.input)}

    probe, reference = read_tags(args.input)
    _log.info(
        "read %s: %d probe / %d reference tags", args.input, probe.size, reference.size
    )
    hist = coincidence_histogram(
        probe, reference, bin_width_ps=args.bin, span_ps=args.span, center_ps=args.center
    )
    window = args.window if args.window > 0.0 else run.scheme.window_ps
    offset = args.offset if args.offset is not None else args.center
    windowed = count_in_window(probe, reference, window, offset)
    acc_offsets = (offset - 0.45 * 2.0 * args.span, offset + 0.45 * 2.0 * args.span)
    accidental = accidental_estimate(probe, reference, window, acc_offsets)

    files = [
        _write_table(
            out, "count_histogram", args.format, meta,
            ["delta_ps", "pairs_per_bin"],
            list(zip(hist.centers, hist.counts)),
        )
    ]
    figure = out / "count_histogram.png"
    from .plots import save_count_figure

    save_count_figure(figure, hist, (offset - 0.5 * window, offset + 0.5 * window))
    files.append(figure.name)

    return {
        **meta,
        "probe_tags": int(probe.size),
        "reference_tags": int(reference.size),
        "pairs_in_range": hist.total,
        "window_ps": window,
        "window_offset_ps": offset,
        "windowed_count": int(windowed),
        "accidental_estimate": accidental,
        "excess_count": windowed - accidental,
        "peak_fwhm_ps": _finite_or_none(estimate_peak_fwhm(hist)),
        "files": files,
    }


if __name__ == "__main__":
    sys.exit(main())
