"""Scene generation, ranging, segmentation, and the pixel-scan pipeline."""

import dataclasses
import math

import numpy as np
import pytest

from qlidar import (
    Scene,
    SceneSpec,
    classification_accuracy,
    coincidence_histogram,
    default_run_config,
    estimate_depth,
    make_letter_scene,
    scan_scene,
    simulate_run,
)
from qlidar.lidar import (
    Histogram,
    delay_to_depth_cm,
    depth_to_delay_ps,
    otsu_threshold,
    write_mask_pgm,
)

C_CM_PER_PS = 2.99792458e-2


def test_delay_depth_conversion_roundtrip():
    assert depth_to_delay_ps(100.0) == pytest.approx(2.0 * 100.0 / C_CM_PER_PS)
    for depth in (0.5, 37.0, 104.0):
        assert delay_to_depth_cm(depth_to_delay_ps(depth)) == pytest.approx(depth)


def test_letter_scene_geometry():
    spec = SceneSpec(
        letters="I", width=32, height=32, depths_cm=(100.0,), depth_tilt_cm_per_px=0.0
    )
    scene = make_letter_scene(spec)
    assert scene.shape == (32, 32)
    # Glyph "I" lights 11 of the 35 font cells; the 32 px tile scales each
    # cell to 4 x 4 pixels.
    assert int(scene.letter_mask.sum()) == 11 * 16
    assert np.all(scene.depth_cm == 100.0)
    assert scene.reflectivity.min() == 0.0 and scene.reflectivity.max() == 1.0


def test_letter_scene_tiles_and_tilt():
    spec = SceneSpec(
        letters="AB",
        width=64,
        height=64,
        depths_cm=(100.0, 102.0),
        depth_tilt_cm_per_px=0.02,
    )
    scene = make_letter_scene(spec)
    assert scene.depth_cm[0, 0] == pytest.approx(100.0 + 0.02 * (0 - 31.5))
    assert scene.depth_cm[-1, -1] == pytest.approx(102.0 + 0.02 * (63 - 31.5))
    # Tile boundary: column 31 belongs to the first letter, 32 to the second.
    assert scene.depth_cm[5, 31] - 0.02 * (31 - 31.5) == pytest.approx(100.0)
    assert scene.depth_cm[5, 32] - 0.02 * (32 - 31.5) == pytest.approx(102.0)


def test_letter_scene_without_text_is_uniform():
    spec = SceneSpec(
        letters="", width=16, height=16, depths_cm=(50.0,), depth_tilt_cm_per_px=0.0
    )
    scene = make_letter_scene(spec)
    assert not scene.letter_mask.any()
    assert np.all(scene.depth_cm == 50.0)


def test_letter_scene_rejects_bad_input():
    with pytest.raises(ValueError, match="too small"):
        make_letter_scene(
            SceneSpec(letters="ABC", width=21, height=8, depths_cm=(1.0, 2.0, 3.0))
        )
    with pytest.raises(ValueError, match="glyph"):
        make_letter_scene(SceneSpec(letters="@", width=16, height=16, depths_cm=(1.0,)))
    with pytest.raises(ValueError, match="non-positive"):
        make_letter_scene(
            SceneSpec(
                letters="", width=64, height=8, depths_cm=(0.5,),
                depth_tilt_cm_per_px=0.02,
            )
        )
    with pytest.raises(ValueError):
        SceneSpec(letters="AB", width=64, height=64, depths_cm=(1.0,))
    with pytest.raises(ValueError):
        SceneSpec(letters="", width=4, height=64, depths_cm=(1.0,))


def test_scene_validation():
    ones = np.ones((4, 4))
    with pytest.raises(ValueError):
        Scene(reflectivity=ones * 2.0, depth_cm=ones, noise_db=0.0)
    with pytest.raises(ValueError):
        Scene(reflectivity=ones, depth_cm=np.ones((4, 5)), noise_db=0.0)
    with pytest.raises(ValueError):
        Scene(reflectivity=ones, depth_cm=ones * 0.0, noise_db=0.0)


def _poisson_peak_histogram(rng, n_signal, delay_ps, sigma_ps, background):
    lo, width, n_bins = delay_ps - 500.0, 2.0, 500
    centers = lo + width * (np.arange(n_bins) + 0.5)
    lam = background + n_signal * width * (
        np.exp(-0.5 * ((centers - delay_ps) / sigma_ps) ** 2)
        / (sigma_ps * math.sqrt(2.0 * math.pi))
    )
    return Histogram(bin_width_ps=width, lo_ps=lo, counts=rng.poisson(lam))


def test_estimate_depth_recovers_a_synthetic_peak():
    rng = np.random.default_rng(17)
    delay = depth_to_delay_ps(10.0)
    hist = _poisson_peak_histogram(rng, 4000, delay, sigma_ps=30.0, background=5.0)
    est = estimate_depth(hist)
    assert est.valid
    assert est.err_cm == pytest.approx(
        delay_to_depth_cm(30.0 / math.sqrt(4000.0)), rel=0.3
    )
    assert est.depth_cm == pytest.approx(10.0, abs=5.0 * est.err_cm)
    assert est.n_signal == pytest.approx(4000.0, rel=0.1)
    assert est.significance > 5.0


def test_estimate_depth_refuses_pure_background():
    rng = np.random.default_rng(3)
    hist = Histogram(2.0, -500.0, rng.poisson(5.0, size=500))
    est = estimate_depth(hist)
    assert not est.valid
    assert math.isnan(est.depth_cm) and math.isnan(est.err_cm)
    with pytest.raises(ValueError):
        estimate_depth(hist, center_hint_ps=1.0e6)


def test_ranging_chain_resolves_close_depths():
    cfg = default_run_config()
    scheme = dataclasses.replace(
        cfg.scheme,
        probe_transmission=1.0,
        reference_transmission=1.0,
        noise_rate_hz=1.0e3,
        noise_mode="cw",
    )
    det = dataclasses.replace(cfg.detector, dead_time_ns=0.0)

    estimates = []
    for k, depth in enumerate((100.0, 100.18)):
        run_cfg = dataclasses.replace(
            cfg,
            scheme=dataclasses.replace(scheme, probe_delay_ps=depth_to_delay_ps(depth)),
            detector=det,
        )
        run = simulate_run(run_cfg, 0.05, seed=300 + k)
        hist = coincidence_histogram(
            run.probe.times,
            run.reference.times,
            bin_width_ps=2.0,
            span_ps=2500.0,
            center_ps=depth_to_delay_ps(100.0),
        )
        est = estimate_depth(hist, center_hint_ps=None)
        assert est.valid and est.n_signal > 1000.0
        assert est.err_cm < 0.09
        assert est.depth_cm == pytest.approx(depth, abs=5.0 * est.err_cm)
        estimates.append(est)

    split = estimates[1].depth_cm - estimates[0].depth_cm
    err = math.hypot(estimates[0].err_cm, estimates[1].err_cm)
    assert split == pytest.approx(0.18, abs=5.0 * err)
    assert split > 3.0 * err


def test_otsu_threshold_splits_a_bimodal_sample():
    rng = np.random.default_rng(11)
    low = rng.normal(10.0, 1.0, 500)
    high = rng.normal(50.0, 2.0, 500)
    threshold = otsu_threshold(np.concatenate([low, high]))
    # The between-class variance plateaus across the empty gap; any point
    # there is optimal, so only separation quality is asserted.
    assert 10.0 < threshold < 50.0
    correct = np.count_nonzero(low < threshold) + np.count_nonzero(high >= threshold)
    assert correct >= 998
    assert otsu_threshold(np.full(9, 3.0)) == 3.0
    with pytest.raises(ValueError):
        otsu_threshold(np.empty(0))


def test_classification_accuracy_on_separable_image():
    rng = np.random.default_rng(29)
    truth = np.zeros((16, 16), dtype=bool)
    truth[4:12, 4:12] = True
    intensity = np.where(truth, rng.normal(5.0, 1.0, truth.shape),
                         rng.normal(50.0, 3.0, truth.shape))
    result = classification_accuracy(intensity, truth)
    assert result.accuracy == 1.0
    assert np.array_equal(result.predicted_letters, truth)
    with pytest.raises(ValueError):
        classification_accuracy(intensity, truth[:8])


def test_write_mask_pgm(tmp_path):
    mask = np.array([[True, False], [False, True]])
    path = tmp_path / "mask.pgm"
    write_mask_pgm(path, mask)
    lines = path.read_text().splitlines()
    assert lines[:3] == ["P2", "2 2", "255"]
    assert lines[3:] == ["0 255", "255 0"]
    with pytest.raises(ValueError):
        write_mask_pgm(path, np.zeros(4, dtype=bool))


def test_scan_scene_ctd_counts_match_expectation():
    scene = make_letter_scene(
        SceneSpec(letters="", width=8, height=8, depths_cm=(100.0,),
                  depth_tilt_cm_per_px=0.0, noise_db=0.0)
    )
    cfg = default_run_config()
    from qlidar import scheme_variants

    ctd = scheme_variants(cfg.scheme)["ctd"]
    cfg = dataclasses.replace(
        cfg,
        scheme=ctd,
        detector=dataclasses.replace(cfg.detector, dead_time_ns=0.0),
    )
    dwell = 0.005
    cube = scan_scene(scene, cfg, dwell, seed=41)
    assert cube.scheme == "ctd"
    assert cube.flags == ()
    assert np.all(np.isnan(cube.depth_cm))

    # Probe singles: pair return + background at 0 dB relative to it.
    eta = cfg.detector.efficiency
    rate = ctd.pair_rate_hz * ctd.probe_transmission * eta * 2.0
    expect = rate * dwell
    sigma = math.sqrt(expect / cube.intensity.size)
    assert cube.intensity.mean() == pytest.approx(expect, abs=5.0 * sigma)


def test_scan_scene_coincidence_image_and_depths():
    scene = make_letter_scene(
        SceneSpec(letters="I", width=10, height=10, depths_cm=(100.0,),
                  depth_tilt_cm_per_px=0.001, noise_db=-10.0)
    )
    cfg = default_run_config()
    cfg = dataclasses.replace(
        cfg, detector=dataclasses.replace(cfg.detector, dead_time_ns=0.0)
    )
    cube = scan_scene(scene, cfg, 0.02, seed=43)
    assert cube.flags == ()

    result = classification_accuracy(cube.intensity, scene.letter_mask)
    assert result.accuracy >= 0.97

    backdrop = ~scene.letter_mask
    assert np.all(np.isfinite(cube.depth_cm[backdrop]))
    resid = cube.depth_cm[backdrop] - scene.depth_cm[backdrop]
    tol = np.maximum(5.0 * cube.depth_err_cm[backdrop], 0.25)
    assert np.all(np.abs(resid) < tol)
    # Letter pixels return almost nothing, so ranging must refuse them.
    assert np.all(np.isnan(cube.depth_cm[scene.letter_mask]))


def test_scan_scene_flags_starved_dwell():
    scene = make_letter_scene(
        SceneSpec(letters="", width=8, height=8, depths_cm=(100.0,),
                  depth_tilt_cm_per_px=0.0)
    )
    cfg = default_run_config()
    cube = scan_scene(scene, cfg, 1.0e-5, seed=2)
    assert "dwell-too-short" in cube.flags
    with pytest.raises(ValueError):
        scan_scene(scene, cfg, 0.0)
