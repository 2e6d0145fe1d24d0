"""Coincidence counting: exact agreement with brute force, plus file I/O."""

import math

import numpy as np
import pytest

import qlidar.tagcount as tagcount
from qlidar import (
    Histogram,
    accidental_estimate,
    coincidence_histogram,
    count_in_window,
    estimate_peak_fwhm,
    read_tags,
    write_tags,
)
from qlidar.tagcount import TagFileError, read_tag_csv, read_tag_file, write_tag_csv

from _oracles import brute_force_histogram, brute_force_window_count


def _random_streams(rng, n_probe, n_ref, span=5000.0):
    probe = np.sort(rng.uniform(0.0, span, n_probe))
    ref = np.sort(rng.uniform(0.0, span, n_ref))
    return probe, ref


def test_single_pair_lands_in_expected_bin():
    hist = coincidence_histogram(np.array([0.0]), np.array([10.0]), 1.0, 100.0)
    assert hist.total == 1
    idx = int(np.argmax(hist.counts))
    lo = hist.lo_ps + idx * hist.bin_width_ps
    assert lo <= -10.0 < lo + hist.bin_width_ps


def test_histogram_matches_brute_force_on_random_streams():
    rng = np.random.default_rng(17)
    for _ in range(25):
        probe, ref = _random_streams(rng, rng.integers(0, 120), rng.integers(0, 120), 800.0)
        bw = float(rng.choice([1.0, 2.5, 10.0]))
        span = bw * int(rng.integers(5, 40))
        center = float(rng.uniform(-50.0, 50.0))
        hist = coincidence_histogram(probe, ref, bw, span, center)
        expect = brute_force_histogram(probe, ref, bw, 2.0 * span, center)
        assert np.array_equal(hist.counts, expect)


def test_window_count_matches_brute_force():
    rng = np.random.default_rng(29)
    for _ in range(25):
        probe, ref = _random_streams(rng, rng.integers(0, 150), rng.integers(0, 150), 600.0)
        w = float(rng.uniform(1.0, 300.0))
        off = float(rng.uniform(-80.0, 80.0))
        assert count_in_window(probe, ref, w, off) == brute_force_window_count(
            probe, ref, w, off
        )


def test_window_boundaries_are_half_open():
    probe = np.array([0.0, 5.0, 10.0])
    ref = np.array([0.0])
    # dt values are exactly 0, 5, 10; window [0, 10) keeps the first two.
    assert count_in_window(probe, ref, 10.0, 5.0) == 2
    assert count_in_window(probe, ref, 10.0, 0.0) == 1  # [-5, 5) keeps dt=0
    assert count_in_window(np.empty(0), ref, 10.0) == 0
    assert count_in_window(probe, np.empty(0), 10.0) == 0


def test_chunked_expansion_is_invisible(monkeypatch):
    rng = np.random.default_rng(101)
    probe, ref = _random_streams(rng, 400, 400, 2000.0)
    full = coincidence_histogram(probe, ref, 5.0, 500.0)
    monkeypatch.setattr(tagcount, "_CHUNK_PAIRS", 97)
    tiny = coincidence_histogram(probe, ref, 5.0, 500.0)
    assert np.array_equal(full.counts, tiny.counts)
    assert count_in_window(probe, ref, 333.0, 12.5) == brute_force_window_count(
        probe, ref, 333.0, 12.5
    )


def test_histogram_symmetry_and_window_sum():
    rng = np.random.default_rng(47)
    probe, ref = _random_streams(rng, 200, 180, 1500.0)
    ab = coincidence_histogram(probe, ref, 2.0, 400.0)
    ba = coincidence_histogram(ref, probe, 2.0, 400.0)
    # Mirrored pairing: counts reverse, up to pairs sitting exactly on bin
    # edges, which a continuous uniform draw avoids almost surely.
    assert np.array_equal(ab.counts, ba.counts[::-1])
    # Bin-aligned window sums agree with direct counting.
    assert ab.window_sum(100.0, 0.0) == count_in_window(probe, ref, 100.0, 0.0)
    assert ab.window_sum(800.0, 0.0) == ab.total == count_in_window(probe, ref, 800.0)


def test_histogram_validation():
    with pytest.raises(ValueError):
        coincidence_histogram(np.array([2.0, 1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        coincidence_histogram(np.array([1.0]), np.array([0.0]), bin_width_ps=0.0)
    with pytest.raises(ValueError):
        coincidence_histogram(np.array([1.0]), np.array([0.0]), 3.0, 10.0)
    with pytest.raises(ValueError):
        count_in_window(np.array([1.0]), np.array([0.0]), -5.0)
    with pytest.raises(ValueError):
        Histogram(1.0, 0.0, np.empty(0, dtype=np.int64))


def test_accidental_estimate_on_uniform_streams():
    rng = np.random.default_rng(53)
    duration = 1.0e9  # 1 ms of uniform clicks
    rate_a, rate_b = 2.0e-4, 3.0e-4  # clicks per ps
    a = np.sort(rng.uniform(0.0, duration, int(rate_a * duration)))
    b = np.sort(rng.uniform(0.0, duration, int(rate_b * duration)))
    w = 500.0
    offsets = [-4.0e5, -2.0e5, 2.0e5, 4.0e5]
    est = accidental_estimate(a, b, w, offsets)
    expect = rate_a * rate_b * w * duration
    sigma = math.sqrt(expect / len(offsets))
    assert abs(est - expect) < 4.0 * sigma
    with pytest.raises(ValueError):
        accidental_estimate(a, b, w, [])


def test_peak_fwhm_on_synthetic_gaussian():
    rng = np.random.default_rng(59)
    sigma = 40.0
    dts = rng.normal(0.0, sigma, 40000)
    counts, edges = np.histogram(dts, bins=np.arange(-500.0, 501.0, 4.0))
    hist = Histogram(4.0, -500.0, counts)
    fwhm = estimate_peak_fwhm(hist)
    expect = sigma * math.sqrt(8.0 * math.log(2.0))
    assert fwhm == pytest.approx(expect, rel=0.05)
    flat = Histogram(4.0, -500.0, rng.poisson(50.0, 250))
    assert math.isnan(estimate_peak_fwhm(flat))


def test_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(61)
    probe = np.sort(rng.uniform(0.0, 1e7, 500))
    ref = np.sort(rng.uniform(0.0, 1e7, 400))
    path = tmp_path / "run.qtag"
    write_tags(path, probe, ref)
    p2, r2 = read_tags(path)
    # The binary format quantizes to 1 ps.
    assert p2.size == probe.size and r2.size == ref.size
    assert np.max(np.abs(p2 - np.rint(probe))) == 0.0
    assert np.max(np.abs(r2 - np.rint(ref))) == 0.0
    with pytest.raises(ValueError):
        write_tags(tmp_path / "neg.qtag", np.array([-5.0]), np.empty(0))


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(67)
    probe = np.sort(rng.uniform(-100.0, 1e6, 300))
    ref = np.sort(rng.uniform(-100.0, 1e6, 310))
    path = tmp_path / "run.csv"
    write_tags(path, probe, ref)
    p2, r2 = read_tags(path)
    assert np.allclose(p2, probe, atol=5.1e-4)
    assert np.allclose(r2, ref, atol=5.1e-4)
    empty = tmp_path / "empty.csv"
    write_tag_csv(empty, np.empty(0), np.empty(0))
    p3, r3 = read_tag_csv(empty)
    assert p3.size == 0 and r3.size == 0


def test_binary_corruption_detected(tmp_path):
    path = tmp_path / "run.qtag"
    write_tags(path, np.array([100.0, 200.0]), np.array([150.0]))
    raw = bytearray(path.read_bytes())

    bad = tmp_path / "bad.qtag"
    bad.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(TagFileError, match="magic"):
        read_tag_file(bad)

    bad.write_bytes(bytes(raw[:-8]))
    with pytest.raises(TagFileError, match="does not match"):
        read_tag_file(bad)

    wrong_version = bytearray(raw)
    wrong_version[4] = 9
    bad.write_bytes(bytes(wrong_version))
    with pytest.raises(TagFileError, match="version"):
        read_tag_file(bad)

    bad_channel = bytearray(raw)
    bad_channel[16 + 8] = 7  # channel field of the first record
    bad.write_bytes(bytes(bad_channel))
    with pytest.raises(TagFileError, match="channel"):
        read_tag_file(bad)

    bad.write_bytes(bytes(raw[:10]))
    with pytest.raises(TagFileError, match="truncated"):
        read_tag_file(bad)


def test_csv_corruption_detected(tmp_path):
    path = tmp_path / "tags.csv"
    path.write_text("time,chan\n1.0,0\n")
    with pytest.raises(TagFileError, match="header"):
        read_tag_csv(path)
    path.write_text("timestamp_ps,channel\n5.0,0\n1.0,1\n")
    with pytest.raises(TagFileError, match="ascending"):
        read_tag_csv(path)
    path.write_text("timestamp_ps,channel\n5.0,3\n")
    with pytest.raises(TagFileError, match="channel"):
        read_tag_csv(path)
