"""Window captures, the simplified SNR formulas, and the windowed layer."""

import math

import numpy as np
import pytest

from qlidar import (
    BiphotonSpec,
    DetectorModel,
    Gaussian1D,
    SchemeConfig,
    convolve_jitter,
    improvement_db,
    normalized_noise_power_db,
    scheme_densities,
    scheme_snr,
    scheme_variants,
    snr_ctd,
    snr_nctd,
    window_capture,
)

from _oracles import gauss_mass

REP_RATE = 76.0e6

# Hand-computed widths of the four jitter-convolved difference densities
# at the default operating point (83.3 ps jitter, +-116.276 ps^2 GDD).
TRUE_PLAIN_FWHM = 83.30024009569242
TRUE_DISPERSED_FWHM = 85.26826328195402
FALSE_PLAIN_FWHM = 86.97982524700771
FALSE_DISPERSED_FWHM = 2281.3105680035383

# erf-table captures of those densities for 200 ps and 10 ps windows.
CAPTURES_200 = {"true_d": 0.994249, "false_d": 0.082213, "true_n": 0.995300, "false_n": 0.993217}
CAPTURES_10 = {"true_d": 0.109825, "false_d": 0.004118, "true_n": 0.112403, "false_n": 0.107677}

ADVANTAGE_200_DB = 10.816427
ADVANTAGE_DELTA_DB = 3.2572503380311737


def _default_pieces():
    detector = DetectorModel()
    state = BiphotonSpec().build()
    base = SchemeConfig(
        scheme="dnctd",
        gdd_probe_ps2=-116.27628155928888,
        gdd_reference_ps2=116.27628155928888,
    )
    return detector, state, base


def test_window_capture_against_erf():
    rng = np.random.default_rng(3)
    for _ in range(50):
        mean = rng.uniform(-50.0, 50.0)
        sigma = rng.uniform(0.5, 400.0)
        w = rng.uniform(1.0, 600.0)
        off = rng.uniform(-100.0, 100.0)
        got = window_capture(Gaussian1D(mean, sigma**2), w, off)
        assert got == pytest.approx(gauss_mass(mean, sigma, w, off), rel=1e-12, abs=1e-15)
    jitter_only = Gaussian1D(0.0, (83.3 / math.sqrt(8.0 * math.log(2.0))) ** 2)
    assert window_capture(jitter_only, 83.3) == pytest.approx(0.760968108550488, rel=1e-12)
    assert window_capture(jitter_only, 83.3) == pytest.approx(0.7607, abs=5e-4)
    assert window_capture(jitter_only, 1.0e6) == pytest.approx(1.0, rel=1e-12)
    assert window_capture(jitter_only, 1.0e-9) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError):
        window_capture(jitter_only, 0.0)


def test_convolve_jitter_adds_variance():
    d = Gaussian1D(5.0, 7.73**2)
    out = convolve_jitter(d, 83.3)
    s = 83.3 / math.sqrt(8.0 * math.log(2.0))
    assert out.var == pytest.approx(7.73**2 + s * s, rel=1e-14)
    assert out.sigma == pytest.approx(36.21, abs=0.01)
    assert out.mean == 5.0
    same = convolve_jitter(d, 0.0)
    assert same.var == d.var


def test_simple_snr_formulas():
    assert snr_ctd(1e6, 0.1, 1e5) == pytest.approx(1.0, rel=1e-15)
    assert snr_ctd(1e6, 0.1, 1e7) == pytest.approx(0.01, rel=1e-15)
    assert snr_ctd(1e6, 0.1, 0.0) == math.inf
    # Per-pair normalized: absolute value is transmission over noise, and
    # only the ratio to the classical formula carries meaning.
    assert snr_nctd(1e6, 0.1, 0.5, 1e5) == pytest.approx(1e-6, rel=1e-15)
    assert snr_nctd(1e6, 0.1, 0.0, 1e5) == snr_nctd(1e6, 0.1, 1.0, 1e5)
    # Joint scaling of the post-coupling channel cancels.
    assert snr_ctd(1e6, 0.05, 2e5) == pytest.approx(snr_ctd(1e6, 0.1, 4e5), rel=1e-14)
    for bad in (
        lambda: snr_ctd(0.0, 0.1, 1e5),
        lambda: snr_ctd(1e6, 1.5, 1e5),
        lambda: snr_ctd(1e6, 0.1, -1.0),
        lambda: snr_nctd(1e6, 0.1, -0.2, 1e5),
    ):
        with pytest.raises(ValueError):
            bad()


def test_coincidence_over_classical_ratio_is_inverse_pair_rate():
    rng = np.random.default_rng(11)
    for _ in range(100):
        nu = 10.0 ** rng.uniform(3.0, 8.0)
        tau_p = rng.uniform(1e-3, 1.0)
        tau_r = rng.uniform(1e-3, 1.0)
        noise = 10.0 ** rng.uniform(2.0, 9.0)
        ratio = snr_nctd(nu, tau_p, tau_r, noise) / snr_ctd(nu, tau_p, noise)
        assert ratio == pytest.approx(1.0 / nu, rel=1e-12)


def test_normalized_noise_power():
    assert normalized_noise_power_db(2.7e4, 2.7e5, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert normalized_noise_power_db(316.22776601683794 * 2.7e4, 2.7e5, 0.1) == pytest.approx(25.0, rel=1e-12)
    assert normalized_noise_power_db(0.0, 2.7e5, 0.1) == -math.inf
    # Joint scaling leaves the ratio unchanged.
    a = normalized_noise_power_db(5e5, 1e6, 0.2)
    b = normalized_noise_power_db(5e6, 1e7, 0.2)
    assert a == pytest.approx(b, rel=1e-14)
    with pytest.raises(ValueError):
        normalized_noise_power_db(1e5, 1e6, 0.0)
    with pytest.raises(ValueError):
        improvement_db(0.0, 1.0)


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(scheme="nctd", gdd_probe_ps2=-10.0)
    with pytest.raises(ValueError):
        SchemeConfig(scheme="ctd", gdd_reference_ps2=5.0)
    with pytest.raises(ValueError):
        SchemeConfig(scheme="dnctd", gdd_probe_ps2=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(scheme="qi")
    with pytest.raises(ValueError):
        SchemeConfig(scheme="nctd", window_ps=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(scheme="nctd", noise_mode="thermal")
    with pytest.raises(ValueError):
        SchemeConfig(scheme="nctd", probe_transmission=1.2)


def test_scheme_variants():
    _, _, base = _default_pieces()
    trio = scheme_variants(base)
    assert trio["ctd"].gdd_probe_ps2 == 0.0
    assert trio["nctd"].gdd_reference_ps2 == 0.0
    assert trio["dnctd"].gdd_probe_ps2 == base.gdd_probe_ps2
    nctd = trio["nctd"]
    with pytest.raises(ValueError):
        scheme_variants(nctd)
    explicit = scheme_variants(nctd, gdd_probe_ps2=-50.0)
    assert explicit["dnctd"].gdd_reference_ps2 == 50.0


def test_detector_model():
    det = DetectorModel()
    assert det.jitter_sigma_ps == pytest.approx(35.374253, abs=1e-6)
    total = det.probe_jitter_sigma_ps**2 + det.reference_jitter_sigma_ps**2
    assert total == pytest.approx(det.jitter_sigma_ps**2, rel=1e-12)
    skew = DetectorModel(probe_jitter_share=1.0)
    assert skew.reference_jitter_sigma_ps == 0.0
    assert det.dead_time_ps == pytest.approx(3.0e5)
    for bad in (
        dict(efficiency=0.0),
        dict(efficiency=1.2),
        dict(jitter_fwhm_ps=-1.0),
        dict(probe_jitter_share=2.0),
        dict(dead_time_ns=-5.0),
        dict(dark_rate_hz=-1.0),
    ):
        with pytest.raises(ValueError):
            DetectorModel(**bad)


def test_scheme_density_widths():
    detector, state, base = _default_pieces()
    true_d, false_d = scheme_densities(base, detector, state)
    assert true_d.fwhm == pytest.approx(TRUE_DISPERSED_FWHM, rel=1e-9)
    assert false_d.fwhm == pytest.approx(FALSE_DISPERSED_FWHM, rel=1e-9)
    nctd = scheme_variants(base)["nctd"]
    true_n, false_n = scheme_densities(nctd, detector, state)
    assert true_n.fwhm == pytest.approx(TRUE_PLAIN_FWHM, rel=1e-9)
    assert false_n.fwhm == pytest.approx(FALSE_PLAIN_FWHM, rel=1e-9)
    # Dispersion barely broadens the pair peak but wrecks the false peak.
    assert true_d.fwhm / true_n.fwhm == pytest.approx(1.0236256604302798, rel=1e-9)
    assert false_d.fwhm / false_n.fwhm == pytest.approx(26.228042669952593, rel=1e-9)
    with pytest.raises(ValueError):
        scheme_densities(scheme_variants(base)["ctd"], detector, state)


def test_window_captures_at_both_operating_windows():
    detector, state, base = _default_pieces()
    nctd = scheme_variants(base)["nctd"]
    for window, expected in ((200.0, CAPTURES_200), (10.0, CAPTURES_10)):
        true_d, false_d = scheme_densities(base, detector, state)
        true_n, false_n = scheme_densities(nctd, detector, state)
        got = {
            "true_d": window_capture(true_d, window),
            "false_d": window_capture(false_d, window),
            "true_n": window_capture(true_n, window),
            "false_n": window_capture(false_n, window),
        }
        for key, val in expected.items():
            assert got[key] == pytest.approx(val, abs=1.5e-6), (window, key)


def test_windowed_snr_composition():
    detector, state, base = _default_pieces()
    res = scheme_snr(base, detector, state, REP_RATE)
    eta = detector.efficiency
    true_rate = base.pair_rate_hz * base.probe_transmission * eta
    true_rate *= base.reference_transmission * eta * res.capture_true
    pairs_per_trial = base.pair_rate_hz / REP_RATE
    false_rate = (
        base.noise_rate_hz * eta * pairs_per_trial
        * base.reference_transmission * eta * res.capture_false
    )
    assert res.true_rate_hz == pytest.approx(true_rate, rel=1e-12)
    assert res.false_rate_hz == pytest.approx(false_rate, rel=1e-12)
    assert res.snr == pytest.approx(true_rate / false_rate, rel=1e-12)
    # Default point: noise ten times the returned probe rate.
    assert res.normalized_noise_db == pytest.approx(10.0, abs=1e-12)


def test_dispersion_advantage_and_window_dependence():
    detector, state, base = _default_pieces()
    trio = scheme_variants(base)
    dn = scheme_snr(trio["dnctd"], detector, state, REP_RATE)
    nc = scheme_snr(trio["nctd"], detector, state, REP_RATE)
    adv_200 = improvement_db(dn, nc)
    assert adv_200 == pytest.approx(ADVANTAGE_200_DB, abs=1e-5)
    assert adv_200 == pytest.approx(10.8, abs=0.3)

    narrow = {k: scheme_snr(
        type(v)(**{**v.__dict__, "window_ps": 10.0}), detector, state, REP_RATE
    ) for k, v in trio.items() if k != "ctd"}
    adv_10 = improvement_db(narrow["dnctd"], narrow["nctd"])
    assert adv_10 - adv_200 == pytest.approx(ADVANTAGE_DELTA_DB, rel=1e-9)

    # The advantage is a pure capture-ratio quantity: rescaling rates and
    # transmissions must not move it.
    import dataclasses

    other = dataclasses.replace(
        base, pair_rate_hz=9.0e5, probe_transmission=0.37,
        reference_transmission=0.21, noise_rate_hz=4.4e6,
    )
    trio2 = scheme_variants(other)
    adv2 = improvement_db(
        scheme_snr(trio2["dnctd"], detector, state, REP_RATE),
        scheme_snr(trio2["nctd"], detector, state, REP_RATE),
    )
    assert adv2 == pytest.approx(adv_200, rel=1e-12)


def test_negligible_gdd_recovers_plain_coincidence_scheme():
    detector, state, base = _default_pieces()
    import dataclasses

    nearly = dataclasses.replace(base, gdd_probe_ps2=1e-12, gdd_reference_ps2=-1e-12)
    nc = scheme_variants(base)["nctd"]
    a = scheme_snr(nearly, detector, state, REP_RATE)
    b = scheme_snr(nc, detector, state, REP_RATE)
    assert a.snr == pytest.approx(b.snr, rel=1e-9)


def test_ctd_snr_and_window_guard():
    detector, state, base = _default_pieces()
    ctd = scheme_variants(base)["ctd"]
    res = scheme_snr(ctd, detector, state, REP_RATE)
    assert res.snr == pytest.approx(
        snr_ctd(ctd.pair_rate_hz, ctd.probe_transmission, ctd.noise_rate_hz), rel=1e-12
    )
    assert res.capture_true is None
    import dataclasses

    wide = dataclasses.replace(base, window_ps=7000.0)
    with pytest.raises(ValueError, match="trial period"):
        scheme_snr(wide, detector, state, REP_RATE)
    with pytest.raises(ValueError):
        scheme_snr(base, detector, state, 0.0)


def test_uniform_background_and_dark_floors():
    detector, state, base = _default_pieces()
    import dataclasses

    eta = detector.efficiency
    window_s = base.window_ps * 1e-12

    cw = dataclasses.replace(base, noise_mode="cw")
    res = scheme_snr(cw, detector, state, REP_RATE)
    ref_clicks = cw.pair_rate_hz * cw.reference_transmission * eta
    assert res.false_rate_hz == pytest.approx(
        cw.noise_rate_hz * eta * ref_clicks * window_s, rel=1e-12
    )

    dark_det = DetectorModel(dark_rate_hz=1000.0)
    silent = dataclasses.replace(base, noise_rate_hz=0.0)
    res = scheme_snr(silent, dark_det, state, REP_RATE)
    ref_clicks = silent.pair_rate_hz * silent.reference_transmission * eta + 1000.0
    pulsed_probe = silent.pair_rate_hz * silent.probe_transmission * eta
    expected = (1000.0 * ref_clicks + 1000.0 * pulsed_probe) * window_s
    assert res.false_rate_hz == pytest.approx(expected, rel=1e-12)

    clean = scheme_snr(silent, detector, state, REP_RATE)
    assert clean.snr == math.inf
    assert "noise-free" in clean.flags


def test_saturation_flag():
    detector, state, base = _default_pieces()
    import dataclasses

    hot = dataclasses.replace(base, noise_rate_hz=5.0e6)
    res = scheme_snr(hot, detector, state, REP_RATE)
    assert "saturation-expected" in res.flags
    quiet = dataclasses.replace(base, noise_rate_hz=2.7e4)
    calm = scheme_snr(quiet, detector, state, REP_RATE)
    assert "saturation-expected" not in calm.flags
