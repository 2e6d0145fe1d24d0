"""Detector response and closed-form SNR models for the three schemes.

Three target-detection schemes share one parameterization:

* ``ctd``    classical: probe intensity only, no reference arm.
* ``nctd``   coincidence-gated pair detection, no dispersion.
* ``dnctd``  coincidence-gated with per-arm GDD (probe dispersed by the
             channel, reference anti-dispersed locally).

Two model layers coexist here.  The *simplified* layer (`snr_ctd`,
`snr_nctd`) reproduces the textbook rate formulas in which the reference
transmission cancels; the two expressions carry different per-trial
normalizations, so only their ratio (exactly 1 / pair rate) is physically
meaningful.  The *windowed* layer (`scheme_snr`) builds the actual
arrival-time-difference densities, applies detector jitter, integrates
them over a finite coincidence window, and forms the true/false count
ratio; this is the layer the Monte Carlo engine is validated against.

The analytic layer is a linear-response model: detector dead time is not
included (the Monte Carlo engine includes it).  A flag is raised when the
predicted click rates make saturation non-negligible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .chrono import (
    ChronocyclicGaussian2,
    Gaussian1D,
    apply_gdd_pair,
    apply_gdd_single,
    difference_time_density,
    false_difference_density,
    fwhm_to_sigma,
    marginal,
)
from .constants import PICOSECONDS_PER_NANOSECOND, PICOSECONDS_PER_SECOND

__all__ = [
    "SCHEMES",
    "DetectorModel",
    "SchemeConfig",
    "SnrResult",
    "convolve_jitter",
    "window_capture",
    "snr_ctd",
    "snr_nctd",
    "normalized_noise_power_db",
    "improvement_db",
    "scheme_densities",
    "scheme_snr",
    "scheme_variants",
]

SCHEMES = ("ctd", "nctd", "dnctd")

# Predicted busy fraction (click rate * dead time) above which the linear
# analytic model is flagged as optimistic.
_SATURATION_FLAG_LEVEL = 0.05


@dataclass(frozen=True)
class DetectorModel:
    """Timing and counting response shared by both detectors.

    ``jitter_fwhm_ps`` is the combined coincidence-measurement jitter,
    i.e. the Gaussian FWHM added in quadrature by the full timing chain to
    the arrival-time *difference*.  ``probe_jitter_share`` splits its
    variance between the two physical detectors for event-level sampling;
    the split does not affect difference-time statistics.
    """

    efficiency: float = 0.8
    jitter_fwhm_ps: float = 83.3
    probe_jitter_share: float = 0.5
    dead_time_ns: float = 300.0
    dark_rate_hz: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.jitter_fwhm_ps < 0.0:
            raise ValueError(f"jitter FWHM must be non-negative, got {self.jitter_fwhm_ps}")
        if not 0.0 <= self.probe_jitter_share <= 1.0:
            raise ValueError(f"jitter share must be in [0, 1], got {self.probe_jitter_share}")
        if self.dead_time_ns < 0.0:
            raise ValueError(f"dead time must be non-negative, got {self.dead_time_ns}")
        if self.dark_rate_hz < 0.0:
            raise ValueError(f"dark rate must be non-negative, got {self.dark_rate_hz}")

    @property
    def jitter_sigma_ps(self) -> float:
        return fwhm_to_sigma(self.jitter_fwhm_ps)

    @property
    def probe_jitter_sigma_ps(self) -> float:
        return self.jitter_sigma_ps * math.sqrt(self.probe_jitter_share)

    @property
    def reference_jitter_sigma_ps(self) -> float:
        return self.jitter_sigma_ps * math.sqrt(1.0 - self.probe_jitter_share)

    @property
    def dead_time_ps(self) -> float:
        return self.dead_time_ns * PICOSECONDS_PER_NANOSECOND


@dataclass(frozen=True)
class SchemeConfig:
    """Operating point of one detection scheme.

    Rates are per second at the source/input side: ``pair_rate_hz`` is the
    emitted pair rate, ``noise_rate_hz`` the background photon rate
    reaching the probe detector before detection efficiency.  The window
    is the half-open interval [offset - w/2, offset + w/2) applied to the
    arrival-time difference t_probe - t_reference.

    ``probe_delay_ps`` is the two-way time of flight added to the probe
    photon by the target; ``noise_delay_ps`` centers the background
    wavepacket on the same clock (pulsed background only).

    ``noise_mode`` selects the background timing statistics: "pulsed"
    for background synchronized with the emission trials and sharing the
    probe photon's wavepacket (worst case for coincidence gating), "cw"
    for a uniform-in-time background.
    """

    scheme: str = "dnctd"
    pair_rate_hz: float = 2.7e5
    probe_transmission: float = 0.1
    reference_transmission: float = 0.5
    noise_rate_hz: float = 2.7e5
    noise_mode: str = "pulsed"
    window_ps: float = 200.0
    window_offset_ps: float = 0.0
    gdd_probe_ps2: float = 0.0
    gdd_reference_ps2: float = 0.0
    probe_delay_ps: float = 0.0
    noise_delay_ps: float = 0.0

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.noise_mode not in ("pulsed", "cw"):
            raise ValueError(
                f"noise_mode must be 'pulsed' or 'cw', got {self.noise_mode!r}"
            )
        if self.pair_rate_hz <= 0.0:
            raise ValueError(f"pair rate must be positive, got {self.pair_rate_hz}")
        if self.noise_rate_hz < 0.0:
            raise ValueError(f"noise rate must be non-negative, got {self.noise_rate_hz}")
        for name in ("probe_transmission", "reference_transmission"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {val}")
        if self.window_ps <= 0.0:
            raise ValueError(f"window must be positive, got {self.window_ps}")
        if self.scheme in ("ctd", "nctd"):
            if self.gdd_probe_ps2 != 0.0 or self.gdd_reference_ps2 != 0.0:
                raise ValueError(f"scheme {self.scheme!r} must have zero GDD on both arms")
        elif self.gdd_probe_ps2 == 0.0:
            raise ValueError("scheme 'dnctd' requires nonzero probe GDD")


def scheme_variants(
    base: SchemeConfig,
    gdd_probe_ps2: float | None = None,
    gdd_reference_ps2: float | None = None,
) -> dict[str, SchemeConfig]:
    """The three schemes at one shared operating point.

    GDD for the dispersed variant is taken from ``base`` when it already
    describes a dispersed scheme, otherwise from the explicit arguments.
    """
    if gdd_probe_ps2 is None:
        if base.gdd_probe_ps2 == 0.0:
            raise ValueError("base config has no GDD; pass gdd_probe_ps2 explicitly")
        gdd_probe_ps2 = base.gdd_probe_ps2
        gdd_reference_ps2 = base.gdd_reference_ps2
    elif gdd_reference_ps2 is None:
        gdd_reference_ps2 = -gdd_probe_ps2
    return {
        "ctd": replace(base, scheme="ctd", gdd_probe_ps2=0.0, gdd_reference_ps2=0.0),
        "nctd": replace(base, scheme="nctd", gdd_probe_ps2=0.0, gdd_reference_ps2=0.0),
        "dnctd": replace(
            base,
            scheme="dnctd",
            gdd_probe_ps2=gdd_probe_ps2,
            gdd_reference_ps2=gdd_reference_ps2,
        ),
    }


@dataclass(frozen=True)
class SnrResult:
    """Signal-to-noise outcome of one scheme at one operating point."""

    scheme: str
    snr: float
    snr_db: float
    true_rate_hz: float
    false_rate_hz: float
    normalized_noise_db: float
    method: str = "analytic"
    snr_db_err: float | None = None
    capture_true: float | None = None
    capture_false: float | None = None
    flags: tuple[str, ...] = ()


def convolve_jitter(density: Gaussian1D, jitter_fwhm_ps: float) -> Gaussian1D:
    """Broaden an arrival-time density by Gaussian timing jitter."""
    sigma = fwhm_to_sigma(jitter_fwhm_ps)
    return density.broadened(sigma * sigma)


def window_capture(density: Gaussian1D, window_ps: float, offset_ps: float = 0.0) -> float:
    """Probability mass of a density inside a centered coincidence window."""
    if window_ps <= 0.0:
        raise ValueError(f"window must be positive, got {window_ps}")
    hi = offset_ps + 0.5 * window_ps
    lo = offset_ps - 0.5 * window_ps
    if density.sigma == 0.0:
        # Point mass, judged with the same half-open convention as counting.
        return float(lo <= density.mean < hi)
    rt2 = math.sqrt(2.0) * density.sigma
    return 0.5 * (math.erf((hi - density.mean) / rt2) - math.erf((lo - density.mean) / rt2))


def snr_ctd(pair_rate_hz: float, probe_transmission: float, noise_rate_hz: float) -> float:
    """Simplified classical SNR: returned probe rate over background rate."""
    _check_simple_args(pair_rate_hz, probe_transmission, noise_rate_hz)
    if noise_rate_hz == 0.0:
        return math.inf
    return pair_rate_hz * probe_transmission / noise_rate_hz


def snr_nctd(
    pair_rate_hz: float,
    probe_transmission: float,
    reference_transmission: float,
    noise_rate_hz: float,
) -> float:
    """Simplified coincidence SNR per emitted pair.

    The reference transmission scales true and false coincidences alike
    and cancels; it is accepted and validated for interface symmetry.
    This expression is normalized per pair rather than per unit time, so
    compare it to `snr_ctd` only through the ratio, which is exactly
    1 / pair_rate_hz.
    """
    _check_simple_args(pair_rate_hz, probe_transmission, noise_rate_hz)
    if not 0.0 <= reference_transmission <= 1.0:
        raise ValueError(
            f"reference transmission must be in [0, 1], got {reference_transmission}"
        )
    if noise_rate_hz == 0.0:
        return math.inf
    return probe_transmission / noise_rate_hz


def _check_simple_args(pair_rate_hz: float, transmission: float, noise_rate_hz: float) -> None:
    if pair_rate_hz <= 0.0:
        raise ValueError(f"pair rate must be positive, got {pair_rate_hz}")
    if not 0.0 <= transmission <= 1.0:
        raise ValueError(f"transmission must be in [0, 1], got {transmission}")
    if noise_rate_hz < 0.0:
        raise ValueError(f"noise rate must be non-negative, got {noise_rate_hz}")


def normalized_noise_power_db(
    noise_rate_hz: float, pair_rate_hz: float, probe_transmission: float
) -> float:
    """Background rate in dB relative to the returned probe rate."""
    returned = pair_rate_hz * probe_transmission
    if returned <= 0.0:
        raise ValueError("returned probe rate must be positive")
    if noise_rate_hz <= 0.0:
        return -math.inf
    return 10.0 * math.log10(noise_rate_hz / returned)


def improvement_db(numerator: "SnrResult | float", denominator: "SnrResult | float") -> float:
    """SNR advantage of one result over another, in dB."""
    a = numerator.snr if isinstance(numerator, SnrResult) else float(numerator)
    b = denominator.snr if isinstance(denominator, SnrResult) else float(denominator)
    if a <= 0.0 or b <= 0.0:
        raise ValueError("SNR values must be positive to form a dB ratio")
    return 10.0 * math.log10(a / b)


def scheme_densities(
    cfg: SchemeConfig, detector: DetectorModel, state: ChronocyclicGaussian2
) -> tuple[Gaussian1D, Gaussian1D]:
    """Jitter-broadened true and false arrival-time-difference densities.

    The true density comes from the joint pair state after per-arm GDD;
    the false density pairs an independent background photon (same
    spectrum and dispersion as the probe arm) with a reference photon.
    Only meaningful for the coincidence schemes.
    """
    if cfg.scheme == "ctd":
        raise ValueError("ctd has no coincidence densities")
    dispersed = apply_gdd_pair(state, cfg.gdd_probe_ps2, cfg.gdd_reference_ps2)
    true_density = difference_time_density(dispersed).shifted(cfg.probe_delay_ps)

    noise_wp = apply_gdd_single(marginal(state, "probe"), cfg.gdd_probe_ps2)
    ref_wp = apply_gdd_single(marginal(state, "reference"), cfg.gdd_reference_ps2)
    false_density = false_difference_density(noise_wp, ref_wp).shifted(cfg.noise_delay_ps)

    jitter = detector.jitter_fwhm_ps
    return convolve_jitter(true_density, jitter), convolve_jitter(false_density, jitter)


def scheme_snr(
    cfg: SchemeConfig,
    detector: DetectorModel,
    state: ChronocyclicGaussian2,
    rep_rate_hz: float,
) -> SnrResult:
    """Windowed true/false count-rate ratio for one scheme.

    For the coincidence schemes the false rate combines background photons
    paired with reference photons from the same emission trial (rate
    noise * pairs * t_ref * eff^2 / rep, weighted by the false-density
    window capture) with the ordinary accidental floor from dark counts.
    Cross-trial pairings fall outside the window as long as the window is
    small against the trial period, which is validated here.
    """
    if rep_rate_hz <= 0.0:
        raise ValueError(f"repetition rate must be positive, got {rep_rate_hz}")

    eta = detector.efficiency
    dark = detector.dark_rate_hz
    window_s = cfg.window_ps / PICOSECONDS_PER_SECOND
    noise_db = normalized_noise_power_db(
        cfg.noise_rate_hz, cfg.pair_rate_hz, cfg.probe_transmission
    ) if cfg.probe_transmission > 0.0 else math.nan

    flags: list[str] = []

    if cfg.scheme == "ctd":
        true_rate = cfg.pair_rate_hz * cfg.probe_transmission * eta
        false_rate = cfg.noise_rate_hz * eta + dark
        probe_clicks = true_rate + false_rate
        ref_clicks = 0.0
        capture_true = capture_false = None
    else:
        period_ps = PICOSECONDS_PER_SECOND / rep_rate_hz
        if cfg.window_ps >= 0.5 * period_ps:
            raise ValueError(
                f"window {cfg.window_ps} ps must be well below the trial period "
                f"{period_ps:.1f} ps for same-trial gating to hold"
            )
        true_density, false_density = scheme_densities(cfg, detector, state)
        capture_true = window_capture(true_density, cfg.window_ps, cfg.window_offset_ps)
        capture_false = window_capture(false_density, cfg.window_ps, cfg.window_offset_ps)

        pairs_per_trial = cfg.pair_rate_hz / rep_rate_hz
        pair_probe_clicks = cfg.pair_rate_hz * cfg.probe_transmission * eta
        noise_clicks = cfg.noise_rate_hz * eta
        ref_pair_clicks = cfg.pair_rate_hz * cfg.reference_transmission * eta
        ref_clicks = ref_pair_clicks + dark
        probe_clicks = pair_probe_clicks + noise_clicks + dark

        true_rate = pair_probe_clicks * cfg.reference_transmission * eta * capture_true

        if cfg.noise_mode == "pulsed":
            # Background shares the emission trials: only same-trial
            # pairings land near zero delay, weighted by the capture.
            false_rate = (
                noise_clicks * pairs_per_trial * cfg.reference_transmission
                * eta * capture_false
            )
            uncorrelated_probe = dark
            pulsed_probe_clicks = pair_probe_clicks + noise_clicks
        else:
            # Uniform background: plain accidental floor over the window.
            false_rate = 0.0
            uncorrelated_probe = noise_clicks + dark
            pulsed_probe_clicks = pair_probe_clicks

        # Uncorrelated streams pair with anything on the other detector.
        false_rate += (
            uncorrelated_probe * ref_clicks + dark * pulsed_probe_clicks
        ) * window_s

    busy = max(probe_clicks, ref_clicks) * detector.dead_time_ns * 1.0e-9
    if busy > _SATURATION_FLAG_LEVEL:
        flags.append("saturation-expected")

    if false_rate == 0.0:
        flags.append("noise-free")
        snr = math.inf
        snr_db = math.inf
    else:
        snr = true_rate / false_rate
        snr_db = 10.0 * math.log10(snr) if snr > 0.0 else -math.inf

    return SnrResult(
        scheme=cfg.scheme,
        snr=snr,
        snr_db=snr_db,
        true_rate_hz=true_rate,
        false_rate_hz=false_rate,
        normalized_noise_db=noise_db,
        method="analytic",
        capture_true=capture_true,
        capture_false=capture_false,
        flags=tuple(flags),
    )
