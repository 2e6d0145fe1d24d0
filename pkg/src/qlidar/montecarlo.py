"""Event-level Monte Carlo of pulsed pair emission and photon counting.

The simulation produces per-detector time-tag streams from first
principles and feeds them to the same counting code used on real tag
files, so the analytic rate models in `detection` are validated end to
end rather than formula against formula.

Emission trials occur on a fixed clock.  At most one pair per trial is
modeled (emission is Bernoulli per trial; a warning is raised when the
pair probability is large enough for neglected multi-pair events to
matter).  Pair arrival times are drawn from the dispersed joint temporal
covariance of the source state, so non-local correlations survive into
the tag streams.  Background photons hit the probe detector either
synchronized with the trials (sharing the dispersed probe wavepacket) or
uniformly in time; dark counts hit both detectors uniformly.  Detection
applies efficiency thinning, per-detector Gaussian jitter, and a
non-paralyzable dead time per channel.

Trial selection uses geometric inter-emission gaps, which reproduces the
Bernoulli trial process exactly without touching the (much longer) full
trial array.  Background counts use Poisson superposition: a Poisson
total assigned to trials uniformly with replacement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .chrono import apply_gdd_pair, apply_gdd_single, marginal
from .config import RunConfig
from .constants import PICOSECONDS_PER_SECOND
from .detection import SnrResult, normalized_noise_power_db
from .tagcount import count_in_window

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is an install dependency
    _njit = None

__all__ = [
    "SourceModel",
    "TagStream",
    "SimulatedRun",
    "SaturationScan",
    "simulate_run",
    "apply_dead_time",
    "nonparalyzable_throughput",
    "run_snr_experiment",
    "saturation_scan",
]

TRUTH_NOISE = -1
TRUTH_DARK = -2

# Pair probability above which neglecting multi-pair emission is dubious.
_MULTI_PAIR_WARN = 0.1


@dataclass(frozen=True)
class SourceModel:
    """Clocked pair source: emission probability per trial."""

    rep_rate_hz: float = 76.0e6
    pair_prob: float = 2.7e5 / 76.0e6

    def __post_init__(self) -> None:
        if self.rep_rate_hz <= 0.0:
            raise ValueError(f"repetition rate must be positive, got {self.rep_rate_hz}")
        if not 0.0 <= self.pair_prob <= 1.0:
            raise ValueError(f"pair probability must be in [0, 1], got {self.pair_prob}")
        if self.pair_prob > _MULTI_PAIR_WARN:
            warnings.warn(
                f"pair probability {self.pair_prob:.3f} per trial: multi-pair "
                "emission is neglected and becomes significant at this level",
                UserWarning,
                stacklevel=2,
            )

    @classmethod
    def from_rates(cls, pair_rate_hz: float, rep_rate_hz: float) -> "SourceModel":
        return cls(rep_rate_hz=rep_rate_hz, pair_prob=pair_rate_hz / rep_rate_hz)

    @property
    def pair_rate_hz(self) -> float:
        return self.pair_prob * self.rep_rate_hz


@dataclass(frozen=True)
class TagStream:
    """Sorted detector click times (ps) with per-click ground truth.

    ``truth`` holds the emission trial index for pair photons, -1 for
    background, -2 for dark counts.  Truth is internal bookkeeping for
    validation; file exports and CLI tables never include it unless
    explicitly requested.
    """

    channel: str
    times: np.ndarray
    truth: np.ndarray

    def __post_init__(self) -> None:
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        truth = np.ascontiguousarray(self.truth, dtype=np.int64)
        if times.shape != truth.shape or times.ndim != 1:
            raise ValueError("times and truth must be 1-D arrays of equal length")
        if times.size > 1 and np.any(np.diff(times) < 0.0):
            raise ValueError("times must be sorted ascending")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "truth", truth)

    @property
    def n(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class SimulatedRun:
    """Output of one simulated acquisition."""

    probe: TagStream
    reference: TagStream
    duration_s: float
    n_trials: int
    n_pairs_emitted: int
    target_present: bool


def _dead_time_keep_py(times: np.ndarray, dead_ps: float) -> np.ndarray:
    keep = np.zeros(times.size, dtype=np.bool_)
    last = -math.inf
    for i in range(times.size):
        if times[i] - last >= dead_ps:
            keep[i] = True
            last = times[i]
    return keep


if _njit is not None:
    _dead_time_keep = _njit(cache=True)(_dead_time_keep_py)
else:  # pragma: no cover
    _dead_time_keep = _dead_time_keep_py


def apply_dead_time(times: np.ndarray, dead_time_ns: float) -> np.ndarray:
    """Non-paralyzable dead time: a click blocks later clicks for a fixed
    hold-off; blocked clicks do not extend the hold-off.

    Input must be sorted ascending; returns the surviving times.
    """
    times = np.ascontiguousarray(times, dtype=np.float64)
    if times.size > 1 and np.any(np.diff(times) < 0.0):
        raise ValueError("times must be sorted ascending")
    if dead_time_ns < 0.0:
        raise ValueError(f"dead time must be non-negative, got {dead_time_ns}")
    if dead_time_ns == 0.0 or times.size == 0:
        return times.copy()
    return times[_dead_time_keep(times, dead_time_ns * 1.0e3)]


def nonparalyzable_throughput(rate_hz: float, dead_time_ns: float) -> float:
    """Accepted click rate for Poisson arrivals at a non-paralyzable detector."""
    if rate_hz < 0.0 or dead_time_ns < 0.0:
        raise ValueError("rate and dead time must be non-negative")
    return rate_hz / (1.0 + rate_hz * dead_time_ns * 1.0e-9)


def _geometric_trial_indices(rng: np.random.Generator, p: float, n_trials: int) -> np.ndarray:
    """Indices of success trials of a Bernoulli(p) process over n_trials.

    Gap sampling keeps cost proportional to the number of successes.
    """
    if p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_trials, dtype=np.int64)
    expect = n_trials * p
    chunks = []
    position = -1  # index of the previous success
    while position < n_trials - 1:
        size = int(expect - max(0, position) * p) + int(6.0 * math.sqrt(expect)) + 16
        gaps = rng.geometric(p, size=size)
        idx = position + np.cumsum(gaps)
        chunks.append(idx)
        position = int(idx[-1])
    all_idx = np.concatenate(chunks)
    return all_idx[all_idx < n_trials]


def simulate_run(
    cfg: RunConfig,
    duration_s: float,
    seed=None,
    target_present: bool = True,
) -> SimulatedRun:
    """Simulate one acquisition and return both detector tag streams."""
    if duration_s <= 0.0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    rng = np.random.default_rng(seed)

    scheme = cfg.scheme
    det = cfg.detector
    rep = cfg.rep_rate_hz
    period_ps = PICOSECONDS_PER_SECOND / rep
    if duration_s * rep > 1.0e12:
        # Beyond ~1e12 trials the ps clock loses sub-ps resolution in
        # float64 and array sizes stop being realistic; refuse loudly.
        raise ValueError(
            f"duration x repetition rate = {duration_s * rep:.3e} trials "
            "exceeds the supported 1e12; split the acquisition"
        )
    n_trials = max(1, int(round(duration_s * rep)))

    state = cfg.build_state()
    dispersed = apply_gdd_pair(state, scheme.gdd_probe_ps2, scheme.gdd_reference_ps2)
    time_mean = dispersed.time_mean
    time_mean[0] += scheme.probe_delay_ps
    chol = np.linalg.cholesky(dispersed.time_cov)

    source = SourceModel.from_rates(scheme.pair_rate_hz, rep)
    trial_idx = _geometric_trial_indices(rng, source.pair_prob, n_trials)
    n_pairs = trial_idx.size

    probe_tx = scheme.probe_transmission if target_present else 0.0

    # Pair photons: joint arrival draw, then independent survival thinning.
    # Transmission and efficiency multiply into one Bernoulli per photon.
    probe_parts, probe_truths = [], []
    ref_parts, ref_truths = [], []
    if n_pairs > 0:
        keep_p = rng.random(n_pairs) < probe_tx * det.efficiency
        keep_r = rng.random(n_pairs) < scheme.reference_transmission * det.efficiency
        any_p, any_r = bool(keep_p.any()), bool(keep_r.any())
        if any_p or any_r:
            arrivals = time_mean[:, None] + chol @ rng.standard_normal((2, n_pairs))
            base = trial_idx.astype(np.float64) * period_ps
            if any_p:
                t = base[keep_p] + arrivals[0, keep_p]
                t += rng.normal(0.0, det.probe_jitter_sigma_ps, t.size)
                probe_parts.append(t)
                probe_truths.append(trial_idx[keep_p])
            if any_r:
                t = base[keep_r] + arrivals[1, keep_r]
                t += rng.normal(0.0, det.reference_jitter_sigma_ps, t.size)
                ref_parts.append(t)
                ref_truths.append(trial_idx[keep_r])

    # Background on the probe detector (rate is pre-efficiency).
    duration_ps = n_trials * period_ps
    n_noise = rng.poisson(scheme.noise_rate_hz * det.efficiency * duration_s)
    if n_noise > 0:
        if scheme.noise_mode == "pulsed":
            noise_wp = apply_gdd_single(marginal(state, "probe"), scheme.gdd_probe_ps2)
            sigma = noise_wp.time_density.sigma
            idx = rng.integers(0, n_trials, n_noise)
            t = (
                idx.astype(np.float64) * period_ps
                + scheme.noise_delay_ps
                + rng.normal(0.0, sigma, n_noise)
                + rng.normal(0.0, det.probe_jitter_sigma_ps, n_noise)
            )
        else:
            # Uniform background; jitter leaves a uniform law unchanged.
            t = rng.uniform(0.0, duration_ps, n_noise)
        probe_parts.append(t)
        probe_truths.append(np.full(n_noise, TRUTH_NOISE, dtype=np.int64))

    # Dark counts, uniform on each detector.
    for parts, truths in ((probe_parts, probe_truths), (ref_parts, ref_truths)):
        n_dark = rng.poisson(det.dark_rate_hz * duration_s)
        if n_dark > 0:
            parts.append(rng.uniform(0.0, duration_ps, n_dark))
            truths.append(np.full(n_dark, TRUTH_DARK, dtype=np.int64))

    probe = _assemble_stream("probe", probe_parts, probe_truths, det.dead_time_ns)
    reference = _assemble_stream("reference", ref_parts, ref_truths, det.dead_time_ns)

    return SimulatedRun(
        probe=probe,
        reference=reference,
        duration_s=duration_s,
        n_trials=n_trials,
        n_pairs_emitted=int(n_pairs),
        target_present=target_present,
    )


def _assemble_stream(channel, parts, truths, dead_time_ns) -> TagStream:
    if not parts:
        return TagStream(channel, np.empty(0), np.empty(0, dtype=np.int64))
    times = np.concatenate(parts)
    truth = np.concatenate(truths)
    order = np.argsort(times, kind="stable")
    times, truth = times[order], truth[order]
    if dead_time_ns > 0.0 and times.size:
        keep = _dead_time_keep(times, dead_time_ns * 1.0e3)
        times, truth = times[keep], truth[keep]
    return TagStream(channel, times, truth)


def run_snr_experiment(
    cfg: RunConfig, duration_s: float, seed=None
) -> tuple[SnrResult, SimulatedRun, SimulatedRun]:
    """Estimate a scheme's SNR from simulated target-present and -absent runs.

    The metric mirrors the analytic definition: classical runs compare
    probe singles, coincidence runs compare windowed coincidences; the
    target-absent run measures the false level, and the SNR is
    (present - absent) / absent with Poisson error propagation.
    """
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_present, s_absent = seq.spawn(2)
    present = simulate_run(cfg, duration_s, s_present, target_present=True)
    absent = simulate_run(cfg, duration_s, s_absent, target_present=False)

    scheme = cfg.scheme
    if scheme.scheme == "ctd":
        c_present = present.probe.n
        c_absent = absent.probe.n
    else:
        c_present = count_in_window(
            present.probe.times,
            present.reference.times,
            scheme.window_ps,
            scheme.window_offset_ps,
        )
        c_absent = count_in_window(
            absent.probe.times,
            absent.reference.times,
            scheme.window_ps,
            scheme.window_offset_ps,
        )

    flags: list[str] = []
    noise_db = (
        normalized_noise_power_db(
            scheme.noise_rate_hz, scheme.pair_rate_hz, scheme.probe_transmission
        )
        if scheme.probe_transmission > 0.0
        else math.nan
    )

    if c_absent == 0:
        flags.append("noise-floor-unresolved")
        snr = math.inf
        snr_db = math.inf
        err_db = None
    else:
        signal = c_present - c_absent
        snr = signal / c_absent
        if snr <= 0.0:
            flags.append("signal-below-noise")
            snr_db = -math.inf
            err_db = None
        else:
            snr_db = 10.0 * math.log10(snr)
            # Delta method on independent Poisson counts.
            var = c_present / c_absent**2 + (c_present / c_absent**2) ** 2 * c_absent
            err_db = 10.0 / math.log(10.0) * math.sqrt(var) / snr
    result = SnrResult(
        scheme=scheme.scheme,
        snr=snr,
        snr_db=snr_db,
        true_rate_hz=(c_present - c_absent) / duration_s,
        false_rate_hz=c_absent / duration_s,
        normalized_noise_db=noise_db,
        method="montecarlo",
        snr_db_err=err_db,
        flags=tuple(flags),
    )
    return result, present, absent


@dataclass(frozen=True)
class SaturationScan:
    """Accepted-vs-offered click rates for pulsed and uniform illumination."""

    offered_hz: np.ndarray
    accepted_pulsed_hz: np.ndarray
    accepted_cw_hz: np.ndarray
    dead_time_ns: float
    rep_rate_hz: float

    def _onset(self, accepted: np.ndarray) -> float:
        # Offered rate at which throughput drops to half (3 dB compression),
        # log-interpolated between scan points.
        ratio = accepted / self.offered_hz
        below = np.flatnonzero(ratio < 0.5)
        if below.size == 0:
            return math.nan
        i = int(below[0])
        if i == 0:
            return float(self.offered_hz[0])
        x0, x1 = math.log(self.offered_hz[i - 1]), math.log(self.offered_hz[i])
        y0, y1 = ratio[i - 1], ratio[i]
        return math.exp(x0 + (0.5 - y0) * (x1 - x0) / (y1 - y0))

    @property
    def onset_pulsed_hz(self) -> float:
        return self._onset(self.accepted_pulsed_hz)

    @property
    def onset_cw_hz(self) -> float:
        return self._onset(self.accepted_cw_hz)

    @property
    def expected_cw_onset_hz(self) -> float:
        """Analytic 3 dB point for Poisson arrivals: 1 / dead time."""
        return 1.0e9 / self.dead_time_ns if self.dead_time_ns > 0.0 else math.inf


def saturation_scan(
    detector,
    rep_rate_hz: float,
    offered_rates_hz,
    seed=None,
    pulse_sigma_ps: float | None = None,
    max_samples: int = 300_000,
) -> SaturationScan:
    """Measure detector throughput under pulsed vs uniform illumination.

    ``offered_rates_hz`` are photon rates already at the detector (after
    any efficiency).  Each point simulates enough time for at most
    ``max_samples`` arrivals, so the scan cost is rate independent.
    """
    offered = np.asarray(list(offered_rates_hz), dtype=float)
    if offered.size == 0 or np.any(offered <= 0.0):
        raise ValueError("offered rates must be positive")
    if rep_rate_hz <= 0.0:
        raise ValueError("repetition rate must be positive")
    if detector.dead_time_ns <= 0.0:
        raise ValueError("saturation scan needs a positive dead time")
    sigma = (
        detector.probe_jitter_sigma_ps if pulse_sigma_ps is None else float(pulse_sigma_ps)
    )

    rng = np.random.default_rng(seed)
    period_ps = PICOSECONDS_PER_SECOND / rep_rate_hz
    dead_ps = detector.dead_time_ns * 1.0e3

    accepted_pulsed = np.empty_like(offered)
    accepted_cw = np.empty_like(offered)
    for k, rate in enumerate(offered):
        duration_s = min(2.0, max_samples / rate)
        duration_ps = duration_s * PICOSECONDS_PER_SECOND
        n = rng.poisson(rate * duration_s)
        if n == 0:
            accepted_pulsed[k] = accepted_cw[k] = 0.0
            continue

        t_cw = np.sort(rng.uniform(0.0, duration_ps, n))
        accepted_cw[k] = np.count_nonzero(_dead_time_keep(t_cw, dead_ps)) / duration_s

        n_trials = max(1, int(duration_ps / period_ps))
        idx = rng.integers(0, n_trials, n)
        t_pulsed = np.sort(idx * period_ps + rng.normal(0.0, sigma, n))
        accepted_pulsed[k] = (
            np.count_nonzero(_dead_time_keep(t_pulsed, dead_ps)) / duration_s
        )

    return SaturationScan(
        offered_hz=offered,
        accepted_pulsed_hz=accepted_pulsed,
        accepted_cw_hz=accepted_cw,
        dead_time_ns=detector.dead_time_ns,
        rep_rate_hz=rep_rate_hz,
    )
