"""Coincidence counting and time-tag file interchange.

Inputs are per-detector arrays of arrival times in ps, sorted ascending.
All pairing uses the arrival-time difference dt = t_probe - t_reference
and half-open intervals [lo, hi), evaluated on the exactly computed
float64 difference so results are reproducible bit for bit against a
naive all-pairs reference.

Candidate pairs are located with binary search on a slightly padded
interval and then filtered on the exact difference; the padding only
protects against rounding in the searchsorted bounds, never changes
which pairs are accepted.  Work proceeds in bounded chunks so memory
stays proportional to the chunk size, not to the total pair count.

The binary tag format is little-endian: magic ``QTAG``, u32 version (1),
u64 record count, then 16-byte records of u64 timestamp in integer ps,
u32 channel (0 probe, 1 reference), u32 reserved zero, sorted by
timestamp.  A CSV form with header ``timestamp_ps,channel`` is provided
for interoperability and keeps sub-ps precision.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Histogram",
    "coincidence_histogram",
    "count_in_window",
    "accidental_estimate",
    "estimate_peak_fwhm",
    "write_tags",
    "read_tags",
    "write_tag_file",
    "read_tag_file",
    "write_tag_csv",
    "read_tag_csv",
    "TagFileError",
]

_MAGIC = b"QTAG"
_VERSION = 1
_RECORD = struct.Struct("<QII")
_CSV_HEADER = "timestamp_ps,channel"
_CHANNEL_PROBE = 0
_CHANNEL_REFERENCE = 1

# Pairs materialized per chunk; bounds peak memory at ~100 MB.
_CHUNK_PAIRS = 4_000_000


class TagFileError(ValueError):
    """Raised when a tag file is malformed."""


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin histogram of arrival-time differences.

    Bin ``i`` covers [lo_ps + i * bin_width_ps, lo_ps + (i+1) * bin_width_ps).
    """

    bin_width_ps: float
    lo_ps: float
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a non-empty 1-D array")
        if self.bin_width_ps <= 0.0:
            raise ValueError(f"bin width must be positive, got {self.bin_width_ps}")
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def edges(self) -> np.ndarray:
        return self.lo_ps + self.bin_width_ps * np.arange(self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.lo_ps + self.bin_width_ps * (np.arange(self.n_bins) + 0.5)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def window_sum(self, window_ps: float, offset_ps: float = 0.0) -> int:
        """Counts in bins whose centers fall inside the window (bin resolution)."""
        centers = self.centers
        mask = (centers >= offset_ps - 0.5 * window_ps) & (
            centers < offset_ps + 0.5 * window_ps
        )
        return int(self.counts[mask].sum())


def _require_sorted(times: np.ndarray, name: str) -> np.ndarray:
    times = np.ascontiguousarray(times, dtype=np.float64)
    if times.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array of times")
    if times.size > 1 and np.any(np.diff(times) < 0.0):
        k = int(np.argmax(np.diff(times) < 0.0))
        raise ValueError(f"{name} must be sorted ascending (violation at index {k + 1})")
    return times


def _iter_pair_deltas(probe, reference, lo_ps, hi_ps):
    """Yield exact dt = probe - reference arrays for pairs with dt in [lo, hi)."""
    if reference.size == 0 or probe.size == 0:
        return
    # Pad the searchsorted bounds by a few ulps of the largest magnitude so
    # rounding in (probe - hi) can never drop a boundary pair; acceptance is
    # decided on the exact difference below.
    big = max(abs(float(probe[0])), abs(float(probe[-1])), abs(hi_ps), abs(lo_ps), 1.0)
    pad = 8.0 * np.spacing(big)
    starts = np.searchsorted(reference, probe - hi_ps - pad, side="right")
    stops = np.searchsorted(reference, probe - lo_ps + pad, side="right")
    counts = stops - starts

    cum = np.cumsum(counts)
    total = int(cum[-1])
    if total == 0:
        return
    n_chunks = (total + _CHUNK_PAIRS - 1) // _CHUNK_PAIRS
    cuts = np.searchsorted(cum, np.arange(1, n_chunks) * _CHUNK_PAIRS) + 1
    bounds = np.concatenate(([0], cuts, [probe.size]))
    for a, b in zip(bounds[:-1], bounds[1:]):
        a, b = int(a), int(b)
        if a >= b:
            continue
        c = counts[a:b]
        tot = int(c.sum())
        if tot == 0:
            continue
        # Expand the per-probe candidate ranges into flat index pairs.
        offsets = np.repeat(np.cumsum(c) - c, c)
        ridx = np.repeat(starts[a:b], c) + (np.arange(tot) - offsets)
        dt = np.repeat(probe[a:b], c) - reference[ridx]
        yield dt[(dt >= lo_ps) & (dt < hi_ps)]


def coincidence_histogram(
    probe_times: np.ndarray,
    reference_times: np.ndarray,
    bin_width_ps: float = 1.0,
    span_ps: float = 5000.0,
    center_ps: float = 0.0,
) -> Histogram:
    """All-pairs histogram of t_probe - t_reference over [center - span, center + span).

    Every pair within the range contributes, so expected counts stay
    linear in the rate product and window sums match `count_in_window`
    exactly for bin-aligned windows.
    """
    probe = _require_sorted(probe_times, "probe_times")
    reference = _require_sorted(reference_times, "reference_times")
    if bin_width_ps <= 0.0:
        raise ValueError(f"bin width must be positive, got {bin_width_ps}")
    if span_ps <= 0.0:
        raise ValueError(f"span must be positive, got {span_ps}")
    n_bins = int(round(2.0 * span_ps / bin_width_ps))
    if n_bins < 1 or abs(n_bins * bin_width_ps - 2.0 * span_ps) > 1.0e-9 * span_ps:
        raise ValueError(
            f"2 * span ({2 * span_ps} ps) must be an integer number of bins "
            f"of width {bin_width_ps} ps"
        )
    lo = center_ps - span_ps
    hi = center_ps + span_ps

    counts = np.zeros(n_bins, dtype=np.int64)
    for dt in _iter_pair_deltas(probe, reference, lo, hi):
        idx = ((dt - lo) / bin_width_ps).astype(np.int64)
        np.clip(idx, 0, n_bins - 1, out=idx)
        counts += np.bincount(idx, minlength=n_bins)
    return Histogram(bin_width_ps=bin_width_ps, lo_ps=lo, counts=counts)


def count_in_window(
    probe_times: np.ndarray,
    reference_times: np.ndarray,
    window_ps: float,
    offset_ps: float = 0.0,
) -> int:
    """Number of pairs with dt in [offset - window/2, offset + window/2)."""
    probe = _require_sorted(probe_times, "probe_times")
    reference = _require_sorted(reference_times, "reference_times")
    if window_ps <= 0.0:
        raise ValueError(f"window must be positive, got {window_ps}")
    lo = offset_ps - 0.5 * window_ps
    hi = offset_ps + 0.5 * window_ps
    return sum(int(dt.size) for dt in _iter_pair_deltas(probe, reference, lo, hi))


def accidental_estimate(
    probe_times: np.ndarray,
    reference_times: np.ndarray,
    window_ps: float,
    offsets_ps,
) -> float:
    """Mean windowed count over displaced windows, estimating the accidental level.

    Callers choose offsets away from the true-coincidence peak; for pulsed
    sources they should also avoid multiples of the trial period.
    """
    offsets = np.atleast_1d(np.asarray(offsets_ps, dtype=float))
    if offsets.size == 0:
        raise ValueError("at least one offset is required")
    total = 0
    for off in offsets:
        total += count_in_window(probe_times, reference_times, window_ps, float(off))
    return total / offsets.size


def estimate_peak_fwhm(hist: Histogram, min_significance: float = 5.0) -> float:
    """FWHM of the dominant histogram peak via half-maximum crossings.

    The background is taken as the median bin count; returns NaN when the
    peak does not rise ``min_significance`` standard deviations above it.
    Crossings are linearly interpolated on each flank.
    """
    counts = hist.counts.astype(float)
    background = float(np.median(counts))
    peak_idx = int(np.argmax(counts))
    peak = counts[peak_idx] - background
    if peak < min_significance * np.sqrt(background + 1.0):
        return float("nan")
    half = background + 0.5 * peak
    centers = hist.centers

    left = peak_idx
    while left > 0 and counts[left] > half:
        left -= 1
    right = peak_idx
    while right < counts.size - 1 and counts[right] > half:
        right += 1
    if counts[left] > half or counts[right] > half:
        return float("nan")

    def _cross(i_low: int, i_high: int) -> float:
        c0, c1 = counts[i_low], counts[i_high]
        if c1 == c0:
            return float(centers[i_low])
        frac = (half - c0) / (c1 - c0)
        return float(centers[i_low] + frac * (centers[i_high] - centers[i_low]))

    return _cross(right, right - 1) - _cross(left, left + 1)


def _merge_channels(probe_times: np.ndarray, reference_times: np.ndarray):
    probe = _require_sorted(probe_times, "probe_times")
    reference = _require_sorted(reference_times, "reference_times")
    times = np.concatenate([probe, reference])
    channels = np.concatenate(
        [
            np.full(probe.size, _CHANNEL_PROBE, dtype=np.uint32),
            np.full(reference.size, _CHANNEL_REFERENCE, dtype=np.uint32),
        ]
    )
    order = np.argsort(times, kind="stable")
    return times[order], channels[order]


def write_tag_file(path, probe_times: np.ndarray, reference_times: np.ndarray) -> None:
    """Write both channels to the binary tag format (1 ps quantization)."""
    times, channels = _merge_channels(probe_times, reference_times)
    if times.size and float(times[0]) < -0.5:
        raise ValueError("binary tag format stores unsigned ps; shift the time origin")
    stamps = np.rint(times).astype(np.uint64)
    records = np.zeros(
        times.size,
        dtype=np.dtype([("t", "<u8"), ("ch", "<u4"), ("rsv", "<u4")]),
    )
    records["t"] = stamps
    records["ch"] = channels
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, times.size))
        fh.write(records.tobytes())


def read_tag_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Read the binary tag format; returns (probe_times, reference_times) in ps."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise TagFileError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != _MAGIC:
        raise TagFileError(
            f"{path}: bad magic {raw[:4]!r} at byte 0, expected {_MAGIC!r}"
        )
    version, count = struct.unpack_from("<IQ", raw, 4)
    if version != _VERSION:
        raise TagFileError(f"{path}: unsupported version {version} at byte 4")
    expected = 16 + 16 * count
    if len(raw) != expected:
        raise TagFileError(
            f"{path}: size {len(raw)} does not match {count} records "
            f"(expected {expected} bytes)"
        )
    records = np.frombuffer(
        raw,
        dtype=np.dtype([("t", "<u8"), ("ch", "<u4"), ("rsv", "<u4")]),
        offset=16,
    )
    times = records["t"].astype(np.float64)
    if np.any(np.diff(times) < 0.0):
        k = int(np.argmax(np.diff(times) < 0.0))
        raise TagFileError(
            f"{path}: timestamps not ascending at record {k + 1} "
            f"(byte {16 + 16 * (k + 1)})"
        )
    channels = records["ch"]
    bad = ~np.isin(channels, (_CHANNEL_PROBE, _CHANNEL_REFERENCE))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise TagFileError(
            f"{path}: unknown channel {int(channels[k])} at record {k} "
            f"(byte {16 + 16 * k + 8})"
        )
    return times[channels == _CHANNEL_PROBE], times[channels == _CHANNEL_REFERENCE]


def write_tag_csv(path, probe_times: np.ndarray, reference_times: np.ndarray) -> None:
    """Write both channels as CSV with sub-ps timestamps."""
    times, channels = _merge_channels(probe_times, reference_times)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_CSV_HEADER + "\n")
        for t, ch in zip(times, channels):
            fh.write(f"{t:.3f},{int(ch)}\n")


def read_tag_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read the CSV tag format; returns (probe_times, reference_times) in ps."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != _CSV_HEADER:
            raise TagFileError(
                f"{path}: bad header {header!r}, expected {_CSV_HEADER!r}"
            )
        body = fh.read()
    if not body.strip():
        return np.empty(0), np.empty(0)
    data = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.float64, ndmin=2)
    if data.shape[1] != 2:
        raise TagFileError(f"{path}: expected two columns, got {data.shape[1]}")
    times, channels = data[:, 0], data[:, 1].astype(np.int64)
    if np.any(np.diff(times) < 0.0):
        k = int(np.argmax(np.diff(times) < 0.0))
        raise TagFileError(f"{path}: timestamps not ascending at record {k + 1}")
    bad = ~np.isin(channels, (_CHANNEL_PROBE, _CHANNEL_REFERENCE))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise TagFileError(f"{path}: unknown channel {int(channels[k])} at record {k}")
    return times[channels == _CHANNEL_PROBE], times[channels == _CHANNEL_REFERENCE]


def write_tags(path, probe_times: np.ndarray, reference_times: np.ndarray) -> None:
    """Write tags, choosing the format from the file extension (.csv or binary)."""
    if str(path).lower().endswith(".csv"):
        write_tag_csv(path, probe_times, reference_times)
    else:
        write_tag_file(path, probe_times, reference_times)


def read_tags(path) -> tuple[np.ndarray, np.ndarray]:
    """Read tags, choosing the format from the file extension (.csv or binary)."""
    if str(path).lower().endswith(".csv"):
        return read_tag_csv(path)
    return read_tag_file(path)
