"""Gaussian chronocyclic states and quadratic spectral phase.

This module models photon wavepackets and photon pairs by the first two
moments of their joint time/frequency (chronocyclic) quasi-distribution.
Times are in ps, angular frequencies in rad/ps, measured relative to the
carrier, so means are typically zero until a delay is applied.

A single wavepacket is a Gaussian over (t, w); a pair is a Gaussian over
(t_p, t_r, w_p, w_r) where ``p`` is the probe photon (sent toward the
target) and ``r`` the reference photon (kept locally).  Group-delay
dispersion (GDD) acts as the shear t -> t + gdd * w, a linear symplectic
map, so Gaussians stay Gaussian and covariances transform by congruence.

Pair states built here are frequency anti-correlated: the sum-frequency
spread is set by the pump bandwidth and is much smaller than the
single-photon bandwidth.  That asymmetry is what lets opposite-sign GDD
on the two arms broaden each arm individually while leaving the arrival
time difference almost unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import FWHM_PER_SIGMA, SPEED_OF_LIGHT_NM_PER_PS

__all__ = [
    "Gaussian1D",
    "ChronocyclicGaussian1",
    "ChronocyclicGaussian2",
    "DispersionElement",
    "BiphotonSpec",
    "fwhm_to_sigma",
    "sigma_to_fwhm",
    "gdd_from_dispersion",
    "biphoton_from_principal_fwhm",
    "marginal",
    "apply_gdd_single",
    "apply_gdd_pair",
    "difference_time_density",
    "sum_time_density",
    "false_difference_density",
]

# Relative tolerance for symmetry / physicality checks on covariances.
_MATRIX_TOL = 1.0e-9


def fwhm_to_sigma(fwhm: float) -> float:
    """Convert a Gaussian full width at half maximum to a standard deviation."""
    if fwhm < 0.0:
        raise ValueError(f"FWHM must be non-negative, got {fwhm}")
    return fwhm / FWHM_PER_SIGMA


def sigma_to_fwhm(sigma: float) -> float:
    """Convert a Gaussian standard deviation to a full width at half maximum."""
    if sigma < 0.0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return sigma * FWHM_PER_SIGMA


def gdd_from_dispersion(
    dispersion_ps_nm_km: float, length_km: float, wavelength_nm: float
) -> float:
    """Group-delay dispersion (ps^2) of a fiber span.

    Parameters use the conventional fiber datasheet units: chromatic
    dispersion D in ps/(nm km), length in km, carrier wavelength in nm.
    Positive D (anomalous dispersion, standard telecom fiber at 1550 nm)
    gives negative GDD.
    """
    if length_km < 0.0:
        raise ValueError(f"fiber length must be non-negative, got {length_km}")
    if wavelength_nm <= 0.0:
        raise ValueError(f"wavelength must be positive, got {wavelength_nm}")
    return (
        -dispersion_ps_nm_km
        * length_km
        * wavelength_nm**2
        / (2.0 * math.pi * SPEED_OF_LIGHT_NM_PER_PS)
    )


@dataclass(frozen=True)
class Gaussian1D:
    """A one-dimensional Gaussian probability density.

    Used for arrival-time and arrival-time-difference densities; the units
    of ``mean`` and ``var`` are ps and ps^2 in that context.
    """

    mean: float
    var: float

    def __post_init__(self) -> None:
        if not self.var >= 0.0:
            raise ValueError(f"variance must be non-negative, got {self.var}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.var)

    @property
    def fwhm(self) -> float:
        return sigma_to_fwhm(self.sigma)

    def pdf(self, x: np.ndarray | float) -> np.ndarray | float:
        if self.var == 0.0:
            raise ValueError("zero-variance density has no finite pdf")
        z = (np.asarray(x, dtype=float) - self.mean) ** 2 / (2.0 * self.var)
        out = np.exp(-z) / math.sqrt(2.0 * math.pi * self.var)
        return float(out) if np.isscalar(x) else out

    def shifted(self, delta: float) -> "Gaussian1D":
        return Gaussian1D(self.mean + delta, self.var)

    def broadened(self, extra_var: float) -> "Gaussian1D":
        """Convolution with a zero-mean Gaussian of the given variance."""
        if extra_var < 0.0:
            raise ValueError(f"extra variance must be non-negative, got {extra_var}")
        return Gaussian1D(self.mean, self.var + extra_var)


def _check_cov(cov: np.ndarray, dim: int, where: str) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (dim, dim):
        raise ValueError(f"{where}: covariance must be {dim}x{dim}, got {cov.shape}")
    scale = float(np.max(np.abs(cov))) or 1.0
    if np.max(np.abs(cov - cov.T)) > _MATRIX_TOL * scale:
        raise ValueError(f"{where}: covariance must be symmetric")
    if np.min(np.linalg.eigvalsh(cov)) < -_MATRIX_TOL * scale:
        raise ValueError(f"{where}: covariance must be positive semidefinite")
    return cov


def _symplectic_form(n_modes: int) -> np.ndarray:
    """Symplectic form for ordering (t_1..t_n, w_1..w_n)."""
    j = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        j[k, n_modes + k] = 1.0
        j[n_modes + k, k] = -1.0
    return j


def _check_uncertainty(cov: np.ndarray, n_modes: int, where: str) -> None:
    # Heisenberg bound in covariance form: cov + (i/2) J must be PSD.
    # For one mode this reduces to det(cov) >= 1/4.
    herm = cov + 0.5j * _symplectic_form(n_modes)
    scale = float(np.max(np.abs(cov))) or 1.0
    if np.min(np.linalg.eigvalsh(herm)) < -1.0e-7 * scale:
        raise ValueError(f"{where}: covariance violates the uncertainty bound")


@dataclass(frozen=True)
class ChronocyclicGaussian1:
    """Gaussian chronocyclic state of a single wavepacket.

    ``mean`` is (t, w); ``cov`` is the 2x2 covariance in the same ordering.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != (2,):
            raise ValueError(f"mean must have shape (2,), got {mean.shape}")
        cov = _check_cov(self.cov, 2, "wavepacket")
        _check_uncertainty(cov, 1, "wavepacket")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def time_density(self) -> Gaussian1D:
        return Gaussian1D(float(self.mean[0]), float(self.cov[0, 0]))

    @property
    def frequency_density(self) -> Gaussian1D:
        return Gaussian1D(float(self.mean[1]), float(self.cov[1, 1]))

    @property
    def purity(self) -> float:
        """1 for a transform-limited (pure) wavepacket, < 1 when mixed."""
        return 1.0 / (2.0 * math.sqrt(float(np.linalg.det(self.cov))))

    def delayed(self, delay_ps: float) -> "ChronocyclicGaussian1":
        mean = self.mean.copy()
        mean[0] += delay_ps
        return ChronocyclicGaussian1(mean, self.cov)


@dataclass(frozen=True)
class ChronocyclicGaussian2:
    """Gaussian chronocyclic state of a photon pair.

    Coordinate ordering is (t_p, t_r, w_p, w_r): probe and reference
    arrival times, then probe and reference detunings from the carrier.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != (4,):
            raise ValueError(f"mean must have shape (4,), got {mean.shape}")
        cov = _check_cov(self.cov, 4, "pair state")
        # Reorder (t_p, t_r, w_p, w_r) -> (t_p, t_r | w_p, w_r) is already
        # the (times, freqs) layout required by the symplectic form.
        _check_uncertainty(cov, 2, "pair state")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def time_mean(self) -> np.ndarray:
        return self.mean[:2].copy()

    @property
    def time_cov(self) -> np.ndarray:
        return self.cov[:2, :2].copy()

    @property
    def purity(self) -> float:
        return 1.0 / (4.0 * math.sqrt(float(np.linalg.det(self.cov))))

    def is_pure(self, tol: float = 1.0e-6) -> bool:
        return abs(self.purity - 1.0) < tol

    def delayed(self, probe_delay_ps: float, reference_delay_ps: float = 0.0) -> "ChronocyclicGaussian2":
        mean = self.mean.copy()
        mean[0] += probe_delay_ps
        mean[1] += reference_delay_ps
        return ChronocyclicGaussian2(mean, self.cov)


@dataclass(frozen=True)
class DispersionElement:
    """A quadratic-spectral-phase element characterized by its GDD in ps^2."""

    gdd_ps2: float
    label: str = ""

    @classmethod
    def from_fiber(
        cls,
        dispersion_ps_nm_km: float,
        length_km: float,
        wavelength_nm: float,
        label: str = "",
    ) -> "DispersionElement":
        return cls(
            gdd_from_dispersion(dispersion_ps_nm_km, length_km, wavelength_nm), label
        )


def biphoton_from_principal_fwhm(
    diff_time_fwhm_ps: float, sum_time_fwhm_ps: float
) -> ChronocyclicGaussian2:
    """Build a pure, unchirped pair state from its two principal durations.

    The joint spectral amplitude of a Gaussian pair factorizes along the
    normalized sum/difference frequency axes.  The two inputs are the
    transform-limited FWHM durations conjugate to those two spectral
    principal axes:

    * ``diff_time_fwhm_ps``: duration set by the phase-matching bandwidth
      (broad difference-frequency axis).  Entanglement time scale.
    * ``sum_time_fwhm_ps``: duration set by the pump bandwidth (narrow
      sum-frequency axis).  Pump coherence time scale.

    The returned state satisfies, with s = fwhm_to_sigma(input):

        Var(t_p - t_r) = 4 s_diff^2     Var(w_p - w_r) = 1 / (4 s_diff^2)
        Var(t_p + t_r) = 4 s_sum^2      Var(w_p + w_r) = 1 / (4 s_sum^2)

    Each sum/difference pair saturates the uncertainty product, so the
    state is pure (det cov = 1/16).  With sum FWHM >> diff FWHM the pair
    is strongly frequency anti-correlated.
    """
    s_diff = fwhm_to_sigma(diff_time_fwhm_ps)
    s_sum = fwhm_to_sigma(sum_time_fwhm_ps)
    if s_diff <= 0.0 or s_sum <= 0.0:
        raise ValueError("principal FWHM durations must be positive")

    var_t_diff = 4.0 * s_diff**2
    var_t_sum = 4.0 * s_sum**2
    var_w_diff = 1.0 / var_t_diff
    var_w_sum = 1.0 / var_t_sum

    # Rotate the diagonal sum/difference covariances into (p, r) coordinates.
    var_t = 0.25 * (var_t_sum + var_t_diff)
    cov_t = 0.25 * (var_t_sum - var_t_diff)
    var_w = 0.25 * (var_w_sum + var_w_diff)
    cov_w = 0.25 * (var_w_sum - var_w_diff)

    cov = np.zeros((4, 4))
    cov[0, 0] = cov[1, 1] = var_t
    cov[0, 1] = cov[1, 0] = cov_t
    cov[2, 2] = cov[3, 3] = var_w
    cov[2, 3] = cov[3, 2] = cov_w
    return ChronocyclicGaussian2(np.zeros(4), cov)


@dataclass(frozen=True)
class BiphotonSpec:
    """Source parameters sufficient to build the emitted pair state."""

    diff_time_fwhm_ps: float = 0.1
    sum_time_fwhm_ps: float = 17.7
    center_wavelength_nm: float = 1560.0

    def __post_init__(self) -> None:
        if self.diff_time_fwhm_ps <= 0.0 or self.sum_time_fwhm_ps <= 0.0:
            raise ValueError("principal FWHM durations must be positive")
        if self.center_wavelength_nm <= 0.0:
            raise ValueError("center wavelength must be positive")

    def build(self) -> ChronocyclicGaussian2:
        return biphoton_from_principal_fwhm(
            self.diff_time_fwhm_ps, self.sum_time_fwhm_ps
        )


def marginal(state: ChronocyclicGaussian2, arm: str) -> ChronocyclicGaussian1:
    """Single-photon chronocyclic state of one arm, tracing out the other.

    ``arm`` is "probe" or "reference".  Marginals of an entangled pair are
    mixed: their purity drops as the correlations get stronger.
    """
    try:
        k = {"probe": 0, "reference": 1}[arm]
    except KeyError:
        raise ValueError(f"arm must be 'probe' or 'reference', got {arm!r}") from None
    idx = np.array([k, k + 2])
    return ChronocyclicGaussian1(state.mean[idx], state.cov[np.ix_(idx, idx)])


def _shear_matrix_single(gdd_ps2: float) -> np.ndarray:
    return np.array([[1.0, gdd_ps2], [0.0, 1.0]])


def apply_gdd_single(
    wavepacket: ChronocyclicGaussian1, gdd_ps2: float
) -> ChronocyclicGaussian1:
    """Propagate one wavepacket through GDD: the shear t -> t + gdd * w."""
    s = _shear_matrix_single(gdd_ps2)
    return ChronocyclicGaussian1(s @ wavepacket.mean, s @ wavepacket.cov @ s.T)


def apply_gdd_pair(
    state: ChronocyclicGaussian2, gdd_probe_ps2: float, gdd_reference_ps2: float
) -> ChronocyclicGaussian2:
    """Propagate each arm of a pair through its own GDD element.

    Both shears act jointly on the 4x4 covariance, so cross correlations
    between the arms are carried along; this is what produces non-local
    cancellation for opposite-sign GDD.
    """
    s = np.eye(4)
    s[0, 2] = gdd_probe_ps2
    s[1, 3] = gdd_reference_ps2
    return ChronocyclicGaussian2(s @ state.mean, s @ state.cov @ s.T)


def _projected_density(state: ChronocyclicGaussian2, weights: np.ndarray) -> Gaussian1D:
    mean = float(weights @ state.mean)
    var = float(weights @ state.cov @ weights)
    return Gaussian1D(mean, var)


def difference_time_density(state: ChronocyclicGaussian2) -> Gaussian1D:
    """Density of the arrival-time difference t_p - t_r for a joint pair."""
    return _projected_density(state, np.array([1.0, -1.0, 0.0, 0.0]))


def sum_time_density(state: ChronocyclicGaussian2) -> Gaussian1D:
    """Density of the arrival-time sum t_p + t_r for a joint pair."""
    return _projected_density(state, np.array([1.0, 1.0, 0.0, 0.0]))


def false_difference_density(
    probe_like: ChronocyclicGaussian1 | Gaussian1D,
    reference: ChronocyclicGaussian1 | Gaussian1D,
) -> Gaussian1D:
    """Arrival-time-difference density for two independent wavepackets.

    Models accidental coincidences between an uncorrelated photon on the
    probe detector (for example background light) and a reference photon:
    the variances add instead of cancelling.
    """
    a = probe_like.time_density if isinstance(probe_like, ChronocyclicGaussian1) else probe_like
    b = reference.time_density if isinstance(reference, ChronocyclicGaussian1) else reference
    return Gaussian1D(a.mean - b.mean, a.var + b.var)
