"""qlidar: entangled-photon LiDAR with non-local dispersion compensation.

Desk-scale simulator and analysis toolkit for coincidence-gated target
detection with time-frequency-entangled photon pairs.  The package
models the joint chronocyclic state of a pair source, per-arm group
delay dispersion, detector response, and event-level photon counting,
and compares three schemes (classical intensity, plain coincidence
gating, and dispersion-compensated coincidence gating) on signal-to-
noise, ranging, and imaging tasks.
"""

from .chrono import (
    BiphotonSpec,
    ChronocyclicGaussian1,
    ChronocyclicGaussian2,
    DispersionElement,
    Gaussian1D,
    apply_gdd_pair,
    apply_gdd_single,
    biphoton_from_principal_fwhm,
    difference_time_density,
    false_difference_density,
    fwhm_to_sigma,
    gdd_from_dispersion,
    marginal,
    sigma_to_fwhm,
    sum_time_density,
)
from .config import ConfigError, RunConfig, SceneSpec, default_run_config, load_config
from .detection import (
    DetectorModel,
    SchemeConfig,
    SnrResult,
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
from .fftprop import (
    GridResolutionError,
    numeric_propagate,
    numeric_propagate_single,
)
from .lidar import (
    ImageCube,
    Scene,
    classification_accuracy,
    estimate_depth,
    make_letter_scene,
    scan_scene,
)
from .montecarlo import (
    SaturationScan,
    SimulatedRun,
    SourceModel,
    TagStream,
    apply_dead_time,
    nonparalyzable_throughput,
    run_snr_experiment,
    saturation_scan,
    simulate_run,
)
from .tagcount import (
    Histogram,
    accidental_estimate,
    coincidence_histogram,
    count_in_window,
    estimate_peak_fwhm,
    read_tags,
    write_tags,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # chrono
    "BiphotonSpec",
    "ChronocyclicGaussian1",
    "ChronocyclicGaussian2",
    "DispersionElement",
    "Gaussian1D",
    "apply_gdd_pair",
    "apply_gdd_single",
    "biphoton_from_principal_fwhm",
    "difference_time_density",
    "false_difference_density",
    "fwhm_to_sigma",
    "gdd_from_dispersion",
    "marginal",
    "sigma_to_fwhm",
    "sum_time_density",
    # config
    "ConfigError",
    "RunConfig",
    "SceneSpec",
    "default_run_config",
    "load_config",
    # detection
    "DetectorModel",
    "SchemeConfig",
    "SnrResult",
    "convolve_jitter",
    "improvement_db",
    "normalized_noise_power_db",
    "scheme_densities",
    "scheme_snr",
    "scheme_variants",
    "snr_ctd",
    "snr_nctd",
    "window_capture",
    # fftprop
    "GridResolutionError",
    "numeric_propagate",
    "numeric_propagate_single",
    # lidar
    "ImageCube",
    "Scene",
    "classification_accuracy",
    "estimate_depth",
    "make_letter_scene",
    "scan_scene",
    # montecarlo
    "SaturationScan",
    "SimulatedRun",
    "SourceModel",
    "TagStream",
    "apply_dead_time",
    "nonparalyzable_throughput",
    "run_snr_experiment",
    "saturation_scan",
    "simulate_run",
    # tagcount
    "Histogram",
    "accidental_estimate",
    "coincidence_histogram",
    "count_in_window",
    "estimate_peak_fwhm",
    "read_tags",
    "write_tags",
]
