"""Aggregate run configuration and strict JSON config loading.

A `RunConfig` bundles everything needed to evaluate or simulate one
operating point: source spectrum, scheme operating point, detector
response, and the emission repetition rate.  `SceneSpec` adds the
parameters of a synthetic imaging target.

Config files are JSON with the following blocks, all optional, each
overriding defaults field by field::

    {
      "jsa":       {"diff_time_fwhm_ps": 0.1, "sum_time_fwhm_ps": 17.7,
                    "center_wavelength_nm": 1560.0},
      "rep_rate_hz": 76.0e6,
      "dispersion": {"dispersion_ps_nm_km": 18.0, "length_km": 5.0},
      "scheme":    {"scheme": "dnctd", "pair_rate_hz": 2.7e5, ...},
      "detector":  {"efficiency": 0.8, "jitter_fwhm_ps": 83.3, ...},
      "scene":     {"letters": "UOT", "width": 64, ...}
    }

The ``dispersion`` block is a convenience: it sets the probe GDD from a
fiber span at the source wavelength and the reference GDD to its exact
opposite, unless the scheme block sets GDD explicitly.  Unknown keys
anywhere raise `ConfigError` naming the offending dotted path; silent
typos in experiment configs are worse than hard failures.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .chrono import BiphotonSpec, gdd_from_dispersion
from .detection import DetectorModel, SchemeConfig

__all__ = ["ConfigError", "RunConfig", "SceneSpec", "load_config", "config_digest"]


class ConfigError(ValueError):
    """A config file failed validation; ``path`` is the dotted key path."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the synthetic letter scene used by the imaging mode."""

    letters: str = "UOT"
    width: int = 64
    height: int = 64
    depths_cm: tuple[float, ...] = (100.0, 102.0, 104.0)
    depth_tilt_cm_per_px: float = 0.02
    noise_db: float = 25.0
    dwell_s: float = 0.02

    def __post_init__(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError("scene must be at least 8 x 8 pixels")
        if not self.depths_cm:
            raise ValueError("at least one depth is required")
        if len(self.letters) > 0 and len(self.depths_cm) != len(self.letters):
            raise ValueError(
                f"need one depth per letter: {len(self.letters)} letters, "
                f"{len(self.depths_cm)} depths"
            )
        if self.dwell_s <= 0.0:
            raise ValueError("dwell time must be positive")


@dataclass(frozen=True)
class RunConfig:
    """One complete operating point of the instrument."""

    jsa: BiphotonSpec = field(default_factory=BiphotonSpec)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    detector: DetectorModel = field(default_factory=DetectorModel)
    rep_rate_hz: float = 76.0e6

    def __post_init__(self) -> None:
        if self.rep_rate_hz <= 0.0:
            raise ValueError(f"repetition rate must be positive, got {self.rep_rate_hz}")
        if self.scheme.pair_rate_hz > self.rep_rate_hz:
            raise ValueError(
                "pair rate exceeds the repetition rate; at most one pair per "
                "trial is modeled"
            )

    @property
    def pair_prob(self) -> float:
        """Pair emission probability per trial."""
        return self.scheme.pair_rate_hz / self.rep_rate_hz

    def build_state(self):
        return self.jsa.build()

    def to_dict(self) -> dict:
        return {
            "jsa": asdict(self.jsa),
            "scheme": asdict(self.scheme),
            "detector": asdict(self.detector),
            "rep_rate_hz": self.rep_rate_hz,
        }


def _default_gdd() -> float:
    # Standard telecom fiber span used as the default probe channel.
    return gdd_from_dispersion(18.0, 5.0, 1560.0)


def default_run_config() -> RunConfig:
    gdd = _default_gdd()
    return RunConfig(
        scheme=SchemeConfig(gdd_probe_ps2=gdd, gdd_reference_ps2=-gdd)
    )


def _coerce(value, target_type, path: str):
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported config value {value!r}")


def _apply_block(instance, block: dict, path: str, *, field_types: dict):
    if not isinstance(block, dict):
        raise ConfigError(path, f"expected an object, got {block!r}")
    updates = {}
    for key, value in block.items():
        if key not in field_types:
            known = ", ".join(sorted(field_types))
            raise ConfigError(f"{path}.{key}", f"unknown key (known keys: {known})")
        updates[key] = _coerce(value, field_types[key], f"{path}.{key}")
    try:
        return replace(instance, **updates)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


_JSA_FIELDS = {
    "diff_time_fwhm_ps": float,
    "sum_time_fwhm_ps": float,
    "center_wavelength_nm": float,
}
_SCHEME_FIELDS = {
    "scheme": str,
    "pair_rate_hz": float,
    "probe_transmission": float,
    "reference_transmission": float,
    "noise_rate_hz": float,
    "noise_mode": str,
    "window_ps": float,
    "window_offset_ps": float,
    "gdd_probe_ps2": float,
    "gdd_reference_ps2": float,
    "probe_delay_ps": float,
    "noise_delay_ps": float,
}
_DETECTOR_FIELDS = {
    "efficiency": float,
    "jitter_fwhm_ps": float,
    "probe_jitter_share": float,
    "dead_time_ns": float,
    "dark_rate_hz": float,
}
_DISPERSION_FIELDS = {"dispersion_ps_nm_km": float, "length_km": float}
_SCENE_FIELDS = {
    "letters": str,
    "width": int,
    "height": int,
    "depths_cm": list,
    "depth_tilt_cm_per_px": float,
    "noise_db": float,
    "dwell_s": float,
}


def _apply_scene(scene: SceneSpec, block: dict, path: str) -> SceneSpec:
    if not isinstance(block, dict):
        raise ConfigError(path, f"expected an object, got {block!r}")
    updates = {}
    for key, value in block.items():
        if key not in _SCENE_FIELDS:
            known = ", ".join(sorted(_SCENE_FIELDS))
            raise ConfigError(f"{path}.{key}", f"unknown key (known keys: {known})")
        if key == "depths_cm":
            if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError(f"{path}.{key}", f"expected a list of numbers, got {value!r}")
            updates[key] = tuple(float(v) for v in value)
        else:
            updates[key] = _coerce(value, _SCENE_FIELDS[key], f"{path}.{key}")
    try:
        return replace(scene, **updates)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def load_config(path) -> tuple[RunConfig, SceneSpec]:
    """Load and validate a JSON config file over the package defaults."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> tuple[RunConfig, SceneSpec]:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a JSON object")

    known = {"jsa", "scheme", "detector", "dispersion", "scene", "rep_rate_hz"}
    for key in raw:
        if key not in known:
            raise ConfigError(key, f"unknown key (known keys: {', '.join(sorted(known))})")

    base = default_run_config()
    jsa = _apply_block(base.jsa, raw.get("jsa", {}), "jsa", field_types=_JSA_FIELDS)

    scheme = base.scheme
    if "dispersion" in raw:
        disp = _apply_block(
            _Fiber(), raw["dispersion"], "dispersion", field_types=_DISPERSION_FIELDS
        )
        gdd = gdd_from_dispersion(
            disp.dispersion_ps_nm_km, disp.length_km, jsa.center_wavelength_nm
        )
        scheme = replace(scheme, gdd_probe_ps2=gdd, gdd_reference_ps2=-gdd)
    scheme_block = raw.get("scheme", {})
    if isinstance(scheme_block, dict) and scheme_block.get("scheme") in ("ctd", "nctd"):
        # Switching to an undispersed scheme drops the default channel GDD
        # unless the block pins it explicitly (which then fails validation).
        scheme_block = dict(scheme_block)
        scheme_block.setdefault("gdd_probe_ps2", 0.0)
        scheme_block.setdefault("gdd_reference_ps2", 0.0)
    scheme = _apply_block(scheme, scheme_block, "scheme", field_types=_SCHEME_FIELDS)

    detector = _apply_block(
        base.detector, raw.get("detector", {}), "detector", field_types=_DETECTOR_FIELDS
    )

    rep = raw.get("rep_rate_hz", base.rep_rate_hz)
    rep = _coerce(rep, float, "rep_rate_hz")

    scene = _apply_scene(SceneSpec(), raw.get("scene", {}), "scene")

    try:
        run = RunConfig(jsa=jsa, scheme=scheme, detector=detector, rep_rate_hz=rep)
    except ValueError as exc:
        raise ConfigError("<root>", str(exc)) from None
    return run, scene


@dataclass(frozen=True)
class _Fiber:
    dispersion_ps_nm_km: float = 18.0
    length_km: float = 5.0

    def __post_init__(self) -> None:
        if self.length_km < 0.0:
            raise ValueError("fiber length must be non-negative")


def config_digest(run: RunConfig, scene: SceneSpec | None = None) -> str:
    """Stable hex digest of the effective configuration, for provenance."""
    payload = run.to_dict()
    if scene is not None:
        payload["scene"] = asdict(scene)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
