"""Run configuration files: parsing, validation, and canonical echo.

Configs are JSON with unit-suffixed key names (``wavelength_nm``, ``l1_mm``,
``coil_calibration_mt_mm_per_a``) so a value can never be misread in the
wrong unit; parsing converts everything to SI immediately.  ``config_echo``
emits the canonical explicit form (ranges expanded, settings spelled out) and
``parse_run_config(config_echo(rc))`` reproduces ``rc`` exactly, which is what
lets every report embed a re-runnable copy of its configuration.

Unknown keys are rejected so typos fail loudly instead of silently falling
back to defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .beamline import BeamlineConfig, focusing_distance
from .errors import ConfigError
from .quantum import WitnessSettings, optimal_settings
from .synth import ScanPlan
from .wavepacket import PacketShape, WavePacketSpec

__all__ = [
    "RunConfig",
    "PRESETS",
    "load_run_config",
    "parse_run_config",
    "config_echo",
    "load_preset",
    "preset_text",
]

# Unit factors: config value * factor = SI value.
_NM = 1e-9
_MM = 1e-3
_KHZ = 1e3
_MT_MM = 1e-6  # mT*mm -> T*m

PRESETS = ("cg4b-10khz", "cg4b-100khz", "reseda")


@dataclass(frozen=True)
class RunConfig:
    """Validated top-level configuration for the CLI subcommands."""

    beamline: BeamlineConfig
    packet: WavePacketSpec | None = None
    plan: ScanPlan | None = None
    settings: WitnessSettings = None
    output_dir: str = "."

    def __post_init__(self) -> None:
        if self.settings is None:
            object.__setattr__(self, "settings", optimal_settings())


def _section(data: dict, key: str, required: bool) -> dict | None:
    if key not in data:
        if required:
            raise ConfigError(f"{key}: missing required section")
        return None
    value = data[key]
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected an object, got {type(value).__name__}")
    return value


def _check_keys(section: dict, path: str, allowed: set[str]) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field")


def _number(section: dict, path: str, key: str, default=None) -> float | None:
    if key not in section:
        if default is ...:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}.{key}: must be finite, got {value!r}")
    return float(value)


def _integer(section: dict, path: str, key: str, default=None) -> int | None:
    if key not in section:
        if default is ...:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    return value


def _value_list(section: dict, path: str, key: str, scale: float,
                default=None) -> tuple[float, ...] | None:
    """A list of numbers, or a {start, stop, step} range (inclusive ends)."""
    if key not in section:
        if default is ...:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    value = section[key]
    where = f"{path}.{key}"
    if isinstance(value, dict):
        _check_keys(value, where, {"start", "stop", "step"})
        start = _number(value, where, "start", ...)
        stop = _number(value, where, "stop", ...)
        step = _number(value, where, "step", ...)
        if step == 0.0:
            raise ConfigError(f"{where}.step: must be nonzero")
        count = (stop - start) / step
        if count < 0:
            raise ConfigError(f"{where}: step direction does not reach stop from start")
        n = round(count) + 1
        if not math.isclose(start + (n - 1) * step, stop, rel_tol=0, abs_tol=abs(step) * 1e-6):
            raise ConfigError(f"{where}: step does not evenly divide the range")
        return tuple((start + i * step) * scale for i in range(n))
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list or a start/stop/step object")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item):
            raise ConfigError(f"{where}[{i}]: expected a finite number, got {item!r}")
        out.append(float(item) * scale)
    return tuple(out)


_BEAMLINE_KEYS = {
    "wavelength_nm", "bandwidth_fraction", "f1_khz", "f2_khz", "l1_mm", "l2_mm",
    "coil_calibration_mt_mm_per_a", "guide_field_integral_mt_mm",
    "polarizer_efficiency", "contrast", "mean_level",
}


def _parse_beamline(section: dict) -> BeamlineConfig:
    path = "beamline"
    _check_keys(section, path, _BEAMLINE_KEYS)
    wavelength = _number(section, path, "wavelength_nm", ...) * _NM
    bandwidth = _number(section, path, "bandwidth_fraction", ...)
    f1 = _number(section, path, "f1_khz", ...) * _KHZ
    f2 = _number(section, path, "f2_khz", ...) * _KHZ
    l1 = _number(section, path, "l1_mm", ...) * _MM
    l2_raw = _number(section, path, "l2_mm", None)
    coil_cal = _number(section, path, "coil_calibration_mt_mm_per_a", ...) * _MT_MM
    guide_bl = _number(section, path, "guide_field_integral_mt_mm", 0.0) * _MT_MM
    kwargs = dict(
        wavelength=wavelength,
        bandwidth=bandwidth,
        f1=f1,
        f2=f2,
        l1=l1,
        coil_cal=coil_cal,
        guide_bl=guide_bl,
        polarizer_eff=_number(section, path, "polarizer_efficiency", 0.96),
        contrast=_number(section, path, "contrast", 1.0),
        mean_level=_number(section, path, "mean_level", 0.5),
    )
    if l2_raw is not None:
        return BeamlineConfig(l2=l2_raw * _MM, **kwargs)
    # No detector distance given: place the detector at the focusing point.
    probe = BeamlineConfig(l2=1.0, **kwargs)
    return replace(probe, l2=focusing_distance(probe))


_PACKET_KEYS = {"shape", "kappa", "n_samples", "half_span"}


def _parse_packet(section: dict, beamline: BeamlineConfig) -> WavePacketSpec:
    path = "packet"
    _check_keys(section, path, _PACKET_KEYS)
    shape = section.get("shape", "gaussian")
    if not isinstance(shape, str):
        raise ConfigError(f"{path}.shape: expected a string, got {shape!r}")
    try:
        shape = PacketShape(shape)
    except ValueError:
        choices = ", ".join(s.value for s in PacketShape)
        raise ConfigError(f"{path}.shape: must be one of {choices}, got {shape!r}") from None
    kwargs = dict(
        shape=shape,
        k0=beamline.k0,
        bandwidth=beamline.bandwidth,
        kappa=_number(section, path, "kappa", 1.0),
        n_samples=_integer(section, path, "n_samples", 4096),
    )
    half_span = _number(section, path, "half_span", None)
    if half_span is not None:
        kwargs["half_span"] = half_span
    return WavePacketSpec(**kwargs)


_PLAN_KEYS = {
    "currents_a", "offsets_mm", "detunings_rad_per_s", "time_channels_per_period",
    "counts_scale", "background_rate", "phase_offset_rad", "rng_seed",
}


def _parse_plan(section: dict) -> ScanPlan:
    path = "plan"
    _check_keys(section, path, _PLAN_KEYS)
    return ScanPlan(
        currents=_value_list(section, path, "currents_a", 1.0, ...),
        offsets=_value_list(section, path, "offsets_mm", _MM, (0.0,)),
        detunings=_value_list(section, path, "detunings_rad_per_s", 1.0, None),
        time_channels_per_period=_integer(section, path, "time_channels_per_period", 16),
        counts_scale=_number(section, path, "counts_scale", 8600.0),
        background_rate=_number(section, path, "background_rate", 0.0),
        phase_offset=_number(section, path, "phase_offset_rad", 0.0),
        rng_seed=_integer(section, path, "rng_seed", 0),
    )


_SETTINGS_KEYS = {"optimal", "alpha1_rad", "alpha2_rad", "gamma1_rad", "gamma2_rad"}


def _parse_settings(section: dict | None) -> WitnessSettings:
    if section is None:
        return optimal_settings()
    path = "settings"
    _check_keys(section, path, _SETTINGS_KEYS)
    use_optimal = section.get("optimal", False)
    if not isinstance(use_optimal, bool):
        raise ConfigError(f"{path}.optimal: expected a boolean, got {use_optimal!r}")
    if use_optimal:
        extras = set(section) - {"optimal", "alpha1_rad"}
        if extras:
            raise ConfigError(
                f"{path}: optimal settings take only alpha1_rad, not {sorted(extras)}"
            )
        return optimal_settings(_number(section, path, "alpha1_rad", 0.0))
    return WitnessSettings(
        alpha1=_number(section, path, "alpha1_rad", ...),
        alpha2=_number(section, path, "alpha2_rad", ...),
        gamma1=_number(section, path, "gamma1_rad", ...),
        gamma2=_number(section, path, "gamma2_rad", ...),
    )


_TOP_KEYS = {"beamline", "packet", "plan", "settings", "output_dir"}


def parse_run_config(data: dict) -> RunConfig:
    """Validate a parsed JSON object into a RunConfig (SI units inside)."""
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    _check_keys(data, "config", _TOP_KEYS)
    beamline = _parse_beamline(_section(data, "beamline", required=True))
    packet_section = _section(data, "packet", required=False)
    packet = None if packet_section is None else _parse_packet(packet_section, beamline)
    plan_section = _section(data, "plan", required=False)
    plan = None if plan_section is None else _parse_plan(plan_section)
    settings = _parse_settings(_section(data, "settings", required=False))
    output_dir = data.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError(f"output_dir: expected a string, got {output_dir!r}")
    return RunConfig(
        beamline=beamline, packet=packet, plan=plan, settings=settings,
        output_dir=output_dir,
    )


def load_run_config(path) -> RunConfig:
    """Parse and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return parse_run_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_echo(rc: RunConfig) -> dict:
    """Canonical JSON-ready form of a RunConfig; parse_run_config inverts it."""
    out: dict = {
        "beamline": {
            "wavelength_nm": rc.beamline.wavelength / _NM,
            "bandwidth_fraction": rc.beamline.bandwidth,
            "f1_khz": rc.beamline.f1 / _KHZ,
            "f2_khz": rc.beamline.f2 / _KHZ,
            "l1_mm": rc.beamline.l1 / _MM,
            "l2_mm": rc.beamline.l2 / _MM,
            "coil_calibration_mt_mm_per_a": rc.beamline.coil_cal / _MT_MM,
            "guide_field_integral_mt_mm": rc.beamline.guide_bl / _MT_MM,
            "polarizer_efficiency": rc.beamline.polarizer_eff,
            "contrast": rc.beamline.contrast,
            "mean_level": rc.beamline.mean_level,
        }
    }
    if rc.packet is not None:
        out["packet"] = {
            "shape": rc.packet.shape.value,
            "kappa": rc.packet.kappa,
            "n_samples": rc.packet.n_samples,
            "half_span": rc.packet.half_span,
        }
    if rc.plan is not None:
        plan: dict = {
            "currents_a": list(rc.plan.currents),
            "offsets_mm": [v / _MM for v in rc.plan.offsets],
            "time_channels_per_period": rc.plan.time_channels_per_period,
            "counts_scale": rc.plan.counts_scale,
            "background_rate": rc.plan.background_rate,
            "phase_offset_rad": rc.plan.phase_offset,
            "rng_seed": rc.plan.rng_seed,
        }
        if rc.plan.detunings is not None:
            plan["detunings_rad_per_s"] = list(rc.plan.detunings)
        out["plan"] = plan
    out["settings"] = {
        "alpha1_rad": rc.settings.alpha1,
        "alpha2_rad": rc.settings.alpha2,
        "gamma1_rad": rc.settings.gamma1,
        "gamma2_rad": rc.settings.gamma2,
    }
    out["output_dir"] = rc.output_dir
    return out


def preset_text(name: str) -> str:
    """Raw JSON text of a shipped preset config."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return (resources.files("miezesim") / "presets" / f"{name}.json").read_text()


def load_preset(name: str) -> RunConfig:
    """Parse and validate a shipped preset config by name."""
    try:
        return parse_run_config(json.loads(preset_text(name)))
    except ConfigError as exc:
        raise ConfigError(f"preset {name}: {exc}") from exc
