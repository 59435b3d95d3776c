"""Synthetic detector counts for spin-phase-current x detector-offset scans.

The signal model per scan point and time channel is

    mu_i = background + (N0 / 2) * (1 + C * cos(alpha + gamma + w_m t_i + phi))

with ``N0`` the expected maximum-plus-minimum counts of the modulation,
``alpha`` the spin phase set by the coil current, ``gamma`` the energy phase
set by the detector offset (or, in detuning scans, the time-dependent phase
``-2 dw t_i``), and ``phi`` a global phase absorbing the arbitrary time-channel
origin.  Counts are Poisson draws around ``mu_i``.

Reproducibility: every scan point gets its own counter-based RNG stream
(Philox keyed by the plan seed, counter offset by the point index), so results
are bit-identical for a fixed seed no matter how points are batched or
parallelized.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .beamline import BeamlineConfig, energy_phase, mieze_frequency, spin_phase
from .errors import ConfigError
from .wavepacket import WavePacketSpec, contrast_envelope

__all__ = [
    "ScanPlan",
    "CountsRecord",
    "CountsTable",
    "INTENSITY_MODELS",
    "simulate_scan",
    "expected_channel_means",
    "normalize",
    "write_counts_csv",
    "read_counts_csv",
]

INTENSITY_MODELS = ("ideal", "wavepacket")

_MAX_SEED = 2**64


def _finite_tuple(values, name: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a sequence of numbers") from exc
    if not out:
        raise ConfigError(f"{name} must not be empty")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class ScanPlan:
    """Grid of scan points plus counting statistics and seeding.

    ``offsets`` are detector translations in meters.  For frequency-detuning
    scans supply ``detunings`` (rad/s) instead; the offsets are then ignored.
    ``counts_scale`` is N0, the expected max+min counts per point;
    ``background_rate`` is a flat per-channel mean added on top.
    """

    currents: tuple[float, ...]
    offsets: tuple[float, ...] = (0.0,)
    detunings: tuple[float, ...] | None = None
    time_channels_per_period: int = 16
    counts_scale: float = 8600.0
    background_rate: float = 0.0
    phase_offset: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "currents", _finite_tuple(self.currents, "currents"))
        object.__setattr__(self, "offsets", _finite_tuple(self.offsets, "offsets"))
        if self.detunings is not None:
            object.__setattr__(self, "detunings", _finite_tuple(self.detunings, "detunings"))
        n = self.time_channels_per_period
        if int(n) != n or n < 4:
            raise ConfigError(f"time_channels_per_period must be an integer >= 4, got {n!r}")
        object.__setattr__(self, "time_channels_per_period", int(n))
        if not (self.counts_scale > 0.0 and math.isfinite(self.counts_scale)):
            raise ConfigError(f"counts_scale must be positive, got {self.counts_scale!r}")
        if not (self.background_rate >= 0.0 and math.isfinite(self.background_rate)):
            raise ConfigError(
                f"background_rate must be non-negative, got {self.background_rate!r}"
            )
        if not math.isfinite(self.phase_offset):
            raise ConfigError(f"phase_offset must be finite, got {self.phase_offset!r}")
        seed = self.rng_seed
        if int(seed) != seed or not (0 <= seed < _MAX_SEED):
            raise ConfigError(f"rng_seed must be a 64-bit unsigned integer, got {seed!r}")
        object.__setattr__(self, "rng_seed", int(seed))

    @property
    def scan_kind(self) -> str:
        return "detuning" if self.detunings is not None else "offset"

    @property
    def coords(self) -> tuple[float, ...]:
        """Second scan axis: detunings when present, detector offsets otherwise."""
        return self.detunings if self.detunings is not None else self.offsets

    @property
    def n_points(self) -> int:
        return len(self.currents) * len(self.coords)


@dataclass(frozen=True)
class CountsRecord:
    """One scan point: coil current, second coordinate, per-channel counts.

    ``coord`` is the detector offset in meters for offset scans and the
    detuning in rad/s for detuning scans.
    """

    current: float
    coord: float
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts):
            raise ConfigError("counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)


def _channel_times(cfg: BeamlineConfig, plan: ScanPlan) -> np.ndarray:
    period = 2.0 * math.pi / mieze_frequency(cfg)
    n = plan.time_channels_per_period
    return np.arange(n) * (period / n)


def _point_means(cfg: BeamlineConfig, plan: ScanPlan, current: float, coord: float,
                 contrast: float) -> np.ndarray:
    omega_m = mieze_frequency(cfg)
    times = _channel_times(cfg, plan)
    phase = spin_phase(cfg, current) + omega_m * times + plan.phase_offset
    if plan.scan_kind == "detuning":
        phase = phase - 2.0 * coord * times
    else:
        phase = phase + energy_phase(cfg, coord)
    return plan.background_rate + 0.5 * plan.counts_scale * (1.0 + contrast * np.cos(phase))


def _effective_contrasts(cfg: BeamlineConfig, plan: ScanPlan, intensity_model: str,
                         packet_spec: WavePacketSpec | None) -> dict[float, float]:
    if intensity_model not in INTENSITY_MODELS:
        raise ConfigError(
            f"intensity_model must be one of {INTENSITY_MODELS}, got {intensity_model!r}"
        )
    if intensity_model == "ideal":
        return {coord: cfg.contrast for coord in plan.coords}
    if packet_spec is None:
        raise ConfigError("wavepacket intensity model requires a packet spec")
    if plan.scan_kind == "detuning":
        offsets = [0.0]
        envelope = dict(contrast_envelope(cfg, packet_spec, offsets))
        return {coord: cfg.contrast * envelope[0.0] for coord in plan.coords}
    unique = list(dict.fromkeys(plan.offsets))
    envelope = dict(contrast_envelope(cfg, packet_spec, unique))
    return {coord: cfg.contrast * envelope[coord] for coord in plan.offsets}


def expected_channel_means(cfg: BeamlineConfig, plan: ScanPlan, current: float,
                           coord: float, intensity_model: str = "ideal",
                           packet_spec: WavePacketSpec | None = None) -> np.ndarray:
    """Model channel means mu_i for one scan point (no sampling)."""
    contrasts = _effective_contrasts(cfg, plan, intensity_model, packet_spec)
    if coord not in contrasts:
        raise ConfigError(f"scan coordinate {coord!r} is not part of the plan")
    return _point_means(cfg, plan, current, coord, contrasts[coord])


def _point_rng(seed: int, point_index: int) -> np.random.Generator:
    # Counter-partitioned streams: each point owns a disjoint 2^128 block.
    bitgen = np.random.Philox(key=seed, counter=point_index * 2**128)
    return np.random.Generator(bitgen)


def simulate_scan(cfg: BeamlineConfig, plan: ScanPlan, intensity_model: str = "ideal",
                  packet_spec: WavePacketSpec | None = None) -> list[CountsRecord]:
    """Poisson-sampled counts for every (current, coordinate) point of the plan.

    Deterministic for a fixed ``plan.rng_seed``; iteration order is currents
    outer, coordinates inner, and each point's draws depend only on its grid
    index.
    """
    contrasts = _effective_contrasts(cfg, plan, intensity_model, packet_spec)
    records: list[CountsRecord] = []
    point_index = 0
    for current in plan.currents:
        for coord in plan.coords:
            means = _point_means(cfg, plan, current, coord, contrasts[coord])
            rng = _point_rng(plan.rng_seed, point_index)
            counts = rng.poisson(means)
            records.append(
                CountsRecord(
                    current=current,
                    coord=coord,
                    counts=tuple(int(c) for c in counts),
                )
            )
            point_index += 1
    return records


def normalize(record: CountsRecord, n0: float) -> np.ndarray:
    """Per-channel relative intensities counts / N0."""
    if not (n0 > 0.0 and math.isfinite(n0)):
        raise ValueError(f"N0 must be positive, got {n0!r}")
    return np.asarray(record.counts, dtype=float) / n0


_COORD_COLUMNS = {"offset": "delta_mm", "detuning": "detuning_rad_per_s"}
# CSV stores detector offsets in mm (matching beamline bookkeeping); detunings in rad/s.
_COORD_SCALE = {"offset": 1e3, "detuning": 1.0}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_counts_csv(path, records: list[CountsRecord], plan: ScanPlan,
                     metadata: dict | None = None) -> Path:
    """Write the counts table and its JSON metadata sidecar.

    Returns the sidecar path (``<stem>.meta.json`` next to the CSV).  Extra
    ``metadata`` entries (config echo, model name, versions) are merged into
    the sidecar.
    """
    path = Path(path)
    kind = plan.scan_kind
    scale = _COORD_SCALE[kind]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["current_A", _COORD_COLUMNS[kind], "channel", "counts"])
        for rec in records:
            for channel, count in enumerate(rec.counts):
                writer.writerow([_fmt(rec.current), _fmt(rec.coord * scale), channel, count])
    sidecar = path.with_suffix(".meta.json")
    payload = {
        "format_version": 1,
        "scan_kind": kind,
        "plan": {
            "currents": list(plan.currents),
            "offsets": list(plan.offsets),
            "detunings": None if plan.detunings is None else list(plan.detunings),
            "time_channels_per_period": plan.time_channels_per_period,
            "counts_scale": plan.counts_scale,
            "background_rate": plan.background_rate,
            "phase_offset": plan.phase_offset,
            "rng_seed": plan.rng_seed,
        },
    }
    payload.update(metadata or {})
    with sidecar.open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


@dataclass(frozen=True)
class CountsTable:
    """Counts records plus scan kind and any metadata read back from disk."""

    records: tuple[CountsRecord, ...]
    scan_kind: str
    metadata: dict | None = None


def read_counts_csv(path) -> CountsTable:
    """Read a counts CSV (plus sidecar metadata when present)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty counts file")
    header = rows[0]
    if len(header) != 4 or header[0] != "current_A" or header[2:] != ["channel", "counts"]:
        raise ConfigError(f"{path}: unrecognized counts header {header!r}")
    kinds = {v: k for k, v in _COORD_COLUMNS.items()}
    if header[1] not in kinds:
        raise ConfigError(f"{path}: unrecognized coordinate column {header[1]!r}")
    kind = kinds[header[1]]
    scale = _COORD_SCALE[kind]

    grouped: dict[tuple[float, float], list[tuple[int, int]]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ConfigError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
        try:
            current = float(row[0])
            coord = float(row[1]) / scale
            channel = int(row[2])
            count = int(row[3])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        grouped.setdefault((current, coord), []).append((channel, count))
    if not grouped:
        raise ConfigError(f"{path}: no data rows")

    records = []
    for (current, coord), entries in grouped.items():
        channels = [c for c, _ in entries]
        if channels != list(range(len(entries))):
            raise ConfigError(
                f"{path}: point ({current}, {coord}) has non-consecutive channels"
            )
        records.append(
            CountsRecord(current=current, coord=coord,
                         counts=tuple(count for _, count in entries))
        )
    widths = {len(r.counts) for r in records}
    if len(widths) != 1:
        raise ConfigError(f"{path}: inconsistent channel counts across points: {sorted(widths)}")

    sidecar = path.with_suffix(".meta.json")
    metadata = None
    if sidecar.exists():
        with sidecar.open() as fh:
            metadata = json.load(fh)
    return CountsTable(records=tuple(records), scan_kind=kind, metadata=metadata)
