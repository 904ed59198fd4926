"""Calibration of the pressure-to-gradient model from a synthetic training session.

Pipeline: bellows trace -> field-map time series -> z-gradient per frame ->
per-voxel OLS of gradient against pressure -> ROI means per target slice.
Field-map volumes are arrays of shape ``(n_sagittal, nz, nx)``; ``z`` is axis 1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .mgre import ComplexImage2D

__all__ = [
    "SAMPLE_RATE_HZ",
    "PressureTrace",
    "FieldMapFrame",
    "RegressionMaps",
    "ShimPlanEntry",
    "ShimPlan",
    "DegenerateDesignError",
    "respiration_pressure",
    "synth_pressure_trace",
    "synth_fieldmap_series",
    "dual_echo_fieldmap",
    "zgradient",
    "regress_gz_vs_pressure",
    "associate_timestamps",
    "build_shim_plan",
    "axial_rois",
    "ols_standard_errors",
]

SAMPLE_RATE_HZ = 50.0
Z_AXIS = -2


class DegenerateDesignError(ValueError):
    """The pressure regressor has no variance."""


@dataclass(frozen=True)
class PressureTrace:
    """Bellows pressure sampled on a fixed 50 Hz grid, normalized to [0, 1]."""

    samples: np.ndarray
    start_time_s: float = 0.0
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).ravel()
        if samples.size == 0:
            raise ValueError("empty pressure trace")
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise ValueError("pressure traces are sampled at 50 Hz")
        if samples.min() < 0 or samples.max() > 1:
            raise ValueError("pressure samples must lie in [0, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.samples.size) / self.sample_rate_hz

    @property
    def end_time_s(self) -> float:
        return self.start_time_s + (self.samples.size - 1) / self.sample_rate_hz

    def nearest_index(self, t_s):
        """Index of the nearest sample; exact ties go to the earlier sample."""
        t = np.asarray(t_s, dtype=float)
        if np.any(t < self.start_time_s - 1e-9) or np.any(t > self.end_time_s + 1e-9):
            raise ValueError(
                f"time outside trace span [{self.start_time_s}, {self.end_time_s}] s")
        pos = (t - self.start_time_s) * self.sample_rate_hz
        # round half down; the 1e-9 slack absorbs float error on exact ties
        idx = np.ceil(pos - 0.5 - 1e-9).astype(int)
        return np.clip(idx, 0, self.samples.size - 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "pressure"])
        for t, p in zip(self.times, self.samples):
            w.writerow([repr(float(t)), repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["time_s", "pressure"]:
            raise ValueError("expected header 'time_s,pressure'")
        times = np.array([float(r[0]) for r in rows[1:]])
        samples = np.array([float(r[1]) for r in rows[1:]])
        if times.size > 1 and not np.allclose(np.diff(times), 1 / SAMPLE_RATE_HZ):
            raise ValueError("pressure log is not on a 50 Hz grid")
        return cls(samples, float(times[0]))


@dataclass(frozen=True)
class FieldMapFrame:
    timestamp_s: float
    volume: np.ndarray
    dz_mm: float = 1.0
    dx_mm: float = 1.0
    dy_mm: float = 1.0

    def __post_init__(self):
        vol = np.asarray(self.volume, dtype=float)
        if vol.ndim != 3 or vol.shape[0] != 3:
            raise ValueError("a field-map frame holds exactly 3 sagittal slices")
        if not np.all(np.isfinite(vol)):
            raise ValueError("field map contains non-finite values")
        object.__setattr__(self, "volume", vol)


@dataclass(frozen=True)
class RegressionMaps:
    gz_static: np.ndarray
    rigo_max: np.ndarray
    residual_rms: np.ndarray


@dataclass(frozen=True)
class ShimPlanEntry:
    slice_index: int
    gz_static_mean: float
    rigo_max_mean: float


@dataclass(frozen=True)
class ShimPlan:
    entries: tuple[ShimPlanEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        idx = [e.slice_index for e in entries]
        if idx != list(range(len(entries))):
            raise ValueError("slice indices must be contiguous from 0")
        object.__setattr__(self, "entries", entries)

    def __getitem__(self, i) -> ShimPlanEntry:
        return self.entries[i]

    def __len__(self):
        return len(self.entries)

    def to_text(self) -> str:
        """One ``slice gz_static rigo_max`` line per slice, no header."""
        return "".join(
            f"{e.slice_index} {e.gz_static_mean:.17g} {e.rigo_max_mean:.17g}\n"
            for e in self.entries)

    @classmethod
    def from_text(cls, text):
        entries = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {n}: expected 3 fields, got {len(parts)}")
            entries.append(ShimPlanEntry(int(parts[0]), float(parts[1]), float(parts[2])))
        return cls(tuple(entries))

    @classmethod
    def zeros(cls, n_slices=1):
        return cls(tuple(ShimPlanEntry(i, 0.0, 0.0) for i in range(n_slices)))


def respiration_pressure(t_s, resp_period_s):
    """Noiseless normalized bellows pressure at time ``t_s``."""
    return 0.5 + 0.5 * np.sin(2 * np.pi * np.asarray(t_s, dtype=float) / resp_period_s)


def synth_pressure_trace(resp_period_s, duration_s, noise_std=0.0, seed=0, start_time_s=0.0):
    """Sinusoidal bellows trace ``0.5 + 0.5*sin(2*pi*t/T)`` plus Gaussian noise, clipped.

    ``t`` is absolute time, so a trace starting before 0 s stays in phase with
    the respiration model.
    """
    if duration_s < resp_period_s:
        raise ValueError("trace must cover at least one respiration period")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    n = int(round(duration_s * SAMPLE_RATE_HZ)) + 1
    t = start_time_s + np.arange(n) / SAMPLE_RATE_HZ
    p = respiration_pressure(t, resp_period_s)
    if noise_std > 0:
        p = p + np.random.default_rng(seed).normal(0.0, noise_std, n)
    return PressureTrace(np.clip(p, 0.0, 1.0), start_time_s)


def associate_timestamps(trace, acquisition_times):
    """Pressure at the nearest 50 Hz sample for each acquisition time."""
    idx = trace.nearest_index(np.asarray(acquisition_times, dtype=float))
    return trace.samples[idx]


def synth_fieldmap_series(truth_static, truth_riro, trace, n_frames=60, frame_interval_s=1.0,
                          noise_std_hz=0.0, seed=0, dz_mm=1.0, dx_mm=1.0, dy_mm=1.0):
    """Field maps ``static + riro * P(t_i) + noise`` at ``t_i = i * frame_interval_s``.

    Noise for frame ``i`` comes from its own generator seeded by ``(seed, i)``,
    so a frame does not depend on how many others are generated.
    """
    truth_static = np.asarray(truth_static, dtype=float)
    truth_riro = np.asarray(truth_riro, dtype=float)
    if truth_static.shape != truth_riro.shape:
        raise ValueError("static and RIRO volumes must share a shape")
    times = trace.start_time_s + np.arange(n_frames) * frame_interval_s
    pressures = associate_timestamps(trace, times)
    frames = []
    for i, (t, p) in enumerate(zip(times, pressures)):
        vol = truth_static + truth_riro * p
        if noise_std_hz > 0:
            vol = vol + np.random.default_rng([seed, i]).normal(0.0, noise_std_hz, vol.shape)
        frames.append(FieldMapFrame(float(t), vol, dz_mm, dx_mm, dy_mm))
    return frames


def dual_echo_fieldmap(echo1, echo2, delta_te_ms):
    """Off-resonance map (Hz) from the phase difference of two echoes.

    Returns
    -------
    field_hz : np.ndarray
    invalid : np.ndarray
        Boolean mask of voxels where either echo has zero magnitude; those
        voxels are set to 0 Hz.
    """
    if not delta_te_ms > 0:
        raise ValueError("echo spacing must be positive")
    a = echo1.data if isinstance(echo1, ComplexImage2D) else np.asarray(echo1)
    b = echo2.data if isinstance(echo2, ComplexImage2D) else np.asarray(echo2)
    invalid = (np.abs(a) == 0) | (np.abs(b) == 0)
    field_hz = np.angle(b * np.conj(a)) / (2 * np.pi * delta_te_ms * 1e-3)
    field_hz = np.where(invalid, 0.0, field_hz)
    return field_hz, invalid


def zgradient(frame, dz_mm=None):
    """z-derivative (Hz/mm) of a field map, per sagittal slice.

    Central differences inside, first-order one-sided differences at the two
    z boundaries (what ``np.gradient`` does with ``edge_order=1``).
    """
    vol = frame.volume if isinstance(frame, FieldMapFrame) else np.asarray(frame, dtype=float)
    if dz_mm is None:
        dz_mm = frame.dz_mm
    if vol.shape[Z_AXIS] < 2:
        raise ValueError("need at least 2 samples along z")
    return np.gradient(vol, dz_mm, axis=Z_AXIS, edge_order=1)


def regress_gz_vs_pressure(gz_frames, pressures):
    """Per-voxel OLS of gradient against pressure: ``gz = intercept + slope * P``."""
    p = np.asarray(pressures, dtype=float)
    y = np.stack([np.asarray(g, dtype=float) for g in gz_frames])
    if y.shape[0] != p.size:
        raise ValueError("one pressure value per frame is required")
    if p.size < 3:
        raise ValueError("at least 3 frames are required")
    pc = p - p.mean()
    sxx = float(pc @ pc)
    if sxx <= 1e-12 * max(1.0, float(p @ p)):
        raise DegenerateDesignError("pressure has zero variance")
    y_mean = y.mean(axis=0)
    slope = np.tensordot(pc, y - y_mean, axes=1) / sxx
    intercept = y_mean - slope * p.mean()
    resid = y - intercept - slope * p.reshape((-1,) + (1,) * (y.ndim - 1))
    rms = np.sqrt(np.mean(resid**2, axis=0))
    return RegressionMaps(intercept, slope, rms)


def ols_standard_errors(pressures, noise_std):
    """Analytic (intercept, slope) standard errors for OLS with i.i.d. noise."""
    p = np.asarray(pressures, dtype=float)
    sxx = float(np.sum((p - p.mean()) ** 2))
    se_slope = noise_std / np.sqrt(sxx)
    se_intercept = noise_std * np.sqrt(1.0 / p.size + p.mean() ** 2 / sxx)
    return se_intercept, se_slope


def axial_rois(shape, z_indices, x_slice=slice(None), sagittal=slice(None)):
    """One ROI per target axial slice: the voxels of the volume at that z row."""
    rois = []
    for z in z_indices:
        m = np.zeros(shape, dtype=bool)
        m[sagittal, z, x_slice] = True
        rois.append(m)
    return rois


def build_shim_plan(maps, roi_per_slice):
    """ROI means of the static gradient and the respiratory gradient amplitude."""
    entries = []
    for i, roi in enumerate(roi_per_slice):
        roi = np.asarray(roi, dtype=bool)
        if roi.shape != maps.gz_static.shape:
            raise ValueError(f"ROI {i} shape does not match the regression maps")
        if not roi.any():
            raise ValueError(f"ROI for slice {i} is empty")
        entries.append(ShimPlanEntry(i, float(maps.gz_static[roi].mean()),
                                     float(maps.rigo_max[roi].mean())))
    return ShimPlan(tuple(entries))
