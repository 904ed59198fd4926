"""Realtime z-shim control loop, replayed as a deterministic event simulation.

Before every excitation the controller reads the bellows pressure (delayed by
a fixed pipeline latency), predicts the slice-average z-gradient from the shim
plan and derives the compensation moment for each echo. Alongside the
gradient-domain log it emits the field-domain correction schedule that the
acquisition simulator consumes.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass

import numpy as np

from .mgre import CorrectionSchedule

__all__ = [
    "Excitation",
    "ExcitationSchedule",
    "ControllerConfig",
    "ControllerEvent",
    "ControllerResult",
    "make_excitation_schedule",
    "predict_gz",
    "compensation_moment",
    "sample_pressure",
    "run_controller",
    "events_to_csv",
]


@dataclass(frozen=True, order=True)
class Excitation:
    time_s: float
    slice_index: int
    line_index: int


@dataclass(frozen=True)
class ExcitationSchedule:
    excitations: tuple[Excitation, ...]
    ny: int

    def __post_init__(self):
        ex = tuple(self.excitations)
        object.__setattr__(self, "excitations", ex)
        per_slice = {}
        for e in ex:
            per_slice.setdefault(e.slice_index, []).append(e)
        for s, items in per_slice.items():
            if sorted(e.line_index for e in items) != list(range(self.ny)):
                raise ValueError(f"slice {s} does not cover lines 0..{self.ny - 1} exactly once")
            by_line = sorted(items, key=lambda e: e.line_index)
            if any(b.time_s <= a.time_s for a, b in zip(by_line, by_line[1:])):
                raise ValueError(f"excitation times of slice {s} are not increasing")

    @property
    def slices(self) -> list[int]:
        return sorted({e.slice_index for e in self.excitations})


def make_excitation_schedule(ny, tr_ms, n_slices=1, start_time_s=0.0):
    """Interleaved multi-slice loop: slice ``s`` of line ``j`` at ``j*TR + s*TR/n_slices``."""
    tr = tr_ms * 1e-3
    ex = [Excitation(start_time_s + j * tr + s * tr / n_slices, s, j)
          for j in range(ny) for s in range(n_slices)]
    return ExcitationSchedule(tuple(ex), ny)


@dataclass(frozen=True)
class ControllerConfig:
    """``roi_riro_corr_hz`` is the RIRO amplitude to cancel (ROI mean of the map)."""

    latency_s: float = 0.0
    roi_riro_corr_hz: float = 0.0
    static_corr_hz: float = 0.0

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("latency must be non-negative")


@dataclass(frozen=True)
class ControllerEvent:
    slice_index: int
    line_index: int
    time_s: float
    pressure: float
    gz_hz_per_mm: float
    moments: tuple[float, ...]


@dataclass(frozen=True)
class ControllerResult:
    schedules: dict
    events: tuple[ControllerEvent, ...]

    def schedule(self, slice_index=0) -> CorrectionSchedule:
        return self.schedules[slice_index]


def predict_gz(plan_entry, pressure):
    """Slice-average z-gradient (Hz/mm) predicted from a pressure reading."""
    return plan_entry.gz_static_mean + plan_entry.rigo_max_mean * pressure


def compensation_moment(gz_avg, te_ms):
    """Compensation gradient moment (Hz*ms/mm) cancelling ``gz_avg`` at ``te_ms``."""
    if not te_ms > 0:
        raise ValueError("echo time must be positive")
    return -gz_avg * te_ms


def sample_pressure(trace, t_s, latency_s=0.0):
    """Most recent pressure the controller can see at ``t_s``."""
    idx = trace.nearest_index(t_s - latency_s)
    return float(trace.samples[idx])


def run_controller(schedule, trace, plan, cfg, resp_period_s, te_ms):
    """Replay the realtime loop over every excitation in time order.

    Returns
    -------
    ControllerResult
        ``schedules[s]`` is the per-line correction for slice ``s``;
        ``events`` is the time-ordered log.
    """
    omega = 2 * np.pi / resp_period_s
    te_ms = tuple(float(t) for t in np.atleast_1d(te_ms))
    queue = list(schedule.excitations)
    heapq.heapify(queue)
    riro_values = {s: np.zeros(schedule.ny) for s in schedule.slices}
    events = []
    while queue:
        ex = heapq.heappop(queue)
        p = sample_pressure(trace, ex.time_s, cfg.latency_s)
        gz = predict_gz(plan[ex.slice_index], p)
        moments = tuple(compensation_moment(gz, te) for te in te_ms)
        riro_values[ex.slice_index][ex.line_index] = (
            cfg.roi_riro_corr_hz * np.sin(omega * (ex.time_s - cfg.latency_s)))
        events.append(ControllerEvent(ex.slice_index, ex.line_index, ex.time_s, p, gz, moments))
    schedules = {s: CorrectionSchedule(np.full(schedule.ny, cfg.static_corr_hz), v)
                 for s, v in riro_values.items()}
    return ControllerResult(schedules, tuple(events))


def events_to_csv(events):
    n_echo = len(events[0].moments) if events else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slice", "line", "time_s", "pressure", "gz_hz_per_mm"]
               + [f"moment_echo{i + 1}" for i in range(n_echo)])
    for ev in events:
        w.writerow([ev.slice_index, ev.line_index, *map(_fmt, (ev.time_s, ev.pressure,
                    ev.gz_hz_per_mm, *ev.moments))])
    return buf.getvalue()


def _fmt(x):
    return repr(float(x))
