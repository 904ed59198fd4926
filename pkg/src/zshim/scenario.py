"""Scenario configuration and the end-to-end runs behind the CLI.

Config files are flat ``key = value`` text, one pair per line, ``#`` starts a
comment. Lists (``te_ms``) are comma separated.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .controller import ControllerConfig, make_excitation_schedule, run_controller
from .fields import (FieldModel, ScalarField2D, make_body_cord_phantom, make_cylinder_phantom,
                     make_radial_riro, inplane_std)
from .metrics import (MetricError, auto_ghost_masks, background_mask, psg, psg_background,
                      relative_reduction, snr)
from .mgre import SequenceParams, acquire_kspace, reconstruct
from .training import (associate_timestamps, axial_rois, build_shim_plan,
                       ols_standard_errors, regress_gz_vs_pressure, synth_fieldmap_series,
                       synth_pressure_trace, zgradient)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "parse_config",
    "load_config",
    "bundled_config_path",
    "SimulationResult",
    "run_simulation",
    "SweepRow",
    "run_sweep",
    "TrainingResult",
    "run_training",
]

PHANTOMS = ("cylinder", "body_cord")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``line`` is the 1-based line number if known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ScenarioConfig:
    phantom: str = "cylinder"
    nx: int = 128
    ny: int = 56
    spacing_mm: float = 2.2
    tr_ms: float = 1000.0
    te_ms: tuple = (15.0,)
    resp_period_s: float = 3.0
    riro_peak_hz: float = 12.0
    riro_target_std_hz: float = 1.2
    static_field: float = 0.0
    correction: bool = True
    latency_s: float = 0.0
    seed: int = 0
    output: str = "out"
    cylinder_radius_mm: float = 10.0
    image_noise_std: float = 0.0
    train_frames: int = 60
    train_frame_interval_s: float = 1.0
    train_resp_period_s: float = 2.5
    train_noise_hz: float = 0.0
    train_pressure_noise: float = 0.0
    train_nz: int = 16
    train_nx: int = 40
    train_dz_mm: float = 2.4
    train_dx_mm: float = 1.25

    def __post_init__(self):
        if self.phantom not in PHANTOMS:
            raise ConfigError(f"phantom must be one of {PHANTOMS}")
        positive = ("nx", "ny", "spacing_mm", "tr_ms", "resp_period_s", "cylinder_radius_mm",
                    "train_frames", "train_frame_interval_s", "train_resp_period_s",
                    "train_nz", "train_nx", "train_dz_mm", "train_dx_mm")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        non_negative = ("riro_peak_hz", "riro_target_std_hz", "latency_s", "image_noise_std",
                        "train_noise_hz", "train_pressure_noise", "seed")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not self.te_ms:
            raise ConfigError("te_ms must list at least one echo time")
        if any(b <= a for a, b in zip(self.te_ms, self.te_ms[1:])):
            raise ConfigError("te_ms must be strictly increasing")
        try:
            self.sequence()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sequence(self) -> SequenceParams:
        return SequenceParams(self.nx, self.ny, self.tr_ms, self.te_ms)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "on" if v else "off"
            elif isinstance(v, tuple):
                v = ",".join(repr(float(t)) for t in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["te_ms"] = list(self.te_ms)
        return d


def _convert(name, raw, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("on", "true", "yes", "1"):
            return True
        if low in ("off", "false", "no", "0"):
            return False
        raise ValueError(f"expected on/off, got {raw!r}")
    if kind is tuple:
        vals = tuple(float(v) for v in raw.split(",") if v.strip())
        if not vals:
            raise ValueError("empty list")
        return vals
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text, base=None):
    """Parse config text on top of ``base`` (defaults if omitted)."""
    base = base or ScenarioConfig()
    kinds = {f.name: type(getattr(base, f.name)) for f in fields(base)}
    changes, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in changes:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            changes[key] = _convert(key, raw, kinds[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        where[key] = lineno
    try:
        return dataclasses.replace(base, **changes)
    except ConfigError as exc:
        for key, lineno in where.items():
            if key in str(exc):
                raise ConfigError(str(exc), lineno) from None
        raise


def bundled_config_path(name):
    stem = name if name.endswith(".cfg") else f"{name}.cfg"
    return resources.files("zshim") / "configs" / stem


def load_config(path):
    """Read a config file; bare names like ``phantom`` resolve to the bundled configs."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_config_path(str(path))
        if not bundled.is_file():
            raise ConfigError(f"config file not found: {path}")
        return parse_config(bundled.read_text())
    return parse_config(p.read_text())


@dataclass
class SimulationResult:
    config: ScenarioConfig
    rho: ScalarField2D
    riro: ScalarField2D
    object_mask: np.ndarray
    roi_mask: np.ndarray
    masks: dict
    magnitudes: dict
    metrics: list
    controller: object = None
    riro_corr_hz: float = 0.0

    def mean_psg(self, condition):
        vals = [m["psg"] for m in self.metrics if m["condition"] == condition]
        return float(np.mean(vals))


def build_phantom(cfg):
    """Density, object mask and correction ROI for a scenario."""
    if cfg.phantom == "cylinder":
        rho, obj = make_cylinder_phantom(cfg.nx, cfg.ny, cfg.spacing_mm, cfg.cylinder_radius_mm)
        return rho, obj, obj
    rho, obj, cord = make_body_cord_phantom(cfg.nx, cfg.ny, cfg.spacing_mm)
    return rho, obj, cord


def _metric_masks(cfg, obj, roi):
    bg = background_mask(obj)
    if cfg.phantom == "cylinder":
        g = auto_ghost_masks(obj)
        return {"object": g.object, "above": g.above, "below": g.below, "background": bg}, g
    return {"object": obj, "roi": roi, "background": bg}, None


def _scenario_psg(cfg, mag, masks, ghost):
    if ghost is not None:
        return psg(mag, ghost)
    return psg_background(mag, masks["roi"], masks["background"])


def _add_noise(kspace, cfg, echo):
    if cfg.image_noise_std <= 0:
        return kspace
    rng = np.random.default_rng([cfg.seed, 7919, echo])
    scale = cfg.image_noise_std * np.sqrt(kspace.size)
    return kspace + scale * (rng.standard_normal(kspace.shape)
                             + 1j * rng.standard_normal(kspace.shape)) / np.sqrt(2)


def run_simulation(cfg, conditions=None, training=None):
    """Simulate the scenario without and (if enabled) with realtime correction."""
    if conditions is None:
        conditions = ("off", "on") if cfg.correction else ("off",)
    seq = cfg.sequence()
    rho, obj, roi = build_phantom(cfg)
    riro = make_radial_riro(obj, cfg.spacing_mm, cfg.riro_peak_hz, cfg.riro_target_std_hz)
    model = FieldModel.riro_only(riro, cfg.resp_period_s, cfg.static_field)
    riro_corr = float(riro.values[roi].mean())
    masks, ghost = _metric_masks(cfg, obj, roi)

    ctrl = None
    if "on" in conditions:
        if training is None:
            training = run_training(cfg)
        schedule = make_excitation_schedule(seq.ny, seq.tr_ms)
        t_end = (seq.ny - 1) * seq.tr_ms * 1e-3
        start = -(cfg.latency_s + 1.0)
        trace = synth_pressure_trace(cfg.resp_period_s,
                                     max(t_end - start + 1.0, cfg.resp_period_s),
                                     seed=cfg.seed, start_time_s=start)
        ccfg = ControllerConfig(cfg.latency_s, riro_corr, cfg.static_field)
        ctrl = run_controller(schedule, trace, training.plan, ccfg, cfg.resp_period_s, seq.te_ms)

    magnitudes, metrics = {}, []
    for cond in conditions:
        corr = ctrl.schedule(0) if cond == "on" else None
        frames = acquire_kspace(rho, model, seq, corr)
        mags = []
        for fr in frames:
            mag = reconstruct(_add_noise(fr.data, cfg, fr.echo_index)).magnitude
            mags.append(mag)
            try:
                s = snr(mag, obj, masks["background"])
            except MetricError:
                s = float("inf")
            metrics.append({"condition": cond, "echo": fr.echo_index + 1, "te_ms": fr.te_ms,
                            "psg": _scenario_psg(cfg, mag, masks, ghost), "snr": s})
        magnitudes[cond] = mags
    return SimulationResult(cfg, rho, riro, obj, roi, masks, magnitudes, metrics, ctrl,
                            riro_corr)


@dataclass(frozen=True)
class SweepRow:
    std_hz: float
    psg_off: float
    psg_on: float
    relative_reduction: float
    status: str = "ok"


def run_sweep(cfg, std_list):
    """PSG with and without correction for each target in-plane RIRO std.

    Stops at the first calibration failure; the failing std is returned with
    status ``calibration_failed`` and NaN metrics.
    """
    from .fields import CalibrationError

    training = run_training(cfg)
    rows = []
    for std in std_list:
        try:
            res = run_simulation(cfg.replace(riro_target_std_hz=float(std)), ("off", "on"),
                                 training)
        except CalibrationError:
            nan = float("nan")
            rows.append(SweepRow(float(std), nan, nan, nan, "calibration_failed"))
            break
        off, on = res.mean_psg("off"), res.mean_psg("on")
        rows.append(SweepRow(float(std), off, on, relative_reduction(off, on)))
    return rows


@dataclass
class TrainingResult:
    plan: object
    pressures: np.ndarray
    trace: object
    truth_gz_static: np.ndarray
    truth_rigo: np.ndarray
    maps: object
    quality: list = field(default_factory=list)


def truth_volumes(nz, nx, dz_mm, dx_mm):
    """Ground-truth sagittal field volumes, linear in z with x- and slice-dependent slopes.

    Returns static and RIRO volumes (Hz) and their exact z-gradients (Hz/mm),
    all of shape ``(3, nz, nx)``.
    """
    s = np.arange(3)[:, None, None]
    z = ((np.arange(nz) - nz // 2) * dz_mm)[None, :, None]
    x = ((np.arange(nx) - nx // 2) * dx_mm)[None, None, :]
    span = nx * dx_mm
    gz_static = 0.8 + 0.3 * np.sin(2 * np.pi * x / span) + 0.05 * s + 0.0 * z
    gz_riro = 0.25 + 0.1 * np.cos(2 * np.pi * x / span) - 0.02 * s + 0.0 * z
    static = 15.0 * np.cos(np.pi * x / span) + gz_static * z
    riro = 6.0 + gz_riro * z
    return static, riro, gz_static, gz_riro


def roi_gradient_weights(roi, dz_mm):
    """Weights ``w`` with ``ROI-mean(zgradient(f)) == sum(w * f)`` for any field ``f``."""
    nz = roi.shape[-2]
    d = np.gradient(np.eye(nz), dz_mm, axis=0, edge_order=1)
    r = roi / roi.sum()
    return np.einsum("km,skx->smx", d, r)


def run_training(cfg):
    """Synthetic training session: truth -> frames -> gradients -> OLS -> shim plan.

    The plan has one entry per axial target slice (one per z row of the
    sagittal maps); each ROI covers the central third of the x extent over the
    three sagittal slices. Quality rows compare the plan with the exact ROI
    means and give analytic standard errors for the configured field-map noise.
    """
    nz, nx = cfg.train_nz, cfg.train_nx
    static, riro, gz_s, gz_r = truth_volumes(nz, nx, cfg.train_dz_mm, cfg.train_dx_mm)
    duration = cfg.train_frames * cfg.train_frame_interval_s + cfg.train_resp_period_s
    trace = synth_pressure_trace(cfg.train_resp_period_s, duration, cfg.train_pressure_noise,
                                 seed=cfg.seed)
    frames = synth_fieldmap_series(static, riro, trace, cfg.train_frames,
                                   cfg.train_frame_interval_s, cfg.train_noise_hz,
                                   seed=cfg.seed, dz_mm=cfg.train_dz_mm, dx_mm=cfg.train_dx_mm)
    pressures = associate_timestamps(trace, [f.timestamp_s for f in frames])
    gz = [zgradient(f) for f in frames]
    maps = regress_gz_vs_pressure(gz, pressures)
    rois = axial_rois(static.shape, range(nz), slice(nx // 3, nx - nx // 3))
    plan = build_shim_plan(maps, rois)

    se_int, se_slope = ols_standard_errors(pressures, cfg.train_noise_hz)
    quality = []
    for entry, roi in zip(plan.entries, rois):
        w = np.sqrt(np.sum(roi_gradient_weights(roi, cfg.train_dz_mm) ** 2))
        t_s = float(np.broadcast_to(gz_s, roi.shape)[roi].mean())
        t_r = float(np.broadcast_to(gz_r, roi.shape)[roi].mean())
        quality.append({
            "slice": entry.slice_index,
            "gz_static_mean": entry.gz_static_mean,
            "gz_static_truth": t_s,
            "gz_static_error": entry.gz_static_mean - t_s,
            "gz_static_se": float(se_int * w),
            "rigo_max_mean": entry.rigo_max_mean,
            "rigo_max_truth": t_r,
            "rigo_max_error": entry.rigo_max_mean - t_r,
            "rigo_max_se": float(se_slope * w),
        })
    return TrainingResult(plan, pressures, trace, gz_s, gz_r, maps, quality)


def manifest(cfg, command, **extra):
    doc = {"tool": "zshim", "version": __version__, "command": command,
           "seed": cfg.seed, "config": cfg.as_dict()}
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def riro_stats(result):
    """In-plane std of the RIRO map over the object and over the correction ROI."""
    return (inplane_std(result.riro, result.object_mask),
            inplane_std(result.riro, result.roi_mask))
