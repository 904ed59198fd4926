"""Digital phantoms, respiration-induced offset maps and field statistics.

Arrays follow the image convention used throughout the package: axis 0 holds
the phase-encode rows (``ny``) and axis 1 the readout columns (``nx``).
Masks are plain boolean arrays of the same shape as the field they qualify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect, minimize_scalar

__all__ = [
    "CalibrationError",
    "ScalarField2D",
    "FieldModel",
    "make_cylinder_phantom",
    "make_body_cord_phantom",
    "make_radial_riro",
    "riro_std_for_width",
    "inplane_std",
    "pixel_coordinates_mm",
]


class CalibrationError(RuntimeError):
    """Raised when a RIRO map cannot be tuned to the requested spread."""


@dataclass(frozen=True)
class ScalarField2D:
    """Real scalar map on a regular grid.

    Parameters
    ----------
    values : np.ndarray
        Array of shape ``(ny, nx)``. Units depend on context (Hz, Hz/mm or
        dimensionless density).
    spacing_mm : tuple of float
        Pixel size ``(dy, dx)`` in mm.
    """

    values: np.ndarray
    spacing_mm: tuple[float, float]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"expected a non-empty 2D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        spacing = _as_spacing(self.spacing_mm)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __add__(self, other: float) -> "ScalarField2D":
        return ScalarField2D(self.values + other, self.spacing_mm)

    def __mul__(self, other: float) -> "ScalarField2D":
        return ScalarField2D(self.values * other, self.spacing_mm)


@dataclass(frozen=True)
class FieldModel:
    """Static offset plus sinusoidal respiration-induced offset, both in Hz."""

    static_hz: ScalarField2D
    riro_max_hz: ScalarField2D
    resp_period_s: float

    def __post_init__(self):
        if self.static_hz.shape != self.riro_max_hz.shape:
            raise ValueError("static and RIRO maps must share a shape")
        if not self.resp_period_s > 0:
            raise ValueError("respiration period must be positive")

    @property
    def omega(self) -> float:
        """Angular respiration frequency in rad/s."""
        return 2 * np.pi / self.resp_period_s

    def offset_at(self, t_s: float) -> np.ndarray:
        """Total field offset map (Hz) at time ``t_s``."""
        return self.static_hz.values + self.riro_max_hz.values * np.sin(self.omega * t_s)

    @classmethod
    def riro_only(cls, riro: ScalarField2D, resp_period_s: float, static_hz: float = 0.0):
        static = ScalarField2D(np.full(riro.shape, float(static_hz)), riro.spacing_mm)
        return cls(static, riro, resp_period_s)


def _as_spacing(spacing) -> tuple[float, float]:
    if np.isscalar(spacing):
        spacing = (spacing, spacing)
    dy, dx = (float(s) for s in spacing)
    if not (dy > 0 and dx > 0):
        raise ValueError("pixel spacing must be positive")
    return dy, dx


def pixel_coordinates_mm(shape, spacing_mm):
    """Row/column coordinates in mm relative to the grid center pixel ``(n//2)``."""
    dy, dx = _as_spacing(spacing_mm)
    ny, nx = shape
    y = (np.arange(ny) - ny // 2) * dy
    x = (np.arange(nx) - nx // 2) * dx
    return np.meshgrid(y, x, indexing="ij")


def make_cylinder_phantom(nx, ny, spacing_mm, radius_mm, density=1.0):
    """Axial slice through a cylinder centered on the grid.

    Pixels whose center lies within ``radius_mm`` of the center pixel belong
    to the disk.

    Returns
    -------
    rho : ScalarField2D
        ``density`` inside the disk, 0 outside.
    mask : np.ndarray
        Boolean disk mask.
    """
    dy, dx = _as_spacing(spacing_mm)
    if radius_mm / max(dy, dx) < 2:
        raise ValueError("cylinder radius must span at least 2 pixels")
    if radius_mm > min(ny * dy, nx * dx) / 2:
        raise ValueError("cylinder radius exceeds half the field of view")
    yy, xx = pixel_coordinates_mm((ny, nx), (dy, dx))
    mask = yy**2 + xx**2 <= radius_mm**2
    rho = np.where(mask, float(density), 0.0)
    return ScalarField2D(rho, (dy, dx)), mask


def make_body_cord_phantom(nx, ny, spacing_mm, *, neck_axes_fraction=(0.5, 0.7),
                           cord_diameter_mm=10.0, cord_offset_mm=(0.0, 0.0)):
    """Synthetic neck cross-section: an ellipse of unit density with a cord ROI.

    The ellipse is centered on the grid; its full axes are
    ``neck_axes_fraction`` times the field of view along (rows, columns).

    Returns
    -------
    rho : ScalarField2D
    object_mask, cord_mask : np.ndarray
    """
    if nx < 64 or ny < 64:
        raise ValueError("body phantom needs at least 64 pixels per axis")
    dy, dx = _as_spacing(spacing_mm)
    yy, xx = pixel_coordinates_mm((ny, nx), (dy, dx))
    ay = 0.5 * neck_axes_fraction[0] * ny * dy
    ax = 0.5 * neck_axes_fraction[1] * nx * dx
    obj = (yy / ay) ** 2 + (xx / ax) ** 2 <= 1.0
    oy, ox = cord_offset_mm
    cord = (yy - oy) ** 2 + (xx - ox) ** 2 <= (cord_diameter_mm / 2) ** 2
    if not cord.any():
        raise ValueError("cord ROI is empty at this resolution")
    if np.any(cord & ~obj):
        raise ValueError("cord ROI is not fully inside the body outline")
    return ScalarField2D(obj.astype(float), (dy, dx)), obj, cord


def _centroid_mm(mask, spacing_mm):
    yy, xx = pixel_coordinates_mm(mask.shape, spacing_mm)
    return yy[mask].mean(), xx[mask].mean()


def _squared_distance(mask, spacing_mm):
    yy, xx = pixel_coordinates_mm(mask.shape, spacing_mm)
    cy, cx = _centroid_mm(mask, spacing_mm)
    return (yy - cy) ** 2 + (xx - cx) ** 2


def riro_std_for_width(object_mask, spacing_mm, peak_hz, width_mm):
    """In-mask std of ``peak * exp(-(d / width)^2)``; ``d`` from the mask centroid."""
    d2 = _squared_distance(object_mask, spacing_mm)[object_mask]
    return float(np.std(peak_hz * np.exp(-d2 / width_mm**2)))


def make_radial_riro(object_mask, spacing_mm, peak_hz, target_std_hz, *, tol_hz=0.01,
                     max_iter=60):
    """Gaussian RIRO amplitude map tuned to a target in-plane std.

    The map is ``peak_hz * exp(-(d / width)^2)`` with ``d`` the distance to the
    object centroid. The in-mask std vanishes for very narrow and very broad
    profiles and peaks in between; the width is searched on the broad side of
    that peak, where the std decreases monotonically, so the solution is
    unique. The upper end of the search range is ``100 * FOV_min``.

    Raises
    ------
    CalibrationError
        If the target exceeds the largest std the geometry can produce, or
        the bisection does not reach ``tol_hz``.
    """
    object_mask = np.asarray(object_mask, dtype=bool)
    if not object_mask.any():
        raise ValueError("object mask is empty")
    if peak_hz < 0 or target_std_hz < 0:
        raise ValueError("peak and target std must be non-negative")
    spacing = _as_spacing(spacing_mm)
    d2 = _squared_distance(object_mask, spacing)

    if target_std_hz == 0 or peak_hz == 0:
        if target_std_hz > 0:
            raise CalibrationError("a zero-amplitude map cannot reach a positive std")
        return ScalarField2D(np.full(object_mask.shape, float(peak_hz)), spacing)

    fov_min = min(object_mask.shape[0] * spacing[0], object_mask.shape[1] * spacing[1])
    lo_mm, hi_mm = 0.05 * min(spacing), 100.0 * fov_min

    def std_at(log_w):
        return riro_std_for_width(object_mask, spacing, peak_hz, np.exp(log_w))

    grid = np.linspace(np.log(lo_mm), np.log(hi_mm), 161)
    k = int(np.argmax([std_at(g) for g in grid]))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda g: -std_at(g), bounds=(a, b), method="bounded")
    log_peak = res.x if -res.fun >= std_at(grid[k]) else grid[k]
    max_std = std_at(log_peak)
    if target_std_hz > max_std:
        raise CalibrationError(
            f"target std {target_std_hz:g} Hz exceeds the maximum {max_std:.4g} Hz "
            "reachable for this geometry")
    if std_at(np.log(hi_mm)) > target_std_hz:
        raise CalibrationError(f"target std {target_std_hz:g} Hz is below the search range")

    log_w = bisect(lambda g: std_at(g) - target_std_hz, log_peak, np.log(hi_mm),
                   xtol=1e-13, maxiter=max_iter, disp=False)
    riro = peak_hz * np.exp(-d2 / np.exp(2 * log_w))
    achieved = float(np.std(riro[object_mask]))
    if abs(achieved - target_std_hz) > tol_hz:
        raise CalibrationError(
            f"calibration reached {achieved:.4f} Hz, target {target_std_hz:.4f} Hz")
    return ScalarField2D(riro, spacing)


def inplane_std(field, mask):
    """Population std of ``field`` over ``mask``."""
    values = field.values if isinstance(field, ScalarField2D) else np.asarray(field)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError("mask and field shapes differ")
    if not mask.any():
        raise ValueError("empty mask")
    return float(np.std(values[mask]))
