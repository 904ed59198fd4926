"""Ghosting and SNR metrics on magnitude images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = [
    "MetricError",
    "GhostMetricMasks",
    "auto_ghost_masks",
    "background_mask",
    "psg",
    "psg_background",
    "snr",
    "ghost_energy",
    "relative_reduction",
]


class MetricError(ValueError):
    """A metric is undefined for the given image/masks."""


@dataclass(frozen=True)
class GhostMetricMasks:
    object: np.ndarray
    above: np.ndarray
    below: np.ndarray

    def __post_init__(self):
        o, a, b = (np.asarray(m, dtype=bool) for m in (self.object, self.above, self.below))
        if not (o.shape == a.shape == b.shape):
            raise ValueError("ghost masks must share a shape")
        if (o & a).any() or (o & b).any() or (a & b).any():
            raise ValueError("ghost masks must be pairwise disjoint")
        object.__setattr__(self, "object", o)
        object.__setattr__(self, "above", a)
        object.__setattr__(self, "below", b)


def auto_ghost_masks(object_mask, pe_axis=0, margin_px=2):
    """Rectangular ghost ROIs above and below the object along the phase-encode axis.

    Both rectangles span the object's bounding box along the readout axis,
    start ``margin_px`` pixels beyond the object edge and have equal thickness,
    set by the smaller of the two clearances to the image edge.
    """
    obj = np.asarray(object_mask, dtype=bool)
    if not obj.any():
        raise ValueError("object mask is empty")
    if pe_axis == 1:
        m = auto_ghost_masks(obj.T, 0, margin_px)
        return GhostMetricMasks(m.object.T, m.above.T, m.below.T)
    if pe_axis != 0:
        raise ValueError("pe_axis must be 0 or 1")
    rows = np.flatnonzero(obj.any(axis=1))
    cols = np.flatnonzero(obj.any(axis=0))
    r0, r1 = rows[0], rows[-1]
    c0, c1 = cols[0], cols[-1]
    ny = obj.shape[0]
    need = margin_px + 2
    if r0 < need or ny - 1 - r1 < need:
        raise ValueError(
            f"object needs {need} px clearance to the image edge along the phase-encode axis")
    thick = min(r0 - margin_px, ny - 1 - r1 - margin_px)
    above = np.zeros_like(obj)
    below = np.zeros_like(obj)
    above[r0 - margin_px - thick:r0 - margin_px, c0:c1 + 1] = True
    below[r1 + margin_px + 1:r1 + margin_px + 1 + thick, c0:c1 + 1] = True
    return GhostMetricMasks(obj, above, below)


def background_mask(object_mask, margin_px=2):
    """Everything farther than ``margin_px`` from the object."""
    obj = np.asarray(object_mask, dtype=bool)
    if margin_px > 0:
        obj = ndimage.binary_dilation(obj, iterations=margin_px)
    return ~obj


def _mean(img, mask, what):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise MetricError(f"{what} mask is empty")
    return float(np.mean(img[mask]))


def psg(magnitude, masks):
    """Percent signal ghosting from mean ROI signals above, below and in the object."""
    img = np.asarray(magnitude, dtype=float)
    obj = _mean(img, masks.object, "object")
    if obj == 0:
        raise MetricError("object mean is zero")
    return 100.0 * abs((_mean(img, masks.above, "above") + _mean(img, masks.below, "below"))
                       / (2.0 * obj))


def psg_background(magnitude, object_roi, background):
    """PSG variant with the mean background replacing the above/below ROIs."""
    img = np.asarray(magnitude, dtype=float)
    obj = _mean(img, object_roi, "object")
    if obj == 0:
        raise MetricError("object mean is zero")
    return 100.0 * abs(_mean(img, background, "background") / obj)


def snr(magnitude, object_mask, background):
    """Mean object signal over the (population) std of the background."""
    img = np.asarray(magnitude, dtype=float)
    bg = np.asarray(background, dtype=bool)
    if not bg.any():
        raise MetricError("background mask is empty")
    sd = float(np.std(img[bg]))
    if sd == 0:
        raise MetricError("background std is zero")
    return _mean(img, object_mask, "object") / sd


def ghost_energy(image, object_mask, margin_px=2):
    """Sum of squared magnitude outside the dilated object."""
    img = np.abs(np.asarray(image))
    return float(np.sum(img[background_mask(object_mask, margin_px)] ** 2))


def relative_reduction(psg_off, psg_on):
    """Percent reduction of PSG from correction; NaN when the uncorrected PSG vanishes."""
    if psg_off <= 1e-9:
        return float("nan")
    return 100.0 * (psg_off - psg_on) / psg_off
