import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zshim.fields import make_cylinder_phantom
from zshim.metrics import (GhostMetricMasks, MetricError, auto_ghost_masks, background_mask,
                           psg, psg_background, relative_reduction, snr)


def _block_masks():
    shape = (20, 10)
    obj = np.zeros(shape, bool)
    obj[8:12, 3:7] = True
    above = np.zeros(shape, bool)
    above[1:4, 3:7] = True
    below = np.zeros(shape, bool)
    below[16:19, 3:7] = True
    return GhostMetricMasks(obj, above, below)


def test_psg_formula():
    m = _block_masks()
    img = np.zeros(m.object.shape)
    img[m.object], img[m.above], img[m.below] = 100.0, 2.0, 4.0
    assert psg(img, m) == 3.0


def test_psg_zero_background():
    m = _block_masks()
    assert psg(m.object * 5.0, m) == 0.0


def test_psg_zero_object():
    m = _block_masks()
    with pytest.raises(MetricError):
        psg(np.ones(m.object.shape) * ~m.object, m)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.floats(1e-3, 1e3))
def test_psg_scale_invariant(seed, k):
    m = _block_masks()
    img = np.random.default_rng(seed).random(m.object.shape) + m.object
    assert psg(k * img, m) == pytest.approx(psg(img, m), rel=1e-12)


def test_masks_must_be_disjoint():
    m = _block_masks()
    with pytest.raises(ValueError):
        GhostMetricMasks(m.object, m.object, m.below)


class TestAutoGhostMasks:
    def test_centered_disk(self):
        _, obj = make_cylinder_phantom(128, 56, 2.2, 10.0)
        m = auto_ghost_masks(obj)
        assert not (m.above & obj).any() and not (m.below & obj).any()
        assert m.above.sum() == m.below.sum() > 0
        rows_a = np.flatnonzero(m.above.any(axis=1))
        rows_b = np.flatnonzero(m.below.any(axis=1))
        rows_o = np.flatnonzero(obj.any(axis=1))
        assert rows_a[-1] < rows_o[0] - 2 and rows_b[0] > rows_o[-1] + 2
        # equal thickness, limited by the smaller clearance
        assert len(rows_a) == len(rows_b) == min(rows_o[0] - 2, 55 - rows_o[-1] - 2)

    def test_columns_match_bounding_box(self):
        _, obj = make_cylinder_phantom(128, 56, 2.2, 10.0)
        m = auto_ghost_masks(obj)
        cols = lambda a: tuple(np.flatnonzero(a.any(axis=0))[[0, -1]])  # noqa: E731
        assert cols(m.above) == cols(obj) == cols(m.below)

    def test_touching_edge(self):
        obj = np.zeros((20, 10), bool)
        obj[0:5, 3:6] = True
        with pytest.raises(ValueError):
            auto_ghost_masks(obj)

    def test_readout_axis_variant(self):
        _, obj = make_cylinder_phantom(56, 128, 2.2, 10.0)
        m = auto_ghost_masks(obj.T.copy().T, pe_axis=1)
        assert not (m.above & obj).any() and m.above.any()


def test_psg_background_variant():
    obj = np.zeros((10, 10), bool)
    obj[3:7, 3:7] = True
    roi = np.zeros_like(obj)
    roi[4:6, 4:6] = True
    img = np.where(obj, 50.0, 1.0)
    img[roi] = 200.0
    assert psg_background(img, roi, background_mask(obj, 1)) == pytest.approx(0.5)


class TestSNR:
    def test_known_values(self):
        obj = np.zeros((4, 4), bool)
        obj[:2] = True
        img = np.where(obj, 100.0, 0.0)
        img[2, :] = [5, -5, 5, -5]
        img[3, :] = [-5, 5, -5, 5]
        assert snr(img, obj, ~obj) == pytest.approx(20.0)

    def test_noiseless_background(self):
        obj = np.zeros((4, 4), bool)
        obj[:2] = True
        with pytest.raises(MetricError):
            snr(obj * 1.0, obj, ~obj)

    def test_known_noise(self):
        rng = np.random.default_rng(0)
        obj = np.zeros((64, 64), bool)
        obj[20:40, 20:40] = True
        sigma = 4.0
        img = np.where(obj, 80.0, 0.0) + rng.normal(0, sigma, obj.shape)
        assert snr(img, obj, background_mask(obj, 2)) == pytest.approx(80 / sigma, rel=0.1)


def test_relative_reduction():
    assert relative_reduction(10.0, 5.0) == 50.0
    assert np.isnan(relative_reduction(0.0, 0.0))
