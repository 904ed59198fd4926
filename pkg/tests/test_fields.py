import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zshim.fields import (CalibrationError, ScalarField2D, inplane_std, make_body_cord_phantom,
                          make_cylinder_phantom, make_radial_riro)


def brute_force_disk_count(nx, ny, spacing, radius):
    count = 0
    for r in range(ny):
        for c in range(nx):
            dy, dx = (r - ny // 2) * spacing, (c - nx // 2) * spacing
            if math.hypot(dy, dx) <= radius + 1e-12:
                count += 1
    return count


def brute_force_ellipse_count(nx, ny, spacing, fy, fx):
    ay, ax = 0.5 * fy * ny * spacing, 0.5 * fx * nx * spacing
    count = 0
    for r in range(ny):
        for c in range(nx):
            y, x = (r - ny // 2) * spacing, (c - nx // 2) * spacing
            if (y / ay) ** 2 + (x / ax) ** 2 <= 1.0:
                count += 1
    return count


class TestCylinder:
    def test_phantom_geometry(self):
        rho, mask = make_cylinder_phantom(128, 56, 2.2, 10.0, 1.0)
        assert rho.shape == (56, 128)
        assert mask[28, 64]
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        # radius 10 / 2.2 = 4.5 px, so 4 whole pixels each side of center
        assert (rows[0], rows[-1]) == (24, 32)
        assert (cols[0], cols[-1]) == (60, 68)
        assert np.all(rho.values[mask] == 1.0) and np.all(rho.values[~mask] == 0.0)

    def test_pixel_count_matches_exhaustive(self):
        _, mask = make_cylinder_phantom(16, 16, 1.0, 4.0)
        assert mask.sum() == brute_force_disk_count(16, 16, 1.0, 4.0)

    def test_zero_density(self):
        rho, mask = make_cylinder_phantom(16, 16, 1.0, 4.0, density=0.0)
        assert not rho.values.any()
        assert mask.any()

    @pytest.mark.parametrize("radius", [1.5, 9.0])
    def test_rejects_bad_radius(self, radius):
        with pytest.raises(ValueError):
            make_cylinder_phantom(16, 16, 1.0, radius)


class TestBodyCord:
    def test_containment(self):
        rho, obj, cord = make_body_cord_phantom(256, 256, 0.9)
        assert obj.sum() > cord.sum() > 0
        assert not np.any(cord & ~obj)

    def test_ellipse_count(self):
        _, obj, _ = make_body_cord_phantom(64, 80, 1.0)
        assert obj.sum() == brute_force_ellipse_count(64, 80, 1.0, 0.5, 0.7)

    def test_cord_outside_rejected(self):
        with pytest.raises(ValueError):
            make_body_cord_phantom(64, 64, 1.0, cord_offset_mm=(0.0, 30.0))

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            make_body_cord_phantom(32, 64, 1.0)


class TestRadialRiro:
    def test_phantom_calibration(self):
        _, mask = make_cylinder_phantom(128, 56, 2.2, 10.0)
        riro = make_radial_riro(mask, 2.2, 12.0, 1.2)
        assert inplane_std(riro, mask) == pytest.approx(1.2, abs=0.01)
        assert riro.values[28, 64] == 12.0

    def test_invivo_calibration(self):
        _, obj, _ = make_body_cord_phantom(256, 256, 0.9)
        riro = make_radial_riro(obj, 0.9, 12.0, 2.1)
        assert inplane_std(riro, obj) == pytest.approx(2.1, abs=0.01)

    def test_zero_target_is_uniform(self):
        _, mask = make_cylinder_phantom(128, 56, 2.2, 10.0)
        riro = make_radial_riro(mask, 2.2, 12.0, 0.0)
        assert np.all(riro.values == 12.0)
        assert inplane_std(riro, mask) == 0.0

    def test_unreachable_target(self):
        _, mask = make_cylinder_phantom(128, 56, 2.2, 10.0)
        with pytest.raises(CalibrationError):
            make_radial_riro(mask, 2.2, 12.0, 6.0)

    @pytest.mark.parametrize("target", [0.3, 1.0, 2.0])
    def test_shape_properties(self, target):
        _, mask = make_cylinder_phantom(128, 56, 2.2, 10.0)
        riro = make_radial_riro(mask, 2.2, 12.0, target)
        assert riro.values.min() >= 0
        assert np.unravel_index(np.argmax(riro.values), riro.shape) == (28, 64)
        # recomputing the statistic returns the target
        assert inplane_std(riro, mask) == pytest.approx(target, abs=0.01)


class TestInplaneStd:
    def test_uniform(self):
        f = ScalarField2D(np.full((4, 5), 3.3), 1.0)
        assert inplane_std(f, np.ones((4, 5), bool)) == pytest.approx(0.0, abs=1e-15)

    def test_two_points(self):
        v = np.zeros((3, 3))
        v[0, 0], v[2, 1] = 2.0, 7.0
        m = np.zeros((3, 3), bool)
        m[0, 0] = m[2, 1] = True
        assert inplane_std(ScalarField2D(v, 1.0), m) == pytest.approx(2.5)

    def test_empty_mask(self):
        with pytest.raises(ValueError):
            inplane_std(ScalarField2D(np.ones((2, 2)), 1.0), np.zeros((2, 2), bool))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), shift=st.floats(-100, 100), scale=st.floats(0.01, 100))
    def test_shift_and_scale(self, seed, shift, scale):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(6, 7))
        m = rng.random((6, 7)) < 0.6
        m[0, 0] = True
        f = ScalarField2D(v, 1.0)
        base = inplane_std(f, m)
        assert inplane_std(f + shift, m) == pytest.approx(base, rel=1e-9, abs=1e-9)
        assert inplane_std(f * scale, m) == pytest.approx(scale * base, rel=1e-9, abs=1e-12)


def test_scalar_field_rejects_nonfinite():
    with pytest.raises(ValueError):
        ScalarField2D(np.array([[1.0, np.nan]]), 1.0)
