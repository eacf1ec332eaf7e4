"""Camera model: thin lens, distortion, projection, config files."""

import json

import numpy as np
import pytest

import markersim as ms
from markersim.camera import (
    DistortionCoefficients,
    camera_hash,
    load_camera,
    save_camera,
    unproject_pixel,
)
from markersim.errors import ConfigurationError, ConvergenceError, DomainError


def distort_scalar_oracle(u, v, radial, tangential=(0.0, 0.0), prism=(0.0,) * 4):
    """Plain-arithmetic evaluation of the distortion polynomial."""
    k1, k2, k3, k4, k5, k6 = radial
    p1, p2 = tangential
    s1, s2, s3, s4 = prism
    r2 = u * u + v * v
    ratio = (1 + k1 * r2 + k2 * r2**2 + k3 * r2**3) / (1 + k4 * r2 + k5 * r2**2 + k6 * r2**3)
    up = u * ratio + 2 * p1 * u * v + p2 * (r2 + 2 * u * u) + s1 * r2 + s2 * r2**2
    vp = v * ratio + p1 * (r2 + 2 * v * v) + 2 * p2 * u * v + s3 * r2 + s4 * r2**2
    return up, vp


class TestImageDistance:
    def test_symmetric_conjugate(self):
        assert ms.image_distance(2 * 4.47, 4.47) == pytest.approx(2 * 4.47, abs=1e-12)

    def test_logitech_focus(self):
        z_s = ms.image_distance(150.0, 4.47)
        assert z_s == pytest.approx(4.6072975, abs=1e-6)
        assert abs(1 / 150.0 + 1 / z_s - 1 / 4.47) < 1e-12

    def test_far_focus_approaches_focal_length(self):
        assert ms.image_distance(1e12, 4.47) == pytest.approx(4.47, abs=1e-9)

    def test_residual_for_random_distances(self):
        rng = np.random.default_rng(1)
        f = 4.47
        for z_f in rng.uniform(f * 1.01, 1e5, size=1000):
            z_s = ms.image_distance(float(z_f), f)
            assert abs(1 / z_f + 1 / z_s - 1 / f) < 1e-12

    def test_object_at_or_inside_focal_length(self):
        with pytest.raises(DomainError):
            ms.image_distance(4.47, 4.47)
        with pytest.raises(DomainError):
            ms.image_distance(2.0, 4.47)


class TestCircleOfConfusion:
    def test_in_focus_is_zero(self, logitech):
        assert ms.circle_of_confusion(150.0, logitech) == 0.0

    def test_logitech_at_one_meter(self, logitech):
        # independent evaluation: d = f/N, d_c = |d f (z - z_f) / (z (f + z_f))|
        d = 4.47 / 2.8
        expected = abs(d * 4.47 * (1000.0 - 150.0) / (1000.0 * (4.47 + 150.0)))
        got = ms.circle_of_confusion(1000.0, logitech)
        assert got == pytest.approx(expected, abs=1e-15)
        assert got * 1000.0 == pytest.approx(39.27, abs=0.1)  # micrometres

    def test_absolute_value_both_sides(self, logitech):
        assert ms.circle_of_confusion(300.0, logitech) > 0.0
        assert ms.circle_of_confusion(75.0, logitech) > 0.0

    def test_monotone_in_defocus_distance(self, logitech):
        zs_far = np.linspace(151.0, 2000.0, 50)
        vals_far = [ms.circle_of_confusion(z, logitech) for z in zs_far]
        assert all(b > a for a, b in zip(vals_far, vals_far[1:]))
        zs_near = np.linspace(149.0, 10.0, 50)
        vals_near = [ms.circle_of_confusion(z, logitech) for z in zs_near]
        assert all(b > a for a, b in zip(vals_near, vals_near[1:]))

    def test_classical_compatibility_flag(self, logitech):
        import dataclasses

        classical = dataclasses.replace(logitech, coc_classical=True)
        d = 4.47 / 2.8
        expected = abs(d * 4.47 * 850.0 / (1000.0 * (150.0 - 4.47)))
        assert ms.circle_of_confusion(1000.0, classical) == pytest.approx(expected, abs=1e-15)

    def test_non_positive_distance(self, logitech):
        with pytest.raises(DomainError):
            ms.circle_of_confusion(0.0, logitech)


class TestDistort:
    def test_zero_coefficients_identity(self):
        coeffs = DistortionCoefficients()
        rng = np.random.default_rng(2)
        u, v = rng.uniform(-0.7, 0.7, size=(2, 64))
        du, dv = ms.distort(u, v, coeffs)
        assert np.array_equal(du, u) and np.array_equal(dv, v)

    def test_center_is_fixed_point(self, logitech):
        assert ms.distort(0.0, 0.0, logitech.distortion) == (0.0, 0.0)

    def test_logitech_against_scalar_oracle(self, logitech):
        expected = distort_scalar_oracle(0.3, 0.4, (-0.286, 0.057, 0.112, 0, 0, 0))
        got = ms.distort(0.3, 0.4, logitech.distortion)
        assert got[0] == pytest.approx(expected[0], abs=1e-15)
        assert got[1] == pytest.approx(expected[1], abs=1e-15)
        # frozen from the oracle: r^2 = 0.25, ratio = 0.9338125
        assert got[0] == pytest.approx(0.28014375, abs=1e-12)
        assert got[1] == pytest.approx(0.373525, abs=1e-12)

    def test_full_model_against_oracle(self):
        radial = (-0.1, 0.02, -0.004, 0.01, -0.002, 0.0005)
        tangential = (1e-3, -2e-3)
        prism = (5e-4, -1e-4, 2e-4, -3e-4)
        coeffs = DistortionCoefficients(radial, tangential, prism)
        rng = np.random.default_rng(3)
        for _ in range(50):
            u, v = rng.uniform(-0.6, 0.6, size=2)
            exp = distort_scalar_oracle(u, v, radial, tangential, prism)
            got = ms.distort(float(u), float(v), coeffs)
            assert got == pytest.approx(exp, abs=1e-14)

    def test_radially_symmetric_without_tangential_prism(self, logitech):
        r = 0.5
        angles = np.random.default_rng(4).uniform(0, 2 * np.pi, 64)
        u, v = r * np.cos(angles), r * np.sin(angles)
        du, dv = ms.distort(u, v, logitech.distortion)
        ratios = np.hypot(du, dv) / r
        assert np.ptp(ratios) < 1e-12

    def test_valid_radius_enforced(self, logitech):
        with pytest.raises(DomainError):
            ms.distort(2.0, 2.0, logitech.distortion, valid_radius=logitech.valid_radius)

    def test_nonpositive_denominator_rejected(self):
        coeffs = DistortionCoefficients(radial=(0, 0, 0, -3.0, 0, 0))
        with pytest.raises(DomainError):
            ms.distort(0.6, 0.0, coeffs)


class TestUndistort:
    def test_zero_coefficients_identity(self):
        coeffs = DistortionCoefficients()
        assert ms.undistort(0.31, -0.12, coeffs) == (0.31, -0.12)

    def test_center_fixed_point(self, logitech):
        assert ms.undistort(0.0, 0.0, logitech.distortion) == (0.0, 0.0)

    @pytest.mark.parametrize("rig_name", ["logitech", "canon"])
    def test_round_trips(self, rig_name, request):
        rig = request.getfixturevalue(rig_name)
        rng = np.random.default_rng(6)
        r = rng.uniform(0.0, rig.valid_radius * 0.95, 200)
        ang = rng.uniform(0, 2 * np.pi, 200)
        ud, vd = r * np.cos(ang), r * np.sin(ang)
        u, v = ms.undistort(ud, vd, rig.distortion)
        ud2, vd2 = ms.distort(u, v, rig.distortion)
        assert np.max(np.hypot(ud2 - ud, vd2 - vd)) < 1e-10
        # opposite composition, starting from ideal points
        du, dv = ms.distort(ud * 0.7, vd * 0.7, rig.distortion)
        iu, iv = ms.undistort(du, dv, rig.distortion)
        assert np.max(np.hypot(iu - ud * 0.7, iv - vd * 0.7)) < 1e-10

    def test_unreachable_target_raises(self):
        # with k4 = 25 the distorted radius never exceeds 1/(2*sqrt(25)) = 0.1,
        # so (0.6, 0.6) has no preimage and the iteration cannot converge
        coeffs = DistortionCoefficients(radial=(0.0, 0, 0, 25.0, 0, 0))
        with pytest.raises(ConvergenceError):
            ms.undistort(0.6, 0.6, coeffs)


class TestProject:
    def test_optical_axis_maps_to_principal_point(self, logitech):
        for z in (10.0, 150.0, 5000.0):
            px = ms.project(np.array([0.0, 0.0, z]), logitech)
            assert px == pytest.approx((319.5, 239.5), abs=1e-12)

    def test_pinhole_reduction_without_distortion(self, logitech):
        import dataclasses

        rig = dataclasses.replace(logitech, distortion=DistortionCoefficients())
        p = np.array([37.0, -21.0, 903.0])
        expected = (
            rig.focal_px * 37.0 / 903.0 + 319.5,
            rig.focal_px * -21.0 / 903.0 + 239.5,
        )
        assert ms.project(p, rig) == pytest.approx(expected, abs=1e-12)

    def test_barrel_pulls_inward(self, logitech):
        import dataclasses

        pinhole = dataclasses.replace(logitech, distortion=DistortionCoefficients())
        p = np.array([100.0, 0.0, 1000.0])
        px_dist = ms.project(p, logitech)
        px_pin = ms.project(p, pinhole)
        assert px_dist[0] < px_pin[0]
        assert px_dist[1] == pytest.approx(239.5, abs=1e-12)

    def test_behind_camera_rejected(self, logitech):
        with pytest.raises(DomainError):
            ms.project(np.array([0.0, 0.0, -5.0]), logitech)
        with pytest.raises(DomainError):
            ms.project(np.array([[1.0, 1.0, 10.0], [0.0, 0.0, 0.0]]), logitech)

    def test_unproject_inverts_project(self, logitech):
        p = np.array([42.0, -13.0, 777.0])
        px = ms.project(p, logitech)
        u, v = unproject_pixel(px[0], px[1], logitech)
        assert u == pytest.approx(42.0 / 777.0, abs=1e-10)
        assert v == pytest.approx(-13.0 / 777.0, abs=1e-10)


class TestRigValidation:
    def test_focal_px_consistency(self, logitech):
        assert logitech.focal_px == pytest.approx(4.47 / 0.0083, rel=1e-12)

    def test_wavelength_bounds(self, logitech):
        import dataclasses

        with pytest.raises(ConfigurationError):
            dataclasses.replace(logitech, wavelength_nm=200.0)

    def test_focus_beyond_focal_length(self):
        with pytest.raises(ConfigurationError):
            ms.LensRig(4.47, (319.5, 239.5), 2.8, 4.0)

    def test_rational_denominator_checked_at_load(self, logitech):
        import dataclasses

        bad = DistortionCoefficients(radial=(0, 0, 0, -4.0, 0, 0))
        with pytest.raises(ConfigurationError):
            dataclasses.replace(logitech, distortion=bad)

    def test_default_valid_radius(self, logitech):
        corner = np.hypot(640 - 319.5, 480 - 239.5) / logitech.focal_px
        assert logitech.valid_radius == pytest.approx(1.05 * corner, rel=1e-12)


class TestCameraFiles:
    def test_round_trip(self, tmp_path, logitech):
        path = tmp_path / "cam.json"
        save_camera(logitech, path)
        rig = load_camera(path)
        assert rig == logitech
        assert camera_hash(rig) == camera_hash(logitech)

    def test_dist_vector_ordering(self, tmp_path):
        doc = {
            "f_mm": 4.47, "cx_px": 319.5, "cy_px": 239.5, "f_number": 2.8,
            "focus_mm": 150.0, "width": 640, "height": 480, "pitch_um": 8.3,
            "bit_depth": 8, "wavelength_nm": 650.0,
            "dist": [-0.286, 0.057, 0.001, -0.002, 0.112],
        }
        path = tmp_path / "cam.json"
        path.write_text(json.dumps(doc))
        rig = load_camera(path)
        assert rig.distortion.radial == (-0.286, 0.057, 0.112, 0.0, 0.0, 0.0)
        assert rig.distortion.tangential == (0.001, -0.002)
        assert rig.distortion.prism == (0.0, 0.0, 0.0, 0.0)

    def test_missing_dist_defaults_to_zero(self, tmp_path):
        doc = {
            "f_mm": 4.47, "cx_px": 319.5, "cy_px": 239.5, "f_number": 2.8,
            "focus_mm": 150.0, "width": 640, "height": 480, "pitch_um": 8.3,
            "bit_depth": 8, "wavelength_nm": 650.0,
        }
        path = tmp_path / "cam.json"
        path.write_text(json.dumps(doc))
        assert load_camera(path).distortion.is_zero

    def test_missing_field_reported(self, tmp_path):
        path = tmp_path / "cam.json"
        path.write_text(json.dumps({"f_mm": 4.47}))
        with pytest.raises(ConfigurationError, match="missing fields"):
            load_camera(path)

    def test_overlong_dist_rejected(self):
        with pytest.raises(ConfigurationError):
            DistortionCoefficients.from_opencv_vector([0.0] * 13)
