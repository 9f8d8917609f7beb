"""Armature mechanics: spring, stops, force assembly."""

import numpy as np
import pytest

from magswitch.mechanics import (
    MechanicalConfig,
    acceleration,
    contact_force,
    contact_force_partials,
    spring_force,
)

CFG = MechanicalConfig()


class TestSpring:
    def test_zero_at_unstressed_length(self):
        assert spring_force(CFG.spring_unstressed, CFG) == 0.0

    def test_preload_magnitude(self):
        # 785.4 N/m * 0.02701 m
        assert abs(spring_force(0.0, CFG)) == pytest.approx(785.4 * 0.02701, rel=1e-12)

    def test_linearity(self):
        f1 = spring_force(CFG.spring_unstressed - 1e-3, CFG)
        f2 = spring_force(CFG.spring_unstressed - 2e-3, CFG)
        assert f2 == pytest.approx(2.0 * f1)

    def test_pushes_toward_opening_inside_stroke(self):
        assert spring_force(0.5 * (CFG.x_min + CFG.x_max), CFG) > 0.0


class TestContact:
    def test_zero_inside_range(self):
        assert contact_force(0.5 * (CFG.x_min + CFG.x_max), -3.0, CFG) == 0.0

    def test_stiffness_term_at_small_penetration(self):
        delta = 1e-8
        x = CFG.x_max + delta
        delta_eff = x - CFG.x_max  # rounding of the test input itself
        f = contact_force(x, 0.0, CFG)
        assert f == pytest.approx(-1e17 * delta_eff**2, rel=1e-12)
        assert abs(f) == pytest.approx(10.0, rel=1e-6)

    def test_leaving_contact_has_no_damping(self):
        delta = 1e-8
        f_still = contact_force(CFG.x_max + delta, 0.0, CFG)
        f_leaving = contact_force(CFG.x_max + delta, -1.0, CFG)
        assert f_leaving == pytest.approx(f_still)

    def test_approach_damping_opposes_motion(self):
        delta = 5e-7
        f = contact_force(CFG.x_min - delta, -1.0, CFG)
        assert f > -contact_force(CFG.x_min - delta, 0.0, CFG)
        assert f > 0.0  # pushes back toward the admissible range

    def test_continuity_across_stop(self):
        # a discontinuous damper would jump by d*|v| = 2e5 N here
        for v in (-2.0, 0.0, 2.0):
            for x0 in (CFG.x_min, CFG.x_max):
                below = contact_force(x0 - 1e-12, v, CFG)
                above = contact_force(x0 + 1e-12, v, CFG)
                assert abs(below - above) < 1e-4

    def test_continuity_in_velocity(self):
        x = CFG.x_max + 1e-7
        f_minus = contact_force(x, -1e-12, CFG)
        f_plus = contact_force(x, 1e-12, CFG)
        assert abs(f_plus - f_minus) < 1e-6

    def test_never_injects_energy_over_cycle(self):
        # synthetic approach-retreat trajectory through the x_max stop
        t = np.linspace(0.0, 1e-5, 20001)
        x = CFG.x_max + 1e-6 * np.sin(2 * np.pi * t / 1e-5)
        v = np.gradient(x, t)
        f = np.array([contact_force(xi, vi, CFG) for xi, vi in zip(x, v)])
        work_on_armature = np.trapezoid(f * v, t)
        assert work_on_armature <= 1e-12

    def test_partials_match_finite_difference(self):
        for x, v in [
            (CFG.x_max + 3e-7, 1.5),
            (CFG.x_max + 3e-7, -0.5),
            (CFG.x_min - 2e-7, -1.0),
            (CFG.x_min - 5e-8, 2.0),
        ]:
            dfdx, dfdv = contact_force_partials(x, v, CFG)
            fd_x = (contact_force(x + 1e-12, v, CFG) - contact_force(x - 1e-12, v, CFG)) / 2e-12
            fd_v = (contact_force(x, v + 1e-9, CFG) - contact_force(x, v - 1e-9, CFG)) / 2e-9
            assert dfdx == pytest.approx(fd_x, rel=1e-3)
            assert dfdv == pytest.approx(fd_v, rel=1e-6, abs=1e-6)


class TestAcceleration:
    def test_zero_forces(self):
        cfg = MechanicalConfig(spring_unstressed=2.5e-4)
        assert acceleration(2.5e-4, 0.0, 0.0, cfg) == 0.0

    def test_force_composition(self):
        # wide stops keep x = 0 contact-free so only spring + magnet act
        cfg = MechanicalConfig(x_min=-1.0, x_max=1.0)
        a = acceleration(0.0, 0.0, -30.0, cfg)
        expected = (-30.0 + 785.4 * 0.02701) / 0.0199
        assert a == pytest.approx(expected, rel=1e-12)
        assert abs(a) == pytest.approx(441.5, abs=0.5)

    def test_mass_scaling(self):
        heavy = MechanicalConfig(mass=2 * CFG.mass)
        x = 0.5 * (CFG.x_min + CFG.x_max)
        assert acceleration(x, 0.0, -30.0, heavy) == pytest.approx(
            0.5 * acceleration(x, 0.0, -30.0, CFG)
        )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MechanicalConfig(mass=0.0)
        with pytest.raises(ValueError):
            MechanicalConfig(x_min=1e-3, x_max=1e-6)
        with pytest.raises(ValueError):
            MechanicalConfig(contact_n=0.5)
