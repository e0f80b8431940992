"""Interaction kernels: bare Coulomb, sphere-regularized, Plummer-softened."""
from __future__ import annotations

import numpy as np
import pytest

from vppc.kernels import (
    KernelSpec,
    charge_potential_from_distance,
    coulomb_force,
    regularized_charge_force,
    regularized_charge_potential,
    softened_plasma_force,
    softened_plasma_potential,
)


class TestCoulombForce:
    def test_unit_separation(self):
        assert np.allclose(coulomb_force(np.array([1.0, 0.0, 0.0])),
                           [1.0, 0.0, 0.0], rtol=0, atol=0)

    def test_double_separation(self):
        assert np.allclose(coulomb_force(np.array([2.0, 0.0, 0.0])),
                           [0.25, 0.0, 0.0], rtol=0, atol=1e-15)

    def test_half_separation_z(self):
        assert np.allclose(coulomb_force(np.array([0.0, 0.0, 0.5])),
                           [0.0, 0.0, 4.0], rtol=0, atol=1e-12)

    def test_zero_separation_raises(self):
        with pytest.raises(ValueError):
            coulomb_force(np.zeros(3))

    def test_batched_input(self):
        r = np.array([[1.0, 0, 0], [2.0, 0, 0]])
        f = coulomb_force(r)
        assert f.shape == (2, 3)
        assert np.allclose(f[0], [1, 0, 0])
        assert np.allclose(f[1], [0.25, 0, 0])

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        r = rng.standard_normal((50, 3))
        assert np.array_equal(coulomb_force(r), -coulomb_force(-r))


class TestRegularizedChargeForce:
    def test_outside_matches_coulomb(self, spec01):
        r = np.array([1.0, 0.0, 0.0])
        assert np.allclose(regularized_charge_force(r, spec01), [1, 0, 0])

    def test_seam_continuous_both_branches(self, spec01):
        # |r| = eps sits on both branches: r/eps^3 = r/|r|^3 = 100 there
        f = regularized_charge_force(np.array([0.1, 0.0, 0.0]), spec01)
        assert np.allclose(f, [100.0, 0.0, 0.0], rtol=1e-13)
        lo = regularized_charge_force(np.array([0.1 - 1e-9, 0, 0]), spec01)
        hi = regularized_charge_force(np.array([0.1 + 1e-9, 0, 0]), spec01)
        assert abs(lo[0] - hi[0]) < 1e-4

    def test_interior_linear(self, spec01):
        # r/eps^3 at |r| = eps/2: 0.05/1e-3 = 50
        f = regularized_charge_force(np.array([0.05, 0.0, 0.0]), spec01)
        assert np.allclose(f, [50.0, 0.0, 0.0], rtol=1e-13)

    def test_origin_is_zero(self, spec01):
        assert np.array_equal(regularized_charge_force(np.zeros(3), spec01),
                              np.zeros(3))

    def test_exact_tail_bitwise(self, spec01):
        """For |r| >= eps the regularized force is bit-identical to bare
        Coulomb (same ufunc operations, not merely close)."""
        rng = np.random.default_rng(1)
        r = rng.standard_normal((4000, 3))
        norms = np.linalg.norm(r, axis=1)
        r = r[norms >= spec01.epsilon_charge]
        assert len(r) > 3000
        f_reg = regularized_charge_force(r, spec01)
        f_bare = coulomb_force(r)
        assert np.array_equal(f_reg, f_bare)

    def test_antisymmetry(self, spec01):
        rng = np.random.default_rng(2)
        r = 0.3 * rng.standard_normal((200, 3))   # straddles eps
        assert np.array_equal(regularized_charge_force(r, spec01),
                              -regularized_charge_force(-r, spec01))

    def test_magnitude_profile(self, spec01):
        """|F| nondecreasing on (0, eps], nonincreasing on [eps, inf)."""
        eps = spec01.epsilon_charge
        d_in = np.linspace(1e-4, eps, 200)
        d_out = np.linspace(eps, 50.0, 200)
        f_in = np.linalg.norm(regularized_charge_force(
            np.c_[d_in, np.zeros_like(d_in), np.zeros_like(d_in)], spec01),
            axis=1)
        f_out = np.linalg.norm(regularized_charge_force(
            np.c_[d_out, np.zeros_like(d_out), np.zeros_like(d_out)], spec01),
            axis=1)
        assert np.all(np.diff(f_in) >= -1e-15)
        assert np.all(np.diff(f_out) <= 1e-15)

    def test_exact_mode_is_bare_coulomb(self):
        spec = KernelSpec(epsilon_charge=0.0, mode="exact")
        r = np.array([0.01, 0.0, 0.0])
        assert np.array_equal(regularized_charge_force(r, spec),
                              coulomb_force(r))


class TestRegularizedChargePotential:
    def test_outside(self, spec01):
        assert regularized_charge_potential(np.array([1.0, 0, 0]),
                                            spec01) == pytest.approx(1.0)

    def test_seam_value(self, spec01):
        # (3 eps^2 - eps^2) / (2 eps^3) = 1/eps = 10
        phi = regularized_charge_potential(np.array([0.1, 0.0, 0.0]), spec01)
        assert phi == pytest.approx(10.0, rel=1e-13)

    def test_center_value(self, spec01):
        # 3 eps^2 / (2 eps^3) = 3 / (2 eps) = 15
        phi = regularized_charge_potential(np.zeros(3), spec01)
        assert phi == pytest.approx(15.0, rel=1e-13)

    def test_gradient_matches_force(self, spec01):
        """-grad phi = F by central differences, <= 1e-6 at 20 random r."""
        rng = np.random.default_rng(3)
        pts = 0.4 * rng.standard_normal((20, 3))
        pts = pts[np.linalg.norm(pts, axis=1) > 2e-3]
        h = 1e-6
        for r in pts:
            grad = np.empty(3)
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                grad[k] = (regularized_charge_potential(r + e, spec01)
                           - regularized_charge_potential(r - e, spec01)) / (2 * h)
            f = regularized_charge_force(r, spec01)
            assert np.linalg.norm(-grad - f) <= 1e-6 * max(
                1.0, float(np.linalg.norm(f)))

    def test_distance_form_matches(self, spec01):
        d = np.array([0.02, 0.05, 0.1, 0.5, 2.0])
        r = np.c_[d, np.zeros_like(d), np.zeros_like(d)]
        assert np.allclose(charge_potential_from_distance(d, spec01),
                           regularized_charge_potential(r, spec01),
                           rtol=1e-14)


class TestSoftenedPlasmaKernel:
    def test_zero_softening_is_coulomb(self):
        spec = KernelSpec(epsilon_charge=0.1, epsilon_plasma=0.0)
        r = np.array([1.0, 0.0, 0.0])
        assert np.allclose(softened_plasma_force(r, spec), [1, 0, 0])

    def test_origin_finite_with_softening(self):
        spec = KernelSpec(epsilon_charge=0.1, epsilon_plasma=1.0)
        assert np.array_equal(softened_plasma_force(np.zeros(3), spec),
                              np.zeros(3))

    def test_unit_separation_with_unit_softening(self):
        # r / (|r|^2 + eps_p^2)^{3/2} = 1 / 2^{3/2}
        spec = KernelSpec(epsilon_charge=0.1, epsilon_plasma=1.0)
        f = softened_plasma_force(np.array([1.0, 0.0, 0.0]), spec)
        assert np.allclose(f, [2.0 ** -1.5, 0.0, 0.0], rtol=1e-14)

    def test_antisymmetry(self):
        spec = KernelSpec(epsilon_charge=0.1, epsilon_plasma=0.3)
        rng = np.random.default_rng(4)
        r = rng.standard_normal((100, 3))
        assert np.array_equal(softened_plasma_force(r, spec),
                              -softened_plasma_force(-r, spec))

    def test_gradient_matches_force(self):
        spec = KernelSpec(epsilon_charge=0.1, epsilon_plasma=0.2)
        rng = np.random.default_rng(5)
        h = 1e-6
        for r in rng.standard_normal((10, 3)):
            grad = np.empty(3)
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                grad[k] = (softened_plasma_potential(r + e, spec)
                           - softened_plasma_potential(r - e, spec)) / (2 * h)
            assert np.linalg.norm(-grad - softened_plasma_force(r, spec)) <= 1e-6

    def test_zero_softening_potential_singularity(self):
        spec = KernelSpec(epsilon_charge=0.1, epsilon_plasma=0.0)
        with pytest.raises(ValueError):
            softened_plasma_potential(np.zeros(3), spec)


class TestKernelSpec:
    def test_regularized_needs_positive_epsilon(self):
        with pytest.raises(ValueError):
            KernelSpec(epsilon_charge=0.0)
        with pytest.raises(ValueError):
            KernelSpec(epsilon_charge=-0.1)

    def test_negative_plasma_softening_rejected(self):
        with pytest.raises(ValueError):
            KernelSpec(epsilon_charge=0.1, epsilon_plasma=-1.0)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            KernelSpec(epsilon_charge=0.1, mode="smoothed")

    def test_exact_mode_allows_zero_epsilon(self):
        spec = KernelSpec(epsilon_charge=0.0, mode="exact")
        assert spec.epsilon_charge == 0.0
