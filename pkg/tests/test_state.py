"""State containers and geometric observables."""
from __future__ import annotations

import numpy as np
import pytest

from vppc.state import (
    ChargeState,
    Macroparticle,
    PlasmaEnsemble,
    SimState,
    max_speed,
    min_charge_distance,
    min_charge_separation,
)

from conftest import make_state


def bare_state(charges=(), m: int = 0, seed: int = 0) -> SimState:
    if m:
        rng = np.random.default_rng(seed)
        ens = PlasmaEnsemble(rng.standard_normal((m, 3)),
                             rng.standard_normal((m, 3)),
                             np.full(m, 1.0 / m))
    else:
        ens = PlasmaEnsemble.empty()
    return SimState(time=0.0, ensemble=ens, charges=tuple(charges))


class TestContainers:
    def test_macroparticle_validation(self):
        with pytest.raises(ValueError):
            Macroparticle(position=np.zeros(3), velocity=np.zeros(3),
                          weight=-1.0)
        with pytest.raises(ValueError):
            Macroparticle(position=np.array([np.nan, 0, 0]),
                          velocity=np.zeros(3), weight=0.5)

    def test_charge_validation(self):
        with pytest.raises(ValueError):
            ChargeState(position=np.array([np.inf, 0, 0]),
                        velocity=np.zeros(3))

    def test_ensemble_shape_mismatch(self):
        with pytest.raises(ValueError):
            PlasmaEnsemble(np.zeros((3, 3)), np.zeros((2, 3)), np.ones(3))

    def test_ensemble_negative_weight(self):
        with pytest.raises(ValueError):
            PlasmaEnsemble(np.zeros((2, 3)), np.zeros((2, 3)),
                           np.array([0.5, -0.5]))

    def test_empty_ensemble(self):
        ens = PlasmaEnsemble.empty()
        assert len(ens) == 0
        assert ens.total_weight == 0.0

    def test_particle_accessor(self):
        ens = PlasmaEnsemble(np.array([[1.0, 2, 3]]), np.array([[4.0, 5, 6]]),
                             np.array([0.25]))
        p = ens.particle(0)
        assert np.array_equal(p.position, [1, 2, 3])
        assert np.array_equal(p.velocity, [4, 5, 6])
        assert p.weight == 0.25

    def test_no_charges_accepted(self):
        state = bare_state(m=5)
        state.validate()
        assert state.n_charges == 0
        assert state.charge_positions.shape == (0, 3)

    def test_nonfinite_time_rejected(self):
        state = bare_state(m=1)
        with pytest.raises(ValueError):
            SimState(time=np.inf, ensemble=state.ensemble, charges=())

    def test_validate_rejects_coincident_particle(self):
        ens = PlasmaEnsemble(np.array([[1.0, 0, 0]]), np.zeros((1, 3)),
                             np.array([1.0]))
        s = SimState(time=0.0, ensemble=ens,
                     charges=(ChargeState(np.array([1.0, 0, 0]),
                                          np.zeros(3)),))
        with pytest.raises(ValueError):
            s.validate()


class TestMinChargeDistance:
    def test_single_pair(self):
        s = bare_state(charges=(ChargeState(np.zeros(3), np.zeros(3)),))
        ens = PlasmaEnsemble(np.array([[1.0, 0, 0]]), np.zeros((1, 3)),
                             np.array([1.0]))
        s = SimState(time=0.0, ensemble=ens, charges=s.charges)
        assert min_charge_distance(s) == pytest.approx(1.0)

    def test_takes_minimum(self):
        charges = (ChargeState(np.array([0.0, 0, 0]), np.zeros(3)),
                   ChargeState(np.array([10.0, 0, 0]), np.zeros(3)))
        ens = PlasmaEnsemble(np.array([[2.0, 0, 0], [5.0, 0, 0]]),
                             np.zeros((2, 3)), np.array([0.5, 0.5]))
        s = SimState(time=0.0, ensemble=ens, charges=charges)
        assert min_charge_distance(s) == pytest.approx(2.0)

    def test_matches_brute_force(self):
        s = make_state(40, 3, seed=7)
        xs = s.ensemble.positions
        best = min(float(np.linalg.norm(x - c.position))
                   for x in xs for c in s.charges)
        assert min_charge_distance(s) == pytest.approx(best, rel=1e-14)

    def test_empty_ensemble_raises(self):
        s = bare_state(charges=(ChargeState(np.zeros(3), np.zeros(3)),))
        with pytest.raises(ValueError):
            min_charge_distance(s)


class TestMinChargeSeparation:
    def test_two_charges(self):
        s = bare_state(charges=(ChargeState(np.zeros(3), np.zeros(3)),
                                ChargeState(np.array([1.0, 0, 0]),
                                            np.zeros(3))))
        assert min_charge_separation(s) == pytest.approx(1.0)

    def test_unit_triangle(self):
        pts = [np.array([0.0, 0, 0]), np.array([1.0, 0, 0]),
               np.array([0.5, np.sqrt(3) / 2, 0.0])]
        s = bare_state(charges=tuple(ChargeState(p, np.zeros(3))
                                     for p in pts))
        assert min_charge_separation(s) == pytest.approx(1.0, rel=1e-14)

    def test_matches_brute_force(self):
        s = make_state(1, 5, seed=9)
        xi = s.charge_positions
        best = min(float(np.linalg.norm(xi[a] - xi[b]))
                   for a in range(5) for b in range(a + 1, 5))
        assert min_charge_separation(s) == pytest.approx(best, rel=1e-14)

    def test_single_charge_gives_inf(self):
        s = bare_state(charges=(ChargeState(np.zeros(3), np.zeros(3)),))
        assert min_charge_separation(s) == np.inf


class TestMaxSpeed:
    def test_pythagorean(self):
        ens = PlasmaEnsemble(np.zeros((1, 3)), np.array([[3.0, 4.0, 0.0]]),
                             np.array([1.0]))
        s = SimState(time=0.0, ensemble=ens, charges=())
        assert max_speed(s) == pytest.approx(5.0)

    def test_all_at_rest(self):
        ens = PlasmaEnsemble(np.zeros((3, 3)), np.zeros((3, 3)),
                             np.full(3, 1 / 3))
        s = SimState(time=0.0, ensemble=ens,
                     charges=(ChargeState(np.array([1.0, 0, 0]),
                                          np.zeros(3)),))
        assert max_speed(s) == 0.0

    def test_includes_charges(self):
        ens = PlasmaEnsemble(np.zeros((1, 3)), np.array([[1.0, 0, 0]]),
                             np.array([1.0]))
        s = SimState(time=0.0, ensemble=ens,
                     charges=(ChargeState(np.zeros(3),
                                          np.array([0.0, 7.0, 0.0])),))
        assert max_speed(s) == pytest.approx(7.0)

    def test_matches_scan(self):
        s = make_state(30, 2, seed=3)
        speeds = [float(np.linalg.norm(v)) for v in s.ensemble.velocities]
        speeds += [float(np.linalg.norm(c.velocity)) for c in s.charges]
        assert max_speed(s) == pytest.approx(max(speeds), rel=1e-14)


def test_total_weight_after_sampling(sampled_state):
    assert sampled_state.ensemble.total_weight == pytest.approx(
        1.0, abs=1e-12)
