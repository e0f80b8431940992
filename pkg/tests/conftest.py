"""Shared fixtures: hand-built and sampled states of various sizes."""
from __future__ import annotations

import numpy as np
import pytest

from vppc.kernels import KernelSpec
from vppc.sampling import InitialCondition, sample
from vppc.state import ChargeState, PlasmaEnsemble, SimState


@pytest.fixture
def spec01() -> KernelSpec:
    """Regularized plasma-charge kernel, eps = 0.1, no plasma softening."""
    return KernelSpec(epsilon_charge=0.1, epsilon_plasma=0.0)


@pytest.fixture
def spec_soft() -> KernelSpec:
    """Both regularisations active (eps = 0.1, eps_p = 0.05)."""
    return KernelSpec(epsilon_charge=0.1, epsilon_plasma=0.05)


def make_state(m: int, n_charges: int, seed: int = 0, *,
               v_scale: float = 1.0, box: float = 2.0,
               charge_span: float = 1.5, time: float = 0.0) -> SimState:
    """Random state with particles kept outside 0.3 of every charge."""
    rng = np.random.default_rng(seed)
    charges = []
    for a in range(n_charges):
        pos = charge_span * (rng.uniform(-1.0, 1.0, 3) if n_charges > 1
                             else np.zeros(3))
        charges.append(ChargeState(position=pos,
                                   velocity=0.2 * rng.standard_normal(3)))
    xi = np.array([c.position for c in charges]).reshape(-1, 3)
    pts = np.empty((m, 3))
    filled = 0
    while filled < m:
        x = rng.uniform(-box, box, (4 * m, 3))
        if len(xi):
            d2 = np.min(np.sum((x[:, None, :] - xi[None, :, :]) ** 2, axis=2),
                        axis=1)
            x = x[d2 >= 0.3 ** 2]
        take = min(len(x), m - filled)
        pts[filled:filled + take] = x[:take]
        filled += take
    vel = v_scale * rng.standard_normal((m, 3))
    w = np.full(m, 1.0 / m)
    return SimState(time=time, ensemble=PlasmaEnsemble(pts, vel, w),
                    charges=tuple(charges))


@pytest.fixture
def small_state() -> SimState:
    """64 particles, two charges."""
    return make_state(64, 2, seed=11)


@pytest.fixture
def two_charge_state() -> SimState:
    """No plasma: two unit charges at rest, distance 2 apart."""
    return SimState(
        time=0.0,
        ensemble=PlasmaEnsemble.empty(),
        charges=(
            ChargeState(position=np.array([-1.0, 0.0, 0.0]),
                        velocity=np.zeros(3)),
            ChargeState(position=np.array([1.0, 0.0, 0.0]),
                        velocity=np.zeros(3)),
        ),
    )


@pytest.fixture
def sampled_state() -> SimState:
    """Small sampled ensemble around two charges (deterministic)."""
    ic = InitialCondition(
        particle_count=128,
        vacuum_radius=0.3,
        spatial_shape="ball",
        spatial_extent=(2.0,),
        velocity_shape="uniform_ball",
        v_max=1.0,
        charges=(((-0.8, 0.0, 0.0), (0.0, 0.0, 0.0)),
                 ((0.8, 0.0, 0.0), (0.0, 0.0, 0.0))),
        seed=42,
    )
    return sample(ic)
