"""Phase-space state containers for the plasma + point-charge system.

The plasma is represented by a finite ensemble of macroparticles
(characteristic samples of the phase-space density, each carrying a fixed
weight), the point charges by position/velocity pairs.  All containers are
immutable value snapshots: integrators return new states instead of mutating
in place.  Units are nondimensional with unit charges and masses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Macroparticle",
    "ChargeState",
    "PlasmaEnsemble",
    "SimState",
    "min_charge_distance",
    "min_charge_separation",
    "max_speed",
]


def _as_point(x, name: str) -> np.ndarray:
    # always copy: containers own their storage (callers may reuse buffers)
    a = np.array(x, dtype=np.float64, order="C")
    if a.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    a.flags.writeable = False
    return a


def _as_points(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=np.float64, order="C")
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (M, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Macroparticle:
    """One weighted characteristic sample of the plasma density."""

    position: np.ndarray  # (3,)
    velocity: np.ndarray  # (3,)
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position, "position"))
        object.__setattr__(self, "velocity", _as_point(self.velocity, "velocity"))
        object.__setattr__(self, "weight", float(self.weight))
        if not np.isfinite(self.weight) or self.weight < 0.0:
            raise ValueError(f"weight must be finite and >= 0, got {self.weight}")


@dataclass(frozen=True)
class ChargeState:
    """Position and velocity of one point charge (unit charge, unit mass)."""

    position: np.ndarray  # (3,)
    velocity: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position, "position"))
        object.__setattr__(self, "velocity", _as_point(self.velocity, "velocity"))


@dataclass(frozen=True)
class PlasmaEnsemble:
    """Macroparticle ensemble stored as flat arrays (struct of arrays).

    Positions and velocities are (M, 3), weights (M,).  The ensemble
    represents a nonnegative phase-space density of total charge
    ``total_weight``; samplers normalise the weights to sum to one.
    """

    positions: np.ndarray   # (M, 3)
    velocities: np.ndarray  # (M, 3)
    weights: np.ndarray     # (M,)

    def __post_init__(self):
        pos = _as_points(self.positions, "positions")
        vel = _as_points(self.velocities, "velocities")
        w = np.array(self.weights, dtype=np.float64, order="C")
        if w.ndim != 1:
            raise ValueError(f"weights must have shape (M,), got {w.shape}")
        if not (len(pos) == len(vel) == len(w)):
            raise ValueError(
                f"length mismatch: {len(pos)} positions, {len(vel)} velocities, "
                f"{len(w)} weights"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("weights must be finite and >= 0")
        w.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def particle(self, j: int) -> Macroparticle:
        return Macroparticle(self.positions[j], self.velocities[j], self.weights[j])

    @classmethod
    def empty(cls) -> "PlasmaEnsemble":
        z = np.zeros((0, 3))
        return cls(z, z.copy(), np.zeros(0))


@dataclass(frozen=True)
class SimState:
    """Full system state at one instant: plasma ensemble plus point charges."""

    time: float
    ensemble: PlasmaEnsemble
    charges: tuple[ChargeState, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "charges", tuple(self.charges))
        if not np.isfinite(self.time):
            raise ValueError("time must be finite")
        for c in self.charges:
            if not isinstance(c, ChargeState):
                raise ValueError("charges must be ChargeState instances")

    @property
    def n_charges(self) -> int:
        return len(self.charges)

    @property
    def charge_positions(self) -> np.ndarray:
        """Charge positions stacked as an (N, 3) array."""
        if not self.charges:
            return np.zeros((0, 3))
        return np.stack([c.position for c in self.charges])

    @property
    def charge_velocities(self) -> np.ndarray:
        if not self.charges:
            return np.zeros((0, 3))
        return np.stack([c.velocity for c in self.charges])

    def validate(self) -> None:
        """Check that no macroparticle sits exactly on a point charge.

        The regularised force is finite there, but a coincident pair is
        outside the model (the plasma density must vanish on the charge
        trajectories), so IO boundaries reject such states.
        """
        if len(self.ensemble) == 0 or self.n_charges == 0:
            return
        xi = self.charge_positions  # (N, 3)
        d = self.ensemble.positions[:, None, :] - xi[None, :, :]  # (M, N, 3)
        r2 = np.einsum("ijk,ijk->ij", d, d)
        if np.any(r2 == 0.0):
            j, a = np.argwhere(r2 == 0.0)[0]
            raise ValueError(
                f"particle {j} coincides with charge {a} at t={self.time}"
            )


def _particle_charge_dist2(state: SimState) -> np.ndarray:
    """Squared particle-charge distances, shape (M, N)."""
    d = state.ensemble.positions[:, None, :] - state.charge_positions[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def min_charge_distance(state: SimState) -> float:
    """Smallest distance between any macroparticle and any point charge."""
    if len(state.ensemble) == 0:
        raise ValueError("min_charge_distance: empty plasma ensemble")
    if state.n_charges == 0:
        raise ValueError("min_charge_distance: no point charges")
    return float(np.sqrt(np.min(_particle_charge_dist2(state))))


def min_charge_separation(state: SimState) -> float:
    """Smallest pairwise distance among the point charges (inf for N < 2)."""
    n = state.n_charges
    if n < 2:
        return float("inf")
    xi = state.charge_positions
    d = xi[:, None, :] - xi[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    iu = np.triu_indices(n, k=1)
    return float(np.sqrt(np.min(r2[iu])))


def max_speed(state: SimState) -> float:
    """Largest speed over macroparticles and charges (0 for an empty state)."""
    best = 0.0
    if len(state.ensemble) > 0:
        v2 = np.einsum("ij,ij->i", state.ensemble.velocities, state.ensemble.velocities)
        best = float(np.sqrt(np.max(v2)))
    for c in state.charges:
        best = max(best, float(np.linalg.norm(c.velocity)))
    return best
