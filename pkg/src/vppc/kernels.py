"""Pair interaction kernels.

Three interaction types, all repulsive with unit coupling:

* charge-charge: bare Coulomb, force r/|r|^3 of one unit charge on another.
* plasma-charge: Coulomb regularised inside a radius ``epsilon_charge`` by
  the field of a uniformly charged sphere.  Outside the radius the force and
  potential are *identical* (bit for bit) to the bare kernel; inside, the
  force interpolates linearly to zero so force and potential are C^1 across
  the seam.
* plasma-plasma: Plummer-softened Coulomb with its own (typically much
  smaller) softening length ``epsilon_plasma``, which tames the sampling
  noise of the macroparticle discretisation.

All kernels accept arrays of displacement vectors with shape (..., 3) and
act elementwise on the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelSpec",
    "coulomb_force",
    "regularized_charge_force",
    "regularized_charge_potential",
    "softened_plasma_force",
    "softened_plasma_potential",
    "charge_potential_from_distance",
]

_MODES = ("regularized", "exact")


@dataclass(frozen=True)
class KernelSpec:
    """Regularisation parameters for the interaction kernels.

    ``mode="exact"`` switches the plasma-charge kernel to bare Coulomb and is
    meant for the reference/oracle paths only; production runs use
    ``"regularized"``.
    """

    epsilon_charge: float         # plasma-charge regularisation radius
    epsilon_plasma: float = 0.0   # plasma-plasma Plummer softening
    mode: str = "regularized"

    def __post_init__(self):
        object.__setattr__(self, "epsilon_charge", float(self.epsilon_charge))
        object.__setattr__(self, "epsilon_plasma", float(self.epsilon_plasma))
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.mode == "regularized" and not self.epsilon_charge > 0.0:
            raise ValueError(
                f"epsilon_charge must be > 0, got {self.epsilon_charge}"
            )
        if self.epsilon_charge < 0.0 or not np.isfinite(self.epsilon_charge):
            raise ValueError(f"bad epsilon_charge {self.epsilon_charge}")
        if self.epsilon_plasma < 0.0 or not np.isfinite(self.epsilon_plasma):
            raise ValueError(f"epsilon_plasma must be >= 0, got {self.epsilon_plasma}")


def _norms(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 3:
        raise ValueError(f"displacements must have shape (..., 3), got {r.shape}")
    return np.sqrt(np.einsum("...i,...i->...", r, r))


def coulomb_force(r: np.ndarray) -> np.ndarray:
    """Bare Coulomb force r/|r|^3 (repulsive, unit charges).

    Raises ValueError on a zero displacement: the bare kernel has no value
    there and the caller is expected to keep charges apart.
    """
    r = np.asarray(r, dtype=np.float64)
    nr = _norms(r)
    if np.any(nr == 0.0):
        raise ValueError("coulomb_force: zero displacement")
    return r * (nr ** -3.0)[..., None]


def regularized_charge_force(r: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Plasma-charge force: bare Coulomb outside epsilon_charge, linear inside.

    The outside branch evaluates exactly the same expression as
    ``coulomb_force``, so the two agree bitwise there.  The inside branch
    r/eps^3 is the field of a uniformly charged sphere of radius eps; force
    magnitude rises linearly from 0 at the centre to 1/eps^2 at the seam.
    """
    r = np.asarray(r, dtype=np.float64)
    if spec.mode == "exact":
        return coulomb_force(r)
    eps = spec.epsilon_charge
    nr = _norms(r)
    scale = np.empty_like(nr)
    out = nr >= eps
    scale[out] = nr[out] ** -3.0
    scale[~out] = eps ** -3.0
    return r * scale[..., None]


def regularized_charge_potential(r: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Potential matching ``regularized_charge_force`` (C^1 at the seam).

    1/|r| outside the regularisation radius, (3 eps^2 - |r|^2) / (2 eps^3)
    inside, so the value at the centre is finite (3/(2 eps)).
    """
    nr = _norms(np.asarray(r, dtype=np.float64))
    return charge_potential_from_distance(nr, spec)


def charge_potential_from_distance(d: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Same as ``regularized_charge_potential`` but from distances |r|.

    Diagnostics evaluate the pointwise energy from precomputed distance
    tables; this avoids rebuilding displacement vectors.
    """
    d = np.asarray(d, dtype=np.float64)
    if spec.mode == "exact":
        if np.any(d == 0.0):
            raise ValueError("charge potential: zero distance")
        return 1.0 / d
    eps = spec.epsilon_charge
    out = d >= eps
    phi = np.empty_like(d)
    phi[out] = 1.0 / d[out]
    din = d[~out]
    phi[~out] = (3.0 * eps * eps - din * din) / (2.0 * eps ** 3)
    return phi


def softened_plasma_force(r: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Plasma-plasma force r/(|r|^2 + epsilon_plasma^2)^{3/2}.

    With zero softening this is bare Coulomb and a zero displacement is an
    error; with positive softening the kernel is smooth everywhere and the
    force at r = 0 vanishes.
    """
    r = np.asarray(r, dtype=np.float64)
    ep2 = spec.epsilon_plasma ** 2
    r2 = np.einsum("...i,...i->...", r, r)
    if r.shape[-1] != 3:
        raise ValueError(f"displacements must have shape (..., 3), got {r.shape}")
    if ep2 == 0.0 and np.any(r2 == 0.0):
        raise ValueError("softened_plasma_force: zero displacement with zero softening")
    return r * ((r2 + ep2) ** -1.5)[..., None]


def softened_plasma_potential(r: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Pair potential 1/sqrt(|r|^2 + epsilon_plasma^2) for the plasma kernel."""
    r = np.asarray(r, dtype=np.float64)
    ep2 = spec.epsilon_plasma ** 2
    r2 = np.einsum("...i,...i->...", r, r)
    if ep2 == 0.0 and np.any(r2 == 0.0):
        raise ValueError("softened_plasma_potential: zero displacement with zero softening")
    return (r2 + ep2) ** -0.5
