"""Initial-data generation.

Draws an equal-weight macroparticle ensemble from a compactly supported
spatial shape with a vacuum island of radius delta_0 excised around every
point charge, and a compactly supported velocity distribution.  Both
supports being compact and the plasma vanishing near the charges are the
standing hypotheses of the model; the pointwise energy is then uniformly
bounded on the initial support, which seeds the window partition.

Sampling is plain batched rejection (shapes with excised balls have no
closed-form inverse) and is a pure, reproducible function of the
InitialCondition: same seed, same ensemble, bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kernels import KernelSpec
from .state import ChargeState, PlasmaEnsemble, SimState
from .diagnostics import compute_Q

__all__ = [
    "InitialCondition",
    "sample",
    "initial_Q",
    "mean_interparticle_spacing",
]

_SPATIAL_SHAPES = ("ball", "shell", "box")
_VELOCITY_SHAPES = ("uniform_ball", "truncated_maxwellian")

# give up when fewer than this fraction of position draws survives the
# vacuum islands (they have swallowed the support)
_MIN_ACCEPTANCE = 1e-3


def _vec3(x, name: str) -> tuple[float, float, float]:
    t = tuple(float(v) for v in x)
    if len(t) != 3 or not all(np.isfinite(t)):
        raise ValueError(f"{name} must be 3 finite floats, got {x!r}")
    return t


@dataclass(frozen=True)
class InitialCondition:
    """Recipe for the initial state.

    spatial_shape: "ball" (extent = (radius,)), "shell"
    (extent = (r_inner, r_outer)) or "box" (extent = half-widths
    (hx, hy, hz)), all centred at spatial_center.  velocity_shape:
    "uniform_ball" (speeds up to v_max) or "truncated_maxwellian"
    (isotropic normal with scale sigma, rejected above v_max).  Every
    particle keeps at least vacuum_radius (delta_0) clear of every charge.
    Charges are ((position, velocity), ...) triples of floats so the
    recipe itself stays hashable/comparable.
    """

    particle_count: int
    vacuum_radius: float
    spatial_shape: str = "ball"
    spatial_extent: tuple = (2.0,)
    spatial_center: tuple = (0.0, 0.0, 0.0)
    velocity_shape: str = "uniform_ball"
    v_max: float = 1.0
    sigma: float = 1.0
    charges: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "particle_count", int(self.particle_count))
        object.__setattr__(self, "vacuum_radius", float(self.vacuum_radius))
        object.__setattr__(self, "v_max", float(self.v_max))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "spatial_extent",
                           tuple(float(v) for v in self.spatial_extent))
        object.__setattr__(self, "spatial_center",
                           _vec3(self.spatial_center, "spatial_center"))
        object.__setattr__(self, "charges", tuple(
            (_vec3(p, "charge position"), _vec3(v, "charge velocity"))
            for p, v in self.charges))

        if self.particle_count < 1:
            raise ValueError(f"particle_count must be >= 1, got {self.particle_count}")
        if not self.vacuum_radius > 0.0:
            raise ValueError(f"vacuum_radius must be > 0, got {self.vacuum_radius}")
        if self.spatial_shape not in _SPATIAL_SHAPES:
            raise ValueError(f"spatial_shape must be one of {_SPATIAL_SHAPES}, "
                             f"got {self.spatial_shape!r}")
        ext = self.spatial_extent
        if self.spatial_shape == "ball":
            if len(ext) != 1 or not ext[0] > 0.0:
                raise ValueError(f"ball extent must be (radius,) with radius > 0, got {ext}")
        elif self.spatial_shape == "shell":
            if len(ext) != 2 or not 0.0 <= ext[0] < ext[1]:
                raise ValueError(f"shell extent must be (r_inner, r_outer) with "
                                 f"0 <= r_inner < r_outer, got {ext}")
        else:
            if len(ext) != 3 or not all(h > 0.0 for h in ext):
                raise ValueError(f"box extent must be positive half-widths "
                                 f"(hx, hy, hz), got {ext}")
        if self.velocity_shape not in _VELOCITY_SHAPES:
            raise ValueError(f"velocity_shape must be one of {_VELOCITY_SHAPES}, "
                             f"got {self.velocity_shape!r}")
        if self.v_max < 0.0 or not np.isfinite(self.v_max):
            raise ValueError(f"v_max must be finite and >= 0, got {self.v_max}")
        if self.velocity_shape == "truncated_maxwellian":
            if not self.sigma > 0.0:
                raise ValueError(f"sigma must be > 0, got {self.sigma}")
            if not self.v_max > 0.0:
                raise ValueError("truncated_maxwellian needs v_max > 0")
        xi = np.array([p for p, _ in self.charges], dtype=float)
        if len(xi) >= 2:
            d = xi[:, None, :] - xi[None, :, :]
            r2 = np.einsum("abi,abi->ab", d, d)
            iu = np.triu_indices(len(xi), k=1)
            if np.any(r2[iu] == 0.0):
                raise ValueError("charge initial positions must be pairwise distinct")

    @property
    def n_charges(self) -> int:
        return len(self.charges)


def _draw_positions(ic: InitialCondition, rng: np.random.Generator,
                    n: int) -> np.ndarray:
    center = np.array(ic.spatial_center)
    if ic.spatial_shape == "box":
        h = np.array(ic.spatial_extent)
        return center + rng.uniform(-h, h, size=(n, 3))
    # ball and shell: isotropic direction, radius from the volume CDF
    direction = rng.normal(size=(n, 3))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    direction /= norms
    u = rng.uniform(size=n)
    if ic.spatial_shape == "ball":
        r = ic.spatial_extent[0] * u ** (1.0 / 3.0)
    else:
        r_in, r_out = ic.spatial_extent
        r = (r_in ** 3 + u * (r_out ** 3 - r_in ** 3)) ** (1.0 / 3.0)
    return center + direction * r[:, None]


def _draw_velocities(ic: InitialCondition, rng: np.random.Generator,
                     n: int) -> np.ndarray:
    if ic.velocity_shape == "uniform_ball":
        if ic.v_max == 0.0:
            return np.zeros((n, 3))
        direction = rng.normal(size=(n, 3))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        direction /= norms
        u = rng.uniform(size=n)
        return direction * (ic.v_max * u ** (1.0 / 3.0))[:, None]
    # truncated maxwellian: isotropic normal, rejected above v_max
    out = np.empty((n, 3))
    filled = 0
    drawn = 0
    while filled < n:
        m = max(2 * (n - filled), 256)
        v = rng.normal(scale=ic.sigma, size=(m, 3))
        keep = np.einsum("ij,ij->i", v, v) <= ic.v_max ** 2
        v = v[keep]
        drawn += m
        take = min(len(v), n - filled)
        out[filled:filled + take] = v[:take]
        filled += take
        if drawn >= max(10 * n, 10000) and filled / drawn < _MIN_ACCEPTANCE:
            raise ConfigError(
                f"velocity rejection acceptance {filled / drawn:.2e} < {_MIN_ACCEPTANCE}: "
                f"v_max={ic.v_max} is far below sigma={ic.sigma}")
    return out


def sample(ic: InitialCondition) -> SimState:
    """Draw the initial state described by ``ic``.

    M equal-weight (1/M) particles, positions rejection-sampled from the
    spatial shape minus the vacuum balls B(xi_a, delta_0), velocities from
    the velocity shape.  Raises ConfigError when the vacuum islands swallow
    the support (acceptance below 1e-3).
    """
    rng = np.random.default_rng(ic.seed)
    m = ic.particle_count
    xi0 = np.array([p for p, _ in ic.charges], dtype=float).reshape(-1, 3)

    accepted = np.empty((m, 3))
    filled = 0
    drawn = 0
    while filled < m:
        n = max(2 * (m - filled), 1024)
        x = _draw_positions(ic, rng, n)
        drawn += n
        if len(xi0):
            d = x[:, None, :] - xi0[None, :, :]
            r2 = np.einsum("jak,jak->ja", d, d)
            keep = np.min(r2, axis=1) >= ic.vacuum_radius ** 2
            x = x[keep]
        take = min(len(x), m - filled)
        accepted[filled:filled + take] = x[:take]
        filled += take
        if drawn >= max(10 * m, 10000) and filled / drawn < _MIN_ACCEPTANCE:
            raise ConfigError(
                f"position rejection acceptance {filled / drawn:.2e} < "
                f"{_MIN_ACCEPTANCE}: vacuum islands (delta_0={ic.vacuum_radius}) "
                f"swallow the {ic.spatial_shape} support")

    velocities = _draw_velocities(ic, rng, m)
    weights = np.full(m, 1.0 / m)
    charges = tuple(ChargeState(position=np.array(p), velocity=np.array(v))
                    for p, v in ic.charges)
    state = SimState(time=0.0,
                     ensemble=PlasmaEnsemble(accepted, velocities, weights),
                     charges=charges)
    state.validate()
    return state


def initial_Q(state: SimState, k1: float, spec: KernelSpec) -> float:
    """Q0 = sup sqrt(h) over the sampled support (finite by construction:
    speeds are capped, distances to charges at least delta_0)."""
    return compute_Q(state, k1, spec)


def mean_interparticle_spacing(ensemble: PlasmaEnsemble) -> float:
    """Bounding-box spacing surrogate (volume / M)^{1/3}.

    Default plasma-plasma softening scale: smooths sub-spacing particle
    noise without biasing the resolved field.
    """
    m = len(ensemble)
    if m < 2:
        raise ValueError("spacing needs at least two particles")
    pos = ensemble.positions
    extent = pos.max(axis=0) - pos.min(axis=0)
    vol = float(np.prod(extent))
    if vol <= 0.0:
        raise ValueError("degenerate (coplanar) ensemble has no volume")
    return (vol / m) ** (1.0 / 3.0)
