"""Self-consistent field evaluation.

The plasma field (Plummer-softened, from the macroparticle ensemble) can be
summed either directly at O(M^2) or through a monopole Barnes-Hut octree at
O(M log M).  The plasma <-> charge coupling always uses the sphere-regularised
kernel in both directions, so the discrete system is exactly Hamiltonian;
charges among themselves interact through the bare Coulomb kernel.

Direct mode sums sources in index order per target and is bit-reproducible;
tree mode changes the summation structure with theta and the tree layout, so
its output is reproducible for a fixed configuration but not comparable at
the bit level across theta or leaf-capacity choices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fastsum
from .kernels import KernelSpec
from .state import PlasmaEnsemble, SimState

__all__ = [
    "FieldSolverConfig",
    "Octree",
    "OctreeNode",
    "build_octree",
    "plasma_field_direct",
    "plasma_field_tree",
    "plasma_field",
    "charge_field",
    "plasma_field_at_charges",
    "field_on_charge",
    "static_field_bound",
    "static_field_bound_grid",
]

_METHODS = ("direct", "barnes_hut")
_MAX_DEPTH = 48


@dataclass(frozen=True)
class FieldSolverConfig:
    """How to evaluate the plasma field."""

    kernel: KernelSpec
    method: str = "direct"
    theta: float = 0.5        # opening criterion: accept cell when 2s/d < theta
    leaf_capacity: int = 8

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not (self.theta >= 0.0 and np.isfinite(self.theta)):
            raise ValueError(f"theta must be finite and >= 0, got {self.theta}")
        if self.leaf_capacity < 1:
            raise ValueError(f"leaf_capacity must be >= 1, got {self.leaf_capacity}")


@dataclass(frozen=True)
class Octree:
    """Array-encoded octree over a weighted point set.

    Nodes are stored breadth-ish (children always after their parent, the
    eight children of a split contiguous).  ``perm`` maps leaf-slot order
    back to original particle indices; ``positions``/``weights`` are the
    particle data in leaf-slot order.
    """

    center: np.ndarray        # (K, 3) geometric cube centers
    half_width: np.ndarray    # (K,)
    weight: np.ndarray        # (K,) total source weight per node
    centroid: np.ndarray      # (K, 3) weight centroid (cube center if empty)
    first_child: np.ndarray   # (K,) index of first of 8 children, -1 for leaf
    start: np.ndarray         # (K,) first leaf slot of the node's range
    count: np.ndarray         # (K,) number of particles in the node's range
    positions: np.ndarray     # (M, 3) particle positions in leaf-slot order
    weights: np.ndarray       # (M,)
    perm: np.ndarray          # (M,) original index per leaf slot

    @property
    def n_nodes(self) -> int:
        return len(self.half_width)

    def node(self, i: int) -> "OctreeNode":
        return OctreeNode(self, int(i))

    @property
    def root(self) -> "OctreeNode":
        return OctreeNode(self, 0)


class OctreeNode:
    """View of one octree cell."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: Octree, index: int):
        self.tree = tree
        self.index = index

    @property
    def center(self) -> np.ndarray:
        return self.tree.center[self.index]

    @property
    def half_width(self) -> float:
        return float(self.tree.half_width[self.index])

    @property
    def weight(self) -> float:
        return float(self.tree.weight[self.index])

    @property
    def centroid(self) -> np.ndarray:
        return self.tree.centroid[self.index]

    @property
    def is_leaf(self) -> bool:
        return self.tree.first_child[self.index] < 0

    @property
    def n_particles(self) -> int:
        return int(self.tree.count[self.index])

    def children(self) -> tuple["OctreeNode", ...]:
        fc = int(self.tree.first_child[self.index])
        if fc < 0:
            return ()
        return tuple(OctreeNode(self.tree, fc + c) for c in range(8))

    def particle_indices(self) -> np.ndarray:
        """Original indices of the particles in this cell."""
        s = int(self.tree.start[self.index])
        n = int(self.tree.count[self.index])
        return self.tree.perm[s:s + n]


def build_octree(positions: np.ndarray, weights: np.ndarray,
                 leaf_capacity: int = 8) -> Octree:
    """Build a cubic octree by repeated octant splits.

    Splitting stops at ``leaf_capacity`` particles, at a depth cap, or when a
    cell has collapsed to zero extent (coincident points), whichever comes
    first, so the build terminates on any input.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    m = len(positions)
    perm = np.arange(m, dtype=np.int64)

    if m > 0:
        lo = positions.min(axis=0)
        hi = positions.max(axis=0)
        center0 = 0.5 * (lo + hi)
        half0 = float(np.max(hi - lo)) * 0.5
        half0 = max(half0, 1e-12) * (1.0 + 1e-9)
    else:
        center0 = np.zeros(3)
        half0 = 1.0

    centers = [center0]
    halves = [half0]
    first_child = [-1]
    starts = [0]
    counts = [m]

    # (node id, depth) work stack; children are appended contiguously.
    stack = [(0, 0)]
    while stack:
        nid, depth = stack.pop()
        s = starts[nid]
        n = counts[nid]
        if n <= leaf_capacity or depth >= _MAX_DEPTH or halves[nid] <= 1e-14 * half0:
            continue
        idx = perm[s:s + n]
        pts = positions[idx]
        c = centers[nid]
        code = ((pts[:, 0] > c[0]).astype(np.int64)
                + 2 * (pts[:, 1] > c[1]).astype(np.int64)
                + 4 * (pts[:, 2] > c[2]).astype(np.int64))
        order = np.argsort(code, kind="stable")
        perm[s:s + n] = idx[order]
        octant_counts = np.bincount(code, minlength=8)
        fc = len(centers)
        first_child[nid] = fc
        h = halves[nid] * 0.5
        off = s
        for q in range(8):
            dq = np.array([h if q & 1 else -h,
                           h if q & 2 else -h,
                           h if q & 4 else -h])
            centers.append(c + dq)
            halves.append(h)
            first_child.append(-1)
            starts.append(off)
            cq = int(octant_counts[q])
            counts.append(cq)
            if cq > leaf_capacity:
                stack.append((fc + q, depth + 1))
            off += cq

    center = np.asarray(centers)
    half = np.asarray(halves, dtype=np.float64)
    first_child = np.asarray(first_child, dtype=np.int64)
    start = np.asarray(starts, dtype=np.int64)
    count = np.asarray(counts, dtype=np.int64)

    ppos = positions[perm]
    pw = weights[perm]
    # Prefix sums give every node's weight and first moment in O(1) each.
    wsum = np.concatenate(([0.0], np.cumsum(pw)))
    msum = np.concatenate((np.zeros((1, 3)), np.cumsum(pw[:, None] * ppos, axis=0)))
    node_w = wsum[start + count] - wsum[start]
    node_m = msum[start + count] - msum[start]
    centroid = center.copy()
    nz = node_w > 0.0
    centroid[nz] = node_m[nz] / node_w[nz, None]

    return Octree(center=center, half_width=half, weight=node_w,
                  centroid=centroid, first_child=first_child,
                  start=start, count=count,
                  positions=np.ascontiguousarray(ppos),
                  weights=np.ascontiguousarray(pw), perm=perm)


def _check_targets(targets: np.ndarray) -> np.ndarray:
    t = np.ascontiguousarray(targets, dtype=np.float64)
    single = t.ndim == 1
    if single:
        t = t[None, :]
    if t.ndim != 2 or t.shape[1] != 3:
        raise ValueError(f"targets must have shape (T, 3), got {targets.shape}")
    return t


def _plasma_direct_raw(targets: np.ndarray, positions: np.ndarray,
                       weights: np.ndarray, ep2: float,
                       self_targets: bool) -> np.ndarray:
    """Core direct sum on raw arrays (shared by public and hot-loop paths)."""
    if len(positions) == 0:
        return np.zeros_like(targets)
    if ep2 > 0.0:
        # Plummer self term is exactly zero, no exclusion needed
        return fastsum.plummer_field(targets, positions, weights, ep2)
    d = targets[:, None, :] - positions[None, :, :]  # (T, M, 3)
    r2 = np.einsum("tmi,tmi->tm", d, d)
    if self_targets:
        np.fill_diagonal(r2, np.inf)
    if np.any(r2 == 0.0):
        ti, j = np.argwhere(r2 == 0.0)[0]
        raise ValueError(
            f"zero distance between target {ti} and particle {j} "
            "with zero plasma softening")
    return np.einsum("tm,tmi->ti", weights[None, :] * r2 ** -1.5, d)


def plasma_field_direct(targets: np.ndarray, ensemble: PlasmaEnsemble,
                        spec: KernelSpec, *, self_targets: bool = False) -> np.ndarray:
    """Direct O(T*M) Plummer-softened field of the ensemble at the targets.

    With ``self_targets=True`` the targets are the ensemble's own positions
    and row i skips its own source term (automatic for positive softening,
    where the self term is exactly zero; enforced by index for zero
    softening).  A zero distance between *distinct* bodies with zero
    softening is a domain error.
    """
    t = _check_targets(targets)
    single = np.asarray(targets).ndim == 1
    if self_targets and t.shape[0] != len(ensemble):
        raise ValueError("self_targets=True requires one target per particle")
    out = _plasma_direct_raw(t, ensemble.positions, ensemble.weights,
                             spec.epsilon_plasma ** 2, self_targets)
    return out[0] if single else out


def plasma_field_tree(targets: np.ndarray, ensemble: PlasmaEnsemble,
                      config: FieldSolverConfig, *, self_targets: bool = False,
                      tree: Octree | None = None) -> np.ndarray:
    """Barnes-Hut approximation of ``plasma_field_direct``.

    theta = 0 opens every cell and reproduces the direct sum up to summation
    order.  An existing tree over the same ensemble may be passed to amortise
    the build across evaluations at one time level.
    """
    t = _check_targets(targets)
    single = np.asarray(targets).ndim == 1
    if self_targets and t.shape[0] != len(ensemble):
        raise ValueError("self_targets=True requires one target per particle")
    if len(ensemble) == 0:
        out = np.zeros_like(t)
        return out[0] if single else out
    if tree is None:
        tree = build_octree(ensemble.positions, ensemble.weights,
                            config.leaf_capacity)
    if self_targets:
        self_idx = np.arange(len(ensemble), dtype=np.int64)
    else:
        self_idx = np.full(t.shape[0], -1, dtype=np.int64)
    ep2 = config.kernel.epsilon_plasma ** 2
    out, bad = fastsum.tree_field(
        t, self_idx, tree.centroid, tree.half_width, tree.weight,
        tree.first_child, tree.start, tree.count,
        tree.positions, tree.weights, tree.perm,
        float(config.theta), ep2)
    if ep2 == 0.0 and np.any(bad >= 0):
        ti = int(np.argmax(bad >= 0))
        raise ValueError(
            f"zero distance between target {ti} and particle {int(bad[ti])} "
            "with zero plasma softening"
        )
    return out[0] if single else out


def plasma_field(targets: np.ndarray, ensemble: PlasmaEnsemble,
                 config: FieldSolverConfig, *, self_targets: bool = False,
                 tree: Octree | None = None) -> np.ndarray:
    """Dispatch to the direct or tree solver per the configuration."""
    if config.method == "direct":
        return plasma_field_direct(targets, ensemble, config.kernel,
                                   self_targets=self_targets)
    return plasma_field_tree(targets, ensemble, config,
                             self_targets=self_targets, tree=tree)


# --- trusted array-level entry points (hot loop; no shape validation) ---


def _plasma_accel_raw(targets: np.ndarray, positions: np.ndarray,
                      weights: np.ndarray, config: FieldSolverConfig,
                      self_targets: bool) -> np.ndarray:
    """plasma_field on raw arrays; assumes well-formed inputs."""
    ep2 = config.kernel.epsilon_plasma ** 2
    if len(positions) == 0:
        return np.zeros_like(targets)
    if config.method == "direct":
        return _plasma_direct_raw(targets, positions, weights, ep2, self_targets)
    tree = build_octree(positions, weights, config.leaf_capacity)
    if self_targets:
        self_idx = np.arange(len(positions), dtype=np.int64)
    else:
        self_idx = np.full(targets.shape[0], -1, dtype=np.int64)
    out, bad = fastsum.tree_field(
        targets, self_idx, tree.centroid, tree.half_width, tree.weight,
        tree.first_child, tree.start, tree.count,
        tree.positions, tree.weights, tree.perm,
        float(config.theta), ep2)
    if ep2 == 0.0 and np.any(bad >= 0):
        ti = int(np.argmax(bad >= 0))
        raise ValueError(
            f"zero distance between target {ti} and particle {int(bad[ti])} "
            "with zero plasma softening")
    return out


_UNIT_WEIGHTS: dict[int, np.ndarray] = {}


def _unit_weights(n: int) -> np.ndarray:
    w = _UNIT_WEIGHTS.get(n)
    if w is None:
        w = np.ones(n)
        w.flags.writeable = False
        _UNIT_WEIGHTS[n] = w
    return w


def _charge_accel_raw(targets: np.ndarray, xi: np.ndarray,
                      spec: KernelSpec) -> np.ndarray:
    """Regularised charge field at raw target points."""
    if len(xi) == 0:
        return np.zeros_like(targets)
    eps = 0.0 if spec.mode == "exact" else spec.epsilon_charge
    out = fastsum.sphere_field(targets, xi, _unit_weights(len(xi)), eps)
    if eps == 0.0 and not np.all(np.isfinite(out)):
        raise ValueError("charge field: target coincides with a charge in exact mode")
    return out


def _plasma_at_charges_raw(xi: np.ndarray, positions: np.ndarray,
                           weights: np.ndarray, spec: KernelSpec) -> np.ndarray:
    if len(xi) == 0 or len(positions) == 0:
        return np.zeros((len(xi), 3))
    eps = 0.0 if spec.mode == "exact" else spec.epsilon_charge
    return fastsum.sphere_field(xi, positions, weights, eps)


def _charge_charge_raw(xi: np.ndarray) -> np.ndarray:
    """Bare mutual Coulomb acceleration among charges, (N, 3)."""
    n = len(xi)
    if n < 2:
        return np.zeros((n, 3))
    d = xi[:, None, :] - xi[None, :, :]
    r2 = np.einsum("abi,abi->ab", d, d)
    np.fill_diagonal(r2, np.inf)
    if np.any(r2 == 0.0):
        a, b = np.argwhere(r2 == 0.0)[0]
        raise ValueError(f"charges {a} and {b} coincide")
    return np.einsum("ab,abi->ai", r2 ** -1.5, d)


def charge_field(targets: np.ndarray, state: SimState,
                 spec: KernelSpec) -> np.ndarray:
    """Field of all point charges at arbitrary points (regularised kernel)."""
    t = _check_targets(targets)
    single = np.asarray(targets).ndim == 1
    out = _charge_accel_raw(t, np.ascontiguousarray(state.charge_positions), spec)
    return out[0] if single else out


def plasma_field_at_charges(state: SimState, spec: KernelSpec) -> np.ndarray:
    """Plasma field at every charge position, (N, 3).

    Uses the same sphere-regularised kernel the particles feel from the
    charges, so the mutual coupling conserves momentum and energy exactly;
    the charge never sees the singular bare kernel.
    """
    return _plasma_at_charges_raw(np.ascontiguousarray(state.charge_positions),
                                  state.ensemble.positions,
                                  state.ensemble.weights, spec)


def _bare_charge_charge(state: SimState) -> np.ndarray:
    """Bare Coulomb field on each charge from all the other charges, (N, 3)."""
    return _charge_charge_raw(state.charge_positions)


def field_on_charge(alpha: int, state: SimState,
                    config: FieldSolverConfig) -> np.ndarray:
    """Total field driving charge alpha: plasma plus the other charges."""
    n = state.n_charges
    if not 0 <= alpha < n:
        raise ValueError(f"charge index {alpha} out of range for N={n}")
    plasma = plasma_field_at_charges(state, config.kernel)[alpha]
    return plasma + _bare_charge_charge(state)[alpha]


def static_field_bound(ensemble: PlasmaEnsemble, x: np.ndarray, R: float,
                       spec: KernelSpec) -> float:
    """Velocity-filtered inverse-square moment sum_{|v_j| < R} w_j/(d^2 + ep^2).

    Discrete stand-in for the inverse-square density moment of the slice of
    the plasma below speed R; its growth in R is what the static bound
    monitor fits.
    """
    return float(static_field_bound_grid(ensemble, np.asarray(x)[None, :], R, spec)[0])


def static_field_bound_grid(ensemble: PlasmaEnsemble, probes: np.ndarray,
                            R: float, spec: KernelSpec) -> np.ndarray:
    """``static_field_bound`` evaluated at a batch of probe points, (P,)."""
    if not R > 0.0:
        raise ValueError(f"R must be > 0, got {R}")
    p = _check_targets(probes)
    v2 = np.einsum("ij,ij->i", ensemble.velocities, ensemble.velocities)
    sel = v2 < R * R
    pos = np.ascontiguousarray(ensemble.positions[sel])
    w = np.ascontiguousarray(ensemble.weights[sel])
    if len(pos) == 0:
        return np.zeros(len(p))
    ep2 = spec.epsilon_plasma ** 2
    if ep2 == 0.0:
        d = p[:, None, :] - pos[None, :, :]
        r2 = np.einsum("tmi,tmi->tm", d, d)
        if np.any(r2 == 0.0):
            raise ValueError("probe coincides with a particle and softening is zero")
        return np.einsum("tm,m->t", 1.0 / r2, w)
    return fastsum.softened_inv_sq_sum(p, pos, w, ep2)
