"""Binary snapshot files: full phase-space state, bit-exact round trip.

Layout (little-endian throughout):

    offset  size  field
    0       4     magic  b"VPPC"
    4       4     u32    format version (currently 1)
    8       8     f64    simulation time
    16      8     u64    M  (particle count)
    24      8     u64    N  (charge count)
    32      8     f64    epsilon (plasma-charge regularisation radius)
    40      8     f64    epsilon_plasma (plasma-plasma softening)
    48      8     u64    sampling seed
    56      32    sha256 of the resolved config text (zeros if none)
    88            M rows of 7 f64: x y z vx vy vz w
    ...           N rows of 6 f64: xi_x xi_y xi_z eta_x eta_y eta_z

Floats are stored as raw IEEE-754 doubles, so write followed by read
reproduces every array bit for bit.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec
from .state import ChargeState, PlasmaEnsemble, SimState

__all__ = ["SnapshotHeader", "write_snapshot", "read_snapshot",
           "SNAPSHOT_MAGIC", "SNAPSHOT_VERSION"]

SNAPSHOT_MAGIC = b"VPPC"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIdQQddQ32s")


@dataclass(frozen=True)
class SnapshotHeader:
    version: int
    time: float
    n_particles: int
    n_charges: int
    epsilon: float
    epsilon_plasma: float
    seed: int
    config_hash: bytes  # 32 bytes

    def kernel_spec(self, mode: str = "regularized") -> KernelSpec:
        return KernelSpec(epsilon_charge=self.epsilon,
                          epsilon_plasma=self.epsilon_plasma, mode=mode)


def write_snapshot(path, state: SimState, spec: KernelSpec, *,
                   seed: int = 0, config_hash: bytes = b"\0" * 32) -> None:
    if len(config_hash) != 32:
        raise ValueError(f"config_hash must be 32 bytes, got {len(config_hash)}")
    state.validate()
    m = len(state.ensemble)
    n = state.n_charges
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, float(state.time),
                          m, n, float(spec.epsilon_charge),
                          float(spec.epsilon_plasma), int(seed), config_hash)
    rows = np.empty((m, 7), dtype="<f8")
    rows[:, 0:3] = state.ensemble.positions
    rows[:, 3:6] = state.ensemble.velocities
    rows[:, 6] = state.ensemble.weights
    crows = np.empty((n, 6), dtype="<f8")
    if n:
        crows[:, 0:3] = state.charge_positions
        crows[:, 3:6] = state.charge_velocities
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rows.tobytes())
        fh.write(crows.tobytes())


def read_snapshot(path) -> tuple[SimState, SnapshotHeader]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot "
                         f"({len(raw)} bytes, header needs {_HEADER.size})")
    magic, version, time, m, n, eps, eps_p, seed, chash = \
        _HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file (magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    expect = _HEADER.size + 8 * (7 * m + 6 * n)
    if len(raw) != expect:
        raise ValueError(f"{path}: size {len(raw)} does not match header "
                         f"(M={m}, N={n} needs {expect})")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    rows = body[:7 * m].reshape(m, 7)
    crows = body[7 * m:].reshape(n, 6)
    ensemble = PlasmaEnsemble(positions=rows[:, 0:3],
                              velocities=rows[:, 3:6], weights=rows[:, 6])
    charges = tuple(ChargeState(position=crows[i, 0:3], velocity=crows[i, 3:6])
                    for i in range(n))
    state = SimState(time=time, ensemble=ensemble, charges=charges)
    state.validate()
    header = SnapshotHeader(version=version, time=time, n_particles=m,
                            n_charges=n, epsilon=eps, epsilon_plasma=eps_p,
                            seed=seed, config_hash=chash)
    return state, header
