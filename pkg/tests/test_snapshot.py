"""Binary snapshot format: bit-exact round trip, header integrity."""
from __future__ import annotations

import struct

import numpy as np
import pytest

from vppc.kernels import KernelSpec
from vppc.snapshot import (
    SNAPSHOT_MAGIC,
    SNAPSHOT_VERSION,
    read_snapshot,
    write_snapshot,
)
from vppc.state import ChargeState, PlasmaEnsemble, SimState

from conftest import make_state


def test_round_trip_bit_exact(tmp_path):
    state = make_state(37, 2, seed=60, time=1.25)
    spec = KernelSpec(0.05, 0.02)
    path = tmp_path / "state.vppc"
    write_snapshot(path, state, spec, seed=99, config_hash=b"\x01" * 32)
    back, header = read_snapshot(path)

    assert back.ensemble.positions.tobytes() == state.ensemble.positions.tobytes()
    assert back.ensemble.velocities.tobytes() == state.ensemble.velocities.tobytes()
    assert back.ensemble.weights.tobytes() == state.ensemble.weights.tobytes()
    assert back.charge_positions.tobytes() == state.charge_positions.tobytes()
    assert back.charge_velocities.tobytes() == state.charge_velocities.tobytes()
    assert back.time == state.time

    assert header.version == SNAPSHOT_VERSION
    assert header.n_particles == 37
    assert header.n_charges == 2
    assert header.epsilon == 0.05
    assert header.epsilon_plasma == 0.02
    assert header.seed == 99
    assert header.config_hash == b"\x01" * 32


def test_round_trip_no_charges(tmp_path):
    rng = np.random.default_rng(61)
    ens = PlasmaEnsemble(rng.standard_normal((5, 3)),
                         rng.standard_normal((5, 3)), np.full(5, 0.2))
    state = SimState(0.0, ens, ())
    path = tmp_path / "nocharges.vppc"
    write_snapshot(path, state, KernelSpec(0.1))
    back, header = read_snapshot(path)
    assert back.n_charges == 0
    assert header.n_charges == 0
    assert np.array_equal(back.ensemble.positions, ens.positions)


def test_round_trip_no_plasma(tmp_path, two_charge_state):
    path = tmp_path / "twocharges.vppc"
    write_snapshot(path, two_charge_state, KernelSpec(0.1))
    back, header = read_snapshot(path)
    assert len(back.ensemble) == 0
    assert header.n_particles == 0
    assert np.array_equal(back.charge_positions,
                          two_charge_state.charge_positions)


def test_kernel_spec_from_header(tmp_path, two_charge_state):
    path = tmp_path / "s.vppc"
    write_snapshot(path, two_charge_state, KernelSpec(0.07, 0.01))
    _, header = read_snapshot(path)
    spec = header.kernel_spec()
    assert spec.epsilon_charge == 0.07
    assert spec.epsilon_plasma == 0.01
    assert spec.mode == "regularized"


def test_wrong_magic_rejected(tmp_path):
    state = make_state(3, 1, seed=62)
    path = tmp_path / "bad.vppc"
    write_snapshot(path, state, KernelSpec(0.05))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        read_snapshot(path)


def test_unknown_version_rejected(tmp_path):
    state = make_state(3, 1, seed=63)
    path = tmp_path / "future.vppc"
    write_snapshot(path, state, KernelSpec(0.05))
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", SNAPSHOT_VERSION + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        read_snapshot(path)


def test_truncated_file_rejected(tmp_path):
    state = make_state(10, 1, seed=64)
    path = tmp_path / "trunc.vppc"
    write_snapshot(path, state, KernelSpec(0.05))
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) - 16])
    with pytest.raises(ValueError):
        read_snapshot(path)


def test_magic_constant():
    assert SNAPSHOT_MAGIC == b"VPPC"


def test_bad_config_hash_length(tmp_path):
    state = make_state(2, 1, seed=65)
    with pytest.raises(ValueError):
        write_snapshot(tmp_path / "h.vppc", state, KernelSpec(0.05),
                       config_hash=b"short")


def test_write_rejects_invalid_state(tmp_path):
    ens = PlasmaEnsemble(np.array([[1.0, 0, 0]]), np.zeros((1, 3)),
                         np.array([1.0]))
    state = SimState(0.0, ens, (ChargeState(np.array([1.0, 0, 0]),
                                            np.zeros(3)),))
    with pytest.raises(ValueError):
        write_snapshot(tmp_path / "x.vppc", state, KernelSpec(0.05))
