"""Time integration of the coupled plasma / point-charge system.

Characteristics of the kinetic equation and the charges are advanced
together by velocity Verlet (kick-drift-kick).  All forces derive from one
potential, so the scheme is symplectic and time-reversible, and the energy
reported by :func:`vppc.diagnostics.total_energy` oscillates at O(dt^2)
without secular drift.

A run is split into energy-adapted windows of length Delta_T = 1/(K2 Q),
where Q is the running sup of the pointwise energy sqrt(h); every
inequality monitor is evaluated per window.  Inside a window the substep is
the adaptive dt (charge-kernel resolution, mean-spacing transit time, hard
cap), clipped to hit the window boundary exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import (EnergyReport, Monitor, StepSnapshot, compute_Q,
                          k1_from_energy, total_energy)
from .errors import IntegrationError
from .fields import (FieldSolverConfig, _charge_accel_raw, _charge_charge_raw,
                     _plasma_accel_raw, _plasma_at_charges_raw)
from .state import PlasmaEnsemble, SimState

__all__ = [
    "IntegratorConfig",
    "Forces",
    "compute_forces",
    "adaptive_dt",
    "step",
    "build_partition",
    "SubstepRecord",
    "WindowResult",
    "run_window",
    "RunResult",
    "run_simulation",
]

# Refuse to partition a horizon into absurdly many windows: the count scales
# with T * K2 * Q, and a Q far beyond any physical run means the input state
# is pathological (an astronomically hot pair would otherwise spin forever).
MAX_WINDOWS = 10_000_000


@dataclass(frozen=True)
class IntegratorConfig:
    """Stepping policy.

    dt_max caps every substep; cfl_charge scales the charge-kernel bound
    cfl_charge * eps^{3/2} (the regularised close encounter has period
    ~ eps^{3/2}); window_K2 is the windows-per-unit-(Q t) factor, at least
    16; output_stride spaces the full energy evaluations; adaptive=False
    forces the fixed substep dt_max; dt_scale multiplies the chosen substep
    (for step-halving studies).
    """

    dt_max: float = 1e-2
    cfl_charge: float = 0.05
    window_K2: float = 16.0
    output_stride: int = 10
    adaptive: bool = True
    dt_scale: float = 1.0

    def __post_init__(self):
        if not (self.dt_max > 0.0 and np.isfinite(self.dt_max)):
            raise ValueError(f"dt_max must be finite and > 0, got {self.dt_max}")
        if not self.cfl_charge > 0.0:
            raise ValueError(f"cfl_charge must be > 0, got {self.cfl_charge}")
        if self.window_K2 < 16.0:
            raise ValueError(f"window_K2 must be >= 16, got {self.window_K2}")
        if self.output_stride < 1:
            raise ValueError(f"output_stride must be >= 1, got {self.output_stride}")
        if not (self.dt_scale > 0.0 and np.isfinite(self.dt_scale)):
            raise ValueError(f"dt_scale must be finite and > 0, got {self.dt_scale}")


@dataclass(frozen=True)
class Forces:
    """Accelerations split by source (unit masses: force == acceleration)."""

    particle: np.ndarray            # (M, 3) total on particles
    charge: np.ndarray              # (N, 3) total on charges
    plasma_at_particles: np.ndarray  # (M, 3) plasma-only part
    plasma_at_charges: np.ndarray    # (N, 3) plasma-only part


def _forces_raw(pos: np.ndarray, w: np.ndarray, xi: np.ndarray,
                config: FieldSolverConfig) -> Forces:
    """All accelerations from raw position/weight arrays (hot path)."""
    m = len(pos)
    n = len(xi)
    pp = (_plasma_accel_raw(pos, pos, w, config, True) if m >= 2
          else np.zeros((m, 3)))
    if m > 0 and n > 0:
        particle = pp + _charge_accel_raw(pos, xi, config.kernel)
        cp = _plasma_at_charges_raw(xi, pos, w, config.kernel)
    else:
        particle = pp
        cp = np.zeros((n, 3))
    charge = cp + _charge_charge_raw(xi) if n >= 2 else cp
    return Forces(particle=particle, charge=charge,
                  plasma_at_particles=pp, plasma_at_charges=cp)


def compute_forces(state: SimState, config: FieldSolverConfig) -> Forces:
    """All accelerations at the current positions."""
    return _forces_raw(state.ensemble.positions, state.ensemble.weights,
                       np.ascontiguousarray(state.charge_positions), config)


def _adaptive_dt_raw(pos, vel, eta, n_charges: int, config: IntegratorConfig,
                     eps: float) -> float:
    if not config.adaptive:
        return config.dt_max * config.dt_scale
    dt = config.dt_max
    if n_charges > 0 and eps > 0.0:
        dt = min(dt, config.cfl_charge * eps ** 1.5)
    m = len(pos)
    if m >= 2:
        vol = float(np.prod(pos.max(axis=0) - pos.min(axis=0)))
        if vol > 0.0:
            vmax = float(np.sqrt(np.max(np.einsum("ij,ij->i", vel, vel))))
            if n_charges > 0:
                vmax = max(vmax, float(np.sqrt(np.max(
                    np.einsum("ij,ij->i", eta, eta)))))
            if vmax > 0.0:
                dt = min(dt, 0.1 * (vol / m) ** (1.0 / 3.0) / vmax)
    return dt * config.dt_scale


def adaptive_dt(state: SimState, config: IntegratorConfig,
                field_config: FieldSolverConfig) -> float:
    """Substep choice: min of the hard cap, the charge-kernel resolution
    bound cfl_charge * eps^{3/2}, and a transit bound 0.1 * spacing / v_max
    with spacing the mean interparticle distance surrogate
    (bbox_volume / M)^{1/3}.  Inapplicable terms (no charges, fewer than two
    particles, zero speeds) are skipped.  The result is scaled by dt_scale.
    """
    return _adaptive_dt_raw(state.ensemble.positions, state.ensemble.velocities,
                            state.charge_velocities, state.n_charges, config,
                            field_config.kernel.epsilon_charge)


def _check_finite(pos, vel, xi, eta, t, records):
    # one fused pass: any nan/inf poisons the sum (a finite-entry overflow
    # of the sum itself just falls through the per-array scan below)
    probe = pos.sum() + vel.sum() + xi.sum() + eta.sum()
    if math.isfinite(probe):
        return
    for arr, kind in ((pos, "particle"), (vel, "particle"),
                      (xi, "charge"), (eta, "charge")):
        bad = ~np.all(np.isfinite(arr), axis=1)
        if np.any(bad):
            raise IntegrationError(kind, int(np.flatnonzero(bad)[0]), t,
                                   records=records)


def step(state: SimState, dt: float, config: FieldSolverConfig) -> SimState:
    """One velocity Verlet substep (standalone; evaluates forces twice).

    The run loop caches the closing force evaluation for the next substep;
    use this entry point for single-step semantics and tests.
    """
    if not (dt > 0.0 and np.isfinite(dt)):
        raise ValueError(f"dt must be finite and > 0, got {dt}")
    f0 = compute_forces(state, config)
    half = 0.5 * dt
    vel = state.ensemble.velocities + half * f0.particle
    eta = state.charge_velocities + half * f0.charge
    pos = state.ensemble.positions + dt * vel
    xi = state.charge_positions + dt * eta
    mid = _assemble(state, state.time + dt, pos, vel, xi, eta)
    f1 = compute_forces(mid, config)
    vel = vel + half * f1.particle
    eta = eta + half * f1.charge
    _check_finite(pos, vel, xi, eta, state.time + dt, [])
    return _assemble(state, state.time + dt, pos, vel, xi, eta)


def _assemble(template: SimState, t, pos, vel, xi, eta) -> SimState:
    ens = PlasmaEnsemble(positions=pos, velocities=vel,
                         weights=template.ensemble.weights)
    charges = tuple(replace(c, position=xi[a], velocity=eta[a])
                    for a, c in enumerate(template.charges))
    return SimState(time=t, ensemble=ens, charges=charges)


def build_partition(t_total: float, q: float,
                    config: IntegratorConfig) -> tuple[float, ...]:
    """Window boundaries 0 = t_0 < ... < t_n = T with gaps <= 1/(K2 Q).

    Boundaries sit at integer multiples of Delta_T; a shorter final window
    absorbs the remainder (e.g. T = 1, Delta_T = 0.3 gives
    (0, 0.3, 0.6, 0.9, 1)).
    """
    if not (t_total > 0.0 and np.isfinite(t_total)):
        raise ValueError(f"horizon must be finite and > 0, got {t_total}")
    if not (q > 0.0 and np.isfinite(q)):
        raise ValueError(f"Q must be finite and > 0, got {q}")
    if t_total * config.window_K2 * q > MAX_WINDOWS:
        raise ValueError(
            f"window partition needs ~{t_total * config.window_K2 * q:.3g} "
            f"windows (Q = {q:.3g}); the energy scale is outside the regime "
            f"this scheme is built for")
    delta_t = 1.0 / (config.window_K2 * q)
    if delta_t >= t_total:
        return (0.0, t_total)
    n = int(math.floor(t_total / delta_t + 1e-12))
    bounds = [i * delta_t for i in range(n + 1)]
    if t_total - bounds[-1] > 1e-9 * max(t_total, 1.0):
        bounds.append(t_total)
    else:
        bounds[-1] = t_total
    return tuple(bounds)


@dataclass(frozen=True)
class SubstepRecord:
    """Cheap per-substep diagnostics; ``energy`` is filled every
    output_stride substeps (and at window boundaries), else None."""

    time: float
    dt: float
    q_instant: float
    q_running: float
    min_charge_distance: float
    min_charge_separation: float
    max_speed: float
    kinetic_plasma: float
    energy: EnergyReport | None = None


@dataclass(frozen=True)
class WindowResult:
    state: SimState
    records: list[SubstepRecord]
    q_i: float
    monitor_results: list
    n_substeps: int


def _make_snapshot(t, dt, pos, vel, w, xi, eta, forces, k1, spec):
    return StepSnapshot(t, dt, pos, vel, w, xi, eta,
                        forces.plasma_at_particles, forces.plasma_at_charges,
                        forces.charge, k1, spec)


def run_window(state: SimState, t_end: float, integrator: IntegratorConfig,
               field_config: FieldSolverConfig,
               monitors: tuple[Monitor, ...] = (),
               k1: float | None = None,
               window_index: int = 0,
               substep_offset: int = 0) -> WindowResult:
    """Advance to t_end, invoking every monitor at every substep.

    Exactly one force evaluation per substep (the closing evaluation is
    reused to open the next).  Returns the final state, one record per
    substep, the window's running sup of sqrt(h) (nan when inapplicable),
    and the monitors' end-of-window results.  On a non-finite state the
    raised error carries the records accumulated so far.
    """
    t_start = state.time
    if not np.isfinite(t_end) or t_end < t_start:
        raise ValueError(f"t_end must be finite and >= state.time, got {t_end}")
    spec = field_config.kernel
    eps = spec.epsilon_charge
    track_q = k1 is not None and state.n_charges > 0 and len(state.ensemble) > 0

    pos = state.ensemble.positions.copy()
    vel = state.ensemble.velocities.copy()
    w = state.ensemble.weights
    xi = np.ascontiguousarray(state.charge_positions)
    eta = np.ascontiguousarray(state.charge_velocities)
    n = len(xi)

    forces = _forces_raw(pos, w, xi, field_config)
    snap = _make_snapshot(t_start, math.nan, pos, vel, w, xi, eta, forces, k1, spec)
    q_run = snap.q_instant if track_q else math.nan

    for mon in monitors:
        mon.begin_window(window_index, t_start)

    records: list[SubstepRecord] = []
    n_sub = 0
    t = t_start

    while t_end - t > 1e-15 * max(abs(t_end), 1.0):
        dt = _adaptive_dt_raw(pos, vel, eta, n, integrator, eps)
        remaining = t_end - t
        last = dt >= remaining
        if last:
            dt = remaining
        half = 0.5 * dt
        vel += half * forces.particle
        eta += half * forces.charge
        pos += dt * vel
        xi += dt * eta
        t = t_end if last else t + dt
        forces = _forces_raw(pos, w, xi, field_config)
        vel += half * forces.particle
        eta += half * forces.charge
        _check_finite(pos, vel, xi, eta, t, records)

        if monitors:
            # monitors keep the previous snapshot, so it must own its data
            new_snap = _make_snapshot(t, dt, pos.copy(), vel.copy(), w,
                                      xi.copy(), eta.copy(), forces, k1, spec)
        else:
            new_snap = _make_snapshot(t, dt, pos, vel, w, xi, eta, forces,
                                      k1, spec)
        n_sub += 1
        for mon in monitors:
            mon.observe(snap, new_snap)

        q_inst = new_snap.q_instant if track_q else math.nan
        if track_q:
            q_run = max(q_run, q_inst)
        energy = None
        if (substep_offset + n_sub) % integrator.output_stride == 0 or last:
            energy = total_energy(_assemble(state, t, pos, vel, xi, eta), spec)
            for mon in monitors:
                mon.observe_energy(t, energy)
        vmax = float(np.max(new_snap.speeds)) if len(w) else 0.0
        if len(eta):
            vmax = max(vmax, float(np.sqrt(np.max(np.einsum("ij,ij->i", eta, eta)))))
        records.append(SubstepRecord(
            time=t, dt=dt, q_instant=q_inst, q_running=q_run,
            min_charge_distance=new_snap.min_charge_distance,
            min_charge_separation=new_snap.min_charge_separation,
            max_speed=vmax,
            kinetic_plasma=new_snap.kinetic_plasma,
            energy=energy))
        snap = new_snap

    final = _assemble(state, t_end, pos, vel, xi, eta)
    results = [r for mon in monitors
               if (r := mon.end_window(t_start, t_end, q_run)) is not None]
    return WindowResult(state=final, records=records, q_i=q_run,
                        monitor_results=results, n_substeps=n_sub)


@dataclass(frozen=True)
class RunResult:
    final_state: SimState
    records: list[SubstepRecord]
    window_boundaries: tuple[float, ...]
    window_q: tuple[float, ...]
    monitor_results: list
    n_substeps: int
    h0: float
    k1: float


def run_simulation(state: SimState, t_total: float,
                   integrator: IntegratorConfig,
                   field_config: FieldSolverConfig,
                   monitors: tuple[Monitor, ...] = (),
                   on_window=None) -> RunResult:
    """Windowed run over [t0, t0 + T].

    The first window length comes from Q(t0); each later window uses the
    running sup of sqrt(h) seen so far, so windows shrink if the plasma
    heats up.  Runs without charges (or without particles) use a single
    window.  ``on_window`` (window_index, WindowResult) is called as each
    window completes.
    """
    if not (t_total > 0.0 and np.isfinite(t_total)):
        raise ValueError(f"horizon must be finite and > 0, got {t_total}")
    state.validate()
    spec = field_config.kernel
    h0 = total_energy(state, spec).total
    k1 = k1_from_energy(h0)
    windowed = state.n_charges > 0 and len(state.ensemble) > 0
    q_run = compute_Q(state, k1, spec) if windowed else math.nan

    for mon in monitors:
        mon.begin_run(state, h0, k1, spec)

    t0 = state.time
    t_final = t0 + t_total
    boundaries = [t0]
    window_q = []
    all_records: list[SubstepRecord] = []
    all_results = []
    n_sub = 0
    idx = 0
    cur = state
    while cur.time < t_final - 1e-15 * max(abs(t_final), 1.0):
        if windowed:
            remaining = t_final - cur.time
            if remaining * integrator.window_K2 * q_run > MAX_WINDOWS:
                raise ValueError(
                    f"window partition needs ~"
                    f"{remaining * integrator.window_K2 * q_run:.3g} more "
                    f"windows (Q = {q_run:.3g}); the energy scale is outside "
                    f"the regime this scheme is built for")
            delta_t = 1.0 / (integrator.window_K2 * q_run)
            t_next = min(cur.time + delta_t, t_final)
            if t_final - t_next < 1e-9 * max(t_total, 1.0):
                t_next = t_final
        else:
            t_next = t_final
        res = run_window(cur, t_next, integrator, field_config,
                         monitors=monitors, k1=(k1 if windowed else None),
                         window_index=idx, substep_offset=n_sub)
        cur = res.state
        boundaries.append(t_next)
        window_q.append(res.q_i)
        all_records.extend(res.records)
        all_results.extend(res.monitor_results)
        n_sub += res.n_substeps
        if windowed and np.isfinite(res.q_i):
            q_run = max(q_run, res.q_i)
        if on_window is not None:
            on_window(idx, res)
        idx += 1
    return RunResult(final_state=cur, records=all_records,
                     window_boundaries=tuple(boundaries),
                     window_q=tuple(window_q), monitor_results=all_results,
                     n_substeps=n_sub, h0=h0, k1=k1)
