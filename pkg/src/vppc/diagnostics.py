"""Energy bookkeeping and runtime inequality monitors.

The simulator's conserved energy is

    H = (1/2) sum_j w_j |v_j|^2 + (1/2) sum_a |eta_a|^2
      + sum_{j,a} w_j phi_eps(x_j - xi_a)
      + (1/2) sum_{j != k} w_j w_k phi_p(x_j - x_k)
      + (1/2) sum_{a != b} 1 / |xi_a - xi_b|

with phi_eps the sphere-regularised charge potential and phi_p the
Plummer-softened plasma potential.  All terms are positive (everything
repels), so each one is individually bounded by H.

The pointwise energy of a particle relative to charge a,

    h_a(x, v, t) = |v - eta_a|^2 / 2 + phi_eps(x - xi_a) + K1,

with K1 >= max(8 H(0), 1), drives the a-priori estimates the monitors
check at runtime: the speed bound |v| <= 2 sqrt(h), the charge speed bound
|eta| <= sqrt(2 H(0)), the charge separation floor 1/(2 H(0)), the windowed
close-approach integral bound (2 sqrt(2) + 1) Q_i for the integral of
dt / l(t)^2, the smooth variation of sqrt(h) along characteristics, and the
single-visit (connectedness) property of protection spheres around each
charge.  Q_i is the window sup of sqrt(h) over all particles and charges;
the derived analysis scales are R_i = Q_i^{3/4}, delta_i = Q_i^{-7/8},
l_i = Q_i^{-2}.

Monitors never assert the proof's unknown absolute constants; where an
inequality's constant is not pinned down they report the measured empirical
constant instead and only assert structure (e.g. connectedness).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fastsum
from .kernels import (KernelSpec, charge_potential_from_distance,
                      regularized_charge_force)
from .state import Macroparticle, ChargeState, SimState, min_charge_separation

__all__ = [
    "EnergyReport",
    "AnalysisParameters",
    "MonitorResult",
    "k1_from_energy",
    "total_energy",
    "pointwise_energy",
    "pointwise_energy_table",
    "sqrt_h_table",
    "compute_Q",
    "velocity_energy_bound_check",
    "eta_bound_check",
    "separation_check",
    "fit_envelope_constant",
    "density_norm_estimate",
    "virial_trace",
    "StepSnapshot",
    "Monitor",
    "EnergyDriftMonitor",
    "KineticBoundMonitor",
    "VelocityEnergyBoundMonitor",
    "EtaBoundMonitor",
    "SeparationMonitor",
    "LemmaFacMonitor",
    "SqrtHVariationMonitor",
    "ProtectionSphereMonitor",
    "QEnvelopeMonitor",
    "default_monitors",
    "MONITOR_FACTORIES",
]

_LEMMA_FAC_CONST = 2.0 * math.sqrt(2.0) + 1.0


# ---------------------------------------------------------------------------
# energy functionals


@dataclass(frozen=True)
class EnergyReport:
    """Breakdown of the total energy at one instant.  All terms >= 0."""

    kinetic_plasma: float
    kinetic_charges: float
    plasma_charge_potential: float
    plasma_plasma_potential: float
    charge_charge_potential: float
    total: float


def k1_from_energy(h0: float) -> float:
    """Pointwise-energy offset K1 = max(8 H(0), 1)."""
    return max(8.0 * float(h0), 1.0)


def _distance_table(state: SimState) -> np.ndarray:
    """Particle-charge distances, (M, N)."""
    d = state.ensemble.positions[:, None, :] - state.charge_positions[None, :, :]
    return np.sqrt(np.einsum("jak,jak->ja", d, d))


def total_energy(state: SimState, spec: KernelSpec) -> EnergyReport:
    """Evaluate every energy term of the discrete system.

    The plasma-plasma term pairs each (j, k) once; the plasma-charge term
    uses the same regularised potential whose gradient drives both sides of
    the coupling, so the reported total is the exact invariant of the
    continuous-time dynamics.
    """
    ens = state.ensemble
    ke_p = 0.5 * float(np.sum(ens.weights *
                              np.einsum("ij,ij->i", ens.velocities, ens.velocities)))
    eta = state.charge_velocities
    ke_c = 0.5 * float(np.einsum("ij,ij->", eta, eta)) if len(eta) else 0.0

    if len(ens) > 0 and state.n_charges > 0:
        dist = _distance_table(state)
        pc = float(np.sum(ens.weights[:, None] *
                          charge_potential_from_distance(dist, spec)))
    else:
        pc = 0.0

    if len(ens) >= 2:
        ep2 = spec.epsilon_plasma ** 2
        parts = fastsum.plummer_pair_potential_parts(ens.positions, ens.weights, ep2)
        pp = float(np.sum(parts))
        if not np.isfinite(pp):
            raise ValueError("plasma-plasma potential: coincident particles "
                             "with zero softening")
    else:
        pp = 0.0

    n = state.n_charges
    if n >= 2:
        xi = state.charge_positions
        d = xi[:, None, :] - xi[None, :, :]
        r2 = np.einsum("abi,abi->ab", d, d)
        iu = np.triu_indices(n, k=1)
        pair_r2 = r2[iu]
        if np.any(pair_r2 == 0.0):
            raise ValueError("coincident charges")
        cc = float(np.sum(1.0 / np.sqrt(pair_r2)))
    else:
        cc = 0.0

    return EnergyReport(kinetic_plasma=ke_p, kinetic_charges=ke_c,
                        plasma_charge_potential=pc, plasma_plasma_potential=pp,
                        charge_charge_potential=cc,
                        total=ke_p + ke_c + pc + pp + cc)


def pointwise_energy(particle: Macroparticle, charge: ChargeState,
                     k1: float, spec: KernelSpec) -> float:
    """h = |v - eta|^2 / 2 + phi_eps(|x - xi|) + K1 for one particle/charge pair."""
    dv = particle.velocity - charge.velocity
    d = float(np.linalg.norm(particle.position - charge.position))
    return (0.5 * float(dv @ dv)
            + float(charge_potential_from_distance(np.float64(d), spec))
            + float(k1))


def pointwise_energy_table(state: SimState, k1: float,
                           spec: KernelSpec) -> np.ndarray:
    """h for every particle-charge pair, (M, N)."""
    if state.n_charges == 0:
        raise ValueError("pointwise energy undefined without charges")
    dv = state.ensemble.velocities[:, None, :] - state.charge_velocities[None, :, :]
    rel2 = np.einsum("jak,jak->ja", dv, dv)
    dist = _distance_table(state)
    return 0.5 * rel2 + charge_potential_from_distance(dist, spec) + float(k1)


def sqrt_h_table(state: SimState, k1: float, spec: KernelSpec) -> np.ndarray:
    return np.sqrt(pointwise_energy_table(state, k1, spec))


def compute_Q(state: SimState, k1: float, spec: KernelSpec) -> float:
    """sup over particles and charges of sqrt(h).

    Undefined (and an error) without charges; a pure-Vlasov run tracks
    max_speed instead.  Also an error for an empty ensemble: Q is a sup over
    the plasma support.
    """
    if state.n_charges == 0:
        raise ValueError("compute_Q: no point charges (use max_speed instead)")
    if len(state.ensemble) == 0:
        raise ValueError("compute_Q: empty plasma ensemble")
    return float(np.sqrt(np.max(pointwise_energy_table(state, k1, spec))))


@dataclass(frozen=True)
class AnalysisParameters:
    """Window-analysis scales derived from the energy ceiling Q.

    delta_t is the window length 1/(K2 Q); r is the high-energy threshold
    Q^{3/4}; delta the protection-sphere radius Q^{-7/8}; ell the
    close-approach scale Q^{-2}.
    """

    q: float
    k1: float
    k2: float = 16.0

    def __post_init__(self):
        if not (self.q > 0.0 and np.isfinite(self.q)):
            raise ValueError(f"Q must be finite and > 0, got {self.q}")
        if self.k1 < 1.0:
            raise ValueError(f"K1 must be >= 1, got {self.k1}")
        if self.k2 < 16.0:
            raise ValueError(f"K2 must be >= 16, got {self.k2}")

    @property
    def delta_t(self) -> float:
        return 1.0 / (self.k2 * self.q)

    @property
    def r(self) -> float:
        return self.q ** 0.75

    @property
    def delta(self) -> float:
        return self.q ** -0.875

    @property
    def ell(self) -> float:
        return self.q ** -2.0


# ---------------------------------------------------------------------------
# one-shot checks


@dataclass(frozen=True)
class MonitorResult:
    """Outcome of one monitor over one window.

    ``measured`` and ``bound`` are in the monitor's natural units;
    ``direction`` says which side satisfies ("le": measured <= bound,
    "ge": measured >= bound).  ``skipped`` marks structurally inapplicable
    checks (e.g. separation with one charge) that must not count as
    failures.  ``details`` carries reported-only empirical constants.
    """

    name: str
    window: tuple[float, float]
    measured: float
    bound: float
    satisfied: bool
    witness: object = None
    direction: str = "le"
    skipped: bool = False
    details: dict = field(default_factory=dict)


def velocity_energy_bound_check(state: SimState, k1: float, spec: KernelSpec,
                                window: tuple[float, float] | None = None) -> MonitorResult:
    """Check |v_j| <= 2 sqrt(h_a) for every particle j and every charge a.

    measured is the worst ratio |v| / (2 sqrt(h)); with K1 >= max(8 H(0), 1)
    the ratio stays below 1 for the exact flow.
    """
    w = window if window is not None else (state.time, state.time)
    if state.n_charges == 0 or len(state.ensemble) == 0:
        return MonitorResult("velocity_energy", w, 0.0, 1.0, True, skipped=True)
    sq = sqrt_h_table(state, k1, spec)                     # (M, N)
    speed = np.sqrt(np.einsum("ij,ij->i", state.ensemble.velocities,
                              state.ensemble.velocities))  # (M,)
    ratio = speed[:, None] / (2.0 * sq)
    j, a = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    worst = float(ratio[j, a])
    return MonitorResult("velocity_energy", w, worst, 1.0, worst <= 1.0,
                         witness=(int(j), int(a)))


def eta_bound_check(state: SimState, h0: float, tol: float = 1e-2,
                    window: tuple[float, float] | None = None) -> MonitorResult:
    """Check the charge speed bound |eta_a| <= sqrt(2 H(0)) for every charge."""
    w = window if window is not None else (state.time, state.time)
    if state.n_charges == 0:
        return MonitorResult("eta_bound", w, 0.0, 0.0, True, skipped=True)
    speeds = np.sqrt(np.einsum("ij,ij->i", state.charge_velocities,
                               state.charge_velocities))
    a = int(np.argmax(speeds))
    bound = math.sqrt(2.0 * h0) * (1.0 + tol)
    return MonitorResult("eta_bound", w, float(speeds[a]), bound,
                         float(speeds[a]) <= bound, witness=a)


def separation_check(state: SimState, h0: float, tol: float = 1e-2,
                     window: tuple[float, float] | None = None) -> MonitorResult:
    """Check the charge separation floor min |xi_a - xi_b| >= (1 - tol)/(2 H(0))."""
    w = window if window is not None else (state.time, state.time)
    if state.n_charges < 2:
        return MonitorResult("separation", w, math.inf, 0.0, True,
                             direction="ge", skipped=True)
    lam = 1.0 / (2.0 * h0)
    sep = min_charge_separation(state)
    bound = lam * (1.0 - tol)
    return MonitorResult("separation", w, sep, bound, sep >= bound,
                         direction="ge", details={"lambda": lam})


def fit_envelope_constant(q0: float, horizon: float, q_sup: float) -> float:
    """Smallest C >= 0 with (Q0 + C) exp(C (1 + T)) >= sup_t Q(t).

    The no-blow-up envelope reported by runs; C = 0 when Q never rose above
    its initial value.
    """
    if not (q0 > 0 and q_sup > 0) or horizon < 0:
        raise ValueError("envelope fit needs positive Q values and T >= 0")
    if q_sup <= q0:
        return 0.0

    def g(c: float) -> float:
        return (q0 + c) * math.exp(c * (1.0 + horizon)) - q_sup

    hi = 1.0
    while g(hi) < 0.0:
        hi *= 2.0
        if hi > 1e308:
            return math.inf
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def density_norm_estimate(ensemble, cell_size: float) -> float:
    """Histogram estimate of the L^{5/3} norm of the spatial density.

    Deposits weights on a uniform grid of the given cell size over the
    bounding box and returns (sum rho^{5/3} V_cell)^{3/5}.
    """
    if not cell_size > 0.0:
        raise ValueError(f"cell_size must be > 0, got {cell_size}")
    m = len(ensemble)
    if m == 0:
        return 0.0
    pos = ensemble.positions
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    nbins = np.maximum(1, np.ceil((hi - lo) / cell_size - 1e-12).astype(int))
    edges = [lo[k] + cell_size * np.arange(nbins[k] + 1) for k in range(3)]
    # widen the last edge so boundary points land in the top cell
    for k in range(3):
        edges[k][-1] = max(edges[k][-1], hi[k] * (1 + 1e-12) + 1e-300)
    hist, _ = np.histogramdd(pos, bins=edges, weights=ensemble.weights)
    vc = cell_size ** 3
    rho = hist / vc
    return float(np.sum(rho ** (5.0 / 3.0) * vc) ** 0.6)


def virial_trace(times: np.ndarray, y: np.ndarray, w: np.ndarray,
                 xi: np.ndarray, eta: np.ndarray):
    """Radial virial I = |Y - xi|^2 / 2 along a sampled trajectory.

    Returns (I, Idot, Iddot): Idot = (Y - xi).(W - eta) exactly at the
    samples, Iddot by a central second difference of I (nan at the ends).
    Nonuniform sample spacing is handled.
    """
    times = np.asarray(times, dtype=float)
    d = np.asarray(y, dtype=float) - np.asarray(xi, dtype=float)
    dv = np.asarray(w, dtype=float) - np.asarray(eta, dtype=float)
    i_vals = 0.5 * np.einsum("ij,ij->i", d, d)
    idot = np.einsum("ij,ij->i", d, dv)
    n = len(times)
    iddot = np.full(n, np.nan)
    if n >= 3:
        h0 = times[1:-1] - times[:-2]
        h1 = times[2:] - times[1:-1]
        iddot[1:-1] = 2.0 * (i_vals[2:] * h0 - i_vals[1:-1] * (h0 + h1)
                             + i_vals[:-2] * h1) / (h0 * h1 * (h0 + h1))
    return i_vals, idot, iddot


# ---------------------------------------------------------------------------
# streaming monitors


class StepSnapshot:
    """Per-substep view the integrator hands to monitors.

    Heavy derived tables (distance and sqrt(h) tables, field-magnitude
    budgets) are computed lazily and cached, so a run with no monitors pays
    nothing and monitors share the same tables.
    """

    def __init__(self, time: float, dt: float, positions: np.ndarray,
                 velocities: np.ndarray, weights: np.ndarray,
                 xi: np.ndarray, eta: np.ndarray,
                 plasma_at_particles: np.ndarray | None,
                 plasma_at_charges: np.ndarray | None,
                 charge_acc: np.ndarray | None,
                 k1: float | None, spec: KernelSpec | None):
        self.time = time
        self.dt = dt
        self.positions = positions
        self.velocities = velocities
        self.weights = weights
        self.xi = xi
        self.eta = eta
        self.plasma_at_particles = plasma_at_particles
        self.plasma_at_charges = plasma_at_charges
        self.charge_acc = charge_acc
        self.k1 = k1
        self.spec = spec
        self._cache: dict = {}

    @property
    def n_charges(self) -> int:
        return len(self.xi)

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def disp(self) -> np.ndarray:
        """Particle-charge displacements, (M, N, 3)."""
        return self._get("disp", lambda: self.positions[:, None, :] - self.xi[None, :, :])

    @property
    def ell(self) -> np.ndarray:
        """Particle-charge distances, (M, N)."""
        return self._get("ell", lambda: np.sqrt(np.einsum("jak,jak->ja", self.disp, self.disp)))

    @property
    def sqrt_h(self) -> np.ndarray:
        def build():
            dv = self.velocities[:, None, :] - self.eta[None, :, :]
            rel2 = np.einsum("jak,jak->ja", dv, dv)
            h = 0.5 * rel2 + charge_potential_from_distance(self.ell, self.spec) + self.k1
            return np.sqrt(h)
        return self._get("sqrt_h", build)

    @property
    def q_instant(self) -> float:
        if self.n_charges == 0 or self.k1 is None or len(self.weights) == 0:
            return math.nan
        return float(np.max(self.sqrt_h))

    @property
    def speeds(self) -> np.ndarray:
        return self._get("speeds", lambda: np.sqrt(
            np.einsum("ij,ij->i", self.velocities, self.velocities)))

    @property
    def kinetic_plasma(self) -> float:
        return 0.5 * float((self.weights * self.speeds ** 2).sum())

    @property
    def kinetic_charges(self) -> float:
        if self.n_charges == 0:
            return 0.0
        return 0.5 * float(np.einsum("ij,ij->", self.eta, self.eta))

    @property
    def min_charge_distance(self) -> float:
        if self.n_charges == 0 or len(self.weights) == 0:
            return math.nan
        return float(np.min(self.ell))

    @property
    def min_charge_separation(self) -> float:
        n = self.n_charges
        if n < 2:
            return math.inf
        d = self.xi[:, None, :] - self.xi[None, :, :]
        r2 = np.einsum("abi,abi->ab", d, d)
        iu = np.triu_indices(n, k=1)
        return float(np.sqrt(np.min(r2[iu])))

    @property
    def field_budget(self) -> np.ndarray:
        """Smooth-field budget per particle-charge pair, (M, N).

        |E(x_j)| + |E(xi_a)| plus, with several charges, the field of the
        *other* charges at the particle and at charge a.  These are exactly
        the terms whose sum bounds |d sqrt(h_a)/dt|; the singular alpha-term
        cancels identically.
        """
        def build():
            ep = np.sqrt(np.einsum("ij,ij->i", self.plasma_at_particles,
                                   self.plasma_at_particles))      # (M,)
            ec = np.sqrt(np.einsum("aj,aj->a", self.plasma_at_charges,
                                   self.plasma_at_charges))        # (N,)
            budget = ep[:, None] + ec[None, :]
            if self.n_charges >= 2:
                f_each = regularized_charge_force(self.disp, self.spec)  # (M, N, 3)
                f_tot = f_each.sum(axis=1)                               # (M, 3)
                f_other = f_tot[:, None, :] - f_each                     # (M, N, 3)
                budget = budget + np.sqrt(np.einsum("jak,jak->ja", f_other, f_other))
                cc = self.charge_acc - self.plasma_at_charges            # (N, 3)
                budget = budget + np.sqrt(np.einsum("aj,aj->a", cc, cc))[None, :]
            return budget
        return self._get("field_budget", build)


class Monitor:
    """Base class: hooks are no-ops, pass/fail counters are shared."""

    name = "monitor"
    hard = True

    def __init__(self):
        self.n_pass = 0
        self.n_fail = 0

    def begin_run(self, state0: SimState, h0: float, k1: float,
                  spec: KernelSpec) -> None:
        pass

    def begin_window(self, index: int, t_start: float) -> None:
        pass

    def observe(self, prev: StepSnapshot, new: StepSnapshot) -> None:
        pass

    def observe_energy(self, t: float, report: EnergyReport) -> None:
        pass

    def end_window(self, t_start: float, t_end: float,
                   q_i: float) -> MonitorResult | None:
        return None

    def _tally(self, ok: bool) -> None:
        if ok:
            self.n_pass += 1
        else:
            self.n_fail += 1

    def _result(self, t0: float, t1: float, measured: float, bound: float,
                satisfied: bool, **kw) -> MonitorResult:
        self._tally(satisfied or kw.get("skipped", False))
        return MonitorResult(self.name, (t0, t1), measured, bound, satisfied, **kw)


class EnergyDriftMonitor(Monitor):
    """Relative drift of the total energy, |H(t) - H(0)| / H(0) <= tol."""

    name = "energy_drift"

    def __init__(self, tol: float = 1e-2):
        super().__init__()
        self.tol = tol
        self.h0 = math.nan
        self.worst = 0.0

    def begin_run(self, state0, h0, k1, spec):
        self.h0 = h0

    def observe_energy(self, t, report):
        self.worst = max(self.worst, abs(report.total - self.h0) / abs(self.h0))

    def end_window(self, t0, t1, q_i):
        return self._result(t0, t1, self.worst, self.tol, self.worst <= self.tol)


class KineticBoundMonitor(Monitor):
    """Total kinetic energy never exceeds the initial total energy."""

    name = "kinetic_bound"

    def __init__(self, tol: float = 1e-2):
        super().__init__()
        self.tol = tol
        self.h0 = math.nan
        self.worst = 0.0

    def begin_run(self, state0, h0, k1, spec):
        self.h0 = h0

    def observe(self, prev, new):
        self.worst = max(self.worst, new.kinetic_plasma + new.kinetic_charges)

    def end_window(self, t0, t1, q_i):
        bound = self.h0 * (1.0 + self.tol)
        return self._result(t0, t1, self.worst, bound, self.worst <= bound)


class VelocityEnergyBoundMonitor(Monitor):
    """|v_j| <= 2 sqrt(h_a) at every substep, every pair."""

    name = "velocity_energy"

    def __init__(self):
        super().__init__()
        self.worst = 0.0
        self.witness = None
        self._applicable = True

    def begin_run(self, state0, h0, k1, spec):
        self._applicable = state0.n_charges > 0 and len(state0.ensemble) > 0

    def begin_window(self, index, t_start):
        self.worst = 0.0
        self.witness = None

    def observe(self, prev, new):
        if not self._applicable:
            return
        ratio = new.speeds[:, None] / (2.0 * new.sqrt_h)
        j, a = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[j, a] > self.worst:
            self.worst = float(ratio[j, a])
            self.witness = (int(j), int(a), new.time)

    def end_window(self, t0, t1, q_i):
        if not self._applicable:
            return self._result(t0, t1, 0.0, 1.0, True, skipped=True)
        return self._result(t0, t1, self.worst, 1.0, self.worst <= 1.0,
                            witness=self.witness)


class EtaBoundMonitor(Monitor):
    """Charge speeds stay below sqrt(2 H(0))."""

    name = "eta_bound"

    def __init__(self, tol: float = 1e-2):
        super().__init__()
        self.tol = tol
        self.h0 = math.nan
        self.worst = 0.0
        self.witness = None

    def begin_run(self, state0, h0, k1, spec):
        self.h0 = h0

    def begin_window(self, index, t_start):
        self.worst = 0.0

    def observe(self, prev, new):
        if new.n_charges == 0:
            return
        s = np.sqrt(np.einsum("ij,ij->i", new.eta, new.eta))
        a = int(np.argmax(s))
        if s[a] > self.worst:
            self.worst = float(s[a])
            self.witness = (a, new.time)

    def end_window(self, t0, t1, q_i):
        bound = math.sqrt(2.0 * self.h0) * (1.0 + self.tol)
        return self._result(t0, t1, self.worst, bound, self.worst <= bound,
                            witness=self.witness)


class SeparationMonitor(Monitor):
    """Pairwise charge separation stays above (1 - tol) / (2 H(0))."""

    name = "separation"

    def __init__(self, tol: float = 1e-2):
        super().__init__()
        self.tol = tol
        self.h0 = math.nan
        self.n = 0
        self.worst = math.inf

    def begin_run(self, state0, h0, k1, spec):
        self.h0 = h0
        self.n = state0.n_charges

    def begin_window(self, index, t_start):
        self.worst = math.inf

    def observe(self, prev, new):
        if self.n >= 2:
            self.worst = min(self.worst, new.min_charge_separation)

    def end_window(self, t0, t1, q_i):
        if self.n < 2:
            return self._result(t0, t1, math.inf, 0.0, True, direction="ge",
                                skipped=True)
        lam = 1.0 / (2.0 * self.h0)
        bound = lam * (1.0 - self.tol)
        return self._result(t0, t1, self.worst, bound, self.worst >= bound,
                            direction="ge", details={"lambda": lam})


class LemmaFacMonitor(Monitor):
    """Windowed close-approach integral: int dt / l(t)^2 <= (2 sqrt2 + 1) Q_i.

    The integral is accumulated per particle-charge pair by the trapezoid
    rule over the window's substeps.
    """

    name = "lemma_fac"

    def __init__(self, tol: float = 0.05):
        super().__init__()
        self.tol = tol
        self._acc = None

    def begin_window(self, index, t_start):
        self._acc = None

    def observe(self, prev, new):
        if new.n_charges == 0 or len(new.weights) == 0:
            return
        contrib = 0.5 * new.dt * (prev.ell ** -2.0 + new.ell ** -2.0)
        self._acc = contrib if self._acc is None else self._acc + contrib

    def end_window(self, t0, t1, q_i):
        if self._acc is None:
            return self._result(t0, t1, 0.0, math.inf, True, skipped=True)
        j, a = np.unravel_index(int(np.argmax(self._acc)), self._acc.shape)
        measured = float(self._acc[j, a])
        bound = _LEMMA_FAC_CONST * q_i * (1.0 + self.tol)
        return self._result(t0, t1, measured, bound, measured <= bound,
                            witness=(int(j), int(a)),
                            details={"constant": measured / q_i if q_i > 0 else math.nan})


class SqrtHVariationMonitor(Monitor):
    """|sqrt(h)(t+dt) - sqrt(h)(t)| within the smooth-field budget.

    The budget (|E(X)| + |E(xi)| + other-charge fields + tol_field) * dt *
    (1 + tol) uses the worse endpoint of each substep.  This verifies the
    exact cancellation of the singular self-term in d h_a / dt.
    """

    name = "sqrt_h_variation"

    def __init__(self, tol: float = 0.05, tol_field: float = 1e-6):
        super().__init__()
        self.tol = tol
        self.tol_field = tol_field
        self.worst = 0.0
        self.witness = None

    def begin_window(self, index, t_start):
        self.worst = 0.0
        self.witness = None

    def observe(self, prev, new):
        if new.n_charges == 0 or len(new.weights) == 0:
            return
        delta = np.abs(new.sqrt_h - prev.sqrt_h)
        budget = (np.maximum(prev.field_budget, new.field_budget)
                  + self.tol_field) * new.dt * (1.0 + self.tol)
        ratio = delta / budget
        j, a = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[j, a] > self.worst:
            self.worst = float(ratio[j, a])
            self.witness = (int(j), int(a), new.time)

    def end_window(self, t0, t1, q_i):
        return self._result(t0, t1, self.worst, 1.0, self.worst <= 1.0,
                            witness=self.witness)


class ProtectionSphereMonitor(Monitor):
    """Single-visit property of the protection spheres around each charge.

    Over one window, a particle that starts the window with sqrt(h_a) above
    the high-energy threshold R_i = Q_i^{3/4} may enter the sphere of radius
    delta_i = Q_i^{-7/8} around charge a at most once: its visit set must be
    a single interval.  The monitor asserts that connectedness, and reports
    (never asserts) the measured visit durations against the predicted
    scales Q_i^{-13/8} (radius delta_i) and Q_i^{-15/8} (radius 2 delta_i,
    threshold Q_i/2), plus the minimum virial convexity ratio
    Iddot / (R_i^2 / 8) strictly inside the sphere.
    """

    name = "protection_sphere"

    def __init__(self):
        super().__init__()
        self._ell = []
        self._dts = []
        self._h_start = None

    def begin_window(self, index, t_start):
        self._ell = []
        self._dts = []
        self._h_start = None

    def observe(self, prev, new):
        if new.n_charges == 0 or len(new.weights) == 0:
            return
        if self._h_start is None:
            self._h_start = prev.sqrt_h.copy()
            self._ell.append(prev.ell.copy())
        self._ell.append(new.ell.copy())
        self._dts.append(new.dt)

    @staticmethod
    def _visits(ell: np.ndarray, dts: np.ndarray, radius: float):
        """Component count and interpolated visit duration per pair.

        ell is (S+1, K) distance samples for K selected pairs.  A pair's
        visit set is {t : ell(t) < radius}; durations use linear crossing
        interpolation inside each substep.
        """
        inside = ell < radius
        comps = inside[0].astype(int) + np.sum(inside[1:] & ~inside[:-1], axis=0)
        l0, l1 = ell[:-1], ell[1:]
        in0, in1 = inside[:-1], inside[1:]
        dt = dts[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac_entry = (radius - l1) / (l0 - l1)
            frac_exit = (radius - l0) / (l1 - l0)
        dur = np.where(in0 & in1, dt, 0.0)
        dur = np.where(~in0 & in1, dt * np.clip(frac_entry, 0.0, 1.0), dur)
        dur = np.where(in0 & ~in1, dt * np.clip(frac_exit, 0.0, 1.0), dur)
        return comps, dur.sum(axis=0)

    def end_window(self, t0, t1, q_i):
        if self._h_start is None or not self._dts or not np.isfinite(q_i):
            return self._result(t0, t1, 0.0, 1.0, True, skipped=True)
        params = AnalysisParameters(q=max(q_i, 1.0), k1=1.0)
        ell = np.stack(self._ell)            # (S+1, M, N)
        dts = np.asarray(self._dts)
        s1, m, n = ell.shape
        flat = ell.reshape(s1, m * n)
        h0 = self._h_start.reshape(m * n)

        details = {"n_high_energy": 0, "n_entered": 0}
        worst_components = 0
        witness = None
        for tag, radius, threshold, expo in (
                ("c5", params.delta, params.r, 13.0 / 8.0),
                ("c6", 2.0 * params.delta, 0.5 * params.q, 15.0 / 8.0)):
            sel = np.flatnonzero(h0 > threshold)
            if len(sel) == 0:
                details[f"{tag}_max"] = math.nan
                continue
            comps, dur = self._visits(flat[:, sel], dts, radius)
            entered = comps > 0
            details[f"{tag}_max"] = (float(np.max(dur[entered]) * q_i ** expo)
                                     if np.any(entered) else math.nan)
            if tag == "c5":
                details["n_high_energy"] = int(len(sel))
                details["n_entered"] = int(np.count_nonzero(entered))
                details["meas_max"] = float(np.max(dur)) if len(dur) else 0.0
                details["delta"] = params.delta
                details["r_threshold"] = params.r
                worst = int(np.max(comps))
                if worst > worst_components:
                    worst_components = worst
                    k = sel[int(np.argmax(comps))]
                    witness = (int(k // n), int(k % n))
                # virial convexity, reported only: second difference of
                # I = l^2/2 at samples strictly inside the sphere
                if np.any(entered) and s1 >= 3:
                    iv = 0.5 * flat[:, sel] ** 2
                    h_prev = dts[:-1, None]
                    h_next = dts[1:, None]
                    idd = 2.0 * (iv[2:] * h_prev - iv[1:-1] * (h_prev + h_next)
                                 + iv[:-2] * h_next) / (h_prev * h_next * (h_prev + h_next))
                    strict = (flat[1:-1, sel] < radius) & (flat[:-2, sel] < radius) \
                        & (flat[2:, sel] < radius)
                    if np.any(strict):
                        ratio = idd[strict] / (params.r ** 2 / 8.0)
                        details["min_iddot_ratio"] = float(np.min(ratio))
            else:
                worst_components = max(worst_components, int(np.max(comps)))
        ok = worst_components <= 1
        return self._result(t0, t1, float(worst_components), 1.0, ok,
                            witness=witness, details=details)


class QEnvelopeMonitor(Monitor):
    """Reports the fitted no-blow-up envelope constant (never fails)."""

    name = "q_envelope"
    hard = False

    def __init__(self):
        super().__init__()
        self.q0 = math.nan
        self.t0 = math.nan
        self.q_sup = math.nan

    def begin_run(self, state0, h0, k1, spec):
        self.t0 = state0.time
        if state0.n_charges > 0 and len(state0.ensemble) > 0:
            self.q0 = compute_Q(state0, k1, spec)
            self.q_sup = self.q0

    def observe(self, prev, new):
        q = new.q_instant
        if not math.isnan(q):
            self.q_sup = max(self.q_sup, q)

    def end_window(self, t0, t1, q_i):
        if math.isnan(self.q0):
            return self._result(t0, t1, 0.0, math.inf, True, skipped=True)
        c = fit_envelope_constant(self.q0, t1 - self.t0, self.q_sup)
        return self._result(t0, t1, c, math.inf, True,
                            details={"q0": self.q0, "q_sup": self.q_sup})


MONITOR_FACTORIES = {
    "energy_drift": EnergyDriftMonitor,
    "kinetic_bound": KineticBoundMonitor,
    "velocity_energy": VelocityEnergyBoundMonitor,
    "eta_bound": EtaBoundMonitor,
    "separation": SeparationMonitor,
    "lemma_fac": LemmaFacMonitor,
    "sqrt_h_variation": SqrtHVariationMonitor,
    "protection_sphere": ProtectionSphereMonitor,
    "q_envelope": QEnvelopeMonitor,
}


def default_monitors() -> list[Monitor]:
    return [factory() for factory in MONITOR_FACTORIES.values()]
