"""Independent reference computations.

Everything here validates the main build from the outside: a high-order
adaptive two-body integrator (scipy DOP853) for the exact unregularised
problem, a deliberately naive double-loop field sum coded without the
package's kernel helpers, a finite-difference check of the one-step map's
phase-space volume, and convergence harnesses in the regularisation radius
and the substep.

The regularisation study exploits the kernel's exact tail: two runs whose
charge approaches both stay outside their own regularisation balls solve
the *same* equations, so their difference sits at the integrator floor; a
run that enters its ball is flagged non-comparable.  Reported decrements
are Cauchy decrements between consecutive levels, never a claim of
convergence to truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import IntegratorConfig, run_window, step
from .errors import ConfigError
from .fields import FieldSolverConfig
from .sampling import InitialCondition, sample
from .state import SimState

__all__ = [
    "TwoBodyProblem",
    "TwoBodyTrajectory",
    "two_body_reference",
    "field_brute_force",
    "frozen_field_jacobian_determinant",
    "step_jacobian_determinant",
    "EpsilonLevel",
    "EpsilonPair",
    "EpsilonStudy",
    "epsilon_convergence_study",
    "DtLevel",
    "DtStudy",
    "dt_convergence_study",
]


# ---------------------------------------------------------------------------
# exact two-body reference


@dataclass(frozen=True)
class TwoBodyProblem:
    """One particle against one unit charge, bare repulsive coupling.

    With ``mobile_charge`` the charge moves under the particle's reaction
    force (equal unit masses); otherwise it is pinned.
    """

    x: tuple
    v: tuple
    xi: tuple
    eta: tuple = (0.0, 0.0, 0.0)
    mobile_charge: bool = True

    def __post_init__(self):
        for name in ("x", "v", "xi", "eta"):
            val = tuple(float(c) for c in getattr(self, name))
            if len(val) != 3 or not all(math.isfinite(c) for c in val):
                raise ValueError(f"{name} must be 3 finite floats")
            object.__setattr__(self, name, val)
        r = np.array(self.x) - np.array(self.xi)
        if float(r @ r) == 0.0:
            raise ValueError("particle and charge must start apart")


@dataclass(frozen=True)
class TwoBodyTrajectory:
    """Dense reference solution on [0, T]."""

    problem: TwoBodyProblem
    t_end: float
    h0: float
    l0: np.ndarray          # (3,) conserved angular momentum
    energy_drift: float
    momentum_drift: float
    _sol: object

    def evaluate(self, t):
        """(x, v, xi, eta) at scalar or array times; arrays get a leading
        time axis."""
        t = np.asarray(t, dtype=float)
        y = self._sol(t)    # (dim, ...) columns
        scalar = t.ndim == 0
        y = y[:, None] if scalar else y
        x = y[0:3].T
        v = y[3:6].T
        if self.problem.mobile_charge:
            xi = y[6:9].T
            eta = y[9:12].T
        else:
            xi = np.broadcast_to(np.array(self.problem.xi), x.shape).copy()
            eta = np.zeros_like(xi)
        if scalar:
            return x[0], v[0], xi[0], eta[0]
        return x, v, xi, eta

    def separation(self, t):
        x, _, xi, _ = self.evaluate(t)
        return np.linalg.norm(x - xi, axis=-1)

    def min_separation(self, n: int = 4096) -> float:
        ts = np.linspace(0.0, self.t_end, n)
        return float(np.min(self.separation(ts)))

    def energy(self, t) -> np.ndarray:
        x, v, xi, eta = self.evaluate(t)
        r = np.linalg.norm(np.atleast_2d(x - xi), axis=-1)
        ke = 0.5 * np.einsum("...i,...i->...", v, v)
        if self.problem.mobile_charge:
            ke = ke + 0.5 * np.einsum("...i,...i->...", eta, eta)
        return ke + 1.0 / r


def _two_body_rhs_mobile(t, y):
    r = y[0:3] - y[6:9]
    inv3 = float(r @ r) ** -1.5
    f = r * inv3
    return np.concatenate([y[3:6], f, y[9:12], -f])


def _make_fixed_rhs(xi):
    xi = np.array(xi)

    def rhs(t, y):
        r = y[0:3] - xi
        return np.concatenate([y[3:6], r * float(r @ r) ** -1.5])

    return rhs


def two_body_reference(problem: TwoBodyProblem, t_end: float,
                       tolerance: float = 1e-12) -> TwoBodyTrajectory:
    """Adaptive 8th-order integration of the exact repulsive two-body
    problem, dense output, with conservation audited to 10x the requested
    tolerance.

    Repulsion keeps every orbit bounded away from the singularity unless it
    is exactly head-on, and even then the turning point is at positive
    separation, so the integration cannot under-resolve a collision.
    """
    if not tolerance <= 1e-10:
        raise ValueError(f"tolerance must be <= 1e-10, got {tolerance}")
    if not (t_end > 0.0 and math.isfinite(t_end)):
        raise ValueError(f"t_end must be finite and > 0, got {t_end}")
    if problem.mobile_charge:
        y0 = np.concatenate([problem.x, problem.v, problem.xi, problem.eta])
        rhs = _two_body_rhs_mobile
    else:
        y0 = np.concatenate([problem.x, problem.v])
        rhs = _make_fixed_rhs(problem.xi)
    # integrate well below the requested tolerance so the audited global
    # drift honestly lands under 10 * tolerance
    local_tol = max(tolerance * 1e-2, 1e-13)
    res = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853",
                    rtol=local_tol, atol=local_tol, dense_output=True)
    if not res.success:
        raise RuntimeError(f"reference integration failed: {res.message}")

    x0 = np.array(problem.x)
    v0 = np.array(problem.v)
    xi0 = np.array(problem.xi)
    eta0 = np.array(problem.eta)
    r0 = x0 - xi0
    h0 = 0.5 * float(v0 @ v0) + 1.0 / float(np.linalg.norm(r0))
    if problem.mobile_charge:
        h0 += 0.5 * float(eta0 @ eta0)
        l0 = np.cross(x0, v0) + np.cross(xi0, eta0)
    else:
        l0 = np.cross(r0, v0)

    traj = TwoBodyTrajectory(problem=problem, t_end=t_end, h0=h0, l0=l0,
                             energy_drift=0.0, momentum_drift=0.0, _sol=res.sol)
    ts = np.linspace(0.0, t_end, 257)
    x, v, xi, eta = traj.evaluate(ts)
    if problem.mobile_charge:
        l = np.cross(x, v) + np.cross(xi, eta)
    else:
        l = np.cross(x - xi, v)
    e_drift = float(np.max(np.abs(traj.energy(ts) - h0)))
    l_drift = float(np.max(np.linalg.norm(l - l0, axis=-1)))
    scale = max(1.0, abs(h0), float(np.linalg.norm(l0)))
    if max(e_drift, l_drift) > 10.0 * tolerance * scale:
        raise RuntimeError(
            f"reference conservation drift too large: energy {e_drift:.3e}, "
            f"angular momentum {l_drift:.3e}")
    return replace(traj, energy_drift=e_drift, momentum_drift=l_drift)


# ---------------------------------------------------------------------------
# independent field sum and volume check


def field_brute_force(targets, ensemble, spec) -> np.ndarray:
    """Plasma field by a naive double loop, written without the package's
    kernel helpers; ground truth for the field solvers.

    Softening enters as 1/(r^2 + eps_p^2)^{3/2}; a coincident target/source
    with zero softening is an error (with softening the self-term vanishes
    only if the caller excluded it -- this sum is over *all* sources).
    """
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros_like(t)
    ep2 = spec.epsilon_plasma ** 2
    pos = ensemble.positions
    w = ensemble.weights
    for i in range(len(t)):
        acc = np.zeros(3)
        for j in range(len(pos)):
            d = t[i] - pos[j]
            r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + ep2
            if r2 == 0.0:
                raise ValueError(
                    f"target {i} coincides with source {j} and softening is zero")
            acc += w[j] * d / r2 ** 1.5
        out[i] = acc
    return out if np.asarray(targets).ndim == 2 else out[0]


def frozen_field_jacobian_determinant(x, v, dt: float, spec,
                                      charge_positions,
                                      delta: float = 1e-5) -> float:
    """Determinant of the 6x6 phase-space Jacobian of one kick-drift-kick
    substep for a single particle in the *frozen* field of the given
    charges, by central finite differences.

    The map is measure-preserving for any position-dependent force, so the
    determinant is exactly one up to differencing error; this pins the
    Liouville property of the product's update formula.
    """
    from .fields import _charge_accel_raw

    xi = np.ascontiguousarray(charge_positions, dtype=float).reshape(-1, 3)

    def advance(z: np.ndarray) -> np.ndarray:
        p, u = z[:3].copy(), z[3:].copy()
        u += 0.5 * dt * _charge_accel_raw(p[None, :], xi, spec)[0]
        p += dt * u
        u += 0.5 * dt * _charge_accel_raw(p[None, :], xi, spec)[0]
        return np.concatenate([p, u])

    z0 = np.concatenate([np.asarray(x, dtype=float),
                         np.asarray(v, dtype=float)])
    jac = np.empty((6, 6))
    for k in range(6):
        zp = z0.copy(); zp[k] += delta
        zm = z0.copy(); zm[k] -= delta
        jac[:, k] = (advance(zp) - advance(zm)) / (2.0 * delta)
    return float(np.linalg.det(jac))


def step_jacobian_determinant(state: SimState, dt: float,
                              config: FieldSolverConfig,
                              delta: float = 1e-6) -> float:
    """Determinant of the one-substep map's phase-space Jacobian, by
    central differences over every particle and charge coordinate.

    The kick-drift-kick update is a composition of shears, so the exact map
    has determinant one; the finite-difference estimate lands within the
    differencing error.
    """
    m = len(state.ensemble)
    n = state.n_charges

    def pack(s: SimState) -> np.ndarray:
        return np.concatenate([
            s.ensemble.positions.ravel(), s.ensemble.velocities.ravel(),
            s.charge_positions.ravel(), s.charge_velocities.ravel()])

    def unpack(vec: np.ndarray) -> SimState:
        from .state import ChargeState, PlasmaEnsemble
        o = 0
        pos = vec[o:o + 3 * m].reshape(m, 3); o += 3 * m
        vel = vec[o:o + 3 * m].reshape(m, 3); o += 3 * m
        xi = vec[o:o + 3 * n].reshape(n, 3); o += 3 * n
        eta = vec[o:o + 3 * n].reshape(n, 3)
        charges = tuple(ChargeState(xi[a], eta[a]) for a in range(n))
        return SimState(state.time, PlasmaEnsemble(
            pos, vel, state.ensemble.weights), charges)

    z0 = pack(state)
    dim = len(z0)
    jac = np.empty((dim, dim))
    for k in range(dim):
        zp = z0.copy(); zp[k] += delta
        zm = z0.copy(); zm[k] -= delta
        jac[:, k] = (pack(step(unpack(zp), dt, config))
                     - pack(step(unpack(zm), dt, config))) / (2.0 * delta)
    return float(np.linalg.det(jac))


# ---------------------------------------------------------------------------
# convergence studies


@dataclass(frozen=True)
class EpsilonLevel:
    epsilon: float
    min_charge_distance: float
    comparable: bool          # trajectory never entered its own eps-ball
    n_substeps: int


@dataclass(frozen=True)
class EpsilonPair:
    eps_coarse: float
    eps_fine: float
    charge_sup_diff: float    # sup over sample times, max over charges
    ensemble_mean_diff: float  # sup over sample times of mean matched-particle diff
    comparable: bool


@dataclass(frozen=True)
class EpsilonStudy:
    times: tuple
    levels: tuple[EpsilonLevel, ...]
    pairs: tuple[EpsilonPair, ...]


def _drive_sampled(state0: SimState, integrator: IntegratorConfig,
                   field_config: FieldSolverConfig, times: np.ndarray):
    """Advance through the grid times, collecting (xi, x) snapshots."""
    xi_hist = [state0.charge_positions]
    x_hist = [state0.ensemble.positions]
    state = state0
    min_dist = math.inf
    n_sub = 0
    for t in times[1:]:
        res = run_window(state, float(t), integrator, field_config)
        state = res.state
        n_sub += res.n_substeps
        for rec in res.records:
            if not math.isnan(rec.min_charge_distance):
                min_dist = min(min_dist, rec.min_charge_distance)
        xi_hist.append(state.charge_positions)
        x_hist.append(state.ensemble.positions)
    return np.stack(xi_hist), np.stack(x_hist), min_dist, n_sub


def epsilon_convergence_study(ic: InitialCondition,
                              integrator: IntegratorConfig,
                              field_config: FieldSolverConfig,
                              epsilons, t_end: float,
                              n_samples: int = 33) -> EpsilonStudy:
    """Run the simulator once per regularisation radius (same seed, same
    ensemble) and report Cauchy decrements between consecutive levels.

    Differences are measured on charge trajectories and matched particles
    at a common time grid.  A level whose minimum particle-charge distance
    dipped below its own epsilon is non-comparable (the kernels genuinely
    differ on the visited region), and so is any pair involving it.
    """
    eps = sorted((float(e) for e in epsilons), reverse=True)
    if len(eps) < 1 or any(e <= 0 for e in eps):
        raise ValueError("epsilons must be positive")
    if not ic.vacuum_radius > 4.0 * max(eps):
        raise ConfigError(
            f"vacuum radius {ic.vacuum_radius} must exceed 4*max(eps) = "
            f"{4.0 * max(eps)} for a meaningful study")
    state0 = sample(ic)
    times = np.linspace(0.0, t_end, n_samples)
    levels = []
    tracks = []
    for e in eps:
        fc = replace(field_config, kernel=replace(field_config.kernel,
                                                  epsilon_charge=e))
        xi_h, x_h, min_dist, n_sub = _drive_sampled(state0, integrator, fc, times)
        levels.append(EpsilonLevel(epsilon=e, min_charge_distance=min_dist,
                                   comparable=bool(min_dist >= e),
                                   n_substeps=n_sub))
        tracks.append((xi_h, x_h))
    pairs = []
    for k in range(len(eps) - 1):
        xi_a, x_a = tracks[k]
        xi_b, x_b = tracks[k + 1]
        charge_diff = float(np.max(np.linalg.norm(xi_a - xi_b, axis=-1))) \
            if xi_a.shape[1] else 0.0
        mean_diff = float(np.max(np.mean(
            np.linalg.norm(x_a - x_b, axis=-1), axis=1))) if x_a.shape[1] else 0.0
        pairs.append(EpsilonPair(
            eps_coarse=eps[k], eps_fine=eps[k + 1],
            charge_sup_diff=charge_diff, ensemble_mean_diff=mean_diff,
            comparable=levels[k].comparable and levels[k + 1].comparable))
    return EpsilonStudy(times=tuple(float(t) for t in times),
                        levels=tuple(levels), pairs=tuple(pairs))


@dataclass(frozen=True)
class DtLevel:
    dt: float
    error: float              # final-time diff vs finest level (nan for finest)
    energy_drift: float
    stable: bool
    n_substeps: int


@dataclass(frozen=True)
class DtStudy:
    levels: tuple[DtLevel, ...]
    order: float              # fitted convergence order (nan if underdetermined)


def dt_convergence_study(ic: InitialCondition,
                         integrator: IntegratorConfig,
                         field_config: FieldSolverConfig,
                         dts, t_end: float) -> DtStudy:
    """Fixed-substep runs at a halving ladder of dt; global error at t_end
    against the finest run, least-squares fitted order.

    A level is unstable (excluded from the fit) when the run blows up or
    its relative energy drift exceeds one; that is the signature of a
    substep too coarse for a close encounter.
    """
    from .diagnostics import total_energy
    from .errors import IntegrationError

    dts = sorted((float(d) for d in dts), reverse=True)
    if len(dts) < 1 or any(d <= 0 for d in dts):
        raise ValueError("dts must be positive")
    state0 = sample(ic)
    h0 = total_energy(state0, field_config.kernel).total
    finals = []
    levels_raw = []
    for d in dts:
        icfg = replace(integrator, dt_max=d, adaptive=False, dt_scale=1.0)
        try:
            res = run_window(state0, t_end, icfg, field_config)
            hT = total_energy(res.state, field_config.kernel).total
            drift = abs(hT - h0) / abs(h0)
            stable = bool(np.isfinite(drift) and drift <= 1.0)
            finals.append(res.state)
            levels_raw.append((d, drift, stable, res.n_substeps))
        except IntegrationError:
            finals.append(None)
            levels_raw.append((d, math.inf, False, 0))
    ref = finals[-1]
    if ref is None:
        raise RuntimeError("finest-dt run blew up; refine the ladder")

    def state_diff(a: SimState, b: SimState) -> float:
        parts = []
        if a.n_charges:
            parts.append(float(np.max(np.linalg.norm(
                a.charge_positions - b.charge_positions, axis=-1))))
        if len(a.ensemble):
            parts.append(float(np.mean(np.linalg.norm(
                a.ensemble.positions - b.ensemble.positions, axis=-1))))
        return max(parts) if parts else 0.0

    levels = []
    for k, (d, drift, stable, n_sub) in enumerate(levels_raw):
        if k == len(dts) - 1:
            err = math.nan
        elif finals[k] is None:
            err = math.inf
        else:
            err = state_diff(finals[k], ref)
        levels.append(DtLevel(dt=d, error=err, energy_drift=drift,
                              stable=stable, n_substeps=n_sub))

    pts = [(lv.dt, lv.error) for lv in levels[:-1]
           if lv.stable and np.isfinite(lv.error) and lv.error > 0.0]
    if len(pts) >= 3:
        # the level adjacent to the reference carries correlated-error bias;
        # drop it when the ladder is long enough
        pts = [p for p in pts if p[0] >= 4.0 * dts[-1]] or pts
    if len(pts) >= 2:
        logs = np.log([p[0] for p in pts])
        loge = np.log([p[1] for p in pts])
        order = float(np.polyfit(logs, loge, 1)[0])
    else:
        order = math.nan
    return DtStudy(levels=tuple(levels), order=order)
