"""Command-line entry point.

Subcommands:

    run <config>          full monitored simulation: diagnostics CSV,
                          snapshots, figures, summary.json
    sample <config>       draw the initial state, write it as a snapshot
    diagnose <snapshot>   one-shot energy report and analysis scales
    oracle two-body <config>
                          high-accuracy reference two-body trajectory
    study eps <config>    regularisation-radius convergence study
    study dt <config>     substep convergence study
    field-check <snapshot>
                          tree field solver accuracy against the direct sum

Exit codes: 0 all hard monitors passed, 1 monitor failure,
2 configuration error, 3 integration failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import reports
from .config import RunConfig, echo_config, parse_config_file
from .diagnostics import (AnalysisParameters, compute_Q, k1_from_energy,
                          total_energy)
from .dynamics import run_simulation
from .errors import ConfigError, IntegrationError
from .fields import FieldSolverConfig, plasma_field_direct, plasma_field_tree
from .kernels import KernelSpec
from .oracle import (TwoBodyProblem, dt_convergence_study,
                     epsilon_convergence_study, two_body_reference)
from .sampling import mean_interparticle_spacing, sample
from .snapshot import read_snapshot, write_snapshot
from .state import min_charge_distance, min_charge_separation

__all__ = ["main"]

EXIT_OK = 0
EXIT_MONITOR = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3


def _f(x) -> str:
    """Shortest round-trip float text: reruns produce byte-identical files."""
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)  # json NaN/Infinity tokens are not portable
    return obj


class _Printer:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


def _resolve_seed(cfg: RunConfig, seed) -> RunConfig:
    if seed is None:
        return cfg
    initial = dataclasses.replace(cfg.initial, seed=int(seed))
    return dataclasses.replace(cfg, initial=initial)


def _resolve_kernel(cfg: RunConfig, state):
    """Resolve an auto plasma softening to the sampled mean spacing."""
    if cfg.epsilon_plasma is not None:
        return cfg.kernel_spec(), cfg.epsilon_plasma
    if len(state.ensemble) >= 2:
        ep = mean_interparticle_spacing(state.ensemble)
    else:
        ep = 0.0
    return cfg.kernel_spec(ep), ep


def _spec_from_header(header) -> KernelSpec:
    mode = "regularized" if header.epsilon > 0.0 else "exact"
    return KernelSpec(epsilon_charge=header.epsilon,
                      epsilon_plasma=header.epsilon_plasma, mode=mode)


# ---------------------------------------------------------------------------
# run


def _cmd_run(args) -> int:
    cfg = _resolve_seed(parse_config_file(args.config), args.seed)
    say = _Printer(args.quiet)
    outdir = Path(args.output or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    state = sample(cfg.initial)
    spec, eps_p = _resolve_kernel(cfg, state)
    echo = echo_config(cfg, epsilon_plasma=eps_p)
    (outdir / "config.resolved.ini").write_text(echo, encoding="utf-8")
    chash = hashlib.sha256(echo.encode("utf-8")).digest()
    fcfg = cfg.field_config(spec)
    monitors = cfg.build_monitors()
    hard = {mon.name: mon.hard for mon in monitors}
    seed = cfg.initial.seed

    report0 = total_energy(state, spec)
    h0 = report0.total
    windowed = state.n_charges > 0 and len(state.ensemble) > 0
    q0 = compute_Q(state, k1_from_energy(h0), spec) if windowed else math.nan

    say(f"run: M={len(state.ensemble)} N={state.n_charges} T={cfg.t_end} "
        f"eps={spec.epsilon_charge} eps_p={eps_p:.6g} seed={seed}")
    say(f"  H0={h0:.12g}  Q0={q0:.6g}  output={outdir}")

    csv_path = outdir / "diagnostics.csv"
    fh = open(csv_path, "w", newline="", encoding="utf-8")
    writer = csv.writer(fh)
    writer.writerow(["t", "H", "kinetic_plasma", "Q_running",
                     "min_charge_distance", "min_charge_separation"]
                    + [f"pass_{mon.name}" for mon in monitors])
    writer.writerow([_f(state.time), _f(h0), _f(report0.kinetic_plasma),
                     _f(q0), _f(min_charge_distance(state)),
                     _f(min_charge_separation(state))]
                    + ["0"] * len(monitors))
    fh.flush()

    progress = {"substeps": 0, "last_snapshot": 0, "rows": 1}

    def write_rows(records):
        for rec in records:
            if rec.energy is None:
                continue
            writer.writerow(
                [_f(rec.time), _f(rec.energy.total), _f(rec.kinetic_plasma),
                 _f(rec.q_running), _f(rec.min_charge_distance),
                 _f(rec.min_charge_separation)]
                + [str(mon.n_pass) for mon in monitors])
            progress["rows"] += 1
        fh.flush()

    def on_window(idx, res):
        write_rows(res.records)
        progress["substeps"] += res.n_substeps
        if progress["substeps"] - progress["last_snapshot"] >= cfg.snapshot_stride:
            write_snapshot(outdir / f"snapshot_{progress['substeps']:08d}.vppc",
                           res.state, spec, seed=seed, config_hash=chash)
            progress["last_snapshot"] = progress["substeps"]

    t_start = time.perf_counter()
    failure = None
    result = None
    try:
        result = run_simulation(state, cfg.t_end, cfg.integrator, fcfg,
                                monitors=tuple(monitors), on_window=on_window)
    except IntegrationError as exc:
        write_rows(exc.records or [])
        failure = {"kind": exc.kind, "index": exc.index, "time": exc.time,
                   "message": str(exc)}
    wall = time.perf_counter() - t_start
    fh.close()

    summary = {
        "m": len(state.ensemble), "n": state.n_charges,
        "t_end": cfg.t_end, "seed": seed,
        "epsilon": spec.epsilon_charge, "epsilon_plasma": eps_p,
        "h0": h0, "q0": q0, "wall_time_s": wall,
        "diagnostics_rows": progress["rows"],
        "config_sha256": chash.hex(),
    }
    if windowed and math.isfinite(q0):
        p = AnalysisParameters(q=q0, k1=k1_from_energy(h0))
        summary["analysis"] = {"k1": p.k1, "delta_t": p.delta_t, "r": p.r,
                               "delta": p.delta, "ell": p.ell,
                               "lambda": 1.0 / (2.0 * h0) if h0 > 0 else math.inf}

    exit_code = EXIT_OK
    if failure is not None:
        summary["integration_failure"] = failure
        exit_code = EXIT_INTEGRATION
        say(f"  integration FAILED at t={failure['time']:.6g} "
            f"({failure['kind']} {failure['index']})")
    else:
        records = result.records
        write_snapshot(outdir / "snapshot_final.vppc", result.final_state,
                       spec, seed=seed, config_hash=chash)
        energies = [(r.time, r.energy.total) for r in records
                    if r.energy is not None]
        times = [t for t, _ in energies]
        hs = [h for _, h in energies]
        scale = max(abs(h0), 1e-300)
        summary.update({
            "n_substeps": result.n_substeps,
            "n_windows": max(len(result.window_boundaries) - 1, 1),
            "q_final": result.window_q[-1] if result.window_q else math.nan,
            "q_sup": (max(result.window_q) if result.window_q
                      and all(math.isfinite(q) for q in result.window_q)
                      else math.nan),
            "energy_drift_max": max(abs(h - h0) / scale for h in hs),
            "min_charge_distance": min((r.min_charge_distance for r in records),
                                       default=math.inf),
            "min_charge_separation": min((r.min_charge_separation
                                          for r in records), default=math.inf),
        })

        constants = {}
        for r in result.monitor_results:
            if r.name == "q_envelope" and not r.skipped:
                constants["envelope_C"] = r.measured
            if r.name == "protection_sphere" and not r.skipped:
                for key in ("c5_max", "c6_max", "min_iddot_ratio"):
                    if key in r.details and math.isfinite(r.details[key]):
                        constants[key] = max(constants.get(key, -math.inf),
                                             r.details[key])
        summary["measured_constants"] = constants

        tallies = {mon.name: {"pass": mon.n_pass, "fail": mon.n_fail,
                              "hard": mon.hard} for mon in monitors}
        summary["monitors"] = tallies
        summary["monitor_results"] = [_jsonable(r) for r in result.monitor_results]

        hard_failures = [r for r in result.monitor_results
                         if not r.skipped and not r.satisfied
                         and hard.get(r.name, True)]
        summary["hard_failures"] = sorted({r.name for r in hard_failures})
        summary["n_hard_failures"] = len(hard_failures)

        figures = [reports.energy_figure(outdir / "energy.png", times, hs, h0)]
        if windowed:
            rt = [r.time for r in records]
            figures.append(reports.q_history_figure(
                outdir / "q_history.png", rt, [r.q_running for r in records],
                result.window_boundaries,
                envelope=((q0, constants["envelope_C"])
                          if "envelope_C" in constants else None)))
            lam = 1.0 / (2.0 * h0) if h0 > 0 else math.inf
            figures.append(reports.separation_figure(
                outdir / "separations.png", rt,
                [r.min_charge_distance for r in records],
                [r.min_charge_separation for r in records],
                lam, spec.epsilon_charge))
        summary["figures"] = figures

        for mon in monitors:
            t = tallies[mon.name]
            say(f"  monitor {mon.name:<18} pass={t['pass']:<8} fail={t['fail']}")
        if hard_failures:
            exit_code = EXIT_MONITOR
            worst = hard_failures[0]
            say(f"  HARD FAILURE: {worst.name} measured={worst.measured:.6g} "
                f"bound={worst.bound:.6g} window={worst.window}")
        say(f"  drift_max={summary['energy_drift_max']:.3e} "
            f"substeps={result.n_substeps} wall={wall:.2f}s")

    summary["exit_status"] = exit_code
    with open(outdir / "summary.json", "w", encoding="utf-8") as sfh:
        json.dump(_jsonable(summary), sfh, indent=2)
        sfh.write("\n")
    say(f"  wrote {csv_path}")
    return exit_code


# ---------------------------------------------------------------------------
# sample / diagnose


def _cmd_sample(args) -> int:
    cfg = _resolve_seed(parse_config_file(args.config), args.seed)
    say = _Printer(args.quiet)
    outdir = Path(args.output or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    state = sample(cfg.initial)
    spec, eps_p = _resolve_kernel(cfg, state)
    echo = echo_config(cfg, epsilon_plasma=eps_p)
    (outdir / "config.resolved.ini").write_text(echo, encoding="utf-8")
    path = outdir / "initial.vppc"
    write_snapshot(path, state, spec, seed=cfg.initial.seed,
                   config_hash=hashlib.sha256(echo.encode("utf-8")).digest())
    h0 = total_energy(state, spec).total
    say(f"sample: M={len(state.ensemble)} N={state.n_charges} "
        f"seed={cfg.initial.seed}")
    say(f"  H0={h0:.12g}")
    if state.n_charges and len(state.ensemble):
        q0 = compute_Q(state, k1_from_energy(h0), spec)
        say(f"  Q0={q0:.12g}")
    say(f"  wrote {path}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    state, header = read_snapshot(args.snapshot)
    say = _Printer(args.quiet)
    spec = _spec_from_header(header)
    rep = total_energy(state, spec)
    say(f"snapshot: t={state.time:.6g} M={header.n_particles} "
        f"N={header.n_charges} eps={header.epsilon} "
        f"eps_p={header.epsilon_plasma}")
    say(f"  H                      = {rep.total:.12g}")
    say(f"  kinetic (plasma)       = {rep.kinetic_plasma:.12g}")
    say(f"  kinetic (charges)      = {rep.kinetic_charges:.12g}")
    say(f"  plasma-charge potential= {rep.plasma_charge_potential:.12g}")
    say(f"  plasma-plasma potential= {rep.plasma_plasma_potential:.12g}")
    say(f"  charge-charge potential= {rep.charge_charge_potential:.12g}")
    out = {"time": state.time, "m": header.n_particles,
           "n": header.n_charges, "epsilon": header.epsilon,
           "epsilon_plasma": header.epsilon_plasma,
           "energy": _jsonable(rep)}
    if state.n_charges and len(state.ensemble):
        k1 = k1_from_energy(rep.total)
        q = compute_Q(state, k1, spec)
        p = AnalysisParameters(q=q, k1=k1)
        lam = 1.0 / (2.0 * rep.total) if rep.total > 0 else math.inf
        say(f"  Q                      = {q:.12g}")
        say(f"  K1={k1:.6g}  window={p.delta_t:.6g}  R={p.r:.6g}  "
            f"delta={p.delta:.6g}  ell={p.ell:.6g}")
        say(f"  lambda=1/(2H)          = {lam:.6g}")
        say(f"  min plasma-charge dist = {min_charge_distance(state):.6g}")
        out["q"] = q
        out["analysis"] = {"k1": k1, "delta_t": p.delta_t, "r": p.r,
                           "delta": p.delta, "ell": p.ell, "lambda": lam}
    if state.n_charges >= 2:
        say(f"  min charge separation  = {min_charge_separation(state):.6g}")
        out["min_charge_separation"] = min_charge_separation(state)
    if state.n_charges and len(state.ensemble):
        out["min_charge_distance"] = min_charge_distance(state)
    if args.output:
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "diagnose.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(out), fh, indent=2)
            fh.write("\n")
        say(f"  wrote {outdir / 'diagnose.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle two-body


_TWO_BODY_KEYS = {
    "x": ("floats3", None),
    "v": ("floats3", None),
    "xi": ("floats3", (0.0, 0.0, 0.0)),
    "eta": ("floats3", (0.0, 0.0, 0.0)),
    "mobile": ("bool", True),
    "t": ("float", None),
    "tolerance": ("float", 1e-12),
    "n_samples": ("int", 257),
}


def _parse_two_body(text: str) -> dict:
    import configparser

    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for section in cp.sections():
        if section != "two_body":
            raise ConfigError(f"unknown section [{section}]; a two-body "
                              f"config has a single [two_body] section")
    if not cp.has_section("two_body"):
        raise ConfigError("missing [two_body] section")
    raw = cp["two_body"]
    for key in raw:
        if key not in _TWO_BODY_KEYS:
            raise ConfigError(f"unknown key {key!r} in section [two_body]; "
                              f"known keys: {', '.join(sorted(_TWO_BODY_KEYS))}")
    out = {}
    for key, (kind, default) in _TWO_BODY_KEYS.items():
        if key not in raw:
            if default is None:
                raise ConfigError(f"missing required key {key!r} in [two_body]")
            out[key] = default
            continue
        text_val = raw[key].strip()
        where = f"[two_body] {key}"
        if kind == "floats3":
            vals = tuple(float(p) for p in text_val.replace(",", " ").split())
            if len(vals) != 3:
                raise ConfigError(f"{where}: expected 3 numbers, got {text_val!r}")
            out[key] = vals
        elif kind == "float":
            out[key] = float(text_val)
        elif kind == "int":
            out[key] = int(text_val)
        else:
            low = text_val.lower()
            if low not in ("true", "false", "yes", "no", "on", "off", "1", "0"):
                raise ConfigError(f"{where}: expected a boolean, got {text_val!r}")
            out[key] = low in ("true", "yes", "on", "1")
    return out


def _cmd_oracle_two_body(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        params = _parse_two_body(fh.read())
    say = _Printer(args.quiet)
    problem = TwoBodyProblem(x=params["x"], v=params["v"], xi=params["xi"],
                             eta=params["eta"],
                             mobile_charge=params["mobile"])
    traj = two_body_reference(problem, params["t"],
                              tolerance=params["tolerance"])
    ts = np.linspace(0.0, params["t"], params["n_samples"])
    x, v, xi, eta = traj.evaluate(ts)
    say(f"two-body reference: T={params['t']} tolerance={params['tolerance']}")
    say(f"  h0={traj.h0:.12g}  |L0|={np.linalg.norm(traj.l0):.12g}")
    say(f"  energy drift={traj.energy_drift:.3e}  "
        f"momentum drift={traj.momentum_drift:.3e}")
    say(f"  min separation={traj.min_separation():.12g}")
    outdir = Path(args.output or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "two_body.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z", "vx", "vy", "vz",
                         "xi_x", "xi_y", "xi_z", "eta_x", "eta_y", "eta_z"])
        for i, t in enumerate(ts):
            writer.writerow([_f(t)] + [_f(c) for c in x[i]]
                            + [_f(c) for c in v[i]] + [_f(c) for c in xi[i]]
                            + [_f(c) for c in eta[i]])
    fig = reports.two_body_figure(outdir / "two_body.png", ts, x, xi)
    say(f"  wrote {csv_path} and {fig}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# studies


def _study_setup(args):
    cfg = _resolve_seed(parse_config_file(args.config), args.seed)
    state = sample(cfg.initial)
    spec, _ = _resolve_kernel(cfg, state)
    return cfg, cfg.field_config(spec)


def _cmd_study_eps(args) -> int:
    cfg, fcfg = _study_setup(args)
    say = _Printer(args.quiet)
    if len(cfg.study_epsilons) < 2:
        raise ConfigError("[study] epsilons needs at least two values "
                          "for a convergence study")
    study = epsilon_convergence_study(cfg.initial, cfg.integrator, fcfg,
                                      cfg.study_epsilons, cfg.t_end,
                                      n_samples=cfg.study_samples)
    outdir = Path(args.output or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "eps_levels.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "min_charge_distance", "comparable",
                         "n_substeps"])
        for lv in study.levels:
            writer.writerow([_f(lv.epsilon), _f(lv.min_charge_distance),
                             str(lv.comparable).lower(), lv.n_substeps])
    with open(outdir / "eps_pairs.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps_coarse", "eps_fine", "charge_sup_diff",
                         "ensemble_mean_diff", "comparable"])
        for pr in study.pairs:
            writer.writerow([_f(pr.eps_coarse), _f(pr.eps_fine),
                             _f(pr.charge_sup_diff), _f(pr.ensemble_mean_diff),
                             str(pr.comparable).lower()])
    say("eps study:")
    for lv in study.levels:
        say(f"  eps={lv.epsilon:<10g} min_dist={lv.min_charge_distance:.6g} "
            f"comparable={lv.comparable} substeps={lv.n_substeps}")
    for pr in study.pairs:
        say(f"  {pr.eps_coarse:g} vs {pr.eps_fine:g}: charge diff "
            f"{pr.charge_sup_diff:.3e}, ensemble diff "
            f"{pr.ensemble_mean_diff:.3e}, comparable={pr.comparable}")
    usable = [pr for pr in study.pairs if pr.comparable]
    if usable:
        fig = reports.convergence_figure(
            outdir / "eps_convergence.png",
            [pr.eps_coarse for pr in usable],
            [max(pr.charge_sup_diff, pr.ensemble_mean_diff) for pr in usable],
            "coarse epsilon", "trajectory difference",
            title="consecutive-level differences")
        say(f"  wrote {fig}")
    return EXIT_OK


def _cmd_study_dt(args) -> int:
    cfg, fcfg = _study_setup(args)
    say = _Printer(args.quiet)
    if len(cfg.study_dts) < 2:
        raise ConfigError("[study] dts needs at least two values "
                          "for a convergence study")
    study = dt_convergence_study(cfg.initial, cfg.integrator, fcfg,
                                 cfg.study_dts, cfg.t_end)
    outdir = Path(args.output or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "dt_study.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dt", "error", "energy_drift", "stable",
                         "n_substeps"])
        for lv in study.levels:
            writer.writerow([_f(lv.dt), _f(lv.error), _f(lv.energy_drift),
                             str(lv.stable).lower(), lv.n_substeps])
    say(f"dt study: fitted order {study.order:.4g}")
    for lv in study.levels:
        say(f"  dt={lv.dt:<12g} error={lv.error:.6e} "
            f"drift={lv.energy_drift:.3e} stable={lv.stable}")
    pts = [(lv.dt, lv.error) for lv in study.levels
           if lv.stable and math.isfinite(lv.error)]
    if pts:
        fig = reports.convergence_figure(
            outdir / "dt_convergence.png", [p[0] for p in pts],
            [p[1] for p in pts], "dt", "error vs finest run",
            title="substep convergence",
            order=study.order if math.isfinite(study.order) else None)
        say(f"  wrote {fig}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# field-check


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.float64) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azimuth = np.pi * (1.0 + math.sqrt(5.0)) * i
    return np.stack([np.sin(polar) * np.cos(azimuth),
                     np.sin(polar) * np.sin(azimuth),
                     np.cos(polar)], axis=1)


def _cmd_field_check(args) -> int:
    state, header = read_snapshot(args.snapshot)
    say = _Printer(args.quiet)
    ensemble = state.ensemble
    if len(ensemble) < 2:
        raise ConfigError("field-check needs at least two particles")
    spec = _spec_from_header(header)
    thetas = tuple(args.theta) if args.theta else (0.0, 0.2, 0.4, 0.5, 0.6, 0.8)

    center = np.average(ensemble.positions, axis=0, weights=ensemble.weights)
    radii = np.linalg.norm(ensemble.positions - center, axis=1)
    r_probe = 1.1 * float(radii.max())
    probes = center + r_probe * _fibonacci_sphere(args.probes)

    direct = plasma_field_direct(probes, ensemble, spec)
    direct_norm = np.linalg.norm(direct, axis=1)
    bulk_direct = plasma_field_direct(ensemble.positions, ensemble,
                                      spec, self_targets=True)
    bulk_scale = float(np.sqrt(np.mean(np.sum(bulk_direct ** 2, axis=1))))

    rows = []
    say(f"field-check: M={len(ensemble)} probes={args.probes} "
        f"r_probe={r_probe:.4g} eps_p={spec.epsilon_plasma:g}")
    for theta in thetas:
        fc = FieldSolverConfig(kernel=spec, method="barnes_hut", theta=theta,
                               leaf_capacity=args.leaf_capacity)
        t0 = time.perf_counter()
        tree = plasma_field_tree(probes, ensemble, fc)
        dt_probe = time.perf_counter() - t0
        rel = np.linalg.norm(tree - direct, axis=1) / direct_norm
        bulk_tree = plasma_field_tree(ensemble.positions, ensemble,
                                      fc, self_targets=True)
        bulk_rel = (np.linalg.norm(bulk_tree - bulk_direct, axis=1)
                    / max(bulk_scale, 1e-300))
        rows.append((theta, float(rel.max()), float(rel.mean()),
                     float(bulk_rel.max()), dt_probe))
        say(f"  theta={theta:<5g} max_rel={rel.max():.3e} "
            f"mean_rel={rel.mean():.3e} bulk_scaled_max={bulk_rel.max():.3e} "
            f"({dt_probe * 1e3:.1f} ms)")

    outdir = Path(args.output or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "field_check.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "max_rel_error", "mean_rel_error",
                         "bulk_scaled_max_error", "eval_seconds"])
        for row in rows:
            writer.writerow([_f(row[0]), _f(row[1]), _f(row[2]), _f(row[3]),
                             _f(row[4])])
    fig = reports.field_error_figure(outdir / "field_errors.png",
                                     [r[0] for r in rows],
                                     [r[1] for r in rows],
                                     [r[2] for r in rows])
    say(f"  wrote {csv_path} and {fig}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None,
                     help="override the sampling seed")
    sub.add_argument("--threads", type=int, default=None,
                     help="parallelism degree for field evaluation")
    sub.add_argument("--output", default=None, help="output directory")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress progress output (files are still written)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vppc",
        description="Kinetic plasma with embedded point charges: "
                    "simulator, diagnostics, and convergence studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full monitored simulation")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sample", help="draw and write the initial state")
    p.add_argument("config")
    _add_common(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("diagnose", help="energy report for a snapshot")
    p.add_argument("snapshot")
    _add_common(p)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("oracle", help="independent reference solutions")
    osub = p.add_subparsers(dest="oracle_command", required=True)
    p2 = osub.add_parser("two-body", help="integrable two-body reference")
    p2.add_argument("config")
    _add_common(p2)
    p2.set_defaults(func=_cmd_oracle_two_body)

    p = sub.add_parser("study", help="convergence studies")
    ssub = p.add_subparsers(dest="study_command", required=True)
    p2 = ssub.add_parser("eps", help="regularisation-radius convergence")
    p2.add_argument("config")
    _add_common(p2)
    p2.set_defaults(func=_cmd_study_eps)
    p2 = ssub.add_parser("dt", help="substep convergence")
    p2.add_argument("config")
    _add_common(p2)
    p2.set_defaults(func=_cmd_study_dt)

    p = sub.add_parser("field-check",
                       help="tree field accuracy against the direct sum")
    p.add_argument("snapshot")
    p.add_argument("--theta", type=float, action="append", default=None,
                   help="opening angle (repeatable; default ladder)")
    p.add_argument("--probes", type=int, default=512,
                   help="number of probe targets")
    p.add_argument("--leaf-capacity", type=int, default=8)
    _add_common(p)
    p.set_defaults(func=_cmd_field_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        import numba

        numba.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"error: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
