"""Run configuration: INI-style text in, validated RunConfig out.

The grammar is deliberately rigid: fixed sections, fixed keys, unknown
anything is an error (a typo must never silently fall back to a default).
``echo_config`` writes every resolved value back out, and
``parse_config(echo_config(parse_config(text)))`` is the identity on the
parsed result, so the echo file dropped into each run directory fully
reproduces the experiment.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .diagnostics import MONITOR_FACTORIES, Monitor
from .dynamics import IntegratorConfig
from .errors import ConfigError
from .fields import FieldSolverConfig
from .kernels import KernelSpec
from .sampling import InitialCondition

__all__ = ["RunConfig", "parse_config", "parse_config_file", "echo_config"]


_SECTIONS = ("run", "initial", "kernel", "integrator", "field", "monitors",
             "study")

# key -> (type tag, default); None default means required
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "run": {
        "t": ("float", None),
        "output_dir": ("str", "out"),
        "snapshot_stride": ("int", 1000),
        "diagnostics_stride": ("int", 10),
    },
    "initial": {
        "m": ("int", None),
        "spatial_shape": ("str", "ball"),
        "spatial_extent": ("floats", (2.0,)),
        "spatial_center": ("floats", (0.0, 0.0, 0.0)),
        "velocity_shape": ("str", "uniform_ball"),
        "v_max": ("float", 1.0),
        "sigma": ("float", 1.0),
        "vacuum_radius": ("float", 0.3),
        "charges": ("charges", ()),
        "seed": ("int", 0),
    },
    "kernel": {
        "epsilon": ("float", 0.05),
        "epsilon_plasma": ("float_or_auto", None),  # default: auto
        "mode": ("str", "regularized"),
    },
    "integrator": {
        "dt_max": ("float", 1e-2),
        "cfl_charge": ("float", 0.05),
        "window_k2": ("float", 16.0),
        "adaptive": ("bool", True),
        "dt_scale": ("float", 1.0),
    },
    "field": {
        "method": ("str", "direct"),
        "theta": ("float", 0.5),
        "leaf_capacity": ("int", 8),
    },
    "monitors": {
        "enabled": ("str", "all"),
        "energy_drift_tol": ("float", 1e-2),
        "kinetic_bound_tol": ("float", 1e-2),
        "eta_bound_tol": ("float", 1e-2),
        "separation_tol": ("float", 1e-2),
        "lemma_fac_tol": ("float", 0.05),
        "sqrt_h_variation_tol": ("float", 0.05),
        "sqrt_h_variation_tol_field": ("float", 1e-6),
    },
    "study": {
        "epsilons": ("floats", ()),
        "dts": ("floats", ()),
        "n_samples": ("int", 33),
    },
}

_MONITOR_TOL_KEYS = {
    "energy_drift": ("energy_drift_tol",),
    "kinetic_bound": ("kinetic_bound_tol",),
    "eta_bound": ("eta_bound_tol",),
    "separation": ("separation_tol",),
    "lemma_fac": ("lemma_fac_tol",),
    "sqrt_h_variation": ("sqrt_h_variation_tol", "sqrt_h_variation_tol_field"),
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description (pure scalars and tuples: two configs
    parsed from the same text compare equal).

    ``epsilon_plasma`` None means "auto": resolve to the sampled ensemble's
    mean interparticle spacing at run time.
    """

    initial: InitialCondition
    t_end: float
    epsilon_charge: float
    epsilon_plasma: float | None
    kernel_mode: str
    integrator: IntegratorConfig
    field_method: str
    theta: float
    leaf_capacity: int
    monitors: tuple[str, ...]
    monitor_tols: tuple[tuple[str, float], ...]
    output_dir: str
    snapshot_stride: int
    diagnostics_stride: int
    study_epsilons: tuple[float, ...] = ()
    study_dts: tuple[float, ...] = ()
    study_samples: int = 33

    def __post_init__(self):
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ConfigError(f"[run] t must be finite and > 0, got {self.t_end}")
        if self.snapshot_stride < 1:
            raise ConfigError(f"[run] snapshot_stride must be >= 1, "
                              f"got {self.snapshot_stride}")
        if self.diagnostics_stride < 1:
            raise ConfigError(f"[run] diagnostics_stride must be >= 1, "
                              f"got {self.diagnostics_stride}")
        for name in self.monitors:
            if name not in MONITOR_FACTORIES:
                raise ConfigError(
                    f"[monitors] unknown monitor {name!r}; known: "
                    f"{', '.join(sorted(MONITOR_FACTORIES))}")
        if self.kernel_mode == "regularized" and \
                not self.initial.vacuum_radius > self.epsilon_charge:
            raise ConfigError(
                f"vacuum_radius {self.initial.vacuum_radius} must exceed the "
                f"regularisation radius epsilon {self.epsilon_charge}: the "
                f"kernel support must start inside the vacuum island")

    def kernel_spec(self, epsilon_plasma: float | None = None) -> KernelSpec:
        """KernelSpec with auto plasma softening resolved to the given value."""
        ep = self.epsilon_plasma if self.epsilon_plasma is not None else epsilon_plasma
        if ep is None:
            raise ValueError("epsilon_plasma is auto and no resolved value given")
        return KernelSpec(epsilon_charge=self.epsilon_charge,
                          epsilon_plasma=ep, mode=self.kernel_mode)

    def field_config(self, spec: KernelSpec) -> FieldSolverConfig:
        return FieldSolverConfig(kernel=spec, method=self.field_method,
                                 theta=self.theta,
                                 leaf_capacity=self.leaf_capacity)

    def build_monitors(self) -> list[Monitor]:
        tols = dict(self.monitor_tols)
        out = []
        for name in self.monitors:
            if name == "sqrt_h_variation":
                out.append(MONITOR_FACTORIES[name](
                    tol=tols["sqrt_h_variation_tol"],
                    tol_field=tols["sqrt_h_variation_tol_field"]))
            elif name in _MONITOR_TOL_KEYS:
                out.append(MONITOR_FACTORIES[name](tol=tols[_MONITOR_TOL_KEYS[name][0]]))
            else:
                out.append(MONITOR_FACTORIES[name]())
        return out


def _parse_bool(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def _parse_floats(raw: str, where: str) -> tuple[float, ...]:
    parts = [p for chunk in raw.split(",") for p in chunk.split()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{where}: expected numbers, got {raw!r}") from None


def _parse_charges(raw: str, where: str) -> tuple:
    """Semicolon-separated charges, each 'x y z vx vy vz' (or 'x y z' at rest)."""
    out = []
    for item in raw.split(";"):
        item = item.strip()
        if not item:
            continue
        vals = _parse_floats(item, where)
        if len(vals) == 3:
            out.append((vals, (0.0, 0.0, 0.0)))
        elif len(vals) == 6:
            out.append((vals[:3], vals[3:]))
        else:
            raise ConfigError(
                f"{where}: each charge needs 3 or 6 numbers, got {item!r}")
    return tuple(out)


def _convert(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a {kind}, got {raw!r}") from None
    if kind == "bool":
        return _parse_bool(raw, where)
    if kind == "floats":
        return _parse_floats(raw, where)
    if kind == "charges":
        return _parse_charges(raw, where)
    if kind == "float_or_auto":
        if raw.lower() == "auto":
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a number or 'auto', "
                              f"got {raw!r}") from None
    return raw  # str


def parse_config(text: str) -> RunConfig:
    """Parse configuration text.

    Unknown sections or keys are errors naming the offender; missing
    required keys ([run] t, [initial] m) are errors; everything else takes
    its documented default.
    """
    # '#' only: ';' separates charge entries and must never start a comment
    cp = configparser.ConfigParser(interpolation=None,
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]; known sections: "
                              + ", ".join(f"[{s}]" for s in _SECTIONS))

    values: dict[str, dict[str, object]] = {}
    for section, schema in _SCHEMA.items():
        values[section] = {}
        present = cp[section] if cp.has_section(section) else {}
        for key in present:
            if key not in schema:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]; known keys: "
                    + ", ".join(sorted(schema)))
        for key, (kind, default) in schema.items():
            if key in present:
                values[section][key] = _convert(kind, present[key],
                                                f"[{section}] {key}")
            elif default is None and not (section == "kernel"
                                          and key == "epsilon_plasma"):
                raise ConfigError(f"missing required key {key!r} in [{section}]")
            else:
                values[section][key] = default

    ini = values["initial"]
    try:
        initial = InitialCondition(
            particle_count=ini["m"], vacuum_radius=ini["vacuum_radius"],
            spatial_shape=ini["spatial_shape"],
            spatial_extent=ini["spatial_extent"],
            spatial_center=ini["spatial_center"],
            velocity_shape=ini["velocity_shape"], v_max=ini["v_max"],
            sigma=ini["sigma"], charges=ini["charges"], seed=ini["seed"])
        integ = IntegratorConfig(
            dt_max=values["integrator"]["dt_max"],
            cfl_charge=values["integrator"]["cfl_charge"],
            window_K2=values["integrator"]["window_k2"],
            output_stride=values["run"]["diagnostics_stride"],
            adaptive=values["integrator"]["adaptive"],
            dt_scale=values["integrator"]["dt_scale"])
        mon = values["monitors"]
        enabled = mon["enabled"].strip().lower()
        if enabled == "all":
            names = tuple(MONITOR_FACTORIES)
        elif enabled == "none":
            names = ()
        else:
            names = tuple(n.strip() for n in mon["enabled"].split(",") if n.strip())
        tols = tuple(sorted((k, float(v)) for k, v in mon.items()
                            if k != "enabled"))
        ker = values["kernel"]
        fld = values["field"]
        if fld["method"] not in ("direct", "barnes_hut"):
            raise ConfigError(f"[field] method must be 'direct' or "
                              f"'barnes_hut', got {fld['method']!r}")
        return RunConfig(
            initial=initial, t_end=values["run"]["t"],
            epsilon_charge=ker["epsilon"], epsilon_plasma=ker["epsilon_plasma"],
            kernel_mode=ker["mode"], integrator=integ,
            field_method=fld["method"], theta=fld["theta"],
            leaf_capacity=fld["leaf_capacity"],
            monitors=names, monitor_tols=tols,
            output_dir=values["run"]["output_dir"],
            snapshot_stride=values["run"]["snapshot_stride"],
            diagnostics_stride=values["run"]["diagnostics_stride"],
            study_epsilons=values["study"]["epsilons"],
            study_dts=values["study"]["dts"],
            study_samples=values["study"]["n_samples"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_file(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def echo_config(cfg: RunConfig, epsilon_plasma: float | None = None) -> str:
    """Render every resolved value back to config text.

    With ``epsilon_plasma`` given, an auto plasma softening is replaced by
    that resolved number (the run's echo); otherwise 'auto' survives the
    round trip unchanged.
    """
    ic = cfg.initial
    charges = "; ".join(
        " ".join(repr(c) for c in (*p, *v)) for p, v in ic.charges)
    if cfg.epsilon_plasma is not None:
        ep = repr(cfg.epsilon_plasma)
    elif epsilon_plasma is not None:
        ep = repr(float(epsilon_plasma))
    else:
        ep = "auto"
    tols = dict(cfg.monitor_tols)
    lines = [
        "[run]",
        f"t = {_fmt(cfg.t_end)}",
        f"output_dir = {cfg.output_dir}",
        f"snapshot_stride = {cfg.snapshot_stride}",
        f"diagnostics_stride = {cfg.diagnostics_stride}",
        "",
        "[initial]",
        f"m = {ic.particle_count}",
        f"spatial_shape = {ic.spatial_shape}",
        f"spatial_extent = {_fmt(ic.spatial_extent)}",
        f"spatial_center = {_fmt(ic.spatial_center)}",
        f"velocity_shape = {ic.velocity_shape}",
        f"v_max = {_fmt(ic.v_max)}",
        f"sigma = {_fmt(ic.sigma)}",
        f"vacuum_radius = {_fmt(ic.vacuum_radius)}",
        f"charges = {charges}",
        f"seed = {ic.seed}",
        "",
        "[kernel]",
        f"epsilon = {_fmt(cfg.epsilon_charge)}",
        f"epsilon_plasma = {ep}",
        f"mode = {cfg.kernel_mode}",
        "",
        "[integrator]",
        f"dt_max = {_fmt(cfg.integrator.dt_max)}",
        f"cfl_charge = {_fmt(cfg.integrator.cfl_charge)}",
        f"window_k2 = {_fmt(cfg.integrator.window_K2)}",
        f"adaptive = {_fmt(cfg.integrator.adaptive)}",
        f"dt_scale = {_fmt(cfg.integrator.dt_scale)}",
        "",
        "[field]",
        f"method = {cfg.field_method}",
        f"theta = {_fmt(cfg.theta)}",
        f"leaf_capacity = {cfg.leaf_capacity}",
        "",
        "[monitors]",
        f"enabled = {', '.join(cfg.monitors) if cfg.monitors else 'none'}",
    ]
    for key in sorted(tols):
        lines.append(f"{key} = {_fmt(tols[key])}")
    if cfg.study_epsilons or cfg.study_dts:
        lines += ["", "[study]"]
        if cfg.study_epsilons:
            lines.append(f"epsilons = {_fmt(cfg.study_epsilons)}")
        if cfg.study_dts:
            lines.append(f"dts = {_fmt(cfg.study_dts)}")
        lines.append(f"n_samples = {cfg.study_samples}")
    return "\n".join(lines) + "\n"
