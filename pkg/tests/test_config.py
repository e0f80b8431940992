"""Config grammar: strict keys, defaults, echo round-trip."""
from __future__ import annotations

import pytest

from vppc.config import RunConfig, echo_config, parse_config
from vppc.diagnostics import MONITOR_FACTORIES
from vppc.errors import ConfigError

MINIMAL = """
[run]
t = 1.0

[initial]
m = 100
"""

FULL = """
[run]
t = 2.5
output_dir = out_test
snapshot_stride = 500
diagnostics_stride = 5

[initial]
m = 2000
spatial_shape = shell
spatial_extent = 1.0 2.0
spatial_center = 0.5 0 0
velocity_shape = truncated_maxwellian
v_max = 3.0
sigma = 0.8
vacuum_radius = 0.4
charges = -0.8 0 0 ; 0.8 0 0 0.1 0 0
seed = 42

[kernel]
epsilon = 0.05
epsilon_plasma = 0.02
mode = regularized

[integrator]
dt_max = 0.005
cfl_charge = 0.04
window_k2 = 20
adaptive = true
dt_scale = 0.5

[field]
method = barnes_hut
theta = 0.4
leaf_capacity = 16

[monitors]
enabled = energy_drift, separation, lemma_fac
energy_drift_tol = 1e-3
lemma_fac_tol = 0.1

[study]
epsilons = 0.1 0.05 0.025
dts = 0.004, 0.002, 0.001
n_samples = 17
"""


class TestParseBasics:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.t_end == 1.0
        assert cfg.initial.particle_count == 100
        assert cfg.epsilon_charge == 0.05
        assert cfg.epsilon_plasma is None          # auto
        assert cfg.field_method == "direct"
        assert cfg.monitors == tuple(MONITOR_FACTORIES)
        assert cfg.output_dir == "out"
        assert cfg.integrator.adaptive is True

    def test_full_round(self):
        cfg = parse_config(FULL)
        assert cfg.t_end == 2.5
        assert cfg.initial.spatial_shape == "shell"
        assert cfg.initial.spatial_extent == (1.0, 2.0)
        assert cfg.initial.charges == (((-0.8, 0.0, 0.0), (0.0, 0.0, 0.0)),
                                       ((0.8, 0.0, 0.0), (0.1, 0.0, 0.0)))
        assert cfg.epsilon_plasma == 0.02
        assert cfg.integrator.dt_scale == 0.5
        assert cfg.integrator.window_K2 == 20.0
        assert cfg.integrator.output_stride == 5   # diagnostics stride
        assert cfg.field_method == "barnes_hut"
        assert cfg.theta == 0.4
        assert cfg.monitors == ("energy_drift", "separation", "lemma_fac")
        assert cfg.study_epsilons == (0.1, 0.05, 0.025)
        assert cfg.study_dts == (0.004, 0.002, 0.001)
        assert cfg.study_samples == 17

    def test_inline_comments(self):
        cfg = parse_config(MINIMAL.replace("t = 1.0", "t = 1.0  # horizon"))
        assert cfg.t_end == 1.0


class TestStrictness:
    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=r"unknown section \[outputs\]"):
            parse_config(MINIMAL + "\n[outputs]\nx = 1\n")

    def test_unknown_key_names_offender(self):
        with pytest.raises(ConfigError, match="tmax"):
            parse_config(MINIMAL.replace("t = 1.0", "t = 1.0\ntmax = 2"))

    def test_missing_required_t(self):
        with pytest.raises(ConfigError, match="'t'"):
            parse_config("[run]\noutput_dir = x\n\n[initial]\nm = 10\n")

    def test_missing_required_m(self):
        with pytest.raises(ConfigError, match="'m'"):
            parse_config("[run]\nt = 1.0\n\n[initial]\nseed = 3\n")

    def test_unknown_monitor_name(self):
        bad = MINIMAL + "\n[monitors]\nenabled = energy_drift, warp_core\n"
        with pytest.raises(ConfigError, match="warp_core"):
            parse_config(bad)

    def test_bad_field_method(self):
        with pytest.raises(ConfigError, match="method"):
            parse_config(MINIMAL + "\n[field]\nmethod = fmm\n")

    def test_nonpositive_horizon(self):
        with pytest.raises(ConfigError, match=r"\[run\] t"):
            parse_config(MINIMAL.replace("t = 1.0", "t = 0"))

    def test_zero_stride(self):
        bad = MINIMAL.replace("t = 1.0", "t = 1.0\nsnapshot_stride = 0")
        with pytest.raises(ConfigError, match="snapshot_stride"):
            parse_config(bad)

    def test_malformed_charge(self):
        bad = MINIMAL.replace("m = 100", "m = 100\ncharges = 1 2\n")
        with pytest.raises(ConfigError, match="3 or 6 numbers"):
            parse_config(bad)

    def test_malformed_number(self):
        with pytest.raises(ConfigError, match=r"\[run\] t"):
            parse_config(MINIMAL.replace("t = 1.0", "t = soon"))

    def test_bad_boolean(self):
        bad = MINIMAL + "\n[integrator]\nadaptive = perhaps\n"
        with pytest.raises(ConfigError, match="boolean"):
            parse_config(bad)

    def test_vacuum_must_clear_epsilon(self):
        bad = MINIMAL.replace("m = 100", "m = 100\nvacuum_radius = 0.04")
        with pytest.raises(ConfigError, match="vacuum_radius"):
            parse_config(bad)

    def test_epsilon_plasma_auto_keyword(self):
        cfg = parse_config(MINIMAL + "\n[kernel]\nepsilon_plasma = auto\n")
        assert cfg.epsilon_plasma is None
        with pytest.raises(ConfigError, match="auto"):
            parse_config(MINIMAL + "\n[kernel]\nepsilon_plasma = soft\n")


class TestEchoRoundTrip:
    def test_fixed_point_minimal(self):
        cfg = parse_config(MINIMAL)
        assert parse_config(echo_config(cfg)) == cfg

    def test_fixed_point_full(self):
        cfg = parse_config(FULL)
        echoed = echo_config(cfg)
        assert parse_config(echoed) == cfg
        # echo of the reparse is literally identical text
        assert echo_config(parse_config(echoed)) == echoed

    def test_auto_softening_survives_echo(self):
        cfg = parse_config(MINIMAL)
        assert cfg.epsilon_plasma is None
        assert "auto" in echo_config(cfg)
        assert parse_config(echo_config(cfg)).epsilon_plasma is None

    def test_resolved_softening_recorded(self):
        cfg = parse_config(MINIMAL)
        echoed = echo_config(cfg, epsilon_plasma=0.125)
        assert parse_config(echoed).epsilon_plasma == 0.125


class TestDerivedObjects:
    def test_kernel_spec_resolution(self):
        cfg = parse_config(MINIMAL)
        spec = cfg.kernel_spec(epsilon_plasma=0.07)
        assert spec.epsilon_plasma == 0.07
        assert spec.epsilon_charge == 0.05
        with pytest.raises(ValueError):
            cfg.kernel_spec()            # auto with no resolved value

    def test_kernel_spec_explicit_wins(self):
        cfg = parse_config(FULL)
        spec = cfg.kernel_spec(epsilon_plasma=0.9)
        assert spec.epsilon_plasma == 0.02   # configured value, not fallback

    def test_field_config(self):
        cfg = parse_config(FULL)
        fc = cfg.field_config(cfg.kernel_spec())
        assert fc.method == "barnes_hut"
        assert fc.theta == 0.4
        assert fc.leaf_capacity == 16

    def test_build_monitors_tols(self):
        cfg = parse_config(FULL)
        mons = {m.name: m for m in cfg.build_monitors()}
        assert set(mons) == {"energy_drift", "separation", "lemma_fac"}
        assert mons["energy_drift"].tol == 1e-3
        assert mons["lemma_fac"].tol == 0.1
        assert mons["separation"].tol == 1e-2      # default

    def test_build_all_monitors(self):
        cfg = parse_config(MINIMAL)
        mons = cfg.build_monitors()
        assert len(mons) == len(MONITOR_FACTORIES)
        sqv = next(m for m in mons if m.name == "sqrt_h_variation")
        assert sqv.tol_field == 1e-6

    def test_monitors_none(self):
        cfg = parse_config(MINIMAL + "\n[monitors]\nenabled = none\n")
        assert cfg.monitors == ()
        assert cfg.build_monitors() == []
