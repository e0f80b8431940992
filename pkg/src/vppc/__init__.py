"""Kinetic plasma with embedded point charges.

A 3-D Vlasov-Poisson plasma, discretised as weighted macroparticles moving
along characteristics, coupled to a handful of mobile point charges of the
same sign.  The plasma-charge interaction is regularised inside a small
sphere so the coupled system is an ODE with a conserved energy; everything
the analysis of that system promises (kinetic bounds, charge separation
floors, protection spheres around each charge, windowed energy envelopes)
is checked at runtime by monitors.

Layout:

    kernels      interaction kernels and their exact/regularised variants
    state        immutable phase-space containers
    fields       direct and Barnes-Hut field evaluation
    dynamics     symplectic integration, windows, the run loop
    diagnostics  energy functionals, analysis scales, runtime monitors
    sampling     initial-condition description and rejection sampling
    oracle       independent references: two-body, brute-force fields,
                 volume conservation, eps/dt convergence studies
    config       run-configuration text format
    snapshot     binary state files
    reports      figure rendering
    cli          command-line interface
"""
from __future__ import annotations

from .config import RunConfig, echo_config, parse_config, parse_config_file
from .diagnostics import (AnalysisParameters, EnergyReport, MonitorResult,
                          compute_Q, default_monitors, density_norm_estimate,
                          fit_envelope_constant, k1_from_energy,
                          pointwise_energy, total_energy, virial_trace)
from .dynamics import (IntegratorConfig, RunResult, SubstepRecord,
                       WindowResult, adaptive_dt, build_partition,
                       run_simulation, run_window, step)
from .errors import ConfigError, IntegrationError
from .fields import (FieldSolverConfig, Octree, build_octree, charge_field,
                     field_on_charge, plasma_field, plasma_field_at_charges,
                     plasma_field_direct, plasma_field_tree,
                     static_field_bound)
from .kernels import (KernelSpec, coulomb_force, regularized_charge_force,
                      regularized_charge_potential, softened_plasma_force,
                      softened_plasma_potential)
from .oracle import (DtStudy, EpsilonStudy, TwoBodyProblem, TwoBodyTrajectory,
                     dt_convergence_study, epsilon_convergence_study,
                     field_brute_force, frozen_field_jacobian_determinant,
                     step_jacobian_determinant, two_body_reference)
from .sampling import (InitialCondition, initial_Q,
                       mean_interparticle_spacing, sample)
from .snapshot import SnapshotHeader, read_snapshot, write_snapshot
from .state import (ChargeState, Macroparticle, PlasmaEnsemble, SimState,
                    min_charge_distance, min_charge_separation)

__version__ = "1.0.0"

__all__ = [
    "AnalysisParameters", "ChargeState", "ConfigError", "DtStudy",
    "EnergyReport", "EpsilonStudy", "FieldSolverConfig", "InitialCondition",
    "IntegrationError", "IntegratorConfig", "KernelSpec", "Macroparticle",
    "MonitorResult", "Octree", "PlasmaEnsemble", "RunConfig", "RunResult",
    "SimState", "SnapshotHeader", "SubstepRecord", "TwoBodyProblem",
    "TwoBodyTrajectory", "WindowResult", "adaptive_dt", "build_octree",
    "build_partition", "charge_field", "compute_Q", "coulomb_force",
    "default_monitors", "density_norm_estimate",
    "dt_convergence_study", "echo_config", "epsilon_convergence_study",
    "field_brute_force", "field_on_charge", "fit_envelope_constant",
    "frozen_field_jacobian_determinant", "initial_Q", "k1_from_energy",
    "mean_interparticle_spacing", "min_charge_distance",
    "min_charge_separation", "parse_config", "parse_config_file",
    "plasma_field", "plasma_field_at_charges", "plasma_field_direct",
    "plasma_field_tree", "pointwise_energy", "read_snapshot",
    "regularized_charge_force", "regularized_charge_potential",
    "run_simulation", "run_window", "sample", "softened_plasma_force",
    "softened_plasma_potential", "static_field_bound", "step",
    "step_jacobian_determinant", "total_energy", "two_body_reference",
    "virial_trace", "write_snapshot",
]
