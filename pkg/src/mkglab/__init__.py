"""Solitons of the nonlinear Klein-Gordon equation coupled to a Maxwell field
with a weak constant magnetic background: ground states, linearized spectra,
3D evolution, modulation tracking and diagnostics."""

from .config import ExperimentConfig, load_config, parse_config
from .diagnostics import (
    DiagnosticsSample,
    a_bootstrap_norm,
    centroid_and_straightness,
    decomposition_residuals,
    dH_value,
    exterior_weighted_energy,
    momenta,
    total_charge,
)
from .errors import *  # noqa: F401,F403
from .evolution import (
    FieldState,
    Stepper,
    build_initial_data,
    constraint_residual,
    covariant_derivative,
    field_strength,
    gauge_residual,
    step,
)
from .experiment import run_experiment, sweep
from .grid import GridSpec
from .ground_state import GroundStateProfile, energy_identity_residuals, rescale_profile, solve_unit_profile
from .modulation import ModulationRecord, assemble_M0, assemble_M1, fit_lambda, modulation_residual
from .soliton import SolitonParams, eval_phi_S, eval_psi_S, velocity_field
from .spectra import assemble_operator, lowest_eigenvalues, remainder_energy

__version__ = "0.1.0"
