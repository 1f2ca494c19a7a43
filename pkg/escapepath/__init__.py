"""Package initialization for escapepath."""

from .core.model import (Path, VectorFieldModel, builtin_double_well, drift, drift_jacobian,
                         get_model, register_model, available_models)
from .core.euler_lagrange import ELSystem, assemble_v_form, assemble_w_form
from .core.bvp import (DeterministicFlow, Equilibrium, HeteroclinicSolution, MpepResult,
                       continue_in_mu, mpep, refine_equilibrium, solve_base_connections,
                       solve_heteroclinic)
from .core.melnikov import CorrectionBundle, compute_corrections
from .core.rate_functional import ActionReport, action
from .core.sde import EscapeEnsemble, ExitRule, SimConfig, simulate
from .utils.config import BvpConfig, RunConfig, load_run_config
from .utils.errors import EscapePathError

__version__ = "0.1.0"

__all__ = [
    'Path',
    'VectorFieldModel',
    'builtin_double_well',
    'drift',
    'drift_jacobian',
    'get_model',
    'register_model',
    'available_models',
    'ELSystem',
    'assemble_v_form',
    'assemble_w_form',
    'DeterministicFlow',
    'Equilibrium',
    'HeteroclinicSolution',
    'MpepResult',
    'continue_in_mu',
    'mpep',
    'refine_equilibrium',
    'solve_base_connections',
    'solve_heteroclinic',
    'CorrectionBundle',
    'compute_corrections',
    'ActionReport',
    'action',
    'EscapeEnsemble',
    'ExitRule',
    'SimConfig',
    'simulate',
    'BvpConfig',
    'RunConfig',
    'load_run_config',
    'EscapePathError',
]
