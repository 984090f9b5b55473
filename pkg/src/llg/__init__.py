"""Mass-lumped P1 finite elements for the Landau-Lifshitz equation."""

from llg.mesh import Mesh, MeshError, MeshQualityReport, check_mesh, generate_structured, load_mesh, write_mesh
from llg.assembly import P1Operators, AssemblyError, apply, assemble, interpolate, diagnostics_norm_equivalence
from llg.model import ModelParams, energy, lower_order_field
from llg.stepper import (
    SolverConfig,
    SolverError,
    StepDiagnostics,
    corrector_3x3,
    gyro_damping_bracket,
    project_renormalize,
    run,
    solve_velocity,
    step_algorithm1,
    step_algorithm2,
)
from llg.analytic import ErrorReport, ExactParams, error_norms, exact, rate

from llg.driver import ConvergenceRow, RunConfig, cmd_check_mesh, cmd_convergence, cmd_run, load_config

__version__ = "0.1.0"
