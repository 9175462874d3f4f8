"""Multi-time PGD simulation of cyclic elasto-plasticity with forecast and sparse correction."""

from .corrector import (
    GalerkinSystem,
    PredictionBundle,
    ReferenceSet,
    build_galerkin_system,
    correct_enrich,
    correct_update,
    predict_nonlinear,
    prediction_error,
    select_reference_points,
)
from .driver import Problem, RunConfig, RunReport, compare_runs, run_datadriven, run_extended_reference, run_reference
from .errors import (
    ArgumentError,
    ConvergenceError,
    GeometryError,
    MTPGDError,
    NumericError,
    RigidBodyError,
    ShapeError,
)
from .fem import Material, assemble_plastic_force, assemble_stiffness, evaluate_strain, solve_elastic
from .hodmd import HodmdModel, hodmd_fit, hodmd_forecast, select_lag
from .loading import LoadProgram
from .mesh import Mesh, dog_bone, read_mesh, rectangular_bar, write_mesh
from .pgd_solver import DirichletData, SeparatedRhs, mtpgd_solve
from .plasticity import (
    HistorySnapshot,
    PlasticState,
    integrate_history,
    integrate_history_sparse,
    return_map_point,
)
from .separated import (
    SeparatedField,
    TimeGrid,
    evaluate_at_points,
    flatten_time,
    mtpgd_decompose,
    reshape_time,
)

__version__ = "0.1.0"

__all__ = [
    "GalerkinSystem",
    "PredictionBundle",
    "ReferenceSet",
    "build_galerkin_system",
    "correct_enrich",
    "correct_update",
    "predict_nonlinear",
    "prediction_error",
    "select_reference_points",
    "ArgumentError",
    "ConvergenceError",
    "GeometryError",
    "MTPGDError",
    "NumericError",
    "RigidBodyError",
    "ShapeError",
    "HistorySnapshot",
    "PlasticState",
    "integrate_history",
    "integrate_history_sparse",
    "return_map_point",
    "SeparatedField",
    "TimeGrid",
    "evaluate_at_points",
    "flatten_time",
    "mtpgd_decompose",
    "reshape_time",
    "Problem",
    "RunConfig",
    "RunReport",
    "compare_runs",
    "run_datadriven",
    "run_extended_reference",
    "run_reference",
    "Material",
    "assemble_plastic_force",
    "assemble_stiffness",
    "evaluate_strain",
    "solve_elastic",
    "HodmdModel",
    "hodmd_fit",
    "hodmd_forecast",
    "select_lag",
    "LoadProgram",
    "Mesh",
    "dog_bone",
    "read_mesh",
    "rectangular_bar",
    "write_mesh",
    "DirichletData",
    "SeparatedRhs",
    "mtpgd_solve",
]
