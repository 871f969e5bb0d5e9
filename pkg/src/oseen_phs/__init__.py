"""Taylor-Hood simulation of the boundary-controlled Oseen equations as a
discrete port-Hamiltonian node with a certified energy balance."""
from .assembly import (
    AssembledForms,
    CompatibilityError,
    DofMap,
    assemble_forms,
    build_dofmap,
    generate_tangential_field,
)
from .integrate import (
    EnergyLedger,
    LedgerRow,
    SimulationError,
    Trajectory,
    check_compatibility,
    resolvent_solve,
    simulate,
    steady_solve,
    step_implicit_midpoint,
)
from .mesh import BoundaryTag, Mesh, build_channel_mesh, load_mesh, save_mesh, validate_mesh
from .node import BoundarySignal, DiscreteOseenNode, FlowState, PortOutput
from .oracle import build_reduced_system, divfree_basis, mild_solution, semigroup_contractivity_check
from .signals import constant_outflow, parabolic_inflow, parabolic_profile, ramp, sinusoidal_outflow
from .sparse import SaddleFactorization, SaddleSystem, SingularSystemError, SolverError, solve_saddle

__version__ = "0.1.0"

__all__ = [
    "AssembledForms", "BoundarySignal", "BoundaryTag", "CompatibilityError", "DiscreteOseenNode",
    "DofMap", "EnergyLedger", "FlowState", "LedgerRow", "Mesh", "PortOutput", "SaddleFactorization",
    "SaddleSystem", "SimulationError", "SingularSystemError", "SolverError", "Trajectory",
    "assemble_forms", "build_channel_mesh", "build_dofmap", "build_reduced_system",
    "check_compatibility", "divfree_basis", "generate_tangential_field", "load_mesh",
    "mild_solution", "resolvent_solve", "save_mesh", "semigroup_contractivity_check", "simulate",
    "solve_saddle", "steady_solve", "step_implicit_midpoint", "validate_mesh",
    "constant_outflow", "parabolic_inflow", "parabolic_profile", "ramp", "sinusoidal_outflow",
]
