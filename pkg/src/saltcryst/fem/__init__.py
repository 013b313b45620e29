"""P1 finite elements: assembly and the linearly implicit stepper."""
from .assembly import (
    FemSpace,
    assemble_advection,
    assemble_drift,
    assemble_mass,
    assemble_robin,
    assemble_stiffness,
    fem_space,
)
from .stepper import (
    FemStepConfig,
    FemSystem,
    SolverStats,
    ci_system,
    imbibition_state,
    run_phase_fem,
    step,
    step_ci,
    step_theta,
    theta_system,
    update_cs,
    update_n,
)

__all__ = [
    "FemSpace",
    "FemStepConfig",
    "FemSystem",
    "SolverStats",
    "assemble_advection",
    "assemble_drift",
    "assemble_mass",
    "assemble_robin",
    "assemble_stiffness",
    "ci_system",
    "fem_space",
    "imbibition_state",
    "run_phase_fem",
    "step",
    "step_ci",
    "step_theta",
    "theta_system",
    "update_cs",
    "update_n",
]
