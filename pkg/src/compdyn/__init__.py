"""Secondary dynamics that never fight the rig.

Simulates elastic secondary motion on top of a rigged animation while keeping
the simulated displacements M-orthogonal to everything the rig can express.
"""

from .meshcore import (LumpedMassMatrix, Mesh, MeshError, boundary_vertices, cotan_laplacian,
                       flatten, load_tet_mesh, load_tri_obj, lumped_mass, read_dmat, read_obj,
                       unflatten, write_dmat, write_obj)
from .elastic import (ModelKind, arap_model, lame_parameters, linear_model, mass_spring_model,
                      neohookean_model)
from .rig import (RigError, affine_rig, blendshape_rig, cage_rig, fd_jacobian, lbs_rig,
                  recover_rig_params)
from .solver import KKTError, KKTSystem, null_space_solve, solve_kkt
from .dynamics import (MomentumLeak, SimConfig, SimState, SimulationError, Simulator,
                       assemble_constraint, build_momentum_leak, external_force, simulate,
                       step_linear, step_local_global, step_newton)

__version__ = "0.1.0"

__all__ = [
    "LumpedMassMatrix", "Mesh", "MeshError", "boundary_vertices", "cotan_laplacian", "flatten",
    "load_tet_mesh", "load_tri_obj", "lumped_mass", "read_dmat", "read_obj", "unflatten",
    "write_dmat", "write_obj",
    "ModelKind", "arap_model", "lame_parameters", "linear_model", "mass_spring_model",
    "neohookean_model",
    "RigError", "affine_rig", "blendshape_rig", "cage_rig", "fd_jacobian", "lbs_rig",
    "recover_rig_params",
    "KKTError", "KKTSystem", "null_space_solve", "solve_kkt",
    "MomentumLeak", "SimConfig", "SimState", "SimulationError", "Simulator", "assemble_constraint",
    "build_momentum_leak", "external_force", "simulate", "step_linear", "step_local_global",
    "step_newton",
]
