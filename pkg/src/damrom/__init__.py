"""Coupled unsaturated flow and deformation in earthfill dams, with a POD reduced model."""
from .assembly import (Assembler, BoundaryConditions, DofMap, OperatorSet, apply_dirichlet,
                       assemble_elastic_stiffness, assemble_state_operators, darcy_flux)
from .constitutive import (ElasticParams, FluidSolidParams, MaterialParams, VanGenuchtenParams,
                           default_material)
from .mesh import DamGeometry, Mesh, MeshError, generate_dam_mesh, read_msh, write_msh
from .rom import (ReducedBasis, ReducedState, SnapshotSet, build_basis, build_reduced_basis,
                  collect_snapshots, compare_fom_rom, reconstruct, run_reduced)
from .scenario import DamScenario, LoadSchedule, TailingsLoadParams
from .solver import (FieldState, PicardControl, StopRule, ThetaScheme, Trajectory,
                     initial_steady_state, run_transient)

__version__ = "0.1.0"
