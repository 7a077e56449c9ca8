"""Thin elastic cylinders clamped on a small end patch: 3D solves, limit rod model and correctors."""
from .capacity import (CapacitarySet, PenaltyForm, build_capacitary_set, coercivity_eigen, energy_gram,
                       orthogonalize, patch_profile, penalty_form, solve_potential)
from .config import StudyConfig, build_config, load_config
from .errors import (CoercivityError, ConfigError, ConvergenceError, DomainError, InadmissibleMaterialError,
                     LocateError, MeshError)
from .fem import Frame, SparseSystem, assemble_stiffness, pcg, solve_spd
from .geometry import (SectionSpec, build_cylinder_mesh, build_halfbox_mesh, build_patch_section,
                       build_section_mesh, point_locate)
from .limit import (BeamSolution, beam_loads, eval_E, eval_limit_displacement, micro_cell_solve,
                    solve_limit, trace_vector)
from .material import MaterialField, coercivity_estimate, eval_tensor
from .regimes import Regime, RegimeSpec, classify, constraint_set, corrector_eval
from .study import err_disp, err_strain, energy_bound_report, run_study, solve3d

__version__ = "0.1.0"
