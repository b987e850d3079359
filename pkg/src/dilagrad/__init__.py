"""Shape calculus for domains given by piecewise-linear level sets on fixed meshes.

Modules
-------
mesh, levelset, cutgeom
    Simplicial meshes, level sets and exact cut geometry.
dilation
    One-sided derivatives under nodal perturbations of the level set.
transform
    Derivatives under mesh deformation on body-fitted meshes.
fem
    P1 Poisson solver in fitted and cut regimes and compliance derivatives.
oracle
    Finite-difference Taylor tests.
"""

from .errors import (
    AccuracyError, AlignmentError, AmbiguousLimitError, ConstraintError, DegenerateCellError,
    DilagradError, InvalidArgumentError, SingularLevelSetError, SolverError, TangledMeshError,
    TopologyError, UnsupportedRenderError,
)
from .mesh import Mesh, build_structured_mesh, load_mesh, save_mesh, single_simplex_mesh
from .fields import PiecewiseField, field_eval, field_grad
from .levelset import (
    FROM_ABOVE, FROM_BELOW, HatPerturbation, LevelSetFunction, classify, cut_pattern,
    limit_signs, perturb, sample_analytic, t_max_estimate,
)
from .cutgeom import (
    CutCell, FacePatch, cut_cell, domain_measure, boundary_measure, face_patch,
    quadrature_boundary, quadrature_domain, quadrature_facecut,
)
from .dilation import (
    SemiDerivative, RayParameterization, ball_average, delfour_sum, dj1, dj2, ibp_check,
    layer_integral, strip_volume, topological_derivative_point,
)
from .transform import (
    VelocityField, deform_mesh, dj1_strong, dj1_weak, dj2_strong, dj2_weak, ibp_fitted,
    jacobian_identities, surface_factor, volume_factor,
)
from .fem import (
    FemSolution, compliance, model_dj_continuous, model_dj_cut, model_dj_fitted_strong,
    model_dj_fitted_volume, solve_cut, solve_fitted,
)
from .oracle import FDReport, default_ladder, fd_semiderivative, two_sided_check

__version__ = "0.1.0"
