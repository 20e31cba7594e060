"""Nonlinear spectra of the Finsler-Laplacian on discretized manifolds.

The package computes eigenvalues of the energy functional
``E(u) = int F*^2(du) dm / int u^2 dm`` on simplicial model manifolds,
validates them against exactly solvable cases (flat tori, round spheres,
weighted drift Laplacians), and evaluates comparison bounds: space-form ball
eigenvalues for the Cheng-type upper bound and packing/Cheeger machinery for
the lower side.
"""

from .exceptions import ConvergenceError, NumericError
from .expressions import Expression
from .fem import AssembledForms, EnergyModel, ScalarField, assemble_mass, energy_gradient, energy_numerator
from .mesh import Mesh, build_mesh, circle, disk, icosphere, interval, load_mesh, save_mesh, torus
from .metric import (
    BUSEMANN_HAUSDORFF,
    CUSTOM,
    HOLMES_THOMPSON,
    RANDERS,
    RIEMANNIAN,
    WEIGHTED_RIEMANNIAN,
    MeasureDensity,
    MetricSpec,
    MinkowskiNorm,
    average_metric,
    canonical_density,
    distortion,
    dual_norm,
    euclidean_spec,
    eval_norm,
    fundamental_tensor,
    legendre,
    legendre_inv,
    measure_density,
    metric_measure,
    randers_spec,
    riemannian_spec,
    uniformity_constant,
    unit_density,
)
from .eigensolver import (
    SolverConfig,
    SpectrumEntry,
    SpectrumReport,
    counting_function,
    rayleigh,
    solve_first_positive,
    solve_ground,
    solve_linear_spectrum,
    solve_nonlinear_higher,
    weak_residual,
)

__version__ = "0.1.0"
