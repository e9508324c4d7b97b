"""Numerics for Liouville systems near critical parameters.

Subpackages by concern:
    system_algebra   coupling matrices, surface functionals, degree count
    radial_solver    radial global solutions and their far-field data
    mass_map         height-to-mass map, Jacobian, Newton inversion
    torus_green      torus Green's function (Fourier and Ewald routes)
    blowup_geometry  blowup configurations, location equations, heights
    leading_terms    regularized brackets, total D, local b coefficients
    meanfield_pde    spectral mean-field solver and branch continuation
    cli              command-line front end and artifact manifests
"""

__version__ = "0.1.0"

from .system_algebra import (InteractionMatrix, ParameterPoint, RegionReport,
                             check_hypotheses, classify, degree, lambda_subset,
                             q_point)
from .radial_solver import (GlobalSolutionSummary, HeightVector, RadialProfile,
                            expansion_residual, integrate, solve_global,
                            summarize)
from .mass_map import MassMapSample, invert, jacobian, sigma_of_alpha
from .torus_green import GreenEvaluator, green, gstar, gstar_grad, regular_part
from .weights import TrigPolynomial, WeightFunction, constant_weight, cosine_weight
from .blowup_geometry import (BlowupConfiguration, CoefficientReport,
                              coefficient_report, location_residual,
                              solve_locations)
from .leading_terms import (LeadingTermReport, PartitionCells, b_coefficients,
                            d_total, regularized_bracket)
from .meanfield_pde import (ContinuationControls, ContinuationRecord,
                            FieldState, TorusGrid, continue_ray, measure,
                            newton_solve, residual)
