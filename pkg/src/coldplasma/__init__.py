"""Numerical toolkit for a mixed elliptic-hyperbolic first-order system
arising in cold plasma wave resonance.

Subpackages:
    geometry    sonic curve, characteristic tracing, domain assembly
    operators   masked-grid fields, L / L*, weighted norms, quadrature
    multiplier  energy-estimate certification (coefficients, test fields)
    similarity  separable solutions and the associated second-order ODE
    solver      weighted least-squares approximation of weak solutions
    cli         command-line driver
"""

from .errors import (ColdPlasmaError, ConfigError, DegeneracyError,
                     DomainBuildError, DomainError, GridMismatchError,
                     ParameterError, ResidualError, TraceError)
from .geometry import (C1Spec, Domain, DomainSpec, EpsilonBounds, PointClass,
                       RectangleSpec, SonicCurve, TraceStop, build_domain,
                       c1_epsilon_bounds, classify_point, default_spec,
                       eval_sonic, intersect_c1_sonic, trace_characteristic,
                       validate_domain)
from .operators import (Grid, GridField, apply_L, apply_Lstar,
                        green_identity_gap, riesz_recover, weak_residual,
                        weighted_inner, weighted_norm)
from .multiplier import (BoundaryTerms, CertificationReport, CoefficientTriple,
                         MultiplierCase, TestField, boundary_terms,
                         certify_lemma4, check_pointwise_bounds,
                         epsilon_mult_bound, generic_quad_coeffs,
                         make_test_field, multiplier_eval, quad_coeffs)
from .similarity import (SimilaritySolution, energy_U, eval_similarity,
                         hypergeo_rhs, indicial_exponents, solve_F)
from .solver import (LeastSquaresProblem, SolveStats, manufactured_case,
                     objective, solve_least_squares, verify_weak_identity)

__version__ = "0.1.0"
