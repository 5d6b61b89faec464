"""Integral operators and equations on unbounded domains.

Truncated quadrature with declared tails, kernel hypothesis checkers,
Fredholm / Hammerstein / Urysohn / Volterra operators, solvers and empirical
Arzela-Ascoli certificates.
"""
from .core import Domain, DomainError, SampledFunction, read_csv, sup_distance, sup_norm, write_csv
from .quadrature import (
    NoConvergenceError,
    QuadraturePlan,
    build_plan,
    find_truncation_radius,
    integrate,
    refine_until,
    with_tail,
)
from .kernels import (
    LinearKernel,
    Nonlinearity,
    UrysohnKernel,
    check_car4,
    check_condition_B,
    check_k1_via_limit,
    check_k2,
    estimate_K_M,
    exp_separable,
    exponential_family,
    mollified_volterra,
    user_tabulated,
)
from .operators import (
    OperatorSpec,
    TruncationError,
    apply_fredholm,
    apply_hammerstein,
    apply_nemytskii,
    apply_urysohn,
    apply_volterra,
    volterra_approx_error,
)
from .solvers import hammerstein_radius, picard_solve, solve_fredholm_2nd_kind, urysohn_radius
from .compactness import (
    AACertificate,
    FunctionFamily,
    certify,
    estimate_bound,
    estimate_modulus,
    find_extension_witness,
    verify_certificate,
)

__version__ = "0.1.0"
