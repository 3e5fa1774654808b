"""Pseudo-spectral toolkit for (I - Delta)^alpha u = lambda b |u|^{p-2} u + c |u|^{q-2} u on periodic boxes."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    FieldIOError,
    FracBesselError,
    NumericalError,
    ParameterError,
    ThresholdError,
)
from .grid import (
    Field,
    Grid,
    SpectralField,
    apply_bessel_power,
    bessel_inner,
    bessel_norm_sq,
    forward_transform,
    inverse_transform,
    make_grid,
)
from .kernel import (
    KernelSpec,
    convolve_inverse_bessel,
    eval_G_alpha,
    eval_K_nu,
    eval_P_kernel,
    symmetric_decreasing_rearrangement,
)
from .energy import (
    Nonlinearity,
    Potential,
    ProblemSpec,
    best_constant_S,
    best_constant_alpha1,
    check_threshold_13,
    eval_J_general,
    eval_J_lambda,
    grad_J_lambda,
    H_diagnostic,
    make_condition_K_potential,
    preconditioned_grad,
)
from .nehari import (
    F_star,
    FiberCoefficients,
    NehariClass,
    classify,
    fiber_eval,
    lambda_threshold,
    nehari_constraint_M,
    project_to_nehari,
    t_star,
)
from .solvers import Solution, ground_state_pure_power, minimize_nehari, mountain_pass, two_solution_search
from .identities import (
    commutator_identity_residual,
    pohozaev_residual,
    rearrangement_gap,
    scaling_noninvariance_report,
)
from .fieldio import load_field, save_field
from .config import RunConfig, load_config
