"""Spectral Galerkin lab for controlled stochastic PDEs.

Forward semi-implicit simulation, exact discrete and regression-based
adjoints, perturbation diagnostics, projected gradient optimization on
box-constrained controls, and a verification harness tying them together.
"""

from .spectral import (
    FieldFormatError,
    SpectralSpace,
    evaluate_at,
    hs_inner,
    hs_norm,
    inner_h,
    load_field,
    norms,
    save_field,
    to_coeffs,
    to_grid,
)
from .noise import WienerPath, PathBatch, generate, generate_batch, antithetic
from .models import (
    AssumptionReport,
    ConfigError,
    ControlSet,
    CostModel,
    DriftModel,
    LinearOperatorSpec,
    NoiseModel,
    ProblemSpec,
    builtin_problem,
    check_assumptions,
    control_project,
    load_problem,
)
from .forward import (
    BatchForwardPaths,
    ControlPath,
    CostEstimate,
    ForwardPath,
    constant_control,
    estimate_cost,
    simulate_batch,
    simulate_path,
)
from .sensitivity import (
    EpsScalingReport,
    SensitivityPath,
    delta_eps_path,
    eps_scaling_report,
    simulate_linearized,
)
from .adjoint import (
    AdjointPath,
    RegressionBasis,
    duality_residual,
    solve_discrete_adjoint,
    solve_lsmc_adjoint,
)
from .optimizer import (
    GradientPath,
    OptimizeOptions,
    OptimizeReport,
    estimate_gradient,
    fd_gradient_check,
    hamiltonian_eval,
    hamiltonian_grad_control,
    projected_gradient_descent,
    smp_residual,
)
from .harness import (
    ExperimentSpec,
    VerificationReport,
    run_experiment,
    run_suite,
    suite_passed,
)

__version__ = "0.1.0"
