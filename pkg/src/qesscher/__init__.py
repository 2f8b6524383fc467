"""Classical and quantum Esscher transforms with a block-encoding simulator."""

__version__ = "0.1.0"

from .errors import (
    BoundViolationError,
    ContractError,
    ContractionError,
    DomainError,
    InfeasibleError,
    NonConvergenceError,
    QEsscherError,
    RangeError,
    UnattainedSupremumError,
)
from .numerics import (
    DensityOperator,
    Spectrum,
    hermitian_eig,
    kron,
    matrix_function,
    operator_norm,
    partial_trace,
    trace_distance,
    unitary_completion,
)
from .classical import (
    ClassicalEsscherProblem,
    ClassicalEsscherSolution,
    FiniteDistribution,
    RandomVector,
    dual_objective,
    esscher_transform,
    relative_entropy,
    solve_lambda,
    verify_duality,
)
from .quantum import (
    ObservableSet,
    QuantumEsscherProblem,
    QuantumEsscherSolution,
    SupportDecomposition,
    lambda_gradient,
    quantum_esscher_transform,
    quantum_relative_entropy,
    solve,
    support_kernel_decompose,
    wirtinger_stationarity_check,
)
from .blockenc import (
    BlockEncoding,
    PurifiedAccess,
    StatePreparationPair,
    be_from_matrix,
    be_from_purification,
    linear_combination,
    make_state_preparation_pair,
    measured_error,
    pad_ancillas,
    purify,
)
from .polyapprox import (
    BoundedPolynomial,
    TaylorSpec,
    bounded_approximation,
    evaluate,
    exp_spec,
    log_spec,
    rescale_for_qet,
    truncate,
)
from .qet import QetResult, apply_polynomial, be_exp, be_function, be_log_rho
from .quest import (
    CostReport,
    QuestInput,
    QuestOutput,
    cost_report,
    extract_normalized_state,
    q_esscher_blockencoding,
)
from .instances import generate_instance
