"""Successive rank-one approximation of symmetric tensors.

Orthogonally decomposable symmetric tensors can be recovered one rank-one
term at a time: extract the best symmetric rank-one approximation, subtract
it, repeat. This package implements that greedy deflation, harnesses that
measure how the recovered pairs degrade under perturbation against known
error bounds, and a whitening pipeline that reduces latent-variable moment
tensors to the orthogonal case.
"""
from .deflation import (
    DecompositionResult,
    MatchReport,
    StepFlags,
    decompose,
    deflation_delta_norms,
    match_to_ground_truth,
    reconstruct,
)
from .perturbation import (
    BoundReport,
    FirstStepReport,
    GroundTruth,
    MatrixBaselineReport,
    PerturbationModel,
    StabilityTable,
    TrialRecord,
    accumulation_ratio,
    admissibility_threshold,
    deflation_stability,
    derive_seed,
    evaluate_first_step,
    evaluate_full,
    first_step_bounds,
    full_bounds,
    generate_perturbation,
    generate_sod,
    matrix_baseline,
    sweep_first_iteration,
    write_records_csv,
)
from .rank_one import (
    RankOneResult,
    SolverConfig,
    SpectralPair,
    best_rank_one,
    brute_force_rank_one,
    check_stationarity,
    operator_norm_estimate,
    power_iteration,
)
from .tensor import (
    SymmetricTensor,
    TensorFormatError,
    axpy_rank_one,
    contract_vector,
    frobenius_norm,
    inner,
    load_tensor,
    make_rank_one,
    multilinear_transform,
    save_tensor,
    symmetrize,
)
from .whitening import (
    MomentPair,
    RankDeficiencyError,
    RecoveredParams,
    TopicModelParams,
    compute_whitener,
    jacobi_eigh,
    load_moment_matrix,
    recover_parameters,
    save_moment_matrix,
    synthesize_moments,
    whiten_and_decompose,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DecompositionResult",
    "FirstStepReport",
    "GroundTruth",
    "MatchReport",
    "MatrixBaselineReport",
    "MomentPair",
    "PerturbationModel",
    "RankDeficiencyError",
    "RankOneResult",
    "RecoveredParams",
    "SolverConfig",
    "SpectralPair",
    "StabilityTable",
    "StepFlags",
    "SymmetricTensor",
    "TensorFormatError",
    "TopicModelParams",
    "TrialRecord",
    "accumulation_ratio",
    "admissibility_threshold",
    "axpy_rank_one",
    "best_rank_one",
    "brute_force_rank_one",
    "check_stationarity",
    "compute_whitener",
    "contract_vector",
    "decompose",
    "deflation_delta_norms",
    "deflation_stability",
    "derive_seed",
    "evaluate_first_step",
    "evaluate_full",
    "first_step_bounds",
    "frobenius_norm",
    "full_bounds",
    "generate_perturbation",
    "generate_sod",
    "inner",
    "jacobi_eigh",
    "load_moment_matrix",
    "load_tensor",
    "make_rank_one",
    "match_to_ground_truth",
    "matrix_baseline",
    "multilinear_transform",
    "operator_norm_estimate",
    "power_iteration",
    "reconstruct",
    "recover_parameters",
    "save_moment_matrix",
    "save_tensor",
    "sweep_first_iteration",
    "symmetrize",
    "synthesize_moments",
    "whiten_and_decompose",
    "write_records_csv",
]
