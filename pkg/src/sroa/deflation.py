"""Greedy deflation: extract rank-one pairs one at a time from the residual.

Each step takes the best rank-one approximation of the current residual and
subtracts it. For nearly orthogonally-decomposable inputs the extracted pairs
track the ground-truth components without error accumulation across steps;
match_to_ground_truth pairs them up for error measurement.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .rank_one import RankOneResult, SolverConfig, SpectralPair, best_rank_one
from .tensor import SymmetricTensor, axpy_rank_one, contract_vector, frobenius_norm

__all__ = [
    "StepFlags",
    "DecompositionResult",
    "MatchReport",
    "decompose",
    "match_to_ground_truth",
    "reconstruct",
    "deflation_delta_norms",
]


@dataclass(frozen=True)
class StepFlags:
    """Solver diagnostics for one deflation step.

    nonpositive_weight marks an odd-order step whose best objective was not
    positive, which means the residual is noise-dominated; the pair is kept.
    """

    converged: bool
    degenerate: bool
    nonpositive_weight: bool


@dataclass(frozen=True)
class DecompositionResult:
    """Extraction-order pairs plus per-step diagnostics.

    residual_frobenius[i] is the Frobenius norm of the residual after
    deflating pair i. The lists all share one length (the number of steps
    actually run, which is k unless early stopping fired).
    """

    pairs: tuple[SpectralPair, ...]
    residual_frobenius: tuple[float, ...]
    stationarity: tuple[float, ...]
    solver_flags: tuple[StepFlags, ...]
    order: int
    dim: int


@dataclass(frozen=True)
class MatchReport:
    """Estimated pairs matched against ground truth.

    permutation[j] is the index of the truth pair assigned to estimate j
    under the minimum-total-vector-error assignment. matched_weights carries
    the truth weights in estimate order so relative bounds can be formed.
    """

    permutation: np.ndarray
    weight_errors: np.ndarray
    vector_errors: np.ndarray
    matched_weights: np.ndarray
    even_mode: bool

    def __post_init__(self):
        for name in ("permutation", "weight_errors", "vector_errors", "matched_weights"):
            arr = np.asarray(getattr(self, name))
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def decompose(
    T_hat: SymmetricTensor,
    k: int,
    config: SolverConfig | None = None,
    early_stop: bool = False,
    stop_tol: float | None = None,
) -> DecompositionResult:
    """Run k rank-one extraction steps on T_hat.

    Solver trouble (non-convergence, a degenerate residual, a nonpositive
    odd-order weight) is recorded in solver_flags and never aborts the loop.
    With early_stop=True the loop ends once the residual Frobenius norm
    drops to stop_tol (default 1e-10 times the input norm), so fewer than k
    pairs may come back.
    """
    if config is None:
        config = SolverConfig()
    p, n = T_hat.order, T_hat.dim
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if p % 2 == 0 and config.mode != "abs":
        config = replace(config, mode="abs")
    if stop_tol is None:
        stop_tol = 1e-10 * frobenius_norm(T_hat)

    residual = T_hat
    pairs = []
    norms = []
    stationarity = []
    flags = []
    for _ in range(k):
        res: RankOneResult = best_rank_one(residual, config)
        pair = res.pair
        residual = axpy_rank_one(residual, -pair.weight, pair.vector)
        pairs.append(pair)
        norms.append(frobenius_norm(residual))
        stationarity.append(res.stationarity_residual)
        flags.append(
            StepFlags(
                converged=res.converged,
                degenerate=res.degenerate,
                nonpositive_weight=(config.mode == "max" and res.objective <= 0.0),
            )
        )
        if early_stop and norms[-1] <= stop_tol:
            break

    return DecompositionResult(
        pairs=tuple(pairs),
        residual_frobenius=tuple(norms),
        stationarity=tuple(stationarity),
        solver_flags=tuple(flags),
        order=p,
        dim=n,
    )


def _vector_distance(u: np.ndarray, v: np.ndarray, even_mode: bool) -> float:
    d = float(np.linalg.norm(u - v))
    if not even_mode:
        return d
    return min(d, float(np.linalg.norm(u + v)))


def match_to_ground_truth(result, truth, even_mode: bool = False) -> MatchReport:
    """Assign each estimated pair to a distinct truth pair.

    The assignment minimizes the total vector distance (sign-insensitive in
    even mode, where v and -v give the same rank-one term). result may be a
    DecompositionResult or a bare sequence of pairs.
    """
    pairs = list(result.pairs) if isinstance(result, DecompositionResult) else list(result)
    truth = list(truth)
    if len(pairs) != len(truth):
        raise ValueError(f"got {len(pairs)} estimates but {len(truth)} truth pairs")

    k = len(pairs)
    dist = np.zeros((k, k))
    for i, t in enumerate(truth):
        for j, e in enumerate(pairs):
            dist[i, j] = _vector_distance(t.vector, e.vector, even_mode)
    rows, cols = linear_sum_assignment(dist)
    permutation = np.zeros(k, dtype=int)
    permutation[cols] = rows

    matched_weights = np.array([truth[permutation[j]].weight for j in range(k)])
    weight_errors = np.abs(matched_weights - np.array([e.weight for e in pairs]))
    vector_errors = np.array([dist[permutation[j], j] for j in range(k)])
    return MatchReport(
        permutation=permutation,
        weight_errors=weight_errors,
        vector_errors=vector_errors,
        matched_weights=matched_weights,
        even_mode=even_mode,
    )


def reconstruct(result: DecompositionResult, order: int | None = None, dim: int | None = None) -> SymmetricTensor:
    """Sum of the extracted rank-one terms."""
    pairs = result.pairs if isinstance(result, DecompositionResult) else tuple(result)
    if not pairs:
        raise ValueError("cannot reconstruct from zero pairs")
    p = order if order is not None else result.order
    n = dim if dim is not None else result.dim
    total = SymmetricTensor(np.zeros((n,) * p))
    for pair in pairs:
        total = axpy_rank_one(total, pair.weight, pair.vector)
    return total


def deflation_delta_norms(truth, result: DecompositionResult, permutation) -> tuple[np.ndarray, np.ndarray]:
    """Per-step deflation error seen by each ground-truth direction.

    Step i introduces the error term D_i = truth rank-one term (under the
    given permutation) minus the extracted one. Entry [i, j] of the first
    array is the 2-norm of (sum of D_0..D_i) contracted p-1 times with truth
    vector j; untouched directions should only feel a second-order amount of
    it. The second array flags, per step, which truth directions had not yet
    been extracted.
    """
    truth = list(truth)
    pairs = result.pairs
    perm = np.asarray(permutation, dtype=int)
    p = result.order
    n = result.dim
    k = len(pairs)

    cum = SymmetricTensor(np.zeros((n,) * p))
    norms = np.zeros((k, len(truth)))
    unextracted = np.zeros((k, len(truth)), dtype=bool)
    seen: set[int] = set()
    for i, est in enumerate(pairs):
        t = truth[perm[i]]
        cum = axpy_rank_one(cum, t.weight, t.vector)
        cum = axpy_rank_one(cum, -est.weight, est.vector)
        seen.add(int(perm[i]))
        for j, tj in enumerate(truth):
            norms[i, j] = float(np.linalg.norm(contract_vector(cum, tj.vector, p - 1)))
            unextracted[i, j] = j not in seen
    return norms, unextracted
