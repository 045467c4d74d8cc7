"""Moment whitening: from pair/tuple moments to an orthogonal tensor and back.

The second moment M2 = sum_i w_i mu_i mu_i^T admits a whitener W with
W^T M2 W = I; applying W to every mode of the p-th moment produces a tensor
whose rank-one terms are exactly orthonormal with weights w_i^(1-p/2). After
decomposing it, the footnote formulas invert the map: w from the weight,
mu from the vector through the pseudoinverse of W^T.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .deflation import DecompositionResult, decompose
from .rank_one import SolverConfig
from .tensor import (
    SymmetricTensor,
    TensorFormatError,
    _tokenize_with_positions,
    make_rank_one,
    multilinear_transform,
)

__all__ = [
    "RankDeficiencyError",
    "TopicModelParams",
    "MomentPair",
    "RecoveredParams",
    "jacobi_eigh",
    "synthesize_moments",
    "compute_whitener",
    "whiten_and_decompose",
    "recover_parameters",
    "save_moment_matrix",
    "load_moment_matrix",
]


class RankDeficiencyError(ValueError):
    """M2 has fewer usable directions than the requested component count."""


@dataclass(frozen=True)
class TopicModelParams:
    """Mixture weights and per-component probability vectors.

    topics has one row per component: topics[i] is mu_i in dimension d >= n.
    """

    weights: np.ndarray
    topics: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        mu = np.asarray(self.topics, dtype=float).copy()
        if w.ndim != 1 or mu.ndim != 2 or mu.shape[0] != len(w):
            raise ValueError("need one topic row per weight")
        if mu.shape[1] < len(w):
            raise ValueError(f"need dimension >= {len(w)}, got {mu.shape[1]}")
        if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(mu < 0.0) or np.max(np.abs(mu.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("each topic must be a probability vector")
        w.flags.writeable = False
        mu.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "topics", mu)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.topics.shape[1]


@dataclass(frozen=True)
class MomentPair:
    """Pair moment matrix and tuple moment tensor over the same dimension."""

    m2: np.ndarray
    mp: SymmetricTensor
    rank_warning: bool = False

    def __post_init__(self):
        m2 = np.asarray(self.m2, dtype=float).copy()
        if m2.ndim != 2 or m2.shape[0] != m2.shape[1]:
            raise ValueError("m2 must be square")
        if np.max(np.abs(m2 - m2.T)) > 1e-12:
            raise ValueError("m2 must be symmetric within 1e-12")
        if self.mp.dim != m2.shape[0]:
            raise ValueError("m2 and mp dimensions disagree")
        evals, _ = jacobi_eigh(m2)
        if evals[-1] < -1e-10:
            raise ValueError(f"m2 must be positive semidefinite, got eigenvalue {evals[-1]:.3g}")
        m2.flags.writeable = False
        object.__setattr__(self, "m2", m2)


@dataclass(frozen=True)
class RecoveredParams:
    """Recovered mixture parameters with per-component quality flags.

    weights are the raw footnote values (not renormalized); topics rows are
    clipped at zero and renormalized to sum 1, with the total clipped mass
    reported. failed marks components whose weight was not positive, whose
    entries are left as zeros.
    """

    weights: np.ndarray
    topics: np.ndarray
    clip_mass: float
    failed: np.ndarray

    def __post_init__(self):
        for name in ("weights", "topics", "failed"):
            arr = np.asarray(getattr(self, name)).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def as_params(self) -> TopicModelParams:
        """Normalized view that satisfies the parameter invariants."""
        if self.failed.any():
            raise ValueError("cannot normalize: some components failed recovery")
        w = self.weights / self.weights.sum()
        return TopicModelParams(w, self.topics)

    def as_json_dict(self) -> dict:
        return {
            "w": self.weights.tolist(),
            "mu": self.topics.tolist(),
            "clip_mass": float(self.clip_mass),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_json_dict(), indent=2)


def jacobi_eigh(A, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvector columns). Self-contained on
    purpose: the whitening path controls its own numerics end to end, and
    the matrices here are small (d <= 50).
    """
    A = np.array(A, dtype=float)
    d = A.shape[0]
    V = np.eye(d)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(d), V

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.square(A)) - np.sum(np.square(np.diag(A))))
        if off <= tol * scale:
            break
        for i in range(d - 1):
            for j in range(i + 1, d):
                if abs(A[i, j]) <= tol * scale / d:
                    continue
                tau = (A[j, j] - A[i, i]) / (2.0 * A[i, j])
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = 1.0 / (tau - np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c

                row_i, row_j = A[i, :].copy(), A[j, :].copy()
                A[i, :] = c * row_i - s * row_j
                A[j, :] = s * row_i + c * row_j
                col_i, col_j = A[:, i].copy(), A[:, j].copy()
                A[:, i] = c * col_i - s * col_j
                A[:, j] = s * col_i + c * col_j
                A[i, j] = 0.0
                A[j, i] = 0.0

                v_i, v_j = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * v_i - s * v_j
                V[:, j] = s * v_i + c * v_j

    evals = np.diag(A).copy()
    order = np.argsort(evals)[::-1]
    return evals[order], V[:, order]


def synthesize_moments(params: TopicModelParams, p: int) -> MomentPair:
    """Exact population moments of the mixture.

    Sets rank_warning when the topics are numerically dependent, in which
    case M2 has rank below n and whitening at n components will fail.
    """
    if p < 2:
        raise ValueError("moment order must be >= 2")
    w, mu = params.weights, params.topics
    d = params.d
    m2 = (mu.T * w) @ mu

    mp = SymmetricTensor(np.zeros((d,) * p))
    for wi, mu_i in zip(w, mu):
        norm = float(np.linalg.norm(mu_i))
        mp = mp + make_rank_one(wi * norm**p, mu_i / norm, p)

    evals, _ = jacobi_eigh(m2)
    rank = int(np.sum(evals > 1e-10 * max(evals[0], 0.0)))
    return MomentPair(m2, mp, rank_warning=rank < params.n)


def compute_whitener(M2, n: int, rank_tol: float | None = None) -> np.ndarray:
    """d x n matrix W with W^T M2 W = I, from the top n eigenpairs.

    rank_tol defaults to 1e-10 times the largest eigenvalue; fewer than n
    eigenvalues above it raises RankDeficiencyError naming the numerical
    rank.
    """
    M2 = np.asarray(M2, dtype=float)
    evals, evecs = jacobi_eigh(M2)
    if rank_tol is None:
        rank_tol = 1e-10 * max(float(evals[0]), 0.0)
    rank = int(np.sum(evals > rank_tol))
    if rank < n:
        raise RankDeficiencyError(
            f"need {n} components but M2 has numerical rank {rank}"
        )
    return evecs[:, :n] / np.sqrt(evals[:n])


def whiten_and_decompose(
    moments: MomentPair, n: int, config: SolverConfig | None = None
) -> tuple[DecompositionResult, np.ndarray]:
    """Whiten the tuple moment and deflate it into n pairs."""
    W = compute_whitener(moments.m2, n)
    T = multilinear_transform(moments.mp, W)
    return decompose(T, n, config), W


def recover_parameters(result: DecompositionResult, W) -> RecoveredParams:
    """Invert the whitening map: weights and topic vectors from the pairs.

    Component j gives w_j = lambda_j^(2/(2-p)) and mu_j = lambda_j (W^T)^+
    v_j. Noise can push small topic entries negative; those are clipped at
    zero before renormalizing and the clipped mass is reported. Components
    with nonpositive weight cannot be inverted (odd p) and are flagged.
    """
    W = np.asarray(W, dtype=float)
    p = result.order
    pinv_wt = np.linalg.pinv(W.T)
    k = len(result.pairs)
    d = W.shape[0]

    weights = np.zeros(k)
    topics = np.zeros((k, d))
    failed = np.zeros(k, dtype=bool)
    clip_mass = 0.0
    for j, pair in enumerate(result.pairs):
        lam = pair.weight
        if lam <= 0.0:
            failed[j] = True
            weights[j] = np.nan
            continue
        weights[j] = lam ** (2.0 / (2.0 - p))
        mu = lam * (pinv_wt @ pair.vector)
        negative = mu < 0.0
        clip_mass += float(-mu[negative].sum())
        mu = np.where(negative, 0.0, mu)
        total = mu.sum()
        if total <= 0.0:
            failed[j] = True
            continue
        topics[j] = mu / total
    return RecoveredParams(weights=weights, topics=topics, clip_mass=clip_mass, failed=failed)


def save_moment_matrix(M2, destination) -> None:
    """Text format: dimension on the first line, then one matrix row per line."""
    M2 = np.asarray(M2, dtype=float)
    d = M2.shape[0]
    lines = [str(d)]
    for row in M2:
        lines.append(" ".join(format(x, ".17g") for x in row))
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w") as handle:
        handle.write(text)


def load_moment_matrix(source) -> np.ndarray:
    """Parse the matrix text format with position-carrying errors."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as handle:
            text = handle.read()

    tokens = list(_tokenize_with_positions(text))
    if not tokens:
        raise TensorFormatError("empty moment matrix file", line=1, column=1)
    head, line, col = tokens[0]
    try:
        d = int(head)
    except ValueError:
        raise TensorFormatError(f"dimension must be an integer, got {head!r}", line, col) from None
    if d < 1:
        raise TensorFormatError(f"dimension must be >= 1, got {d}", line, col)

    need = d * d
    body = tokens[1:]
    if len(body) < need:
        raise TensorFormatError(
            f"expected {need} entries, found {len(body)}", line=tokens[-1][1], column=tokens[-1][2]
        )
    if len(body) > need:
        tok, line, col = body[need]
        raise TensorFormatError(f"unexpected extra token {tok!r}", line, col)
    values = np.zeros(need)
    for idx, (tok, line, col) in enumerate(body):
        try:
            values[idx] = float(tok)
        except ValueError:
            raise TensorFormatError(f"bad number {tok!r}", line, col) from None
        if not np.isfinite(values[idx]):
            raise TensorFormatError(f"non-finite entry {tok!r}", line, col)
    return values.reshape(d, d)
