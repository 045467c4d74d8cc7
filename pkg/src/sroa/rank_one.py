"""Best symmetric rank-one approximation via restarted power iteration.

The subproblem is max over unit x of T x^p for odd order ("max" mode), or of
|T x^p| for even order ("abs" mode, which flips the gradient whenever the
current objective is negative). Global optimality is NP-hard in general; the
contract here is best-over-restarts stationarity, with a brute-force sphere
grid available at n <= 3 to measure the gap.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import SymmetricTensor, contract_vector, frobenius_norm

__all__ = [
    "SolverConfig",
    "SpectralPair",
    "RankOneResult",
    "power_iteration",
    "best_rank_one",
    "brute_force_rank_one",
    "operator_norm_estimate",
    "check_stationarity",
]

DEGENERATE_NORM_TOL = 1e-14
_MODES = ("max", "abs")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the restarted power iteration.

    restarts counts the random (Gaussian-on-sphere) initial vectors; the
    2n signed coordinate vectors are always tried in addition, since they
    are near-optimal for nearly-diagonal tensors. convergence_tol applies to
    min(|x_next - x|, |x_next + x|) between successive iterates.
    """

    restarts: int = 30
    max_iterations: int = 500
    convergence_tol: float = 1e-10
    seed: int = 0
    mode: str = "max"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be > 0")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class SpectralPair:
    """A (weight, unit vector) term of a symmetric decomposition."""

    weight: float
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float).copy()
        nrm = float(np.linalg.norm(v))
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"pair vector must be unit norm, got {nrm!r}")
        if not np.isfinite(self.weight):
            raise ValueError("pair weight must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class RankOneResult:
    pair: SpectralPair
    objective: float
    iterations_used: int
    converged: bool
    stationarity_residual: float
    degenerate: bool = False


@dataclass
class _Restart:
    """Outcome of a single power-iteration run (internal)."""

    vector: np.ndarray
    weight: float
    iterations: int
    converged: bool
    stationarity: float
    objectives: list[float] = field(default_factory=list)


def power_iteration(
    T: SymmetricTensor,
    x0,
    mode: str = "max",
    max_iterations: int = 500,
    convergence_tol: float = 1e-10,
) -> _Restart:
    """Run the shifted power iteration x <- normalize(T x^(p-1) + a x).

    The shift a is chosen per step as (p-1) * max(0, -lambda_min(T x^(p-2)))
    plus a tiny margin, which makes every step an ascent step and every
    attracting fixed point a local maximum. When the Hessian slice is
    positive semidefinite the shift vanishes and the step is the plain
    normalize(T x^(p-1)). Without the shift, maximizers with strong negative
    tangential curvature are repelling and restarts miss them.

    In "abs" mode the sign of T is flipped per step whenever T x^p < 0,
    steering the iterate toward large |T x^p|. The returned record includes
    the objective at every visited iterate, which tests use to assert
    monotone ascent.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    p = T.order
    x = np.asarray(x0, dtype=float)
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        raise ValueError("start vector must be nonzero")
    x = x / nrm

    objectives: list[float] = []
    converged = False
    iterations = 0
    weight = 0.0
    for _ in range(max_iterations):
        # Hessian slice once per step; the gradient direction reuses it
        M = contract_vector(T, x, p - 2) if p > 2 else T.data
        g = M @ x
        obj = float(g @ x)
        objectives.append(obj)
        sign = -1.0 if (mode == "abs" and obj < 0.0) else 1.0
        lam_min = float(np.linalg.eigvalsh(sign * M)[0])
        alpha = (p - 1) * max(0.0, -lam_min) + 1e-8 * (1.0 + abs(obj))
        y = sign * g + alpha * x
        yn = float(np.linalg.norm(y))
        if yn < 1e-300:
            # stationary with zero gradient; the weight is 0 at this point
            converged = True
            weight = obj
            break
        x_new = y / yn
        iterations += 1
        step = min(np.linalg.norm(x_new - x), np.linalg.norm(x_new + x))
        x = x_new
        if step <= convergence_tol:
            g = contract_vector(T, x, p - 1)
            weight = float(g @ x)
            # a large shift shrinks the step length without implying
            # first-order optimality, so gate exit on the true residual
            if np.linalg.norm(g - weight * x) <= 10.0 * convergence_tol * (1.0 + abs(weight)):
                converged = True
                break

    g = contract_vector(T, x, p - 1)
    weight = float(g @ x)
    objectives.append(weight)
    stationarity = float(np.linalg.norm(g - weight * x))
    return _Restart(
        vector=x,
        weight=weight,
        iterations=iterations,
        converged=converged,
        stationarity=stationarity,
        objectives=objectives,
    )


def _initial_matrix(n: int, config: SolverConfig) -> np.ndarray:
    """Start columns: signed basis vectors first, then seeded Gaussian draws.

    Draw i of the random block depends only on (seed, i), so runs with more
    restarts extend the same stream (restart-dominance contract).
    """
    rng = np.random.default_rng(config.seed)
    draws = rng.standard_normal((config.restarts, n)).T
    return np.column_stack([np.eye(n), -np.eye(n), draws])


def _batch_hessians(T: SymmetricTensor, X: np.ndarray) -> np.ndarray:
    """M[:, :, s] = T x_s^(p-2) for every column x_s of X."""
    p = T.order
    if p == 2:
        return np.broadcast_to(T.data[:, :, None], (T.dim, T.dim, X.shape[1]))
    R = np.tensordot(T.data, X, axes=([p - 1], [0]))
    for _ in range(p - 3):
        R = np.einsum("...is,is->...s", R, X)
    return R


def _run_restarts(T: SymmetricTensor, X0: np.ndarray, mode: str, max_iterations: int, tol: float):
    """Shifted power iteration over all start columns at once.

    Column trajectories are mathematically independent; batching exists to
    amortize per-step numpy overhead. Returns per-column vectors, weights,
    iteration counts, convergence flags and stationarity residuals.
    """
    p, n = T.order, T.dim
    total = X0.shape[1]
    X = X0 / np.linalg.norm(X0, axis=0)

    vectors = X.copy()
    weights = np.zeros(total)
    iterations = np.zeros(total, dtype=int)
    converged = np.zeros(total, dtype=bool)
    residuals = np.full(total, np.inf)

    active = np.arange(total)
    resid_bound = lambda w: 10.0 * tol * (1.0 + np.abs(w))

    for _ in range(max_iterations):
        if active.size == 0:
            break
        M = _batch_hessians(T, X)
        G = np.einsum("ijs,js->is", M, X)
        obj = np.einsum("is,is->s", G, X)
        sign = np.where((obj < 0.0) & (mode == "abs"), -1.0, 1.0)
        eigs = np.linalg.eigvalsh(np.moveaxis(M, 2, 0))
        lam_min = np.where(sign > 0, eigs[:, 0], -eigs[:, -1])
        alpha = (p - 1) * np.maximum(0.0, -lam_min) + 1e-8 * (1.0 + np.abs(obj))
        Y = sign * G + alpha * X
        yn = np.linalg.norm(Y, axis=0)

        dead = yn < 1e-300
        if np.any(dead):
            # zero gradient: stationary point with weight ~0
            cols = active[dead]
            vectors[:, cols] = X[:, dead]
            weights[cols] = obj[dead]
            converged[cols] = True
            residuals[cols] = np.linalg.norm(G[:, dead] - obj[dead] * X[:, dead], axis=0)

        Xn = Y / np.where(dead, 1.0, yn)
        step = np.minimum(
            np.linalg.norm(Xn - X, axis=0), np.linalg.norm(Xn + X, axis=0)
        )
        iterations[active[~dead]] += 1

        done = np.zeros(active.size, dtype=bool)
        done |= dead
        for j in np.flatnonzero((step <= tol) & ~dead):
            # a large shift shrinks the step length without implying
            # first-order optimality, so gate exit on the true residual
            x = Xn[:, j]
            g = contract_vector(T, x, p - 1)
            w = float(g @ x)
            r = float(np.linalg.norm(g - w * x))
            if r <= resid_bound(w):
                col = active[j]
                vectors[:, col] = x
                weights[col] = w
                converged[col] = True
                residuals[col] = r
                done[j] = True

        keep = ~done
        active = active[keep]
        X = Xn[:, keep]

    for j, col in enumerate(active):
        # ran out of iterations: record the last iterate as-is
        x = X[:, j]
        g = contract_vector(T, x, p - 1)
        w = float(g @ x)
        vectors[:, col] = x
        weights[col] = w
        residuals[col] = float(np.linalg.norm(g - w * x))

    return vectors, weights, iterations, converged, residuals


def best_rank_one(T: SymmetricTensor, config: SolverConfig | None = None) -> RankOneResult:
    """Best pair over all restarts; ties go to the earliest restart.

    For even order the config must be in "abs" mode. A tensor with
    Frobenius norm <= 1e-14 short-circuits to a degenerate zero pair.
    """
    if config is None:
        config = SolverConfig()
    p, n = T.order, T.dim
    if p % 2 == 0 and config.mode != "abs":
        raise ValueError("even-order tensors require SolverConfig(mode='abs')")

    if frobenius_norm(T) <= DEGENERATE_NORM_TOL:
        v = np.zeros(n)
        v[0] = 1.0
        return RankOneResult(
            pair=SpectralPair(0.0, v),
            objective=0.0,
            iterations_used=0,
            converged=True,
            stationarity_residual=0.0,
            degenerate=True,
        )

    vectors, weights, iterations, converged, residuals = _run_restarts(
        T, _initial_matrix(n, config), config.mode, config.max_iterations, config.convergence_tol
    )
    scores = weights if config.mode == "max" else np.abs(weights)
    win = int(np.argmax(scores))

    vector, weight = vectors[:, win], weights[win]
    if config.mode == "max" and weight < 0.0:
        # odd order: T(-v)^p = -T v^p, so the mirrored pair scores higher
        vector, weight = -vector, -weight
    pair = SpectralPair(weight, vector)
    return RankOneResult(
        pair=pair,
        objective=weight,
        iterations_used=int(iterations[win]),
        converged=bool(converged[win]),
        stationarity_residual=float(residuals[win]),
    )


def _fibonacci_sphere(count: int) -> np.ndarray:
    """count nearly-uniform points on the unit 2-sphere (golden spiral)."""
    i = np.arange(count)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def brute_force_rank_one(T: SymmetricTensor, grid_points: int = 2000) -> RankOneResult:
    """Exhaustive sphere-grid search, polished by the power iteration.

    The test oracle for best_rank_one. Only n in {2, 3} is supported: the
    circle uses grid_points uniform angles, the sphere a Fibonacci spiral.
    """
    n, p = T.dim, T.order
    if n > 3:
        raise ValueError(f"brute force supports dim 2 or 3, got {n}")
    if grid_points < 100:
        raise ValueError(f"grid_points must be >= 100, got {grid_points}")

    if n == 2:
        angles = 2.0 * np.pi * np.arange(grid_points) / grid_points
        points = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        points = _fibonacci_sphere(grid_points)

    mode = "max" if p % 2 == 1 else "abs"
    best_x = None
    best_score = -np.inf
    for x in points:
        obj = contract_vector(T, x, p)
        score = obj if mode == "max" else abs(obj)
        if score > best_score:
            best_score = score
            best_x = x

    run = power_iteration(T, best_x, mode=mode)
    polished_score = run.weight if mode == "max" else abs(run.weight)
    if polished_score >= best_score:
        vector, weight = run.vector, run.weight
        iterations, converged = run.iterations, run.converged
    else:
        vector = best_x / np.linalg.norm(best_x)
        weight = float(contract_vector(T, vector, p))
        iterations, converged = 0, True
    if mode == "max" and weight < 0.0:
        vector, weight = -vector, -weight
    pair = SpectralPair(weight, vector)
    return RankOneResult(
        pair=pair,
        objective=weight,
        iterations_used=iterations,
        converged=converged,
        stationarity_residual=check_stationarity(T, pair),
    )


def operator_norm_estimate(T: SymmetricTensor, config: SolverConfig | None = None) -> float:
    """Estimated operator norm max |T x^p|: the larger of two "abs"-mode runs
    on +T and -T. A lower bound on the true norm, so perturbation-bound
    checks that consume it are conservative.
    """
    if config is None:
        config = SolverConfig()
    if frobenius_norm(T) <= DEGENERATE_NORM_TOL:
        return 0.0
    cfg = replace(config, mode="abs")
    plus = best_rank_one(T, cfg)
    minus = best_rank_one(-T, cfg)
    return max(abs(plus.objective), abs(minus.objective))


def check_stationarity(T: SymmetricTensor, pair: SpectralPair) -> float:
    """First-order optimality residual |T v^(p-1) - lambda v|."""
    g = contract_vector(T, pair.vector, T.order - 1)
    return float(np.linalg.norm(g - pair.weight * pair.vector))
