"""Random nearly-decomposable instances and numerical checks of recovery bounds.

Builds orthogonally decomposable tensors plus symmetric random perturbations,
runs the rank-one solver or the full deflation on them, and evaluates the
first-step and full-decomposition error bounds with no tolerance slack. The
sweep and stability harnesses emit flat trial records for CSV export.
"""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .deflation import MatchReport, decompose, match_to_ground_truth
from .rank_one import (
    RankOneResult,
    SolverConfig,
    SpectralPair,
    best_rank_one,
    operator_norm_estimate,
)
from .tensor import SymmetricTensor, _orbits, make_rank_one

__all__ = [
    "KINDS",
    "PerturbationModel",
    "GroundTruth",
    "FirstStepReport",
    "BoundReport",
    "TrialRecord",
    "StabilityTable",
    "MatrixBaselineReport",
    "derive_seed",
    "generate_sod",
    "generate_perturbation",
    "first_step_bounds",
    "full_bounds",
    "admissibility_threshold",
    "evaluate_first_step",
    "evaluate_full",
    "sweep_first_iteration",
    "deflation_stability",
    "accumulation_ratio",
    "matrix_baseline",
    "write_records_csv",
    "CSV_HEADER",
]

KINDS = ("binary", "uniform", "gaussian")

CSV_HEADER = (
    "model,sigma,trial,epsilon_hat,pair_index,lambda_err,vec_err,"
    "lambda_bound,vec_bound,lambda_violation,vec_violation"
)


@dataclass(frozen=True)
class PerturbationModel:
    """Entry distribution for the random perturbation tensor.

    binary: entries +-sigma with equal probability; uniform: entries on
    [-2 sigma, 2 sigma]; gaussian: N(0, sigma^2).
    """

    kind: str
    sigma: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma!r}")


@dataclass(frozen=True)
class GroundTruth:
    """True decomposition: weights[i] paired with basis column i."""

    weights: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        B = np.asarray(self.basis, dtype=float).copy()
        if w.ndim != 1 or np.any(w == 0.0):
            raise ValueError("weights must be a vector of nonzero values")
        gram = B.T @ B
        if np.max(np.abs(gram - np.eye(B.shape[1]))) > 1e-10:
            raise ValueError("basis columns must be orthonormal")
        w.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "basis", B)

    def pairs(self) -> list[SpectralPair]:
        return [SpectralPair(float(w), self.basis[:, i]) for i, w in enumerate(self.weights)]


@dataclass(frozen=True)
class FirstStepReport:
    """First-extraction errors vs their bounds, plus top-pair diagnostics.

    The diagnostics record the chosen true pair's relation to the largest
    weight (lambda_chosen >= lambda_max - 2 eps), the weight closeness
    (|lambda_hat - lambda_chosen| <= eps), and the alignment
    |<v_hat, v_chosen>| >= 1 - 2 eps / |lambda_chosen|.
    """

    epsilon_hat: float
    chosen_index: int
    weight_error: float
    vector_error: float
    weight_bound: float
    vector_bound: float
    weight_violation: bool
    vector_violation: bool
    lambda_hat: float
    lambda_chosen: float
    lambda_max: float
    top_weight_ok: bool
    weight_close_ok: bool
    overlap: float
    overlap_ok: bool


@dataclass(frozen=True)
class BoundReport:
    """Per-pair full-decomposition errors vs bounds (no tolerance slack)."""

    epsilon_hat: float
    weight_errors: np.ndarray
    vector_errors: np.ndarray
    weight_bounds: np.ndarray
    vector_bounds: np.ndarray
    weight_violations: np.ndarray
    vector_violations: np.ndarray
    admissible: bool

    def __post_init__(self):
        for name in (
            "weight_errors",
            "vector_errors",
            "weight_bounds",
            "vector_bounds",
            "weight_violations",
            "vector_violations",
        ):
            arr = np.asarray(getattr(self, name)).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class TrialRecord:
    """One CSV row: a single extracted pair of a single trial."""

    model: str
    sigma: float
    trial: int
    epsilon_hat: float
    pair_index: int
    lambda_err: float
    vec_err: float
    lambda_bound: float
    vec_bound: float
    lambda_violation: bool
    vec_violation: bool


@dataclass(frozen=True)
class StabilityTable:
    """Per-extraction-step error statistics over a batch of trials."""

    kind: str
    weight_mean: np.ndarray
    weight_std: np.ndarray
    vector_mean: np.ndarray
    vector_std: np.ndarray

    @property
    def total_mean(self) -> np.ndarray:
        """Pooled per-step mean error, the series the accumulation ratio uses.

        Pooling weight and vector errors tracks growth of the overall error.
        The weight series alone is misleading here: extraction order sorts by
        perturbed weight, so the first and last steps carry the extreme noise
        draws and the middle steps the near-zero ones, a dispersion effect
        with no bearing on accumulation.
        """
        return self.weight_mean + self.vector_mean


@dataclass(frozen=True)
class MatrixBaselineReport:
    """Leading-eigenpair recovery on a perturbed symmetric matrix.

    gap_is_zero marks a degenerate top eigenvalue, in which case the overlap
    bound is vacuous and its violation flag stays False.
    """

    lambda_hat: float
    lambda_top: float
    weight_error: float
    e_norm: float
    weyl_violation: bool
    gap: float
    gap_is_zero: bool
    overlap: float
    overlap_bound: float
    overlap_violation: bool


def derive_seed(master: int, *parts: int) -> int:
    """Deterministic child seed from a master seed and integer key parts."""
    ss = np.random.SeedSequence([int(master), *(int(x) for x in parts)])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_sod(n, p, weights, basis_mode="identity", seed=0):
    """Orthogonally decomposable tensor with known weights and basis.

    basis_mode "identity" uses coordinate vectors; "random_orthonormal" draws
    a seeded Gaussian matrix and orthogonalizes it (sign-fixed so the result
    is unique). Negative weights are rejected for odd order, where the sign
    can be absorbed into the vector and recovery reports would be ambiguous.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise ValueError(f"need {n} weights, got shape {weights.shape}")
    if np.any(weights == 0.0):
        raise ValueError("weights must be nonzero")
    if p % 2 == 1 and np.any(weights < 0.0):
        raise ValueError("odd order requires positive weights")

    if basis_mode == "identity":
        basis = np.eye(n)
    elif basis_mode == "random_orthonormal":
        rng = np.random.default_rng(seed)
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        basis = Q * np.where(np.diag(R) >= 0.0, 1.0, -1.0)
    else:
        raise ValueError(f"unknown basis_mode {basis_mode!r}")

    T = SymmetricTensor(np.zeros((n,) * p))
    for i, w in enumerate(weights):
        T = T + make_rank_one(float(w), basis[:, i], p)
    return T, GroundTruth(weights, basis)


def generate_perturbation(model: PerturbationModel, n: int, p: int, seed: int) -> SymmetricTensor:
    """Exactly symmetric random tensor with i.i.d. distinct entries.

    One value is drawn per sorted index tuple and copied to the whole
    permutation orbit. Symmetrizing a fully i.i.d. tensor instead would
    shrink the off-diagonal variance by the orbit size; this construction
    keeps every distinct entry on the stated distribution.
    """
    rng = np.random.default_rng(seed)
    orb = _orbits(n, p)
    count = len(orb.canonical)
    if model.kind == "binary":
        values = model.sigma * (2.0 * rng.integers(0, 2, size=count) - 1.0)
    elif model.kind == "uniform":
        values = rng.uniform(-2.0 * model.sigma, 2.0 * model.sigma, size=count)
    else:
        values = rng.normal(0.0, model.sigma, size=count)
    return SymmetricTensor(values[orb.group].reshape((n,) * p))


def first_step_bounds(epsilon: float, lam: float) -> tuple[float, float]:
    """Bounds on |lambda_hat - lambda_j| and |v_hat - v_j| after one step."""
    lam = abs(lam)
    ratio = epsilon / lam
    return epsilon, 10.0 * (ratio + ratio**2)


def full_bounds(epsilon: float, lam: float) -> tuple[float, float]:
    """Per-pair bounds after a full deflation pass."""
    return 2.0 * epsilon, 20.0 * epsilon / abs(lam)


def admissibility_threshold(weights, p: int, factor: float = 8.0) -> float:
    """Largest perturbation size the full-decomposition bounds are stated for.

    The underlying constant is not explicit; the default factor 8 makes the
    threshold min |weight| / (8 n^(1/(p-1))), which is conservative on every
    configuration exercised here. Callers can tighten or relax it.
    """
    weights = np.asarray(weights, dtype=float)
    n = len(weights)
    return float(np.min(np.abs(weights))) / (factor * n ** (1.0 / (p - 1)))


def evaluate_first_step(
    truth: GroundTruth, epsilon: float, result: RankOneResult, even_mode: bool = False
) -> FirstStepReport:
    """Check the first extracted pair against the closest true pair.

    The witness index minimizes the vector distance (sign-insensitive in
    even mode). Violation flags compare measured error to the bound with no
    slack; the three diagnostic booleans track the top-weight closeness
    facts that the first-step analysis promises.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    v_hat = result.pair.vector
    lam_hat = result.pair.weight

    dists = np.linalg.norm(truth.basis - v_hat[:, None], axis=0)
    if even_mode:
        dists = np.minimum(dists, np.linalg.norm(truth.basis + v_hat[:, None], axis=0))
    j = int(np.argmin(dists))
    lam_j = float(truth.weights[j])

    weight_error = abs(lam_hat - lam_j)
    vector_error = float(dists[j])
    weight_bound, vector_bound = first_step_bounds(epsilon, lam_j)

    lam_max = float(np.max(np.abs(truth.weights)))
    overlap = float(abs(v_hat @ truth.basis[:, j]))
    return FirstStepReport(
        epsilon_hat=float(epsilon),
        chosen_index=j,
        weight_error=weight_error,
        vector_error=vector_error,
        weight_bound=weight_bound,
        vector_bound=vector_bound,
        weight_violation=bool(weight_error > weight_bound),
        vector_violation=bool(vector_error > vector_bound),
        lambda_hat=lam_hat,
        lambda_chosen=lam_j,
        lambda_max=lam_max,
        top_weight_ok=bool(abs(lam_j) >= lam_max - 2.0 * epsilon),
        weight_close_ok=bool(weight_error <= epsilon),
        overlap=overlap,
        overlap_ok=bool(overlap >= 1.0 - 2.0 * epsilon / abs(lam_j)),
    )


def evaluate_full(
    truth: GroundTruth, epsilon: float, report: MatchReport, order: int = 3
) -> BoundReport:
    """Check every matched pair against the full-decomposition bounds."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    lams = report.matched_weights
    weight_bounds = np.full(len(lams), 2.0 * epsilon)
    vector_bounds = 20.0 * epsilon / np.abs(lams)
    return BoundReport(
        epsilon_hat=float(epsilon),
        weight_errors=report.weight_errors,
        vector_errors=report.vector_errors,
        weight_bounds=weight_bounds,
        vector_bounds=vector_bounds,
        weight_violations=report.weight_errors > weight_bounds,
        vector_violations=report.vector_errors > vector_bounds,
        admissible=bool(epsilon <= admissibility_threshold(truth.weights, order)),
    )


def _validated_kinds(kinds) -> list[str]:
    kinds = list(kinds)
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}; choose from {KINDS}")
    return kinds


def sweep_first_iteration(
    n: int,
    p: int,
    kinds,
    sigma_grid,
    seed: int,
    config: SolverConfig | None = None,
) -> list[TrialRecord]:
    """First-extraction error scan over noise sizes, one instance per point.

    The base tensor is the identity-basis decomposable tensor with unit
    weights. Each (kind, sigma) draws its perturbation from a seed derived
    from (seed, global kind index, sigma), so running a subset of kinds or
    sigmas reproduces the matching rows of a larger run.
    """
    kinds = _validated_kinds(kinds)
    sigma_grid = [float(s) for s in sigma_grid]
    if not sigma_grid:
        raise ValueError("sigma grid is empty")
    if config is None:
        config = SolverConfig()
    if p % 2 == 0 and config.mode != "abs":
        config = replace(config, mode="abs")

    T, truth = generate_sod(n, p, np.ones(n), "identity")
    records = []
    for kind in kinds:
        kind_index = KINDS.index(kind)
        for sigma in sigma_grid:
            e_seed = derive_seed(seed, kind_index, int(round(sigma * 1e12)))
            E = generate_perturbation(PerturbationModel(kind, sigma), n, p, e_seed)
            eps_hat = operator_norm_estimate(E, config)
            result = best_rank_one(T + E, config)
            fs = evaluate_first_step(truth, eps_hat, result, even_mode=(p % 2 == 0))
            records.append(
                TrialRecord(
                    model=kind,
                    sigma=sigma,
                    trial=0,
                    epsilon_hat=eps_hat,
                    pair_index=1,
                    lambda_err=fs.weight_error,
                    vec_err=fs.vector_error,
                    lambda_bound=fs.weight_bound,
                    vec_bound=fs.vector_bound,
                    lambda_violation=fs.weight_violation,
                    vec_violation=fs.vector_violation,
                )
            )
    return records


def deflation_stability(
    n: int,
    p: int,
    kinds,
    sigma: float,
    trials: int,
    seed: int,
    config: SolverConfig | None = None,
    weights=None,
    basis_mode: str = "identity",
) -> tuple[list[TrialRecord], list[StabilityTable]]:
    """Full-deflation error statistics per extraction step.

    Each trial perturbs the same decomposable tensor with a fresh draw,
    deflates all n pairs, matches them to the truth, and records per-pair
    errors against the full-decomposition bounds. Tables aggregate mean and
    sample standard deviation per extraction index for each model kind.
    """
    kinds = _validated_kinds(kinds)
    if trials < 2:
        raise ValueError("need at least 2 trials for a standard deviation")
    if weights is None:
        weights = np.ones(n)
    T, truth = generate_sod(n, p, weights, basis_mode, seed=derive_seed(seed, 3))
    even = p % 2 == 0

    records = []
    tables = []
    for kind in kinds:
        kind_index = KINDS.index(kind)
        weight_errs = np.zeros((trials, n))
        vector_errs = np.zeros((trials, n))
        for t in range(trials):
            e_seed = derive_seed(seed, kind_index, t)
            E = generate_perturbation(PerturbationModel(kind, sigma), n, p, e_seed)
            eps_hat = operator_norm_estimate(E, config or SolverConfig())
            result = decompose(T + E, n, config)
            report = match_to_ground_truth(result, truth.pairs(), even_mode=even)
            bounds = evaluate_full(truth, eps_hat, report, order=p)
            weight_errs[t] = report.weight_errors
            vector_errs[t] = report.vector_errors
            for j in range(n):
                records.append(
                    TrialRecord(
                        model=kind,
                        sigma=float(sigma),
                        trial=t,
                        epsilon_hat=eps_hat,
                        pair_index=j + 1,
                        lambda_err=float(report.weight_errors[j]),
                        vec_err=float(report.vector_errors[j]),
                        lambda_bound=float(bounds.weight_bounds[j]),
                        vec_bound=float(bounds.vector_bounds[j]),
                        lambda_violation=bool(bounds.weight_violations[j]),
                        vec_violation=bool(bounds.vector_violations[j]),
                    )
                )
        tables.append(
            StabilityTable(
                kind=kind,
                weight_mean=weight_errs.mean(axis=0),
                weight_std=weight_errs.std(axis=0, ddof=1),
                vector_mean=vector_errs.mean(axis=0),
                vector_std=vector_errs.std(axis=0, ddof=1),
            )
        )
    return records, tables


def accumulation_ratio(step_means) -> float:
    """Max over extraction steps divided by min: 1 means perfectly flat."""
    step_means = np.asarray(step_means, dtype=float)
    low = float(step_means.min())
    if low == 0.0:
        return math.inf if step_means.max() > 0.0 else 1.0
    return float(step_means.max()) / low


def matrix_baseline(
    n: int,
    model: PerturbationModel | None,
    seed: int,
    weights=None,
    basis_mode: str = "random_orthonormal",
    perturb=None,
) -> MatrixBaselineReport:
    """Leading-eigenpair recovery bounds on a perturbed symmetric matrix.

    Unlike the tensor bounds, the eigenvector overlap guarantee degrades
    with the spectral gap of the unperturbed matrix and is vacuous at gap
    zero. model=None means no perturbation; perturb injects an explicit
    symmetric perturbation matrix instead of a model draw. The estimate
    comes from power iteration on the shifted matrix; the perturbation norm
    and gap use the exact spectrum since this is the reference the tensor
    results compare against. The default spectrum is n, n-1, ..., 1 so the
    unit gap keeps the overlap bound informative at small noise.
    """
    if n < 2:
        raise ValueError("matrix baseline needs n >= 2")
    if weights is None:
        weights = np.linspace(float(n), 1.0, n)
    weights = np.asarray(weights, dtype=float)

    if basis_mode == "identity":
        basis = np.eye(n)
    elif basis_mode == "random_orthonormal":
        rng = np.random.default_rng(derive_seed(seed, 0))
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        basis = Q * np.where(np.diag(R) >= 0.0, 1.0, -1.0)
    else:
        raise ValueError(f"unknown basis_mode {basis_mode!r}")

    M = (basis * weights) @ basis.T
    if perturb is not None:
        E = np.asarray(perturb, dtype=float)
        if E.shape != (n, n) or np.max(np.abs(E - E.T)) > 0:
            raise ValueError("perturb must be a symmetric n x n matrix")
    elif model is None:
        E = np.zeros((n, n))
    else:
        E = generate_perturbation(model, n, 2, derive_seed(seed, 1)).data
    M_hat = M + E

    # shift to make the top algebraic eigenvalue dominant in magnitude
    shift = float(np.abs(M_hat).sum(axis=1).max()) + 1.0
    rng = np.random.default_rng(derive_seed(seed, 2))
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(100_000):
        y = M_hat @ x + shift * x
        y /= np.linalg.norm(y)
        if np.linalg.norm(y - x) <= 1e-14:
            x = y
            break
        x = y
    lam_hat = float(x @ M_hat @ x)

    top = int(np.argmax(weights))
    lam_top = float(weights[top])
    e_norm = float(np.max(np.abs(np.linalg.eigvalsh(E)))) if np.any(E) else 0.0
    others = np.delete(weights, top)
    gap = float(np.min(np.abs(lam_top - others)))

    weight_error = abs(lam_hat - lam_top)
    overlap = float((x @ basis[:, top]) ** 2)
    gap_is_zero = gap == 0.0
    if gap_is_zero:
        overlap_bound = -math.inf
        overlap_violation = False
    else:
        overlap_bound = 1.0 - (2.0 * e_norm / gap) ** 2
        overlap_violation = bool(overlap < overlap_bound)
    return MatrixBaselineReport(
        lambda_hat=lam_hat,
        lambda_top=lam_top,
        weight_error=weight_error,
        e_norm=e_norm,
        weyl_violation=bool(weight_error > e_norm),
        gap=gap,
        gap_is_zero=gap_is_zero,
        overlap=overlap,
        overlap_bound=overlap_bound,
        overlap_violation=overlap_violation,
    )


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_records_csv(records, destination) -> None:
    """Write trial records with a header row; floats keep 17 digits.

    destination may be a path or a writable stream. Paths are written to a
    temp file in the same directory and atomically swapped in, so a crash
    cannot leave a half-written file behind.
    """
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    r.model,
                    _format_float(r.sigma),
                    str(int(r.trial)),
                    _format_float(r.epsilon_hat),
                    str(int(r.pair_index)),
                    _format_float(r.lambda_err),
                    _format_float(r.vec_err),
                    _format_float(r.lambda_bound),
                    _format_float(r.vec_bound),
                    str(int(r.lambda_violation)),
                    str(int(r.vec_violation)),
                ]
            )
        )
    text = "\n".join(lines) + "\n"

    if hasattr(destination, "write"):
        destination.write(text)
        return
    directory = os.path.dirname(os.path.abspath(destination))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp_path, 0o666 & ~umask)
        os.replace(tmp_path, destination)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
