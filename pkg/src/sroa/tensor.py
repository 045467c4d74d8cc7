"""Dense symmetric tensors and the multilinear operations built on them.

A symmetric tensor of order p and dimension n is stored as a dense ndarray of
shape (n,) * p. Entries are kept exactly symmetric: every index tuple in the
same permutation orbit holds the bitwise-identical float. All constructors and
transforms route through a canonical-orbit fill (one value per sorted index
tuple, broadcast to the orbit) so this invariant survives floating-point
reassociation.
"""
from __future__ import annotations

from functools import reduce
from typing import IO

import numpy as np

__all__ = [
    "SymmetricTensor",
    "TensorFormatError",
    "symmetrize",
    "make_rank_one",
    "contract_vector",
    "multilinear_transform",
    "inner",
    "frobenius_norm",
    "axpy_rank_one",
    "save_tensor",
    "load_tensor",
]

UNIT_NORM_TOL = 1e-9


class TensorFormatError(ValueError):
    """Malformed tensor text file. Carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class _OrbitIndex:
    """Precomputed permutation-orbit structure for index tuples of (dim, order).

    group[f] is the orbit id of flat position f, canonical[g] is the flat
    position of orbit g's sorted representative, counts[g] is the orbit size.
    """

    def __init__(self, dim: int, order: int):
        idx = np.indices((dim,) * order).reshape(order, -1)
        canon_flat = np.ravel_multi_index(tuple(np.sort(idx, axis=0)), (dim,) * order)
        self.canonical, self.group = np.unique(canon_flat, return_inverse=True)
        self.counts = np.bincount(self.group)


_ORBIT_CACHE: dict[tuple[int, int], _OrbitIndex] = {}


def _orbits(dim: int, order: int) -> _OrbitIndex:
    key = (dim, order)
    if key not in _ORBIT_CACHE:
        _ORBIT_CACHE[key] = _OrbitIndex(dim, order)
    return _ORBIT_CACHE[key]


def _canonical_fill(raw: np.ndarray) -> np.ndarray:
    """Replace each entry by the value at its orbit's canonical position."""
    orb = _orbits(raw.shape[0], raw.ndim)
    return raw.ravel()[orb.canonical][orb.group].reshape(raw.shape)


class SymmetricTensor:
    """Immutable dense symmetric tensor of order >= 2.

    Construct via :func:`symmetrize`, :func:`make_rank_one` or the other
    module functions; the raw constructor expects data that is already
    exactly symmetric.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=float)
        if data.ndim < 2:
            raise ValueError(f"tensor order must be >= 2, got {data.ndim}")
        if len(set(data.shape)) != 1:
            raise ValueError(f"all modes must have equal dimension, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor entries must be finite")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    def __setattr__(self, name, value):
        raise AttributeError("SymmetricTensor is immutable")

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, key):
        return self.data[key]

    def __add__(self, other: "SymmetricTensor") -> "SymmetricTensor":
        _check_same_shape(self, other)
        return SymmetricTensor(self.data + other.data)

    def __sub__(self, other: "SymmetricTensor") -> "SymmetricTensor":
        _check_same_shape(self, other)
        return SymmetricTensor(self.data - other.data)

    def __mul__(self, scalar: float) -> "SymmetricTensor":
        return SymmetricTensor(self.data * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SymmetricTensor":
        return SymmetricTensor(-self.data)

    def __repr__(self) -> str:
        return f"SymmetricTensor(order={self.order}, dim={self.dim})"


def _check_same_shape(a: SymmetricTensor, b: SymmetricTensor) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")


def _check_unit_vector(vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    if v.ndim != 1:
        raise ValueError("vector must be one-dimensional")
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"vector must be unit norm, got norm {nrm!r}")
    return v / nrm


def symmetrize(dense, order: int | None = None, dim: int | None = None) -> SymmetricTensor:
    """Average a dense array over all index permutations.

    Accepts an array of shape (n,) * p, or a flat array of length n**p
    together with explicit order and dim. The mean over each orbit is
    computed as v0 + mean(v - v0), which leaves already-symmetric input
    bitwise unchanged.
    """
    arr = np.asarray(dense, dtype=float)
    if arr.ndim == 1 and order is not None:
        if dim is None:
            raise ValueError("dim is required when passing flat data")
        if arr.size != dim**order:
            raise ValueError(f"expected {dim**order} entries for order {order}, dim {dim}, got {arr.size}")
        arr = arr.reshape((dim,) * order)
    if arr.ndim < 2:
        raise ValueError("tensor order must be >= 2")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    orb = _orbits(arr.shape[0], arr.ndim)
    base = arr.ravel()[orb.canonical]
    dev_sum = np.bincount(orb.group, weights=arr.ravel() - base[orb.group], minlength=len(orb.counts))
    means = base + dev_sum / orb.counts
    return SymmetricTensor(means[orb.group].reshape(arr.shape))


def make_rank_one(weight: float, vector, order: int) -> SymmetricTensor:
    """Build weight * v^(outer power order) from a unit vector v."""
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    v = _check_unit_vector(vector)
    if not np.isfinite(weight):
        raise ValueError("weight must be finite")
    full = float(weight) * reduce(np.multiply.outer, [v] * order)
    return SymmetricTensor(_canonical_fill(full))


def contract_vector(T: SymmetricTensor, x, k: int):
    """Contract k copies of x against T; returns an array of order p - k.

    k = p - 1 gives the gradient direction T x^(p-1), k = p the scalar
    T x^p.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (T.dim,):
        raise ValueError(f"x must have shape ({T.dim},), got {x.shape}")
    if not 1 <= k <= T.order:
        raise ValueError(f"k must be in [1, {T.order}], got {k}")
    res = T.data
    for _ in range(k):
        res = res @ x
    if res.ndim == 0:
        return float(res)
    return res


def multilinear_transform(T: SymmetricTensor, W) -> SymmetricTensor:
    """Apply the matrix W (shape n x m) to every mode of T.

    Output entry (i1, ..., ip) = sum_j T[j1..jp] W[j1,i1] ... W[jp,ip].
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != T.dim:
        raise ValueError(f"W must be a matrix with {T.dim} rows, got shape {W.shape}")
    res = T.data
    for _ in range(T.order):
        # contract the current first mode, new axis lands at the end so
        # after p steps the mode order is restored
        res = np.tensordot(res, W, axes=([0], [0]))
    return symmetrize(res)


def inner(A: SymmetricTensor, B: SymmetricTensor) -> float:
    """Entrywise inner product <A, B>."""
    _check_same_shape(A, B)
    return float(np.dot(A.data.ravel(), B.data.ravel()))


def frobenius_norm(T: SymmetricTensor) -> float:
    return float(np.linalg.norm(T.data.ravel()))


def axpy_rank_one(T: SymmetricTensor, weight: float, vector) -> SymmetricTensor:
    """Return T + weight * v^(outer power p) without mutating T."""
    return T + make_rank_one(weight, vector, T.order)


def save_tensor(path_or_file, T: SymmetricTensor) -> None:
    """Write T in the text format: header line "p n", then n**p entries.

    Entries are written row-major (last index fastest), n per line, with 17
    significant digits.
    """
    def _write(fh: IO[str]) -> None:
        fh.write(f"{T.order} {T.dim}\n")
        flat = T.data.ravel()
        n = T.dim
        for row_start in range(0, flat.size, n):
            fh.write(" ".join(f"{v:.17g}" for v in flat[row_start : row_start + n]))
            fh.write("\n")

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", encoding="ascii") as fh:
            _write(fh)


def _tokenize_with_positions(text: str):
    """Yield (token, line, column) with 1-based positions."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        col = 0
        for token in line.split():
            col = line.index(token, col) + 1
            yield token, lineno, col
            col += len(token) - 1


def load_tensor(path_or_file) -> tuple[SymmetricTensor, float]:
    """Read the text format and return (tensor, max symmetrization correction).

    The stored entries are symmetrized on load; the correction is the largest
    absolute change any entry needed. Malformed input raises
    :class:`TensorFormatError` with the offending line and column.
    """
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file, "r", encoding="ascii") as fh:
            text = fh.read()

    tokens = list(_tokenize_with_positions(text))
    if len(tokens) < 2:
        raise TensorFormatError("expected header line with order and dimension", 1, 1)
    header = [t for t in tokens if t[1] == 1]
    if len(header) != 2:
        bad = header[2] if len(header) > 2 else (None, 1, 1)
        raise TensorFormatError("header line must hold exactly two integers: order and dimension", bad[1], bad[2])
    try:
        order = int(tokens[0][0])
        dim = int(tokens[1][0])
    except ValueError:
        bad = tokens[0] if not tokens[0][0].lstrip("+-").isdigit() else tokens[1]
        raise TensorFormatError(f"expected integer, got {bad[0]!r}", bad[1], bad[2]) from None
    if order < 2 or dim < 1:
        raise TensorFormatError(f"invalid header values order={order}, dim={dim}", 1, 1)

    expected = dim**order
    body = tokens[2:]
    if len(body) < expected:
        last = body[-1] if body else tokens[1]
        raise TensorFormatError(
            f"expected {expected} entries, file ends after {len(body)}", last[1], last[2]
        )
    if len(body) > expected:
        extra = body[expected]
        raise TensorFormatError(f"expected {expected} entries, found extra token {extra[0]!r}", extra[1], extra[2])

    values = np.empty(expected, dtype=float)
    for i, (token, lineno, col) in enumerate(body):
        try:
            values[i] = float(token)
        except ValueError:
            raise TensorFormatError(f"expected a number, got {token!r}", lineno, col) from None
    if not np.all(np.isfinite(values)):
        bad_i = int(np.flatnonzero(~np.isfinite(values))[0])
        token, lineno, col = body[bad_i]
        raise TensorFormatError(f"non-finite entry {token!r}", lineno, col)

    raw = values.reshape((dim,) * order)
    T = symmetrize(raw)
    correction = float(np.max(np.abs(T.data - raw)))
    return T, correction
