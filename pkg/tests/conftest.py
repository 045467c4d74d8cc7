"""Shared test oracles: slow, obviously-correct reference implementations.

Everything here is written from the mathematical definitions with plain
nested loops, independent of the package's optimized kernels, so the two
routes can disagree.
"""
from __future__ import annotations

import itertools

import numpy as np
import pytest


def naive_symmetrize(arr: np.ndarray) -> np.ndarray:
    """Average over all p! axis permutations, by explicit transposes."""
    p = arr.ndim
    perms = list(itertools.permutations(range(p)))
    out = np.zeros_like(arr, dtype=float)
    for perm in perms:
        out += np.transpose(arr, perm)
    return out / len(perms)


def naive_rank_one(weight: float, v: np.ndarray, order: int) -> np.ndarray:
    """weight * v^(outer power order) via explicit entry products."""
    n = len(v)
    out = np.zeros((n,) * order)
    for idx in itertools.product(range(n), repeat=order):
        prod = 1.0
        for i in idx:
            prod *= v[i]
        out[idx] = weight * prod
    return out


def naive_contract(arr: np.ndarray, x: np.ndarray, k: int):
    """Contract k copies of x against the last k modes, by full summation."""
    p = arr.ndim
    n = arr.shape[0]
    out = np.zeros((n,) * (p - k)) if p > k else np.zeros(())
    for idx in itertools.product(range(n), repeat=p):
        weight = 1.0
        for i in idx[p - k :]:
            weight *= x[i]
        out[idx[: p - k]] += arr[idx] * weight
    return float(out) if out.ndim == 0 else out


def naive_multilinear(arr: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Apply W to every mode by quadruple-nested summation."""
    p = arr.ndim
    d = arr.shape[0]
    m = W.shape[1]
    out = np.zeros((m,) * p)
    for out_idx in itertools.product(range(m), repeat=p):
        acc = 0.0
        for in_idx in itertools.product(range(d), repeat=p):
            prod = arr[in_idx]
            for j, i in zip(in_idx, out_idx):
                prod *= W[j, i]
            acc += prod
        out[out_idx] = acc
    return out


def random_symmetric_array(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """A random exactly-symmetric dense array, built through the oracle."""
    return naive_symmetrize(rng.standard_normal((n,) * p))


def factorial_best_matching(dist: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Minimum-total-cost assignment by trying all k! permutations.

    Returns (perm, total) where perm[j] is the row matched to column j.
    """
    k = dist.shape[0]
    best_perm = None
    best_total = np.inf
    for perm in itertools.permutations(range(k)):
        total = sum(dist[perm[j], j] for j in range(k))
        if total < best_total:
            best_total = total
            best_perm = perm
    return best_perm, float(best_total)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
