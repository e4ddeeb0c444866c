"""Sparse mapping onto a single signed, weighted coordinate.

Naturally 1-sparse reports pass through unchanged. Dense reports are reduced with
a Horvitz-Thompson draw: pick one coordinate ``J`` with probability ``p_J`` and
report ``t_J / p_J`` there, so the expected dense rendering equals ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from peel.errors import ContractViolationError, DegenerateInputError
from peel.mechanisms import MechanismSpec


class AllocationMode(str, Enum):
    UNIFORM_OVER_SUPPORT = "uniform"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class AllocationPolicy:
    """Selection-probability rule for the Horvitz-Thompson path.

    ``weights=None`` means unit weights of whatever length the input has.
    """

    mode: AllocationMode = AllocationMode.OPTIMAL
    weights: Optional[tuple[float, ...]] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "mode", AllocationMode(self.mode))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if not np.all(np.isfinite(w)) or not np.any(w != 0):
                raise ValueError("allocation weights must be finite with at least one nonzero entry")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))

    def weight_vector(self, k: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(k)
        if len(self.weights) != k:
            raise ValueError(f"expected {k} weights, got {len(self.weights)}")
        return np.asarray(self.weights)


DEFAULT_POLICY = AllocationPolicy()


@dataclass(frozen=True)
class SparseCode:
    """One active coordinate: ``sign * magnitude`` at ``index`` in a length-``dim`` vector."""

    dim: int
    index: int
    sign: int
    magnitude: float

    def __post_init__(self):
        if not 0 <= self.index < self.dim:
            raise ValueError(f"index {self.index} outside [0, {self.dim})")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not self.magnitude > 0:
            raise ValueError("magnitude must be positive")

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.index] = self.sign * self.magnitude
        return out


def ht_allocation_batch(t: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise optimal probabilities ``p_j = |w_j t_j| / sum_l |w_l t_l|``."""
    a = np.abs(np.asarray(t, dtype=float) * weights)
    total = a.sum(axis=1, keepdims=True)
    if np.any(total == 0):
        raise DegenerateInputError("all |w_j t_j| are zero")
    return a / total


def ht_allocation(t, weights) -> np.ndarray:
    """Variance-minimizing selection probabilities for a single vector.

    Examples:
        >>> ht_allocation([2.0, 0.0, -2.0], [1.0, 1.0, 3.0]).tolist()
        [0.25, 0.0, 0.75]
    """
    t = np.asarray(t, dtype=float)
    return ht_allocation_batch(t[None, :], np.asarray(weights, dtype=float))[0]


def uniform_allocation_batch(t: np.ndarray) -> np.ndarray:
    support = (np.asarray(t) != 0).astype(float)
    count = support.sum(axis=1, keepdims=True)
    if np.any(count == 0):
        raise DegenerateInputError("t has empty support")
    return support / count


def allocation_batch(t: np.ndarray, policy: AllocationPolicy) -> np.ndarray:
    if policy.mode is AllocationMode.OPTIMAL:
        return ht_allocation_batch(t, policy.weight_vector(t.shape[1]))
    return uniform_allocation_batch(t)


def _draw_index(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0]) * cdf[:, -1]
    # strict '>' never lands on a zero-probability coordinate
    return np.argmax(cdf > u[:, None], axis=1)


def identity_sparse_batch(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pass-through for 1-sparse vectors; returns ``(index, sign, magnitude)`` arrays."""
    v = np.asarray(v, dtype=float)
    nnz = np.count_nonzero(v, axis=1)
    if np.any(nnz != 1):
        raise ContractViolationError("1-sparse mechanism produced a vector without exactly one nonzero entry")
    idx = np.argmax(v != 0, axis=1)
    val = v[np.arange(v.shape[0]), idx]
    return idx, np.sign(val).astype(np.int64), np.abs(val)


def ht_sparse_batch(t: np.ndarray, policy: AllocationPolicy, rng: np.random.Generator,
                    return_probabilities: bool = False):
    """Horvitz-Thompson reduction of each row of ``t`` to one weighted coordinate."""
    t = np.asarray(t, dtype=float)
    p = allocation_batch(t, policy)
    idx = _draw_index(p, rng)
    rows = np.arange(t.shape[0])
    tj = t[rows, idx]
    out = (idx, np.sign(tj).astype(np.int64), np.abs(tj) / p[rows, idx])
    if return_probabilities:
        return out + (p,)
    return out


def sparsify_batch(t: np.ndarray, spec: MechanismSpec, policy: AllocationPolicy = DEFAULT_POLICY,
                   rng: Optional[np.random.Generator] = None):
    """Sparse map for stacked inputs; returns ``(index, sign, magnitude)`` arrays."""
    if spec.is_one_sparse:
        return identity_sparse_batch(t)
    if rng is None:
        raise ValueError("the Horvitz-Thompson path needs a random generator")
    return ht_sparse_batch(t, policy, rng)


def sparsify(t, spec: MechanismSpec, policy: AllocationPolicy = DEFAULT_POLICY,
             rng: Optional[np.random.Generator] = None) -> SparseCode:
    """Reduce one vector to a :class:`SparseCode`.

    Raises:
        ContractViolationError: a 1-sparse mechanism's vector has more than one nonzero.
        DegenerateInputError: the Horvitz-Thompson path received an all-zero vector;
            callers treat this as a null report.
    """
    t = np.asarray(t, dtype=float)
    idx, sign, mag = sparsify_batch(t[None, :], spec, policy, rng)
    return SparseCode(dim=t.shape[0], index=int(idx[0]), sign=int(sign[0]), magnitude=float(mag[0]))


def ht_conditional_variance(t, p, weights=None) -> np.ndarray:
    """Per-coordinate variance ``w_j^2 t_j^2 (1/p_j - 1)`` of the sparse code given ``t``.

    Coordinates with ``w_j t_j = 0`` contribute zero; ``p_j = 0`` with ``t_j != 0`` is infinite.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = (w * t) ** 2 * (1.0 / p - 1.0)
    return np.where(w * t == 0, 0.0, var)
