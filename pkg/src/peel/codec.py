"""Structural codec: normalization, low-rank projection, reconstruction and restore.

A benign sparse code ``(J, sign)`` normalizes to one of ``2k`` admissible patterns,
all of which live in the mean-zero hyperplane ``col(W)``. The client sends
``y = Phi @ pattern`` (length ``k - 1``); the aggregator recovers
``s_hat = Gamma @ y`` with ``Gamma = W (Phi W)^-1``, which is exact on ``col(W)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from peel.errors import CodecConstructionError, ConfigurationError, RestorationError
from peel.sparsifier import SparseCode

COND_LIMIT = 1e8
MAX_RETRIES = 8


def helmert_basis(k: int) -> np.ndarray:
    """Orthonormal basis of ``{x : sum(x) = 0}`` as a ``k x (k-1)`` matrix.

    Column ``j`` has ``1/sqrt((j+1)(j+2))`` on rows ``0..j``, ``-(j+1)/sqrt((j+1)(j+2))``
    on row ``j+1`` and zeros below.
    """
    if k < 3:
        raise ConfigurationError("k must be at least 3")
    W = np.zeros((k, k - 1))
    for j in range(k - 1):
        norm = math.sqrt((j + 1) * (j + 2))
        W[: j + 1, j] = 1.0 / norm
        W[j + 1, j] = -(j + 1) / norm
    return W


@dataclass(frozen=True)
class NormalizedCode:
    """z-scored 1-sparse code: ``sign*sqrt(k-1)`` at ``index``, ``-sign/sqrt(k-1)`` elsewhere."""

    dim: int
    index: int
    sign: int

    @property
    def dense(self) -> np.ndarray:
        return normalized_dense_batch(np.array([self.index]), np.array([self.sign]), self.dim)[0]


def normalized_dense_batch(index: np.ndarray, sign: np.ndarray, k: int) -> np.ndarray:
    r = math.sqrt(k - 1)
    sign = np.asarray(sign, dtype=float)
    out = np.repeat((-sign / r)[:, None], k, axis=1)
    out[np.arange(out.shape[0]), np.asarray(index)] = sign * r
    return out


def normalize(s: SparseCode) -> NormalizedCode:
    """Within-record z-score (population standard deviation); magnitude drops out."""
    if s.dim < 3:
        raise ConfigurationError("normalization needs k >= 3")
    return NormalizedCode(dim=s.dim, index=s.index, sign=s.sign)


def admissible_patterns(k: int) -> list[NormalizedCode]:
    """All ``2k`` normalized codes, index-major with ``+`` before ``-``."""
    if k < 3:
        raise ConfigurationError("k must be at least 3")
    return [NormalizedCode(k, j, sg) for j in range(k) for sg in (1, -1)]


def pattern_matrix(k: int) -> np.ndarray:
    """Admissible patterns stacked as rows, in :func:`admissible_patterns` order."""
    idx = np.repeat(np.arange(k), 2)
    sign = np.tile([1, -1], k)
    return normalized_dense_batch(idx, sign, k)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StructuralCodec:
    """Transform bundle for a fixed ``(dim, seed)``; rebuildable from those two values."""

    dim: int
    seed: int
    phi_seed: int
    W: np.ndarray
    Phi: np.ndarray
    Theta: np.ndarray
    ThetaInv: np.ndarray
    Gamma: np.ndarray
    patterns: np.ndarray
    cond_theta: float


@functools.lru_cache(maxsize=64)
def build_codec(k: int, seed: int) -> StructuralCodec:
    """Construct the codec for ``k`` categories/attributes from a shared seed.

    ``Phi`` is standard Gaussian from ``default_rng(seed)``. If ``Phi W`` has condition
    number ``>= 1e8`` the draw is repeated with ``seed + 1``, ``seed + 2``, ... up to
    eight times.
    """
    if k < 3:
        raise ConfigurationError("k must be at least 3")
    W = helmert_basis(k)
    for attempt in range(MAX_RETRIES + 1):
        phi_seed = seed + attempt
        Phi = np.random.default_rng(phi_seed).standard_normal((k - 1, k))
        Theta = Phi @ W
        cond = float(np.linalg.cond(Theta))
        if cond < COND_LIMIT:
            break
    else:
        raise CodecConstructionError(f"no well-conditioned projection for k={k}, seed={seed}")
    ThetaInv = np.linalg.inv(Theta)
    Gamma = W @ ThetaInv
    return StructuralCodec(
        dim=k, seed=seed, phi_seed=phi_seed,
        W=_freeze(W), Phi=_freeze(Phi), Theta=_freeze(Theta), ThetaInv=_freeze(ThetaInv),
        Gamma=_freeze(Gamma), patterns=_freeze(pattern_matrix(k)), cond_theta=cond,
    )


@dataclass(frozen=True, eq=False)
class EncodedVector:
    """Transmitted object: projected vector ``y`` plus the sparse-code magnitude."""

    y: np.ndarray
    magnitude_sidecar: float
    client_id: int = 0


def encode_batch(codec: StructuralCodec, index, sign, phi: np.ndarray | None = None) -> np.ndarray:
    """Project normalized codes; ``phi`` overrides the codec's matrix (projection poisoning)."""
    dense = normalized_dense_batch(index, sign, codec.dim)
    return dense @ (codec.Phi if phi is None else phi).T


def encode(codec: StructuralCodec, s: SparseCode, client_id: int = 0) -> EncodedVector:
    if s.dim != codec.dim:
        raise TypeError(f"sparse code has dim {s.dim}, codec expects {codec.dim}")
    y = codec.Phi @ normalize(s).dense
    return EncodedVector(y=y, magnitude_sidecar=s.magnitude, client_id=client_id)


def reconstruct_batch(codec: StructuralCodec, Y: np.ndarray) -> np.ndarray:
    return np.asarray(Y, dtype=float) @ codec.Gamma.T


def reconstruct(codec: StructuralCodec, y) -> np.ndarray:
    """``s_hat = Gamma @ y``; accepts an :class:`EncodedVector` or a raw length ``k-1`` array."""
    vec = y.y if isinstance(y, EncodedVector) else np.asarray(y, dtype=float)
    if vec.shape != (codec.dim - 1,):
        raise TypeError(f"expected a vector of length {codec.dim - 1}, got shape {vec.shape}")
    return codec.Gamma @ vec


def restore_batch(s_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Largest-magnitude coordinate (lowest index on ties) and its sign, row-wise."""
    s_hat = np.asarray(s_hat, dtype=float)
    idx = np.argmax(np.abs(s_hat), axis=1)
    val = s_hat[np.arange(s_hat.shape[0]), idx]
    if np.any(val == 0) or not np.all(np.isfinite(val)):
        raise RestorationError("cannot restore an all-zero or non-finite reconstruction")
    return idx, np.sign(val).astype(np.int64)


def restore(s_hat, sidecar: float) -> SparseCode:
    s_hat = np.asarray(s_hat, dtype=float)
    idx, sign = restore_batch(s_hat[None, :])
    return SparseCode(dim=s_hat.shape[0], index=int(idx[0]), sign=int(sign[0]), magnitude=float(sidecar))


def subspace_residual(codec: StructuralCodec, s_tilde: np.ndarray) -> np.ndarray:
    """``||(I - W W^T) s_tilde||`` row-wise; needs the client-side normalized vector."""
    s_tilde = np.atleast_2d(np.asarray(s_tilde, dtype=float))
    proj = (s_tilde @ codec.W) @ codec.W.T
    return np.linalg.norm(s_tilde - proj, axis=1)


def quantization_bits(k: int) -> int:
    """``ceil(log2(k - 1))`` bits per projected coordinate."""
    return max((k - 2).bit_length(), 1)


def quantization_step(k: int) -> float:
    """Grid spacing when each coordinate of ``y`` is coded on ``[-3 sqrt(k), 3 sqrt(k)]``."""
    levels = 2 ** quantization_bits(k)
    return 6.0 * math.sqrt(k) / (levels - 1)


def quantize(Y: np.ndarray, k: int) -> np.ndarray:
    """Round (and clip) each coordinate of ``y`` to the transmission grid; returns dequantized values."""
    lo = -3.0 * math.sqrt(k)
    step = quantization_step(k)
    levels = 2 ** quantization_bits(k)
    codes = np.clip(np.rint((np.asarray(Y, dtype=float) - lo) / step), 0, levels - 1)
    return lo + codes * step
