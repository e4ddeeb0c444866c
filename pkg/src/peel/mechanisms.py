"""Client-side LDP randomizers and their per-coordinate unbiased transforms.

Four mechanisms are provided:

* ``KRR``      k-ary randomized response over categories ``0..k-1``.
* ``HARMONY``  sample one attribute, report a signed constant (mean estimation on ``[-1, 1]^k``).
* ``LAPLACE``  additive Laplace noise on every attribute, budget split evenly across attributes.
* ``OUE``      optimized unary encoding of a category.

Every mechanism exposes a batch form operating on stacked records (the Monte Carlo
paths use these) and a per-record form returning a :class:`PerturbedReport`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from peel.errors import ConfigurationError, RejectedInputError


class MechanismKind(str, Enum):
    KRR = "krr"
    HARMONY = "harmony"
    LAPLACE = "laplace"
    OUE = "oue"


_ONE_SPARSE = {MechanismKind.KRR, MechanismKind.HARMONY}
_CATEGORICAL = {MechanismKind.KRR, MechanismKind.OUE}


@dataclass(frozen=True)
class MechanismSpec:
    """Declarative description of an LDP randomizer.

    ``calib_delta`` defaults to three times the benign noise scale and ``calib_eta``
    to 0.01; both are bookkeeping for the structural-consistency bound and are not
    used by the randomizers themselves.
    """

    kind: MechanismKind
    epsilon: float
    dim: int
    calib_delta: Optional[float] = None
    calib_eta: float = 0.01

    def __post_init__(self):
        try:
            kind = MechanismKind(self.kind)
        except ValueError as exc:
            raise ConfigurationError(f"unknown mechanism kind {self.kind!r}") from exc
        object.__setattr__(self, "kind", kind)
        eps = float(self.epsilon)
        if not eps > 0 or not math.isfinite(eps):
            raise ConfigurationError(f"epsilon must be a positive finite number, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)
        if int(self.dim) != self.dim or self.dim < 3:
            raise ConfigurationError(f"dim must be an integer >= 3, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.calib_delta is None:
            object.__setattr__(self, "calib_delta", 3.0 * self.noise_scale)
        elif self.calib_delta < 0:
            raise ConfigurationError("calib_delta must be nonnegative")
        if not 0.0 <= self.calib_eta <= 1.0:
            raise ConfigurationError("calib_eta must be a probability")

    @property
    def is_one_sparse(self) -> bool:
        return self.kind in _ONE_SPARSE

    @property
    def sign_symmetric(self) -> bool:
        return self.kind in (MechanismKind.HARMONY, MechanismKind.LAPLACE)

    @property
    def is_categorical(self) -> bool:
        return self.kind in _CATEGORICAL

    @property
    def noise_scale(self) -> float:
        """Benign noise scale used by the detector (zero for discrete-output mechanisms)."""
        if self.kind is MechanismKind.LAPLACE:
            return 2.0 * self.dim / self.epsilon
        return 0.0

    def with_epsilon(self, epsilon: float) -> "MechanismSpec":
        """Same mechanism at a different budget; ``calib_delta`` is re-derived."""
        return dataclasses.replace(self, epsilon=epsilon, calib_delta=None)


@dataclass(frozen=True, eq=False)
class PerturbedReport:
    """A single client's randomized report ``z``.

    ``payload`` is an ``int`` category for KRR and a length-``dim`` array otherwise
    (1-sparse for Harmony, dense for Laplace, a 0/1 bit vector for OUE).
    """

    mechanism: MechanismSpec
    payload: Union[int, np.ndarray]
    client_id: int = 0


def krr_probabilities(epsilon: float, k: int) -> tuple[float, float]:
    """Return ``(p, q)``: probability of keeping the true category and of any other one."""
    r = math.exp(-epsilon)
    p = 1.0 / (1.0 + (k - 1) * r)
    q = r / (1.0 + (k - 1) * r)
    return p, q


def oue_probabilities(epsilon: float) -> tuple[float, float]:
    r = math.exp(-epsilon)
    return 0.5, r / (1.0 + r)


def harmony_constant(epsilon: float, k: int) -> float:
    """The Harmony output magnitude ``k (e^eps + 1) / (e^eps - 1)``."""
    return k * (1.0 + math.exp(-epsilon)) / -math.expm1(-epsilon)


def _check_categories(spec: MechanismSpec, x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype.kind not in "iu":
        if arr.dtype.kind == "f" and np.all(np.mod(arr, 1) == 0):
            arr = arr.astype(np.int64)
        else:
            raise RejectedInputError(f"{spec.kind.value} expects integer categories")
    if arr.size and (arr.min() < 0 or arr.max() >= spec.dim):
        raise RejectedInputError(f"category outside [0, {spec.dim})")
    return arr.astype(np.int64, copy=False)


def _check_vectors(spec: MechanismSpec, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != spec.dim:
        raise RejectedInputError(f"{spec.kind.value} expects vectors of length {spec.dim}")
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
        raise RejectedInputError("attribute values must lie in [-1, 1]")
    return arr


def perturb_batch(spec: MechanismSpec, x, rng: np.random.Generator) -> np.ndarray:
    """Randomize ``n`` records at once.

    Args:
        spec: The mechanism.
        x: Categories of shape ``(n,)`` for KRR/OUE, attribute vectors of shape
            ``(n, dim)`` for Harmony/Laplace.
        rng: Source of randomness.

    Returns:
        Reports of shape ``(n,)`` (KRR) or ``(n, dim)``.
    """
    k, eps = spec.dim, spec.epsilon
    kind = spec.kind
    if kind is MechanismKind.KRR:
        cats = _check_categories(spec, x)
        p, _ = krr_probabilities(eps, k)
        keep = rng.random(cats.shape) < p
        offset = rng.integers(1, k, size=cats.shape)
        return np.where(keep, cats, (cats + offset) % k)
    if kind is MechanismKind.OUE:
        cats = _check_categories(spec, x)
        p, q = oue_probabilities(eps)
        n = cats.shape[0]
        onehot = np.zeros((n, k), dtype=bool)
        onehot[np.arange(n), cats] = True
        u = rng.random((n, k))
        return np.where(onehot, u < p, u < q).astype(np.int8)
    vecs = _check_vectors(spec, x)
    n = vecs.shape[0]
    if kind is MechanismKind.LAPLACE:
        return vecs + rng.laplace(0.0, spec.noise_scale, size=vecs.shape)
    # Harmony
    r = math.exp(-eps)
    idx = rng.integers(0, k, size=n)
    xj = vecs[np.arange(n), idx]
    p_plus = (xj * (1.0 - r) + 1.0 + r) / (2.0 * (1.0 + r))
    sign = np.where(rng.random(n) < p_plus, 1.0, -1.0)
    out = np.zeros((n, k))
    out[np.arange(n), idx] = sign * harmony_constant(eps, k)
    return out


def perturb(spec: MechanismSpec, x, rng: np.random.Generator, client_id: int = 0) -> PerturbedReport:
    """Randomize one raw record (a category or an attribute vector)."""
    if spec.is_categorical:
        if np.ndim(x) != 0:
            raise RejectedInputError(f"{spec.kind.value} expects a single category")
        payload = perturb_batch(spec, np.array([x]), rng)[0]
        if spec.kind is MechanismKind.KRR:
            payload = int(payload)
    else:
        payload = perturb_batch(spec, np.asarray(x, dtype=float)[None, :], rng)[0]
    return PerturbedReport(mechanism=spec, payload=payload, client_id=client_id)


def unbiased_transform_batch(spec: MechanismSpec, z) -> np.ndarray:
    """Per-coordinate unbiased transform ``t(z)`` for stacked reports, shape ``(n, dim)``."""
    k = spec.dim
    if spec.kind is MechanismKind.KRR:
        cats = np.asarray(z, dtype=np.int64)
        p, q = krr_probabilities(spec.epsilon, k)
        onehot = np.zeros((cats.shape[0], k))
        onehot[np.arange(cats.shape[0]), cats] = 1.0
        return (onehot - q) / (p - q)
    if spec.kind is MechanismKind.OUE:
        p, q = oue_probabilities(spec.epsilon)
        return (np.asarray(z, dtype=float) - q) / (p - q)
    # Harmony already reports C * sign with E[z] = x; Laplace is additive noise.
    return np.array(z, dtype=float)


def _check_report(spec: MechanismSpec, report: PerturbedReport) -> None:
    if report.mechanism != spec:
        raise TypeError(f"report was produced by {report.mechanism}, not {spec}")


def unbiased_transform(spec: MechanismSpec, report: PerturbedReport) -> np.ndarray:
    _check_report(spec, report)
    payload = np.atleast_1d(report.payload) if spec.kind is MechanismKind.KRR else np.asarray(report.payload)[None, :]
    return unbiased_transform_batch(spec, payload)[0]


def sparse_source_batch(spec: MechanismSpec, z) -> np.ndarray:
    """The vector the sparse map consumes.

    1-sparse mechanisms feed their raw report (one-hot category for KRR, the signed
    Harmony vector); dense mechanisms feed ``t(z)`` to the Horvitz-Thompson path.
    """
    if spec.kind is MechanismKind.KRR:
        cats = np.asarray(z, dtype=np.int64)
        onehot = np.zeros((cats.shape[0], spec.dim))
        onehot[np.arange(cats.shape[0]), cats] = 1.0
        return onehot
    if spec.kind is MechanismKind.HARMONY:
        return np.array(z, dtype=float)
    return unbiased_transform_batch(spec, z)


def sparse_source(spec: MechanismSpec, report: PerturbedReport) -> np.ndarray:
    _check_report(spec, report)
    payload = np.atleast_1d(report.payload) if spec.kind is MechanismKind.KRR else np.asarray(report.payload)[None, :]
    return sparse_source_batch(spec, payload)[0]


def estimand_from_sparse(spec: MechanismSpec, v: np.ndarray) -> np.ndarray:
    """Map aggregated sparse codes onto the estimand scale.

    Only KRR needs this: its sparse codes are one-hot indicators, so the affine
    debiasing is applied after averaging. Works on a single vector or row-wise.
    """
    if spec.kind is MechanismKind.KRR:
        p, q = krr_probabilities(spec.epsilon, spec.dim)
        return (np.asarray(v, dtype=float) - q) / (p - q)
    return np.asarray(v, dtype=float)


@dataclass(frozen=True)
class MagnitudeCodebook:
    """Admissible nonzero magnitudes of the sparse code.

    ``values`` is ``None`` when magnitudes are continuous ("unconstrained"); the
    benign scale is then described by ``noise_scale``.
    """

    values: Optional[tuple[float, ...]]
    noise_scale: float = 0.0

    @property
    def unconstrained(self) -> bool:
        return self.values is None


def magnitude_codebook(spec: MechanismSpec) -> MagnitudeCodebook:
    """Admissible sparse-code magnitudes for ``spec`` under the default allocation.

    OUE magnitudes under unit-weight optimal allocation equal ``||t(z)||_1``, which
    only takes ``k + 1`` values (one per count of set bits), so OUE gets a finite
    codebook as well.
    """
    k, eps = spec.dim, spec.epsilon
    if spec.kind is MechanismKind.KRR:
        return MagnitudeCodebook((1.0,))
    if spec.kind is MechanismKind.HARMONY:
        return MagnitudeCodebook((harmony_constant(eps, k),))
    if spec.kind is MechanismKind.OUE:
        p, q = oue_probabilities(eps)
        vals = tuple((c * (1.0 - q) + (k - c) * q) / (p - q) for c in range(k + 1))
        return MagnitudeCodebook(vals)
    return MagnitudeCodebook(None, noise_scale=spec.noise_scale)
