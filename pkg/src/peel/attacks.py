"""Adversary simulators: output poisoning, privacy-budget rule poisoning and
projection-matrix poisoning."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from peel.codec import EncodedVector, StructuralCodec, normalized_dense_batch
from peel.errors import ConfigurationError
from peel.mechanisms import MechanismSpec

SENSITIVITY = 2.0


class AttackKind(str, Enum):
    NONE = "none"
    OUTPUT = "output"
    RULE = "rule"
    PROJECTION = "projection"


class OutputSurface(str, Enum):
    """Where output poisoning lands: on the transmitted ``y`` or on the code before projection."""

    PROJECTED = "projected"
    PRE_ENCODING = "pre_encoding"


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind = AttackKind.NONE
    ratio: float = 0.0
    strength: float = 1.0
    seed: int = 0
    target_set: Optional[frozenset] = None
    budget_bounds: tuple[float, float] = (0.25, 4.0)
    surface: OutputSurface = OutputSurface.PROJECTED
    tamper_sidecar: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        object.__setattr__(self, "surface", OutputSurface(self.surface))
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigurationError(f"attack ratio must lie in [0, 1], got {self.ratio}")
        if self.strength < 0:
            raise ConfigurationError("attack strength must be nonnegative")
        lo, hi = self.budget_bounds
        if not 0 < lo < 1 < hi:
            raise ConfigurationError("budget bounds must satisfy 0 < lo < 1 < hi")
        if self.target_set is not None:
            object.__setattr__(self, "target_set", frozenset(int(c) for c in self.target_set))


def client_score(seed: int, client_id: int) -> float:
    """Deterministic pseudo-uniform score in ``[0, 1)`` for ``(seed, client_id)``."""
    digest = hashlib.blake2b(f"{seed}:{client_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0 ** 64


def compromised_mask(client_ids, ratio: float, seed: int, target_set=None) -> np.ndarray:
    """Boolean mask of compromised clients.

    With an explicit ``target_set`` membership is read from it. Otherwise the
    ``round(ratio * n)`` clients with the lowest hash scores are compromised, so the
    count is exact and membership depends only on ``(seed, client_id)`` and the
    resulting score cut-off.
    """
    ids = np.asarray(client_ids)
    if target_set is not None:
        return np.isin(ids, np.fromiter(target_set, dtype=np.int64, count=len(target_set)))
    n = len(ids)
    count = int(round(ratio * n))
    mask = np.zeros(n, dtype=bool)
    if count:
        scores = np.array([client_score(seed, int(c)) for c in ids])
        mask[np.argsort(scores, kind="stable")[:count]] = True
    return mask


def laplace_kernel_noise(shape, spec: MechanismSpec, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Draws from the density proportional to ``exp(-eps ||d||_1 / f)`` scaled by ``strength``."""
    return rng.laplace(0.0, SENSITIVITY * strength / spec.epsilon, size=shape)


def output_poison_batch(Y: np.ndarray, sidecar: np.ndarray, spec: MechanismSpec, strength: float,
                        rng: np.random.Generator, tamper_sidecar: bool = False):
    """Add kernel noise to projected vectors; optionally inflate the sidecar by ``1 + strength``."""
    Y = np.asarray(Y, dtype=float)
    Y_out = Y + laplace_kernel_noise(Y.shape, spec, strength, rng)
    side = np.asarray(sidecar, dtype=float)
    if tamper_sidecar:
        side = side * (1.0 + strength)
    return Y_out, side


def output_poison(y: EncodedVector, spec: MechanismSpec, strength: float, rng: np.random.Generator,
                  tamper_sidecar: bool = False) -> EncodedVector:
    if not strength > 0:
        raise ConfigurationError("output poisoning needs a positive strength")
    Y, side = output_poison_batch(y.y[None, :], np.array([y.magnitude_sidecar]), spec, strength, rng,
                                  tamper_sidecar)
    return EncodedVector(y=Y[0], magnitude_sidecar=float(side[0]), client_id=y.client_id)


def inadmissible_encoding_batch(codec: StructuralCodec, index, sign, strength: float,
                                rng: np.random.Generator):
    """Pre-encoding poisoning: a second spike is planted before projection.

    The spike ``strength * sqrt(k-1)`` lands on a random coordinate other than the
    active one, producing a 2-sparse, non-centred vector outside ``col(W)``.

    Returns:
        ``(s_tilde_poisoned, Y_poisoned)``.
    """
    k = codec.dim
    index = np.asarray(index)
    s_tilde = normalized_dense_batch(index, sign, k)
    other = (index + rng.integers(1, k, size=index.shape[0])) % k
    spike_sign = np.where(rng.random(index.shape[0]) < 0.5, 1.0, -1.0)
    s_tilde[np.arange(index.shape[0]), other] += spike_sign * strength * math.sqrt(k - 1)
    return s_tilde, s_tilde @ codec.Phi.T


def rule_poison_budgets(n: int, eps_total: float, bounds: tuple[float, float], rng: np.random.Generator,
                        compromised=None) -> np.ndarray:
    """Per-client budgets that keep the audited total fixed.

    Compromised clients draw ``eps_i ~ U[lo * eps_bar, hi * eps_bar]`` with
    ``eps_bar = eps_total / n``; every other client is shifted by one common additive
    correction so the budgets still sum to ``eps_total``.

    Raises:
        ConfigurationError: if the correction would drive an honest budget to zero or below.
    """
    if n < 2:
        raise ConfigurationError("rule poisoning needs at least two clients")
    lo, hi = bounds
    if not 0 < lo < 1 < hi:
        raise ConfigurationError("budget bounds must satisfy 0 < lo < 1 < hi")
    eps_bar = eps_total / n
    budgets = np.full(n, eps_bar)
    mask = np.zeros(n, dtype=bool)
    if compromised is not None:
        compromised = np.asarray(compromised)
        if compromised.dtype == bool:
            mask = compromised.copy()
        else:
            mask[compromised] = True
    m = int(mask.sum())
    if m == n:
        raise ConfigurationError("no honest clients left to absorb the budget correction")
    if m:
        budgets[mask] = rng.uniform(lo * eps_bar, hi * eps_bar, size=m)
        correction = (eps_total - budgets.sum()) / (n - m)
        budgets[~mask] += correction
        if np.any(budgets <= 0):
            raise ConfigurationError(
                f"budget correction {correction:.4g} leaves honest clients with nonpositive epsilon "
                f"(eps_bar={eps_bar:.4g}, compromised={m}/{n})")
        # exact total: fold the rounding residue into the honest clients
        budgets[~mask] += (eps_total - budgets.sum()) / (n - m)
    return budgets


def projection_poison(codec: StructuralCodec, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Return ``Phi + Delta`` with i.i.d. ``N(0, strength^2)`` entries in ``Delta``."""
    if strength < 0:
        raise ConfigurationError("strength must be nonnegative")
    delta = rng.standard_normal(codec.Phi.shape) * strength
    return codec.Phi + delta
