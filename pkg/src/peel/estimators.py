"""Frequency and mean queries over raw LDP reports and over restored sparse codes."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from peel.codec import StructuralCodec, build_codec, encode_batch, reconstruct_batch, restore_batch
from peel.mechanisms import (
    MechanismSpec,
    PerturbedReport,
    estimand_from_sparse,
    perturb_batch,
    sparse_source_batch,
    unbiased_transform_batch,
)
from peel.sparsifier import DEFAULT_POLICY, AllocationPolicy, SparseCode, allocation_batch, sparsify_batch


class QueryKind(str, Enum):
    FREQUENCY = "frequency"
    MEAN = "mean"


@dataclass(frozen=True)
class QuerySpec:
    kind: QueryKind = QueryKind.MEAN
    weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", QueryKind(self.kind))
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if not all(np.isfinite(w)):
                raise ValueError("query weights must be finite")
            object.__setattr__(self, "weights", w)

    def weight_vector(self, k: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(k)
        if len(self.weights) != k:
            raise ValueError(f"expected {k} query weights, got {len(self.weights)}")
        return np.asarray(self.weights)


@dataclass
class EstimateReport:
    """Query answer.

    ``raw_estimate`` is the unclipped aggregate (unbiased); ``estimate`` is what a
    consumer sees, i.e. projected onto the simplex for frequency queries.
    """

    estimate: np.ndarray
    raw_estimate: np.ndarray
    n: int
    empirical_mse: Optional[float] = None
    variance_components: Optional[tuple[float, float]] = None


def simplex_clip(v: np.ndarray) -> np.ndarray:
    """Clip to ``[0, 1]`` and renormalize to sum 1 (uniform if everything clips to zero)."""
    c = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    s = c.sum()
    return c / s if s > 0 else np.full(c.shape, 1.0 / c.size)


def _report(raw: np.ndarray, n: int, query: QuerySpec, truth) -> EstimateReport:
    est = simplex_clip(raw) if query.kind is QueryKind.FREQUENCY else raw.copy()
    mse = None if truth is None else float(np.sum((raw - np.asarray(truth, dtype=float)) ** 2))
    return EstimateReport(estimate=est, raw_estimate=raw, n=n, empirical_mse=mse)


def baseline_estimate_batch(t: np.ndarray, spec: MechanismSpec, query: QuerySpec, truth=None) -> EstimateReport:
    t = np.asarray(t, dtype=float)
    if t.shape[0] == 0:
        raise ValueError("no reports to aggregate")
    raw = query.weight_vector(spec.dim) * t.mean(axis=0)
    return _report(raw, t.shape[0], query, truth)


def baseline_estimate(reports: Sequence[PerturbedReport], spec: MechanismSpec, query: QuerySpec,
                      truth=None) -> EstimateReport:
    """Aggregate unbiased transforms of the raw reports (the standard LDP estimator)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    for r in reports:
        if r.mechanism != spec:
            raise TypeError("reports must all come from the given mechanism")
    if spec.kind.value == "krr":
        payload = np.array([r.payload for r in reports], dtype=np.int64)
    else:
        payload = np.stack([np.asarray(r.payload) for r in reports])
    return baseline_estimate_batch(unbiased_transform_batch(spec, payload), spec, query, truth)


def dense_codes(index, sign, magnitude, k: int) -> np.ndarray:
    index = np.asarray(index)
    out = np.zeros((index.shape[0], k))
    out[np.arange(index.shape[0]), index] = np.asarray(sign) * np.asarray(magnitude, dtype=float)
    return out


def peel_estimate_batch(index, sign, magnitude, spec: MechanismSpec, query: QuerySpec,
                        n_null: int = 0, truth=None) -> EstimateReport:
    """Aggregate restored codes. Null reports count towards ``n`` with a zero contribution."""
    dense = dense_codes(index, sign, magnitude, spec.dim)
    n = dense.shape[0] + n_null
    if n == 0:
        raise ValueError("no codes to aggregate")
    mean = dense.sum(axis=0) / n if n_null else dense.mean(axis=0)
    raw = query.weight_vector(spec.dim) * estimand_from_sparse(spec, mean)
    return _report(raw, n, query, truth)


def peel_estimate(restored: Sequence[SparseCode], spec: MechanismSpec, query: QuerySpec,
                  n_null: int = 0, truth=None) -> EstimateReport:
    """Estimate from restored sparse codes, aggregated the same way as the baseline."""
    if not restored and not n_null:
        raise ValueError("no codes to aggregate")
    idx = np.array([s.index for s in restored], dtype=np.int64)
    sign = np.array([s.sign for s in restored], dtype=np.int64)
    mag = np.array([s.magnitude for s in restored], dtype=float)
    return peel_estimate_batch(idx, sign, mag, spec, query, n_null=n_null, truth=truth)


def true_estimand(x, spec: MechanismSpec, query: QuerySpec) -> np.ndarray:
    """Ground truth for the query over raw records ``x``."""
    w = query.weight_vector(spec.dim)
    if spec.is_categorical:
        cats = np.asarray(x, dtype=np.int64)
        return w * np.bincount(cats, minlength=spec.dim) / cats.shape[0]
    return w * np.asarray(x, dtype=float).mean(axis=0)


@dataclass
class VarianceDecomposition:
    """Paired Monte Carlo comparison of the baseline and closed-loop estimators.

    MSE values are summed over coordinates (trace of the error covariance).
    ``gap_se`` is the standard error of ``mse_peel - mse_baseline - delta_n_analytic``.
    """

    mse_baseline: float
    mse_peel: float
    delta_n_empirical: float
    delta_n_analytic: float
    se_baseline: float
    se_peel: float
    se_delta: float
    gap_se: float
    truth: np.ndarray
    baseline_estimates: np.ndarray
    peel_estimates: np.ndarray

    def as_tuple(self):
        return self.mse_baseline, self.mse_peel, self.delta_n_empirical, self.delta_n_analytic


def _se(a: np.ndarray) -> float:
    return float(np.std(a, ddof=1) / np.sqrt(len(a)))


def variance_decomposition(spec: MechanismSpec, query: QuerySpec, x_population, n: int, trials: int,
                           rng: np.random.Generator, allocation: AllocationPolicy = DEFAULT_POLICY,
                           codec: Optional[StructuralCodec] = None) -> VarianceDecomposition:
    """Run both estimators ``trials`` times on the same ``n`` records.

    The records are ``x_population`` cycled to length ``n``; every trial draws fresh
    mechanism and sparsification randomness and pushes the codes through the full
    encode / reconstruct / restore loop. The analytic HT term is the per-report
    conditional variance ``sum_j w_j^2 t_j^2 (1/p_j - 1)`` averaged and divided by ``n``.
    """
    if trials < 100:
        raise ValueError("variance_decomposition needs at least 100 trials")
    codec = codec or build_codec(spec.dim, 0)
    pop = np.asarray(x_population)
    x = pop[np.arange(n) % pop.shape[0]]
    truth = true_estimand(x, spec, query)
    w = query.weight_vector(spec.dim)
    err_b = np.empty(trials)
    err_p = np.empty(trials)
    analytic = np.empty(trials)
    est_b = np.empty((trials, spec.dim))
    est_p = np.empty((trials, spec.dim))
    for i in range(trials):
        z = perturb_batch(spec, x, rng)
        t = unbiased_transform_batch(spec, z)
        base = baseline_estimate_batch(t, spec, query, truth)
        src = sparse_source_batch(spec, z)
        idx, sign, mag = sparsify_batch(src, spec, allocation, rng)
        s_hat = reconstruct_batch(codec, encode_batch(codec, idx, sign))
        r_idx, r_sign = restore_batch(s_hat)
        peel = peel_estimate_batch(r_idx, r_sign, mag, spec, query, truth=truth)
        est_b[i], est_p[i] = base.raw_estimate, peel.raw_estimate
        err_b[i], err_p[i] = base.empirical_mse, peel.empirical_mse
        if spec.is_one_sparse:
            analytic[i] = 0.0
        else:
            p = allocation_batch(src, allocation)
            with np.errstate(divide="ignore", invalid="ignore"):
                cv = np.where(src == 0, 0.0, (w * src) ** 2 * (1.0 / p - 1.0))
            analytic[i] = cv.sum() / n ** 2
    diff = err_p - err_b
    return VarianceDecomposition(
        mse_baseline=float(err_b.mean()), mse_peel=float(err_p.mean()),
        delta_n_empirical=float(diff.mean()), delta_n_analytic=float(analytic.mean()),
        se_baseline=_se(err_b), se_peel=_se(err_p), se_delta=_se(diff), gap_se=_se(diff - analytic),
        truth=truth, baseline_estimates=est_b, peel_estimates=est_p,
    )
