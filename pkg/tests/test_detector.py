import csv
import io
import math

import numpy as np
import pytest

from peel.attacks import output_poison_batch, projection_poison
from peel.codec import EncodedVector, build_codec, encode, encode_batch, quantize, reconstruct_batch
from peel.detector import (
    TAU_FLOOR,
    VERDICT_HEADER,
    DetectionVerdict,
    ThresholdPolicy,
    calibrate_policy,
    classify,
    classify_batch,
    estimate_ratio,
    magnitude_residual_batch,
    pattern_residual,
    tau_threshold,
    verdict_rows,
)
from peel.errors import ConfigurationError
from peel.mechanisms import MechanismSpec, harmony_constant, perturb_batch, sparse_source_batch
from peel.sparsifier import SparseCode, sparsify_batch

FLOOR_POLICY = ThresholdPolicy()


def _benign(spec, n, seed):
    """Encodings and sidecars of ``n`` benign clients for a 1-sparse ``spec``."""
    rng = np.random.default_rng(seed)
    if spec.is_categorical:
        x = rng.integers(0, spec.dim, n)
    else:
        x = rng.uniform(-1, 1, (n, spec.dim))
    idx, sign, mag = sparsify_batch(sparse_source_batch(spec, perturb_batch(spec, x, rng)), spec, rng=rng)
    return idx, sign, mag


class TestTau:
    def test_examples(self):
        assert tau_threshold(1.0, 1.0, 2 / math.e) == pytest.approx(1.0)
        assert tau_threshold(1.0, 1.0, 2 / math.e ** 4) == pytest.approx(2.0)
        assert tau_threshold(3.0, 9.0, 2 / math.e) == pytest.approx(1.0)
        assert tau_threshold(0.0, 1.0, 0.01) == TAU_FLOOR

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 2.0])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ConfigurationError):
            tau_threshold(1.0, 1.0, alpha)

    def test_policy_floor(self):
        with pytest.raises(ConfigurationError):
            ThresholdPolicy(tau_pattern=0.0)
        with pytest.raises(ConfigurationError):
            ThresholdPolicy(alpha=1.5)


class TestPatternResidual:
    def test_admissible_pattern(self):
        c = build_codec(7, 0)
        for p in c.patterns:
            assert pattern_residual(c, p)[0] <= 1e-9

    def test_zero_vector_k4(self):
        delta, nearest = pattern_residual(build_codec(4, 0), np.zeros(4))
        assert delta == pytest.approx(2.0)
        assert nearest == (0, 1)

    def test_random_perturbation_leaves_domain(self):
        k = 16
        c = build_codec(k, 3)
        rng = np.random.default_rng(10)
        pid = rng.integers(0, 2 * k, 1000)
        d = rng.standard_normal((1000, k - 1))
        d *= 0.5 / np.linalg.norm(d, axis=1, keepdims=True)
        s_hat = reconstruct_batch(c, c.patterns[pid] @ c.Phi.T + d)
        deltas = [pattern_residual(c, s)[0] for s in s_hat]
        assert min(deltas) > 1e-6

    def test_length_mismatch(self):
        with pytest.raises(TypeError):
            pattern_residual(build_codec(4, 0), np.zeros(5))


class TestClassify:
    def test_benign_krr_record(self):
        spec = MechanismSpec("krr", 1.0, 5)
        c = build_codec(5, 1)
        v = classify(c, encode(c, SparseCode(5, 3, 1, 1.0), client_id=12), spec, FLOOR_POLICY)
        assert isinstance(v, DetectionVerdict)
        assert not v.flagged
        assert v.pattern_residual <= 1e-9 and v.magnitude_residual == 0.0
        assert v.nearest_pattern == (3, 1) and v.client_id == 12

    def test_dimension_mismatch(self):
        spec = MechanismSpec("krr", 1.0, 5)
        with pytest.raises(TypeError):
            classify_batch(build_codec(5, 0), np.zeros((2, 5)), [1.0, 1.0], spec, FLOOR_POLICY)
        with pytest.raises(TypeError):
            classify_batch(build_codec(6, 0), np.zeros((2, 5)), [1.0, 1.0], spec, FLOOR_POLICY)

    def test_output_poison_flag_frequency(self):
        k, n = 16, 10_000
        spec = MechanismSpec("krr", 1.0, k)
        c = build_codec(k, 0)
        rng = np.random.default_rng(2)
        idx, sign = rng.integers(0, k, n), np.where(rng.random(n) < 0.5, 1, -1)
        Y = encode_batch(c, idx, sign)
        d = rng.standard_normal(Y.shape)
        Y = Y + d / np.linalg.norm(d, axis=1, keepdims=True)
        table = classify_batch(c, Y, np.ones(n), spec, FLOOR_POLICY)
        assert table.flagged.mean() >= 0.999

    def test_kernel_output_poison_flag_frequency(self):
        k, n = 16, 10_000
        spec = MechanismSpec("krr", 1.0, k)
        c = build_codec(k, 0)
        rng = np.random.default_rng(3)
        Y = encode_batch(c, rng.integers(0, k, n), np.ones(n, dtype=int))
        Yp, side = output_poison_batch(Y, np.ones(n), spec, 1.0, rng)
        assert classify_batch(c, Yp, side, spec, FLOOR_POLICY).flagged.mean() >= 0.999

    def test_harmony_rule_poisoned_sidecar(self):
        k, eps = 4, 1.0
        spec = MechanismSpec("harmony", eps, k)
        c = build_codec(k, 0)
        y = encode(c, SparseCode(k, 2, -1, harmony_constant(2 * eps, k)))
        gap = abs(harmony_constant(2 * eps, k) - harmony_constant(eps, k))
        v = classify(c, y, spec, FLOOR_POLICY)
        assert v.flagged and v.magnitude_residual == pytest.approx(gap)
        assert v.pattern_residual <= 1e-9

    def test_boundary_is_not_flagged(self):
        spec = MechanismSpec("harmony", 1.0, 4)
        c = build_codec(4, 0)
        C = harmony_constant(1.0, 4)
        y = encode(c, SparseCode(4, 0, 1, C + 0.5))
        resid = magnitude_residual_batch(spec, [C + 0.5])[0]
        assert classify(c, y, spec, ThresholdPolicy(tau_mag=resid)).flagged is False
        assert classify(c, y, spec, ThresholdPolicy(tau_mag=resid * (1 - 1e-9))).flagged is True

    def test_subspace_diagnostic(self):
        spec = MechanismSpec("krr", 1.0, 5)
        c = build_codec(5, 0)
        t = classify_batch(c, c.patterns[:3] @ c.Phi.T, np.ones(3), spec, FLOOR_POLICY,
                           s_tilde=c.patterns[:3])
        assert t.subspace_residual.max() <= 1e-12
        assert t[0].subspace_residual is not None


class TestFalsePositives:
    @pytest.mark.parametrize("kind,k", [("krr", 3), ("krr", 16), ("harmony", 3), ("harmony", 16)])
    def test_discrete_mechanisms_have_zero_false_positives(self, kind, k):
        spec = MechanismSpec(kind, 1.0, k)
        c = build_codec(k, 5)
        idx, sign, mag = _benign(spec, 100_000, seed=k)
        table = classify_batch(c, encode_batch(c, idx, sign), mag, spec, FLOOR_POLICY)
        assert int(table.flagged.sum()) == 0
        assert table.pattern_residual.max() <= 1e-9
        assert np.array_equal(table.nearest_index, idx) and np.array_equal(table.nearest_sign, sign)

    @pytest.mark.parametrize("alpha", [1e-2, 1e-3, 1e-8])
    def test_laplace_rate_within_alpha(self, alpha):
        k, n = 16, 100_000
        spec = MechanismSpec("laplace", 1.0, k)
        policy = calibrate_policy(spec, alpha, np.random.default_rng(100))
        c = build_codec(k, 0)
        idx, sign, mag = _benign(spec, n, seed=7)
        rate = classify_batch(c, encode_batch(c, idx, sign), mag, spec, policy).flagged.mean()
        assert rate <= alpha + 2 * math.sqrt(alpha * (1 - alpha) / n)

    def test_calibration_constant_near_half(self):
        # residual / sigma is close to a standard normal magnitude, so c ~ 1/2
        policy = calibrate_policy(MechanismSpec("laplace", 1.0, 64), 1e-8, np.random.default_rng(0))
        assert policy.c_constant == pytest.approx(0.5, abs=0.03)

    def test_discrete_calibration_sits_at_floor(self):
        p = calibrate_policy(MechanismSpec("krr", 1.0, 3), 1e-8, np.random.default_rng(0))
        assert p.tau_pattern == TAU_FLOOR and p.tau_mag == TAU_FLOOR


def test_detection_monotone_in_perturbation_norm():
    k, n = 16, 10_000
    spec = MechanismSpec("laplace", 1.0, k)
    c = build_codec(k, 2)
    policy = calibrate_policy(spec, 1e-8, np.random.default_rng(1))
    idx, sign, mag = _benign(spec, n, seed=4)
    Y = encode_batch(c, idx, sign)
    d = np.random.default_rng(5).standard_normal(Y.shape)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rates = [classify_batch(c, Y + r * d, mag, spec, policy).flagged.mean() for r in (0.01, 0.1, 0.5, 1.0)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))
    assert rates[-1] >= 0.999


def test_projection_poisoning_exposed():
    k, n = 16, 10_000
    spec = MechanismSpec("krr", 1.0, k)
    c = build_codec(k, 0)
    rng = np.random.default_rng(6)
    idx, sign = rng.integers(0, k, n), np.where(rng.random(n) < 0.5, 1, -1)
    phi_bad = projection_poison(c, 0.1, rng)
    Y = encode_batch(c, idx, sign, phi=phi_bad)
    assert classify_batch(c, Y, np.ones(n), spec, FLOOR_POLICY).flagged.mean() >= 0.999
    clean = classify_batch(c, encode_batch(c, idx, sign), np.ones(n), spec, FLOOR_POLICY)
    assert clean.flagged.sum() == 0


class TestQuantizedMode:
    @pytest.mark.parametrize("kind,k", [("krr", 16), ("harmony", 64)])
    def test_benign_records_pass_and_restore(self, kind, k):
        spec = MechanismSpec(kind, 1.0, k)
        c = build_codec(k, 1)
        policy = calibrate_policy(spec, 1e-8, np.random.default_rng(0), quantized=True)
        idx, sign, mag = _benign(spec, 20_000, seed=3)
        Yq = quantize(encode_batch(c, idx, sign), k)
        t = classify_batch(c, Yq, mag, spec, policy, quantized=True)
        assert t.flagged.sum() == 0
        assert np.array_equal(t.nearest_index, idx) and np.array_equal(t.nearest_sign, sign)

    def test_poisoned_records_flagged(self):
        k, n = 16, 10_000
        spec = MechanismSpec("krr", 1.0, k)
        c = build_codec(k, 1)
        policy = calibrate_policy(spec, 1e-8, np.random.default_rng(0), quantized=True)
        rng = np.random.default_rng(8)
        Y = encode_batch(c, rng.integers(0, k, n), np.ones(n, dtype=int))
        Yp, side = output_poison_batch(Y, np.ones(n), spec, 1.0, rng)
        t = classify_batch(c, quantize(Yp, k), side, spec, policy, quantized=True)
        assert t.flagged.mean() >= 0.99


class TestRatioAndExport:
    def _verdicts(self, flagged):
        return [DetectionVerdict(i, 0.0, 0.0, (0, 1), f) for i, f in enumerate(flagged)]

    def test_examples(self):
        assert estimate_ratio(self._verdicts([False] * 100)) == 0.0
        assert estimate_ratio(self._verdicts([True] * 5 + [False] * 95)) == 0.05

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_ratio([])

    def test_rows_sorted_by_client(self):
        spec = MechanismSpec("krr", 1.0, 3)
        c = build_codec(3, 0)
        t = classify_batch(c, c.patterns[:3] @ c.Phi.T, [1.0, 2.0, 1.0], spec, FLOOR_POLICY,
                           client_id=[7, 2, 5])
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(VERDICT_HEADER)
        w.writerows(verdict_rows(t))
        rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
        assert [r["client_id"] for r in rows] == ["2", "5", "7"]
        assert [r["flagged"] for r in rows] == ["1", "0", "0"]
        assert estimate_ratio(t) == pytest.approx(1 / 3)

    def test_encoded_vector_roundtrip(self):
        spec = MechanismSpec("krr", 1.0, 3)
        c = build_codec(3, 0)
        y = EncodedVector(c.patterns[5] @ c.Phi.T, 1.0, client_id=3)
        assert classify(c, y, spec, FLOOR_POLICY).nearest_pattern == (2, -1)
