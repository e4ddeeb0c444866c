import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peel.attacks import (
    AttackConfig,
    AttackKind,
    client_score,
    compromised_mask,
    inadmissible_encoding_batch,
    output_poison,
    projection_poison,
    rule_poison_budgets,
)
from peel.codec import EncodedVector, build_codec, encode, encode_batch, reconstruct_batch, subspace_residual
from peel.detector import ThresholdPolicy, classify_batch, pattern_residual_batch
from peel.errors import ConfigurationError
from peel.mechanisms import MechanismSpec
from peel.sparsifier import SparseCode

SPEC16 = MechanismSpec("krr", 1.0, 16)


class TestConfig:
    def test_defaults_and_coercion(self):
        a = AttackConfig(kind="rule", ratio=0.05, target_set=[3, 1])
        assert a.kind is AttackKind.RULE and a.target_set == frozenset({1, 3})

    @pytest.mark.parametrize("kw", [{"ratio": -0.1}, {"ratio": 1.5}, {"strength": -1.0},
                                    {"budget_bounds": (1.0, 4.0)}, {"kind": "input"}])
    def test_rejects(self, kw):
        with pytest.raises((ConfigurationError, ValueError)):
            AttackConfig(**kw)


class TestOutputPoison:
    def _y(self):
        c = build_codec(16, 0)
        return encode(c, SparseCode(16, 4, 1, 1.0), client_id=2)

    def test_vanishing_strength(self):
        y = self._y()
        out = output_poison(y, SPEC16, 1e-9, np.random.default_rng(0))
        assert np.abs(out.y - y.y).max() <= 1e-6
        assert out.magnitude_sidecar == y.magnitude_sidecar and out.client_id == 2

    def test_deterministic(self):
        y = self._y()
        a = output_poison(y, SPEC16, 1.0, np.random.default_rng(9), tamper_sidecar=True)
        b = output_poison(y, SPEC16, 1.0, np.random.default_rng(9), tamper_sidecar=True)
        assert np.array_equal(a.y, b.y) and a.magnitude_sidecar == b.magnitude_sidecar == 2.0

    def test_needs_positive_strength(self):
        with pytest.raises(ConfigurationError):
            output_poison(self._y(), SPEC16, 0.0, np.random.default_rng(0))

    def test_noise_scale_matches_kernel(self):
        # per-coordinate Laplace with scale f * strength / eps has mean |d| equal to that scale
        y = EncodedVector(np.zeros(200_000), 1.0)
        d = output_poison(y, MechanismSpec("krr", 2.0, 3), 1.5, np.random.default_rng(4)).y
        assert np.mean(np.abs(d)) == pytest.approx(2.0 * 1.5 / 2.0, rel=0.01)

    def test_pattern_residual_frequency(self):
        c = build_codec(16, 0)
        rng = np.random.default_rng(1)
        n = 10_000
        Y = encode_batch(c, rng.integers(0, 16, n), np.ones(n, dtype=int))
        outs = np.stack([output_poison(EncodedVector(y, 1.0), SPEC16, 1.0, rng).y for y in Y[:2000]])
        delta, _, _ = pattern_residual_batch(c, reconstruct_batch(c, outs))
        assert np.mean(delta > 1e-6) >= 0.999

    def test_pre_encoding_leaves_column_space(self):
        c = build_codec(8, 0)
        rng = np.random.default_rng(2)
        idx = rng.integers(0, 8, 500)
        sign = np.ones(500, dtype=int)
        s_tilde, Y = inadmissible_encoding_batch(c, idx, sign, 1.0, rng)
        assert np.all(np.count_nonzero(np.abs(s_tilde) > 1e-12, axis=1) == 8)
        assert subspace_residual(c, s_tilde).min() > 1e-3
        assert np.allclose(Y, s_tilde @ c.Phi.T)
        assert classify_batch(c, Y, np.ones(500), MechanismSpec("krr", 1.0, 8), ThresholdPolicy()).flagged.all()


class TestCompromisedSet:
    @pytest.mark.parametrize("n,ratio", [(10, 0.05), (100, 0.05), (10_000, 0.05), (333, 0.5), (50, 1.0), (50, 0.0)])
    def test_count_is_exact(self, n, ratio):
        assert compromised_mask(np.arange(n), ratio, seed=1).sum() == round(ratio * n)

    def test_membership_reproducible(self):
        a = compromised_mask(np.arange(1000), 0.1, seed=4)
        assert np.array_equal(a, compromised_mask(np.arange(1000), 0.1, seed=4))
        assert not np.array_equal(a, compromised_mask(np.arange(1000), 0.1, seed=5))

    def test_target_set(self):
        m = compromised_mask(np.arange(6), 0.9, seed=0, target_set={1, 4})
        assert m.tolist() == [False, True, False, False, True, False]

    def test_score_range(self):
        s = [client_score(3, i) for i in range(1000)]
        assert 0.0 <= min(s) and max(s) < 1.0


class TestRuleBudgets:
    def test_no_compromise_is_uniform_split(self):
        assert rule_poison_budgets(4, 4.0, (0.25, 4.0), np.random.default_rng(0)).tolist() == [1, 1, 1, 1]

    def test_compromised_range_and_total(self):
        n, eps = 10_000, 10_000.0
        mask = compromised_mask(np.arange(n), 0.05, seed=0)
        b = rule_poison_budgets(n, eps, (0.25, 4.0), np.random.default_rng(1), mask)
        assert abs(b.sum() - eps) <= 1e-10 * max(1.0, eps) + 1e-10
        assert b[mask].min() >= 0.25 and b[mask].max() <= 4.0
        honest = b[~mask]
        assert np.allclose(honest, honest[0]) and honest.min() > 0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 300), st.floats(0.01, 100.0), st.floats(0.0, 0.3), st.integers(0, 2**31))
    def test_total_preserved(self, n, eps_total, ratio, seed):
        mask = compromised_mask(np.arange(n), ratio, seed)
        if mask.all():
            return
        try:
            b = rule_poison_budgets(n, eps_total, (0.25, 4.0), np.random.default_rng(seed), mask)
        except ConfigurationError:
            # each compromised client can overdraw at most 3 eps_bar, so rejection
            # needs 3 m > n - m
            m = int(mask.sum())
            assert 3 * m > n - m
            return
        assert abs(b.sum() - eps_total) <= 1e-10 * max(1.0, eps_total)
        assert np.all(b > 0)

    def test_infeasible_correction(self):
        with pytest.raises(ConfigurationError, match="nonpositive"):
            rule_poison_budgets(4, 4.0, (0.5, 20.0), np.random.default_rng(0), np.array([0, 1, 2]))

    def test_guards(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigurationError):
            rule_poison_budgets(1, 1.0, (0.25, 4.0), rng)
        with pytest.raises(ConfigurationError):
            rule_poison_budgets(4, 4.0, (0.25, 0.9), rng)
        with pytest.raises(ConfigurationError):
            rule_poison_budgets(3, 3.0, (0.25, 4.0), rng, np.ones(3, dtype=bool))


class TestProjectionPoison:
    def test_zero_strength_is_benign(self):
        c = build_codec(16, 0)
        assert np.array_equal(projection_poison(c, 0.0, np.random.default_rng(0)), c.Phi)

    def test_entry_scale(self):
        c = build_codec(64, 0)
        d = projection_poison(c, 0.1, np.random.default_rng(3)) - c.Phi
        assert d.std() == pytest.approx(0.1, rel=0.05)

    def test_deterministic(self):
        c = build_codec(16, 0)
        a = projection_poison(c, 0.1, np.random.default_rng(7))
        assert np.array_equal(a, projection_poison(c, 0.1, np.random.default_rng(7)))

    def test_benign_plus_distortion_decomposition(self):
        c = build_codec(16, 2)
        rng = np.random.default_rng(5)
        phi_bad = projection_poison(c, 0.1, rng)
        delta = phi_bad - c.Phi
        s_tilde = c.patterns
        lhs = reconstruct_batch(c, s_tilde @ phi_bad.T)
        rhs = s_tilde + (c.Gamma @ delta @ s_tilde.T).T
        assert np.abs(lhs - rhs).max() <= 1e-10

    def test_flag_frequency(self):
        c = build_codec(16, 0)
        rng = np.random.default_rng(11)
        n = 10_000
        idx, sign = rng.integers(0, 16, n), np.where(rng.random(n) < 0.5, 1, -1)
        Y = encode_batch(c, idx, sign, phi=projection_poison(c, 0.1, rng))
        assert classify_batch(c, Y, np.ones(n), SPEC16, ThresholdPolicy()).flagged.mean() >= 0.999
