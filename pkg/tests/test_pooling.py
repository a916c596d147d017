import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layertails.conv_pooling import (PoolCheck, PoolingSpec, pool,
                                     pool_signed_log, pooled_tail_check)
from layertails.network_model import NetworkConfig, sample_input
from layertails.nonlinearity import NonlinearitySpec

RELU = NonlinearitySpec("relu")
MAX4 = PoolingSpec("max", 4)
AVG4 = PoolingSpec("average", 4)


def encode(values):
    v = np.asarray(values, dtype=float)
    signs = np.sign(v).astype(np.int8)
    with np.errstate(divide="ignore"):
        lm = np.where(v == 0.0, -np.inf, np.log(np.abs(v)))
    return signs, lm


class TestPoolingSpec:
    def test_rejects_unknown_kind_and_empty_region(self):
        with pytest.raises(ValueError):
            PoolingSpec("median", 3)
        with pytest.raises(ValueError):
            PoolingSpec("max", 0)


class TestPool:
    def test_max_and_average(self):
        assert pool([1.0, -2.0, 0.5, 0.0], MAX4) == 1.0
        assert pool([1.0, -2.0, 0.5, 0.0], AVG4) == pytest.approx(-0.125)

    def test_region_size_enforced(self):
        with pytest.raises(ValueError):
            pool([1.0, 2.0], MAX4)


class TestPoolSignedLog:
    @given(st.lists(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                                       allow_nan=False),
                             min_size=4, max_size=4),
                    min_size=1, max_size=40),
           st.sampled_from(["max", "average"]))
    @settings(max_examples=150, deadline=None)
    def test_agrees_with_linear_pooling(self, rows, kind):
        v = np.asarray(rows)
        spec = PoolingSpec(kind, 4)
        signs, lm = encode(v)
        out_s, out_lm = pool_signed_log(signs, lm, spec)
        want = np.max(v, axis=1) if kind == "max" else np.mean(v, axis=1)
        got = np.where(out_s == 0, 0.0, out_s * np.exp(out_lm))
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)

    def test_max_prefers_zero_over_negative(self):
        signs, lm = encode([[-3.0, 0.0, -1.0, -2.0]])
        out_s, out_lm = pool_signed_log(signs, lm, MAX4)
        assert out_s[0] == 0 and out_lm[0] == -np.inf

    def test_max_of_all_negative_is_least_negative(self):
        signs, lm = encode([[-3.0, -0.25, -1.0, -2.0]])
        out_s, out_lm = pool_signed_log(signs, lm, MAX4)
        assert out_s[0] == -1
        assert out_lm[0] == pytest.approx(np.log(0.25))

    def test_average_cancellation_yields_zero(self):
        signs, lm = encode([[1.0, -1.0, 2.0, -2.0]])
        out_s, out_lm = pool_signed_log(signs, lm, AVG4)
        assert out_s[0] == 0 and out_lm[0] == -np.inf

    def test_huge_log_magnitudes_stay_in_log_domain(self):
        signs = np.array([[1, 1, -1, 1]], dtype=np.int8)
        lm = np.array([[5000.0, 4999.0, 5001.0, 4998.0]])
        for spec in (MAX4, AVG4):
            out_s, out_lm = pool_signed_log(signs, lm, spec)
            assert np.isfinite(out_lm).all()
            assert 4990.0 < out_lm[0] < 5002.0

    def test_region_one_is_identity(self):
        signs, lm = encode([[2.5], [-0.5], [0.0]])
        for kind in ("max", "average"):
            out_s, out_lm = pool_signed_log(signs, lm, PoolingSpec(kind, 1))
            np.testing.assert_array_equal(out_s, signs[:, 0])
            np.testing.assert_array_equal(out_lm, lm[:, 0])

    def test_shape_mismatch_rejected(self):
        signs, lm = encode([[1.0, 2.0]])
        with pytest.raises(ValueError):
            pool_signed_log(signs, lm, MAX4)


@pytest.fixture(scope="module")
def cfg():
    return NetworkConfig(input_dim=50, layer_widths=(50, 50),
                         nonlinearity=RELU, weight_std=1.0)


@pytest.fixture(scope="module")
def x(cfg):
    return sample_input(cfg.input_dim, 29)


class TestPooledTailCheck:
    def test_region_of_one_is_exactly_invariant(self, cfg, x):
        chk = pooled_tail_check(cfg, x, 2, (3,), PoolingSpec("max", 1),
                                30_000, 29)
        assert chk.passes
        assert chk.after.theta_hat == chk.before.theta_hat

    @pytest.mark.parametrize("kind", ["max", "average"])
    def test_pooling_preserves_theta(self, cfg, x, kind):
        chk = pooled_tail_check(cfg, x, 2, (0, 1, 2, 3), PoolingSpec(kind, 4),
                                100_000, 29)
        assert isinstance(chk, PoolCheck)
        assert chk.passes, (chk.before.theta_hat, chk.after.theta_hat,
                            chk.budget)

    def test_region_must_match_spec(self, cfg, x):
        with pytest.raises(ValueError):
            pooled_tail_check(cfg, x, 2, (0, 1), MAX4, 10_000, 29)
        with pytest.raises(ValueError):
            pooled_tail_check(cfg, x, 2, (0, 0, 1, 2), MAX4, 10_000, 29)
