import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from sinv.errors import InvalidInputError, ShapeError
from sinv.metrics import (
    DEFAULT_ALPHA,
    ConstantChannelWarning,
    combined_loss,
    loss_from_parts,
    pearson,
    segment_bounds,
)


def numeric_grad(pred, target, mask, alpha, h=1e-6):
    g = np.zeros_like(pred)
    for i in np.ndindex(pred.shape):
        p = pred.copy()
        p[i] += h
        a = combined_loss(p, target, mask, alpha).loss
        p[i] -= 2 * h
        b = combined_loss(p, target, mask, alpha).loss
        g[i] = (a - b) / (2 * h)
    return g


def np_pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    return float((xc * yc).sum() / np.sqrt((xc ** 2).sum() * (yc ** 2).sum()))


class TestPearson:
    x = np.array([0.3, -1.2, 2.0, 0.7, 0.1])

    def test_identity(self):
        assert pearson(self.x, self.x) == pytest.approx(1.0)

    def test_negation(self):
        assert pearson(self.x, -self.x) == pytest.approx(-1.0)

    def test_affine(self):
        assert pearson(self.x, 2 * self.x + 3) == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            pearson([1, 2, 3], [1, 2])

    def test_too_short(self):
        with pytest.raises(ShapeError):
            pearson([1.0], [1.0])

    def test_constant_is_zero_with_warning(self):
        with pytest.warns(ConstantChannelWarning):
            assert pearson(np.ones(5), self.x) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), a=st.floats(0.1, 10), b=st.floats(-10, 10))
    def test_affine_invariance_property(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal(30), rng.standard_normal(30)
        r = pearson(x, y)
        assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)
        assert pearson(-a * x + b, y) == pytest.approx(-r, abs=1e-9)
        assert r == pytest.approx(np_pearson(x, y), abs=1e-12)


class TestLoss:
    def test_perfect_prediction(self):
        y = np.random.default_rng(0).standard_normal((40, 3))
        lv = combined_loss(y, y)
        assert lv.loss == 0.0 and lv.pc == pytest.approx(1.0) and lv.rmse == 0.0

    def test_eq_value(self):
        assert loss_from_parts(0.5, 0.2, 0.8) == pytest.approx(0.44, abs=1e-15)
        assert DEFAULT_ALPHA == 0.8

    def test_parts_are_consistent(self):
        rng = np.random.default_rng(1)
        p, t = rng.standard_normal((30, 2)), rng.standard_normal((30, 2))
        lv = combined_loss(p, t, alpha=0.3)
        pc = np.mean([np_pearson(p[:, c], t[:, c]) for c in range(2)])
        rmse = np.sqrt(np.mean((p - t) ** 2))
        assert lv.pc == pytest.approx(pc, abs=1e-12) and lv.rmse == pytest.approx(rmse, abs=1e-12)
        assert lv.loss == pytest.approx(0.3 * (1 - pc) + 0.7 * rmse, abs=1e-12)

    def test_gradient_20x3(self):
        rng = np.random.default_rng(2)
        p, t = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
        lv = combined_loss(p, t)
        num = numeric_grad(p, t, None, 0.8)
        rel = np.abs(lv.grad - num) / np.maximum(np.maximum(np.abs(lv.grad), np.abs(num)), 1e-6)
        assert rel.max() <= 1e-5

    def test_gradient_masked_batch(self):
        rng = np.random.default_rng(3)
        p, t = rng.standard_normal((2, 12, 2)), rng.standard_normal((2, 12, 2))
        mask = np.ones((2, 12), bool)
        mask[1, 8:] = False
        lv = combined_loss(p, t, mask)
        num = numeric_grad(p, t, mask, 0.8)
        np.testing.assert_allclose(lv.grad, num, atol=1e-8)
        assert not lv.grad[1, 8:].any()

    def test_masked_frames_ignored(self):
        rng = np.random.default_rng(4)
        p, t = rng.standard_normal((1, 10, 2)), rng.standard_normal((1, 10, 2))
        mask = np.zeros((1, 10), bool)
        mask[0, :6] = True
        p2 = p.copy()
        p2[0, 6:] = 1e3
        assert combined_loss(p, t, mask).loss == combined_loss(p2, t, mask).loss

    def test_per_utterance_pc(self):
        rng = np.random.default_rng(5)
        p, t = rng.standard_normal((2, 15, 1)), rng.standard_normal((2, 15, 1))
        lv = combined_loss(p, t)
        per = [np_pearson(p[b, :, 0], t[b, :, 0]) for b in range(2)]
        assert lv.pc == pytest.approx(np.mean(per), abs=1e-12)

    def test_constant_channel_counts_as_zero(self):
        t = np.random.default_rng(6).standard_normal((10, 2))
        p = t.copy()
        p[:, 1] = 0.5
        lv = combined_loss(p, t)
        assert lv.pc == pytest.approx(0.5)

    def test_all_masked(self):
        with pytest.raises(InvalidInputError):
            combined_loss(np.zeros((1, 4, 1)), np.zeros((1, 4, 1)), np.zeros((1, 4), bool))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            combined_loss(np.zeros((4, 2)), np.zeros((4, 3)))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), alpha=st.floats(0, 1))
    def test_non_negative(self, seed, alpha):
        rng = np.random.default_rng(seed)
        lv = combined_loss(rng.standard_normal((12, 3)), rng.standard_normal((12, 3)), alpha=alpha)
        assert lv.loss >= 0

    @settings(max_examples=40, deadline=None)
    @given(pc=st.floats(-1, 1), d=st.floats(1e-3, 1), rmse=st.floats(0, 5), alpha=st.floats(0.01, 1))
    def test_monotone_in_pc(self, pc, d, rmse, alpha):
        assume(pc - d >= -1)
        hi, lo = loss_from_parts(pc, rmse, alpha), loss_from_parts(pc - d, rmse, alpha)
        assert lo > hi
        assert lo - hi == pytest.approx(alpha * d, rel=1e-9, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_self_loss_zero(self, seed):
        y = np.random.default_rng(seed).standard_normal((2, 9, 3))
        assert combined_loss(y, y).loss == pytest.approx(0.0, abs=1e-12)


class TestSegments:
    def test_six_and_a_half_seconds(self):
        assert segment_bounds(650) == [(0, 200), (200, 400), (400, 600)]

    def test_tail_kept_at_half(self):
        assert segment_bounds(500) == [(0, 200), (200, 400), (400, 500)]

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(0, 5000))
    def test_count_and_coverage(self, n):
        b = segment_bounds(n)
        assert sum(e - s for s, e in b) <= n
        assert len(b) == n // 200 + (1 if n % 200 >= 100 else 0)
        assert all(e - s >= 100 for s, e in b)
