"""Inference scheme tests.

The progressive refinement is verified against a straight-line numpy
re-implementation fed the exact same mask realizations; outputs must be
bit-identical. Cost contracts are verified by call counting.
"""

import numpy as np
import pytest

from i2v.inference import (
    BinaryMask,
    CallCounter,
    InferenceConfig,
    baseline_apbsn,
    blend_i2vb,
    ne_denoise,
    pr3,
    r3,
    random_replace,
    sweep_pr3,
)
from i2v.data_noise import ImageRecord
from i2v.networks import ne_forward
from i2v.tensor import ShapeError, Tensor, add, scalar_mul, sub


def identity_net(t):
    return t


class TestBinaryMask:
    def test_entries_are_binary(self, rng):
        m = BinaryMask.sample((1, 3, 6, 6), 0.4, rng)
        assert set(np.unique(m.tensor.data)) <= {0.0, 1.0}

    def test_probability_respected(self):
        m = BinaryMask.sample((1, 3, 100, 100), 0.4, np.random.default_rng(0))
        assert abs(m.tensor.data.mean() - 0.4) < 0.02

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            BinaryMask(Tensor(np.full((1, 1, 2, 2), 0.5)), 0.5)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_degenerate_probability_rejected(self, rng, p):
        with pytest.raises(ValueError):
            BinaryMask.sample((1, 1, 2, 2), p, rng)


class TestInferenceConfig:
    def test_defaults(self):
        cfg = InferenceConfig()
        assert (cfg.p1, cfg.p2, cfg.r3_repetitions, cfg.r3_probability) == (0.4, 0.4, 8, 0.16)

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            InferenceConfig(p1=1.5)
        with pytest.raises(ValueError):
            InferenceConfig(r3_repetitions=0)


class TestRandomReplace:
    def test_all_ones_keeps_x(self, rng):
        x = Tensor(rng.random((1, 3, 4, 4)).astype(np.float32))
        y = Tensor(rng.random((1, 3, 4, 4)).astype(np.float32))
        m = BinaryMask(Tensor(np.ones((1, 3, 4, 4), dtype=np.float32)), 0.5)
        assert np.array_equal(random_replace(m, x, y).data, x.data)

    def test_all_zeros_takes_y(self, rng):
        x = Tensor(rng.random((1, 3, 4, 4)).astype(np.float32))
        y = Tensor(rng.random((1, 3, 4, 4)).astype(np.float32))
        m = BinaryMask(Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32)), 0.5)
        assert np.array_equal(random_replace(m, x, y).data, y.data)

    def test_elementwise_selection(self):
        x = Tensor(np.full((1, 1, 1, 2), 5.0, dtype=np.float32))
        y = Tensor(np.full((1, 1, 1, 2), 2.0, dtype=np.float32))
        m = BinaryMask(Tensor(np.array([[[[1.0, 0.0]]]], dtype=np.float32)), 0.5)
        assert random_replace(m, x, y).data.tolist() == [[[[5.0, 2.0]]]]

    def test_shape_mismatch_rejected(self, rng):
        x = Tensor(np.zeros((1, 3, 4, 4)))
        y = Tensor(np.zeros((1, 3, 4, 2)))
        m = BinaryMask(Tensor(np.ones((1, 3, 4, 4), dtype=np.float32)), 0.5)
        with pytest.raises(ShapeError):
            random_replace(m, x, y)


class TestSimpleSchemes:
    def test_baseline_identity_f(self, image10):
        assert np.array_equal(baseline_apbsn(identity_net, image10).data, image10.data)

    def test_baseline_constant_shift(self, image10):
        f = lambda t: sub(t, Tensor.full((1, 1, 1, 1), 0.2))
        out = baseline_apbsn(f, image10).data
        assert np.allclose(out, image10.data - 0.2, atol=1e-7)

    def test_ne_denoise_zero_h(self, image10):
        h = lambda t: Tensor.zeros(t.shape)
        assert np.array_equal(ne_denoise(h, image10).data, image10.data)

    def test_ne_denoise_h_equals_x(self, image10):
        out = ne_denoise(identity_net, image10).data
        assert np.all(out == 0.0)

    def test_blend_is_elementwise_mean(self, image10, tiny_f, tiny_h):
        blend = blend_i2vb(tiny_f, tiny_h, image10).data
        a = baseline_apbsn(tiny_f, image10).data
        b = ne_denoise(tiny_h, image10).data
        assert np.allclose(blend, 0.5 * (a + b), atol=1e-7)


class TestR3:
    def test_identity_f_returns_x(self, image10, rng):
        out = r3(identity_net, image10, 0.16, 4, rng)
        assert np.allclose(out.data, image10.data, atol=1e-6)

    def test_t_below_one_rejected(self, image10, rng):
        with pytest.raises(ValueError):
            r3(identity_net, image10, 0.16, 0, rng)

    def test_mask_count_must_match(self, image10, rng):
        masks = [BinaryMask.sample(image10.shape, 0.16, rng) for _ in range(2)]
        with pytest.raises(ValueError):
            r3(identity_net, image10, 0.16, 3, rng, masks=masks)

    def test_single_zero_mask_gives_f_of_baseline(self, image10, tiny_f):
        zero = BinaryMask(Tensor(np.zeros(image10.shape, dtype=np.float32)), 0.16)
        out = r3(tiny_f, image10, 0.16, 1, np.random.default_rng(0), masks=[zero])
        from i2v.tensor import no_grad

        with no_grad():
            want = tiny_f(baseline_apbsn(tiny_f, image10)).data
        assert np.array_equal(out.data, want)

    def test_calls_f_t_plus_one_times(self, image10, tiny_f, rng):
        counted = CallCounter(tiny_f)
        r3(counted, image10, 0.16, 8, rng)
        assert counted.calls == 9  # T mixtures plus the baseline pass

    def test_averaging_shrinks_seed_variance(self, image10, tiny_f):
        outs1 = [r3(tiny_f, image10, 0.3, 1, np.random.default_rng(s)).data for s in range(6)]
        outs8 = [r3(tiny_f, image10, 0.3, 8, np.random.default_rng(s)).data for s in range(6)]
        var1 = np.var(np.stack(outs1), axis=0).mean()
        var8 = np.var(np.stack(outs8), axis=0).mean()
        assert var8 < var1


class TestPr3:
    def straight_line_oracle(self, f, h, x, m1, m2):
        """Eq-by-eq numpy recomposition with pinned masks."""
        from i2v.tensor import no_grad

        with no_grad():
            y_hat = sub(x, ne_forward(h, x, training=False))
            mixed1 = add(mul_np(m1, x), mul_np(1 - m1, y_hat))
            y_bsn = f(mixed1)
            mixed2 = add(mul_np(m2, x), mul_np(1 - m2, y_bsn))
            n_ne = ne_forward(h, mixed2, training=False)
            y_ne = add(mul_np(1 - m2, y_bsn), mul_np(m2, sub(x, n_ne)))
            return scalar_mul(add(y_hat, y_ne), 0.5)

    def test_bit_identical_to_oracle(self, image10, tiny_f, tiny_h):
        rng = np.random.default_rng(5)
        m1 = BinaryMask.sample(image10.shape, 0.4, rng)
        m2 = BinaryMask.sample(image10.shape, 0.4, rng)
        got = pr3(tiny_f, tiny_h, image10, InferenceConfig(), np.random.default_rng(0), masks=(m1, m2))
        want = self.straight_line_oracle(tiny_f, tiny_h, image10, m1.tensor.data, m2.tensor.data)
        assert np.array_equal(got.data, want.data)

    def test_all_ones_masks_give_y_hat(self, image10, tiny_f, tiny_h):
        ones = BinaryMask(Tensor(np.ones(image10.shape, dtype=np.float32)), 0.4)
        out = pr3(tiny_f, tiny_h, image10, InferenceConfig(), np.random.default_rng(0), masks=(ones, ones))
        assert np.array_equal(out.data, ne_denoise(tiny_h, image10).data)

    def test_all_zeros_masks_give_mean_with_f_of_y_hat(self, image10, tiny_f, tiny_h):
        zeros = BinaryMask(Tensor(np.zeros(image10.shape, dtype=np.float32)), 0.4)
        out = pr3(tiny_f, tiny_h, image10, InferenceConfig(), np.random.default_rng(0), masks=(zeros, zeros))
        from i2v.tensor import no_grad

        y_hat = ne_denoise(tiny_h, image10)
        with no_grad():
            want = 0.5 * (y_hat.data + tiny_f(y_hat).data)
        assert np.allclose(out.data, want, atol=1e-7)

    def test_call_counts(self, image10, tiny_f, tiny_h):
        cf, ch = CallCounter(tiny_f), CallCounter(tiny_h)
        pr3(cf, ch, image10, InferenceConfig(), np.random.default_rng(1))
        assert cf.calls == 1 and ch.calls == 2

    def test_deterministic_under_seed(self, image10, tiny_f, tiny_h):
        a = pr3(tiny_f, tiny_h, image10, InferenceConfig(), np.random.default_rng(9)).data
        b = pr3(tiny_f, tiny_h, image10, InferenceConfig(), np.random.default_rng(9)).data
        assert np.array_equal(a, b)

    def test_no_divisibility_demand(self, rng, tiny_f, tiny_h):
        # 7x9 extents: indivisible by every stride, still fine for pr3
        x = Tensor(rng.random((1, 3, 7, 9)).astype(np.float32))
        out = pr3(tiny_f, tiny_h, x, InferenceConfig(), np.random.default_rng(0))
        assert out.shape == x.shape


def mul_np(arr, t):
    return Tensor((np.asarray(arr, dtype=t.dtype) * t.data).astype(t.dtype))


class TestSweep:
    def make_dataset(self, rng, n=2):
        recs = []
        for i in range(n):
            clean = Tensor(rng.random((1, 3, 12, 12)).astype(np.float32))
            noisy = Tensor((clean.data + 0.05 * rng.standard_normal(clean.shape)).astype(np.float32))
            recs.append(ImageRecord(id=f"r{i}", noisy=noisy, clean=clean))
        return recs

    def test_single_cell_matches_direct_pr3(self, rng, tiny_f, tiny_h):
        from i2v.metrics import psnr

        recs = self.make_dataset(rng)
        rows = sweep_pr3(tiny_f, tiny_h, recs, [0.4], [0.4], seed=3)
        assert len(rows) == 1
        direct = [
            psnr(pr3(tiny_f, tiny_h, r.noisy, InferenceConfig(), np.random.default_rng(3 + i)), r.clean)
            for i, r in enumerate(recs)
        ]
        assert abs(rows[0]["psnr"] - np.mean(direct)) < 1e-9

    def test_grid_size(self, rng, tiny_f, tiny_h):
        rows = sweep_pr3(tiny_f, tiny_h, self.make_dataset(rng), [0.2, 0.4, 0.6], [0.3, 0.5], seed=0)
        assert len(rows) == 6
        assert {(r["p1"], r["p2"]) for r in rows} == {(a, b) for a in (0.2, 0.4, 0.6) for b in (0.3, 0.5)}

    def test_empty_grid_rejected(self, rng, tiny_f, tiny_h):
        with pytest.raises(ValueError):
            sweep_pr3(tiny_f, tiny_h, self.make_dataset(rng), [], [0.4])

    def test_requires_clean_references(self, rng, tiny_f, tiny_h):
        recs = [ImageRecord(id="x", noisy=Tensor(rng.random((1, 3, 8, 8)).astype(np.float32)))]
        with pytest.raises(ValueError):
            sweep_pr3(tiny_f, tiny_h, recs, [0.4], [0.4])
