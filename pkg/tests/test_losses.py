"""Loss term tests.

Identities come from degenerate nets (identity, constant offset, zero) and
from a hand-composed numpy recomposition of the downsample-wrap pipeline.
Detachment of the pseudo-noise label is checked by gradient inspection.
"""

import numpy as np
import pytest

from i2v.losses import LossWeights, loss_np, loss_ov, loss_r, loss_s, loss_total
from i2v.networks import BlindSpotNet, NoiseExtractor
from i2v.pd import ShuffleOrder, pd_forward, pd_inverse, random_order
from i2v.tensor import Tensor, add, backward, scalar_mul, sub


def identity_net(t):
    return t


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda_s, w.lambda_r, w.lambda_ov, w.lambda_np) == (10.0, 1.0, 1.0, 1.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_r=-0.1)


class TestLossS:
    def test_identity_net_gives_zero(self, image10, rng):
        assert loss_s(identity_net, image10, random_order(5, rng)).item() == 0.0

    def test_constant_offset_gives_offset(self, image10, rng):
        f = lambda t: add(t, Tensor.full((1, 1, 1, 1), 0.3))
        val = loss_s(f, image10, random_order(5, rng)).item()
        assert abs(val - 0.3) < 1e-6

    def test_matches_hand_recomposition(self, image10, rng, tiny_f):
        o = random_order(5, rng)
        got = loss_s(tiny_f, image10, o).item()
        from i2v.tensor import no_grad

        with no_grad():
            y = pd_inverse(tiny_f(pd_forward(image10, o)), o.transpose())
        want = float(np.abs(y.data - image10.data).mean())
        assert abs(got - want) < 1e-6

    def test_wrong_stride_rejected(self, image10, rng):
        with pytest.raises(ValueError):
            loss_s(identity_net, image10, random_order(2, rng))


class TestLossR:
    def test_zero_when_h_reproduces_label(self, image10):
        f = lambda t: scalar_mul(t, 0.5)  # wrapped f output is x/2
        h = lambda t: scalar_mul(t, 0.5)  # pseudo-noise label is x/2 as well
        assert loss_r(f, h, image10).item() < 1e-7

    def test_zero_for_identity_f_and_zero_h(self, image10):
        h = lambda t: Tensor.zeros(t.shape)
        assert loss_r(identity_net, h, image10).item() == 0.0

    def test_label_is_detached_from_f(self, image10, tiny_f, tiny_h):
        backward(loss_r(tiny_f, tiny_h, image10))
        for name, t in tiny_f.params.items():
            assert t.grad is None or not np.any(t.grad), name
        assert any(t.grad is not None and np.any(t.grad) for t in tiny_h.params.tensors())

    def test_shared_hx_matches_fresh_evaluation(self, image10, tiny_f, tiny_h):
        from i2v.networks import ne_forward

        hx = ne_forward(tiny_h, image10)
        assert loss_r(tiny_f, tiny_h, image10, hx=hx).item() == loss_r(tiny_f, tiny_h, image10).item()


class TestLossOv:
    def test_zero_for_complete_decomposition(self, image10, rng):
        f = identity_net  # wrapped f gives x
        h = lambda t: Tensor.zeros(t.shape)  # wrapped h gives 0
        o1, o2 = random_order(5, rng), random_order(5, rng)
        assert loss_ov(f, h, image10, o1, o2).item() == 0.0

    def test_zero_for_half_half_split(self, image10, rng):
        f = lambda t: scalar_mul(t, 0.5)
        h = lambda t: scalar_mul(t, 0.5)
        val = loss_ov(f, h, image10, random_order(5, rng), random_order(5, rng)).item()
        assert val < 1e-7

    def test_order_choice_changes_value(self, image10, tiny_f, tiny_h):
        ident = ShuffleOrder.identity(5)
        seeded = np.random.default_rng(99)
        v_id = loss_ov(tiny_f, tiny_h, image10, ident, ident).item()
        v_rand = loss_ov(tiny_f, tiny_h, image10, random_order(5, seeded), random_order(5, seeded)).item()
        assert abs(v_id - v_rand) > 1e-6

    def test_gradients_reach_both_networks(self, image10, tiny_f, tiny_h, rng):
        backward(loss_ov(tiny_f, tiny_h, image10, random_order(5, rng), random_order(5, rng)))
        assert any(t.grad is not None and np.any(t.grad) for t in tiny_f.params.tensors())
        assert any(t.grad is not None and np.any(t.grad) for t in tiny_h.params.tensors())

    def test_wrong_stride_rejected(self, image10, rng):
        with pytest.raises(ValueError):
            loss_ov(identity_net, identity_net, image10, random_order(2, rng), random_order(5, rng))


class TestLossNp:
    def test_zero_output_gives_zero(self, batch20):
        h = lambda t: Tensor.zeros(t.shape)
        assert loss_np(h, batch20).item() == 0.0

    def test_sign_symmetric_batch_cancels(self, rng):
        x = Tensor(rng.random((2, 3, 6, 6)).astype(np.float32))
        # dyadic values keep every float32 partial sum exact, so the
        # positive and negative halves cancel to a bit-exact zero
        v = rng.choice([-1.0, -0.5, -0.25, 0.25, 0.5, 1.0], (1, 3, 6, 6)).astype(np.float32)
        h = lambda t: Tensor(np.concatenate([v, -v], axis=0))
        assert loss_np(h, x).item() == 0.0

    def test_constant_output_gives_constant(self, image10):
        h = lambda t: Tensor.full(t.shape, 0.17)
        assert abs(loss_np(h, image10).item() - 0.17) < 1e-6

    def test_matches_numpy_formula(self, batch20, tiny_h):
        from i2v.networks import ne_forward

        got = loss_np(tiny_h, batch20).item()
        hx = ne_forward(tiny_h, batch20).data
        want = float(np.abs(hx.mean(axis=(0, 1))).mean())
        assert abs(got - want) < 1e-6


class TestLossTotal:
    def test_zero_weights_zero_total(self, image10, tiny_f, tiny_h):
        report = loss_total(tiny_f, tiny_h, image10, LossWeights(0, 0, 0, 0), np.random.default_rng(0))
        assert report.total == 0.0

    def test_weighted_sum_identity(self, image10, tiny_f, tiny_h):
        report = loss_total(tiny_f, tiny_h, image10, LossWeights(), np.random.default_rng(0))
        assert abs(report.total - (10 * report.s + report.r + report.ov + report.np)) < 1e-6

    def test_same_seed_same_report(self, image10, tiny_f, tiny_h):
        a = loss_total(tiny_f, tiny_h, image10, LossWeights(), np.random.default_rng(42))
        b = loss_total(tiny_f, tiny_h, image10, LossWeights(), np.random.default_rng(42))
        assert a.row() == b.row()

    def test_matches_componentwise_recomposition(self, image10, tiny_f, tiny_h):
        # identical rng stream: three stride-5 orders, then h(x); with
        # training=False no dropout draws occur afterwards
        seed = 7
        report = loss_total(tiny_f, tiny_h, image10, LossWeights(), np.random.default_rng(seed), training=False)
        rng = np.random.default_rng(seed)
        o_s = random_order(5, rng)
        o_i = random_order(5, rng)
        o_i2 = random_order(5, rng)
        s = loss_s(tiny_f, image10, o_s).item()
        r = loss_r(tiny_f, tiny_h, image10).item()
        ov = loss_ov(tiny_f, tiny_h, image10, o_i, o_i2).item()
        npv = loss_np(tiny_h, image10).item()
        assert abs(report.s - s) < 1e-7
        assert abs(report.r - r) < 1e-7
        assert abs(report.ov - ov) < 1e-7
        assert abs(report.np - npv) < 1e-7
        assert abs(report.total - (10 * s + r + ov + npv)) < 1e-6

    def test_non_negative_terms(self, image10, tiny_f, tiny_h):
        report = loss_total(tiny_f, tiny_h, image10, LossWeights(), np.random.default_rng(3))
        assert min(report.s, report.r, report.ov, report.np) >= 0.0

    def test_indivisible_extent_rejected(self, rng, tiny_f, tiny_h):
        x = Tensor(rng.random((1, 3, 12, 12)).astype(np.float32))
        with pytest.raises(ValueError):
            loss_total(tiny_f, tiny_h, x, LossWeights(), np.random.default_rng(0))

    def test_root_backpropagates(self, image10, tiny_f, tiny_h):
        report = loss_total(tiny_f, tiny_h, image10, LossWeights(), np.random.default_rng(1))
        backward(report.root)
        assert any(np.any(t.grad) for t in tiny_f.params.tensors() if t.grad is not None)
