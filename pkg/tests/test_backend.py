"""Kernel backend selection and python/compiled parity tests.

Both implementations receive identical pre-padded float32/float64 inputs;
outputs must agree to within accumulation-order rounding.
"""

import numpy as np
import pytest

from i2v import backend
from i2v.tensor import Tensor, conv2d, mean_all

needs_compiled = pytest.mark.skipif(
    not backend.HAS_COMPILED, reason="compiled extension not built"
)


@pytest.fixture
def restore_backend():
    name = backend.active_name()
    yield
    backend.use(name)


def both(fn_name, *args):
    results = []
    for impl in ("python", "compiled"):
        backend.use(impl)
        results.append(getattr(backend, fn_name)(*args))
    return results


class TestSelection:
    def test_active_is_known(self):
        assert backend.active_name() in ("python", "compiled")

    def test_use_python_and_auto(self, restore_backend):
        backend.use("python")
        assert backend.active_name() == "python"
        backend.use("auto")
        want = "compiled" if backend.HAS_COMPILED else "python"
        assert backend.active_name() == want

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError, match="unknown kernel backend"):
            backend.use("cuda")


@needs_compiled
class TestParity:
    shapes = [
        # (n, cin, hp, wp, cout, k, stride, dilation)
        (1, 1, 6, 6, 1, 3, 1, 1),
        (2, 3, 12, 10, 4, 3, 1, 2),
        (1, 4, 15, 15, 2, 5, 2, 1),
        (2, 2, 17, 13, 3, 3, 1, 3),
        (1, 3, 9, 9, 5, 1, 1, 1),
    ]

    @pytest.mark.parametrize("n,cin,hp,wp,cout,k,stride,dil", shapes)
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_forward_matches(self, restore_backend, n, cin, hp, wp, cout, k, stride, dil, dtype):
        rng = np.random.default_rng(42)
        xp = rng.standard_normal((n, cin, hp, wp)).astype(dtype)
        w = rng.standard_normal((cout, cin, k, k)).astype(dtype)
        py, cy = both("conv2d_forward", xp, w, stride, dil)
        assert py.shape == cy.shape and py.dtype == cy.dtype == dtype
        assert np.allclose(py, cy, rtol=1e-5 if dtype == np.float32 else 1e-12, atol=1e-6)

    @pytest.mark.parametrize("n,cin,hp,wp,cout,k,stride,dil", shapes)
    def test_backward_input_matches(self, restore_backend, n, cin, hp, wp, cout, k, stride, dil):
        rng = np.random.default_rng(43)
        w = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
        ho = (hp - dil * (k - 1) - 1) // stride + 1
        wo = (wp - dil * (k - 1) - 1) // stride + 1
        gy = rng.standard_normal((n, cout, ho, wo)).astype(np.float32)
        pg, cg = both("conv2d_backward_input", gy, w, stride, dil, hp, wp)
        assert np.allclose(pg, cg, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("n,cin,hp,wp,cout,k,stride,dil", shapes)
    def test_backward_weight_matches(self, restore_backend, n, cin, hp, wp, cout, k, stride, dil):
        rng = np.random.default_rng(44)
        xp = rng.standard_normal((n, cin, hp, wp)).astype(np.float32)
        ho = (hp - dil * (k - 1) - 1) // stride + 1
        wo = (wp - dil * (k - 1) - 1) // stride + 1
        gy = rng.standard_normal((n, cout, ho, wo)).astype(np.float32)
        pg, cg = both("conv2d_backward_weight", gy, xp, stride, dil, k, k)
        assert np.allclose(pg, cg, rtol=1e-4, atol=1e-5)

    def test_full_autograd_agrees_end_to_end(self, restore_backend):
        rng = np.random.default_rng(45)
        xv = rng.standard_normal((1, 3, 10, 10)).astype(np.float32)
        wv = (rng.standard_normal((4, 3, 3, 3)) * 0.1).astype(np.float32)
        bv = np.zeros((1, 4, 1, 1), dtype=np.float32)
        grads = {}
        for impl in ("python", "compiled"):
            backend.use(impl)
            x = Tensor(xv.copy(), requires_grad=True)
            w = Tensor(wv.copy(), requires_grad=True)
            b = Tensor(bv.copy(), requires_grad=True)
            loss = mean_all(conv2d(x, w, b, stride=1, padding=1, dilation=1))
            loss.backward()
            grads[impl] = (x.grad.copy(), w.grad.copy(), b.grad.copy())
        for pg, cg in zip(grads["python"], grads["compiled"]):
            assert np.allclose(pg, cg, rtol=1e-5, atol=1e-7)
