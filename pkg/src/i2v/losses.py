"""The four training losses and their weighted total.

All four act on the noisy input alone. loss_s and loss_ov use stride-5
order-variant downsampling; loss_r uses the stride-2 identity order to
build a pseudo-noise label for h; loss_np penalizes the nonzero-mean
component of h's prediction (aliasing contamination suppression).
"""

from __future__ import annotations

from dataclasses import dataclass

from .networks import ne_forward
from .pd import ShuffleOrder, random_order, wrapped_apply
from .tensor import Tensor, abs_, add, l1_distance, mean_all, mean_over_axes, no_grad, scalar_mul, sub

TRAIN_STRIDE = 5
RESIDUAL_STRIDE = 2


@dataclass(frozen=True)
class LossWeights:
    lambda_s: float = 10.0
    lambda_r: float = 1.0
    lambda_ov: float = 1.0
    lambda_np: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative; got {value}")


@dataclass
class LossReport:
    """Per-term scalar values, the weighted total, and the live graph root."""

    s: float
    r: float
    ov: float
    np: float
    total: float
    root: Tensor = None

    def row(self):
        return [self.s, self.r, self.ov, self.np, self.total]


def _check_stride(order, expected, term):
    if order.stride != expected:
        raise ValueError(f"{term} requires stride {expected} orders; got stride {order.stride}")


def loss_s(f, x, order5, stride=TRAIN_STRIDE):
    """Self-supervised term: the downsample-wrapped f should reproduce x."""
    _check_stride(order5, stride, "loss_s")
    return l1_distance(wrapped_apply(f, x, order5), x)


def pseudo_noise_label(f, x, stride=RESIDUAL_STRIDE):
    """x minus the identity-order wrapped f prediction, detached from the graph."""
    with no_grad():
        return sub(x, wrapped_apply(f, x, ShuffleOrder.identity(stride)))


def loss_r(f, h, x, training=False, rng=None, hx=None, stride=RESIDUAL_STRIDE):
    """Self-residual term: h regresses the pseudo-noise label.

    The label is gradient-detached (it is a label, not a prediction), so
    this term trains h only. `hx` lets callers share one h(x) evaluation
    with loss_np.
    """
    label = pseudo_noise_label(f, x, stride)
    if hx is None:
        hx = ne_forward(h, x, training=training, rng=rng)
    return l1_distance(label, hx)


def loss_ov(f, h, x, orderI, orderI2, training=False, rng=None, stride=TRAIN_STRIDE):
    """Order-variant constraint: x minus both wrapped predictions should
    vanish; gradients reach both networks."""
    _check_stride(orderI, stride, "loss_ov")
    _check_stride(orderI2, stride, "loss_ov")
    wf = wrapped_apply(f, x, orderI)
    wh = wrapped_apply(lambda t: ne_forward(h, t, training=training, rng=rng), x, orderI2)
    return mean_all(abs_(sub(sub(x, wf), wh)))


def loss_np(h, x, training=False, rng=None, hx=None):
    """Noise prior: mean absolute value of the batch/channel-mean noise map."""
    if hx is None:
        hx = ne_forward(h, x, training=training, rng=rng)
    m = mean_over_axes(hx, (0, 1))
    return mean_all(abs_(m))


def loss_total(f, h, x, weights, rng, training=True):
    """Draw fresh random orders, evaluate all four terms, and combine.

    h(x) is evaluated once and shared by loss_r and loss_np (both reference
    the same full-resolution prediction). Spatial extents must be divisible
    by both strides (their lcm is 10).
    """
    lcm = TRAIN_STRIDE * RESIDUAL_STRIDE
    if x.shape[2] % lcm or x.shape[3] % lcm:
        raise ValueError(f"loss_total needs spatial extents divisible by {lcm}; got {x.shape[2:]}")
    order_s = random_order(TRAIN_STRIDE, rng)
    order_i = random_order(TRAIN_STRIDE, rng)
    order_i2 = random_order(TRAIN_STRIDE, rng)
    hx = ne_forward(h, x, training=training, rng=rng)
    term_s = loss_s(f, x, order_s)
    term_r = loss_r(f, h, x, hx=hx)
    term_ov = loss_ov(f, h, x, order_i, order_i2, training=training, rng=rng)
    term_np = loss_np(h, x, hx=hx)
    total = add(
        add(scalar_mul(term_s, weights.lambda_s), scalar_mul(term_r, weights.lambda_r)),
        add(scalar_mul(term_ov, weights.lambda_ov), scalar_mul(term_np, weights.lambda_np)),
    )
    return LossReport(
        s=term_s.item(),
        r=term_r.item(),
        ov=term_ov.item(),
        np=term_np.item(),
        total=total.item(),
        root=total,
    )
