"""Central finite-difference verification of the tape gradients.

The default suite covers every layer kind plus a toy composed
discriminator-of-generator graph; it is the repo's fastest trust signal
and is exposed through the CLI as well as the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .layers import (batchnorm_params, conv2d_params, conv2d_transpose_params,
                     fully_connected_params)
from .tensor import Tape, Tensor, backward


def gradcheck(loss_builder, wrt: dict[str, Tensor], h: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    loss_builder(tape) must rebuild the full forward pass (it is called
    repeatedly with tape=None for the difference quotients).  Relative
    error per element is |ad - fd| / max(|ad|, |fd|, 1).
    """
    for t in wrt.values():
        t.zero_grad()
    tape = Tape()
    loss = loss_builder(tape)
    backward(loss, tape)
    ad = {
        name: (np.array(t.grad, copy=True) if t.grad is not None
               else np.zeros_like(t.data))
        for name, t in wrt.items()
    }
    for t in wrt.values():
        t.zero_grad()

    worst = 0.0
    for name, t in wrt.items():
        flat = t.data.reshape(-1)
        ad_flat = ad[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_builder(None).item()
            flat[i] = orig - h
            f_minus = loss_builder(None).item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            rel = abs(ad_flat[i] - fd) / max(abs(ad_flat[i]), abs(fd), 1.0)
            worst = max(worst, rel)
    return worst


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err < self.tolerance


def _probe_loss(out: Tensor, probe: Tensor, tape):
    return ops.sum_all(ops.mul(out, probe, tape), tape)


def run_default_suite(h: float = 1e-6, seed: int = 7) -> list[CheckResult]:
    """Finite-difference checks for every layer kind and the composed graph."""
    rng = np.random.default_rng(seed)
    results = []

    # conv2d, two geometries
    for tag, (stride, pad) in (("s1p0", (1, 0)), ("s2p1", (2, 1))):
        x = Tensor(rng.normal(size=(2, 2, 5, 4)))
        p = conv2d_params(2, 3, kernel=3, stride=stride, padding=pad,
                          init_std=0.5, rng=rng)
        oh = (5 + 2 * pad - 3) // stride + 1
        ow = (4 + 2 * pad - 3) // stride + 1
        probe = Tensor(rng.normal(size=(2, 3, oh, ow)))
        results.append(CheckResult(
            f"conv2d_{tag}",
            gradcheck(lambda t: _probe_loss(ops.conv2d_forward(x, p, t), probe, t),
                      {"x": x, "w": p.weights, "b": p.bias}, h),
            1e-5))

    # conv2d_transpose
    x = Tensor(rng.normal(size=(2, 3, 3, 3)))
    p = conv2d_transpose_params(3, 2, kernel=4, stride=2, padding=1,
                                init_std=0.5, rng=rng)
    probe = Tensor(rng.normal(size=(2, 2, 6, 6)))
    results.append(CheckResult(
        "conv2d_transpose_s2p1",
        gradcheck(lambda t: _probe_loss(ops.conv2d_transpose_forward(x, p, t), probe, t),
                  {"x": x, "w": p.weights, "b": p.bias}, h),
        1e-5))

    # batchnorm, training and inference paths
    for training in (True, False):
        x = Tensor(rng.normal(size=(3, 2, 4, 4)))
        p = batchnorm_params(2)
        p.weights.data[:] = rng.normal(size=2)
        p.bias.data[:] = rng.normal(size=2)
        p.running_mean.data[:] = rng.normal(size=2)
        p.running_var.data[:] = rng.uniform(0.5, 2.0, size=2)
        probe = Tensor(rng.normal(size=(3, 2, 4, 4)))
        results.append(CheckResult(
            f"batchnorm_{'train' if training else 'infer'}",
            gradcheck(lambda t: _probe_loss(
                ops.batchnorm_forward(x, p, training, t), probe, t),
                {"x": x, "gamma": p.weights, "beta": p.bias}, h),
            1e-5))

    # fully connected
    x = Tensor(rng.normal(size=(3, 8)))
    p = fully_connected_params(8, 3, init_std=0.5, rng=rng)
    probe = Tensor(rng.normal(size=(3, 3)))
    results.append(CheckResult(
        "fully_connected",
        gradcheck(lambda t: _probe_loss(ops.fully_connected_forward(x, p, t), probe, t),
                  {"x": x, "w": p.weights, "b": p.bias}, h),
        1e-5))

    # activations (inputs kept away from the relu kink)
    for kind in ("relu", "leaky_relu", "tanh", "sigmoid"):
        x = Tensor(rng.normal(size=(4, 5)) + np.where(rng.random((4, 5)) < 0.5, -0.2, 0.2))
        probe = Tensor(rng.normal(size=(4, 5)))
        results.append(CheckResult(
            f"activation_{kind}",
            gradcheck(lambda t: _probe_loss(
                ops.activation_forward(x, kind, 0.2, t), probe, t),
                {"x": x}, h),
            1e-5))

    results.append(CheckResult("composed_d_of_g", composed_graph_check(h, rng), 1e-4))
    return results


def composed_graph_check(h: float, rng) -> float:
    """Toy generator feeding a toy discriminator, GAN-style loss on top.

    Biases are randomized: with zero biases, relu zeros propagate through
    the non-overlapping transpose scatter and land later activations
    exactly on their kinks, where central differences measure the average
    of the one-sided slopes instead of the subgradient the tape uses.
    """
    z = Tensor(rng.normal(size=(2, 3)))
    g_fc = fully_connected_params(3, 2 * 2 * 2, init_std=0.5, rng=rng)
    g_bn = batchnorm_params(2)
    g_bn.weights.data[:] = rng.uniform(0.5, 1.5, size=2)
    g_ct = conv2d_transpose_params(2, 2, kernel=2, stride=2, padding=0,
                                   init_std=0.5, rng=rng)
    d_cv = conv2d_params(2, 3, kernel=2, stride=2, padding=0, init_std=0.5, rng=rng)
    d_fc = fully_connected_params(3 * 2 * 2, 1, init_std=0.5, rng=rng)
    for p in (g_fc, g_ct, d_cv, d_fc):
        p.bias.data[:] = rng.normal(0.0, 0.3, size=p.bias.shape)

    def build(tape):
        hdn = ops.fully_connected_forward(z, g_fc, tape)
        hdn = ops.reshape(hdn, (2, 2, 2, 2), tape)
        hdn = ops.batchnorm_forward(hdn, g_bn, True, tape)
        hdn = ops.relu(hdn, tape)
        hdn = ops.conv2d_transpose_forward(hdn, g_ct, tape)
        img = ops.tanh(hdn, tape)
        feat = ops.conv2d_forward(img, d_cv, tape)
        feat = ops.leaky_relu(feat, 0.2, tape)
        feat = ops.reshape(feat, (2, 3 * 2 * 2), tape)
        score = ops.sigmoid(ops.fully_connected_forward(feat, d_fc, tape), tape)
        # non-saturating generator objective
        return ops.neg(ops.mean(ops.log(ops.clamp(score, 1e-7, 1 - 1e-7, tape), tape),
                                tape), tape)

    wrt = {
        "z": z,
        "g_fc.w": g_fc.weights, "g_fc.b": g_fc.bias,
        "g_bn.gamma": g_bn.weights, "g_bn.beta": g_bn.bias,
        "g_ct.w": g_ct.weights, "g_ct.b": g_ct.bias,
        "d_cv.w": d_cv.weights, "d_cv.b": d_cv.bias,
        "d_fc.w": d_fc.weights, "d_fc.b": d_fc.bias,
    }
    return gradcheck(build, wrt, h)
