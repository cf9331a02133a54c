#!/usr/bin/env python3
"""Tour of the tensor engine: forward ops, the tape, and gradient checking.

The engine implements exactly the layer set the nodule GAN needs.  Every
op optionally records onto a tape; backward() on a scalar fills the grad
slots in reverse order and clears the tape.
"""

import numpy as np

from noduleforge.nn import ops
from noduleforge.nn.gradcheck import run_default_suite
from noduleforge.nn.layers import conv2d_params, conv2d_transpose_params
from noduleforge.nn.tensor import Tape, Tensor, backward

rng = np.random.default_rng(0)

# --- a strided convolution and its transpose -------------------------------
x = Tensor(rng.normal(size=(1, 1, 8, 8)))
conv = conv2d_params(1, 4, kernel=4, stride=2, padding=1, init_std=0.5, rng=rng)
feat = ops.conv2d_forward(x, conv)
print("conv2d: 1x8x8 ->", feat.shape)  # halves the spatial extent

up = conv2d_transpose_params(4, 1, kernel=4, stride=2, padding=1,
                             init_std=0.5, rng=rng)
back_up = ops.conv2d_transpose_forward(feat, up)
print("conv2d_transpose: doubles it back ->", back_up.shape)

# The transpose is the exact linear adjoint of the forward convolution:
# <conv(x), y> == <x, convT(y)> for the same kernel.
y = Tensor(rng.normal(size=feat.shape))
lhs = float(np.sum(ops.conv2d_forward(x, conv).data * y.data))
adj_params = conv2d_transpose_params(4, 1, 4, 2, 1)
adj_params.weights.data = conv.weights.data
rhs = float(np.sum(x.data * ops.conv2d_transpose_forward(y, adj_params).data))
print(f"adjoint identity: {lhs:.12f} == {rhs:.12f} "
      f"(diff {abs(lhs - rhs):.2e})")

# --- reverse-mode differentiation on a tape --------------------------------
tape = Tape()
w = Tensor(rng.normal(size=(1, 6)))
p = ops.sigmoid(ops.mean(ops.mul(w, Tensor(rng.normal(size=(1, 6))), tape), tape),
                tape)
loss = ops.neg(ops.log(ops.clamp(p, 1e-7, 1 - 1e-7, tape), tape), tape)
backward(loss, tape)
print("loss:", loss.item(), " dL/dw:", np.round(w.grad, 4))

# --- the full finite-difference suite ---------------------------------------
print("\ngradient checks (central differences, h = 1e-6):")
for r in run_default_suite():
    print(f"  {r.name:26s} max rel err {r.max_rel_err:.2e}  "
          f"{'ok' if r.ok else 'FAIL'}")
