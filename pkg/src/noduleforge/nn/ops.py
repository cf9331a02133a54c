"""Forward operations with tape-recorded reverse-mode derivatives.

Layout is fixed as NCHW.  Convolution is cross-correlation (no kernel
flip).  Every op takes an optional Tape; with a tape, a closure is
recorded that propagates the output gradient back into the inputs'
grad slots.  Ops run without a tape are plain inference.
"""

from __future__ import annotations

import numpy as np

from .layers import LayerParams
from .tensor import Tape, Tensor, accumulate_grad

# --------------------------------------------------------------------------
# raw convolution cores (numpy in, numpy out)
#
# Everything is phrased over im2col patch matrices so the heavy lifting is
# one GEMM per call.  _corr2d and _corr2d_adjoint are exact linear adjoints
# of each other for a fixed kernel: the adjoint scatters through the same
# strided slices the forward gathers from.


def _out_extent(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(x, kh, kw, stride, pad, oh, ow):
    """Gather patches of x (N,C,H,W) into (N, C*kh*kw, oh*ow)."""
    n, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride,
                                  j:j + stride * ow:stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(cols, n, c, h, w, kh, kw, stride, pad, oh, ow):
    """Adjoint of _im2col: scatter-add columns back onto an (N,C,H,W) image."""
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cg = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cg[:, :, i, j]
    if pad:
        return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])
    return xp


def _corr2d(x, w, stride, pad, cols=None):
    """Cross-correlate x (N,I,H,W) with w (O,I,kh,kw) -> (N,O,OH,OW)."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh = _out_extent(h, kh, stride, pad)
    ow = _out_extent(wd, kw, stride, pad)
    if cols is None:
        cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    out = np.matmul(w.reshape(co, ci * kh * kw), cols)
    return out.reshape(n, co, oh, ow)


def _corr2d_adjoint(y, w, stride, pad, out_hw):
    """Adjoint of _corr2d: map y (N,O,OH,OW) back to input space (N,I,H,W)."""
    n, co, oh, ow = y.shape
    _, ci, kh, kw = w.shape
    h, wd = out_hw
    cols = np.matmul(w.reshape(co, ci * kh * kw).T, y.reshape(n, co, oh * ow))
    return _col2im(cols, n, ci, h, wd, kh, kw, stride, pad, oh, ow)


def _corr2d_weight_grad(y, cols, k_shape):
    """dW for _corr2d from its output grad y (N,O,OH,OW) and saved columns."""
    co, ci, kh, kw = k_shape
    n = y.shape[0]
    y2 = y.reshape(n, co, -1)
    dw = np.einsum("nol,nkl->ok", y2, cols, optimize=True)
    return dw.reshape(co, ci, kh, kw)


def _check_conv_hyper(params):
    stride = int(params.hyper.get("stride", 1))
    pad = int(params.hyper.get("padding", 0))
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"padding must be >= 0, got {pad}")
    return stride, pad


# --------------------------------------------------------------------------
# layer ops


def conv2d_forward(x: Tensor, params: LayerParams, tape: Tape | None = None) -> Tensor:
    """Strided cross-correlation plus per-output-channel bias."""
    stride, pad = _check_conv_hyper(params)
    w, b = params.weights, params.bias
    if x.data.ndim != 4:
        raise ValueError(f"conv2d expects NCHW input, got shape {x.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} has {x.shape[1]} channels, "
            f"kernel {w.shape} expects {w.shape[1]}"
        )
    if x.shape[2] + 2 * pad < w.shape[2] or x.shape[3] + 2 * pad < w.shape[3]:
        raise ValueError(f"conv2d kernel {w.shape} larger than padded input {x.shape}")
    kh, kw = w.shape[2:]
    oh = _out_extent(x.shape[2], kh, stride, pad)
    ow = _out_extent(x.shape[3], kw, stride, pad)
    cols = _im2col(x.data, kh, kw, stride, pad, oh, ow)
    out = Tensor(_corr2d(x.data, w.data, stride, pad, cols=cols)
                 + b.data[None, :, None, None])

    if tape is not None:
        in_hw = x.shape[2:]

        def _backward():
            if out.grad is None:
                return
            g = out.grad
            accumulate_grad(x, _corr2d_adjoint(g, w.data, stride, pad, in_hw))
            accumulate_grad(w, _corr2d_weight_grad(g, cols, w.shape))
            accumulate_grad(b, g.sum(axis=(0, 2, 3)))

        tape.record(_backward)
    return out


def conv2d_transpose_forward(x: Tensor, params: LayerParams,
                             tape: Tape | None = None) -> Tensor:
    """Linear adjoint of conv2d_forward with the same kernel/stride/pad.

    Output spatial extent is (in - 1) * stride - 2 * pad + k per axis.
    """
    stride, pad = _check_conv_hyper(params)
    w, b = params.weights, params.bias
    if x.data.ndim != 4:
        raise ValueError(f"conv2d_transpose expects NCHW input, got shape {x.shape}")
    if x.shape[1] != w.shape[0]:
        raise ValueError(
            f"conv2d_transpose channel mismatch: input {x.shape} has {x.shape[1]} "
            f"channels, kernel {w.shape} expects {w.shape[0]}"
        )
    oh = (x.shape[2] - 1) * stride - 2 * pad + w.shape[2]
    ow = (x.shape[3] - 1) * stride - 2 * pad + w.shape[3]
    if oh < 1 or ow < 1:
        raise ValueError(
            f"conv2d_transpose output extent {oh}x{ow} invalid for input {x.shape} "
            f"with kernel {w.shape}, stride {stride}, pad {pad}"
        )
    out = Tensor(_corr2d_adjoint(x.data, w.data, stride, pad, (oh, ow))
                 + b.data[None, :, None, None])

    if tape is not None:
        x_data = x.data
        kh, kw = w.shape[2:]
        in_h, in_w = x.shape[2:]

        def _backward():
            if out.grad is None:
                return
            g = out.grad
            # g lives in the conv-input space, so its im2col columns serve
            # both the input gradient (a forward correlation) and dW
            gcols = _im2col(g, kh, kw, stride, pad, in_h, in_w)
            accumulate_grad(x, _corr2d(g, w.data, stride, pad, cols=gcols))
            x2 = x_data.reshape(x_data.shape[0], x_data.shape[1], -1)
            dw = np.einsum("nol,nkl->ok", x2, gcols, optimize=True)
            accumulate_grad(w, dw.reshape(w.shape))
            accumulate_grad(b, g.sum(axis=(0, 2, 3)))

        tape.record(_backward)
    return out


def batchnorm_forward(x: Tensor, params: LayerParams, training: bool,
                      tape: Tape | None = None) -> Tensor:
    """Per-channel normalization over (N, H, W), then affine gamma/beta.

    Training mode uses batch statistics (biased variance) and updates the
    running statistics; inference mode uses the running statistics.
    """
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm expects NCHW input, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("batchnorm on an empty batch")
    c = x.shape[1]
    gamma, beta = params.weights, params.bias
    if gamma.shape[0] != c:
        raise ValueError(
            f"batchnorm channel mismatch: input has {c} channels, gamma {gamma.shape}"
        )
    eps = float(params.hyper.get("epsilon", 1e-5))
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        momentum = float(params.hyper.get("momentum", 0.1))
        params.running_mean.data *= 1.0 - momentum
        params.running_mean.data += momentum * mu
        params.running_var.data *= 1.0 - momentum
        params.running_var.data += momentum * var
    else:
        mu = params.running_mean.data
        var = params.running_var.data

    istd = 1.0 / np.sqrt(var + eps)
    xc = x.data - mu[None, :, None, None]
    xhat = xc * istd[None, :, None, None]
    out = Tensor(gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None])

    if tape is not None:

        def _backward():
            if out.grad is None:
                return
            g = out.grad
            accumulate_grad(gamma, (g * xhat).sum(axis=axes))
            accumulate_grad(beta, g.sum(axis=axes))
            dxhat = g * gamma.data[None, :, None, None]
            if training:
                # batch statistics depend on x, so the chain runs through mu/var
                dvar = (dxhat * xc).sum(axis=axes) * (-0.5) * istd ** 3
                dmu = (-(dxhat.sum(axis=axes)) * istd
                       + dvar * (-2.0 / m) * xc.sum(axis=axes))
                dx = (dxhat * istd[None, :, None, None]
                      + dvar[None, :, None, None] * 2.0 * xc / m
                      + dmu[None, :, None, None] / m)
            else:
                dx = dxhat * istd[None, :, None, None]
            accumulate_grad(x, dx)

        tape.record(_backward)
    return out


def fully_connected_forward(x: Tensor, params: LayerParams,
                            tape: Tape | None = None) -> Tensor:
    """Affine map weights @ x + bias; accepts (in,) or batched (N, in)."""
    w, b = params.weights, params.bias
    batched = x.data.ndim == 2
    x2 = x.data if batched else x.data[None, :]
    if x2.ndim != 2 or x2.shape[1] != w.shape[1]:
        raise ValueError(
            f"fully_connected length mismatch: input {x.shape} vs weights {w.shape}"
        )
    out2 = x2 @ w.data.T + b.data[None, :]
    out = Tensor(out2 if batched else out2[0])

    if tape is not None:
        x_data = x2

        def _backward():
            if out.grad is None:
                return
            g = out.grad if batched else out.grad[None, :]
            dx = g @ w.data
            accumulate_grad(x, dx if batched else dx[0])
            accumulate_grad(w, g.T @ x_data)
            accumulate_grad(b, g.sum(axis=0))

        tape.record(_backward)
    return out


# --------------------------------------------------------------------------
# activations


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    if tape is not None:
        mask = x.data > 0.0

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad * mask)

        tape.record(_backward)
    return out


def leaky_relu(x: Tensor, alpha: float = 0.2, tape: Tape | None = None) -> Tensor:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"leaky_relu alpha must be in (0,1), got {alpha}")
    out = Tensor(np.where(x.data > 0.0, x.data, alpha * x.data))
    if tape is not None:
        slope = np.where(x.data > 0.0, 1.0, alpha)

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad * slope)

        tape.record(_backward)
    return out


def tanh(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.tanh(x.data))
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad * (1.0 - out.data ** 2))

        tape.record(_backward)
    return out


def sigmoid(x: Tensor, tape: Tape | None = None) -> Tensor:
    # split by sign for overflow-free evaluation
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                        np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(out_data)
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad * out.data * (1.0 - out.data))

        tape.record(_backward)
    return out


_ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def activation_forward(x: Tensor, kind: str, alpha: float = 0.2,
                       tape: Tape | None = None) -> Tensor:
    """Elementwise activation dispatch: relu, leaky_relu(alpha), tanh, sigmoid."""
    if kind == "leaky_relu":
        return leaky_relu(x, alpha, tape)
    if kind in _ACTIVATIONS:
        return _ACTIVATIONS[kind](x, tape)
    raise ValueError(f"unknown activation kind {kind!r}")


# --------------------------------------------------------------------------
# shaping, elementwise and reduction ops (enough to express the GAN losses)


def reshape(x: Tensor, shape, tape: Tape | None = None) -> Tensor:
    old_shape = x.data.shape
    out = Tensor(x.data.reshape(shape))
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad.reshape(old_shape))

        tape.record(_backward)
    return out


def slice_rows(x: Tensor, start: int, stop: int, tape: Tape | None = None) -> Tensor:
    """Rows [start, stop) along axis 0."""
    out = Tensor(x.data[start:stop].copy())
    if tape is not None:

        def _backward():
            if out.grad is not None:
                g = np.zeros_like(x.data)
                g[start:stop] = out.grad
                accumulate_grad(x, g)

        tape.record(_backward)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(a, out.grad)
                accumulate_grad(b, out.grad)

        tape.record(_backward)
    return out


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    if tape is not None:
        a_data, b_data = a.data, b.data

        def _backward():
            if out.grad is not None:
                accumulate_grad(a, out.grad * b_data)
                accumulate_grad(b, out.grad * a_data)

        tape.record(_backward)
    return out


def neg(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(-x.data)
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, -out.grad)

        tape.record(_backward)
    return out


def rsub_scalar(c: float, x: Tensor, tape: Tape | None = None) -> Tensor:
    """c - x elementwise."""
    out = Tensor(c - x.data)
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, -out.grad)

        tape.record(_backward)
    return out


def log(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.log(x.data))
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad / x.data)

        tape.record(_backward)
    return out


def clamp(x: Tensor, lo: float, hi: float, tape: Tape | None = None) -> Tensor:
    """Clip to [lo, hi]; gradient passes through only inside the bounds."""
    out = Tensor(np.clip(x.data, lo, hi))
    if tape is not None:
        mask = (x.data >= lo) & (x.data <= hi)

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, out.grad * mask)

        tape.record(_backward)
    return out


def mean(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.asarray(x.data.mean()))
    if tape is not None:
        n = x.data.size

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, np.full_like(x.data, float(out.grad) / n))

        tape.record(_backward)
    return out


def sum_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.asarray(x.data.sum()))
    if tape is not None:

        def _backward():
            if out.grad is not None:
                accumulate_grad(x, np.full_like(x.data, float(out.grad)))

        tape.record(_backward)
    return out
