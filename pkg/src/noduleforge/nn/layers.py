"""Layer parameter containers.

A LayerParams bundles the learnable tensors of one layer with its
kind-specific hyper settings.  Convolution kernels are always stored as
(out_channels, in_channels, kh, kw) in the downsampling-conv sense; a
transposed convolution reads the same layout with the roles swapped
(its input carries out_channels, its output in_channels), which is what
makes it the exact adjoint of the forward convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor

CONV_KINDS = ("conv2d", "conv2d_transpose")
KINDS = CONV_KINDS + ("batchnorm", "fully_connected", "activation")


@dataclass
class LayerParams:
    kind: str
    weights: Tensor | None
    bias: Tensor | None
    hyper: dict = field(default_factory=dict)
    # batchnorm inference statistics; not touched by the optimizer
    running_mean: Tensor | None = None
    running_var: Tensor | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in CONV_KINDS:
            if self.weights is None or self.weights.data.ndim != 4:
                got = None if self.weights is None else self.weights.data.shape
                raise ValueError(f"{self.kind} kernel must be 4-dimensional, got {got}")
        if self.kind == "batchnorm":
            c = self.weights.data.shape[0]
            if self.bias.data.shape != (c,):
                raise ValueError(
                    f"batchnorm gamma/beta length mismatch: gamma {self.weights.data.shape}, "
                    f"beta {self.bias.data.shape}"
                )

    def tensors(self):
        """Trainable tensors of this layer."""
        out = []
        if self.weights is not None:
            out.append(self.weights)
        if self.bias is not None:
            out.append(self.bias)
        return out


def conv2d_params(in_channels, out_channels, kernel, stride=1, padding=0,
                  init_std=0.02, rng=None, dtype=DEFAULT_DTYPE):
    w = _init((out_channels, in_channels, kernel, kernel), init_std, rng, dtype)
    b = np.zeros(out_channels, dtype=dtype)
    return LayerParams("conv2d", Tensor(w, dtype), Tensor(b, dtype),
                       {"stride": stride, "padding": padding})


def conv2d_transpose_params(in_channels, out_channels, kernel, stride=1, padding=0,
                            init_std=0.02, rng=None, dtype=DEFAULT_DTYPE):
    # kernel layout (in_channels, out_channels, kh, kw): the adjoint of a
    # conv whose input had `out_channels` and output `in_channels`.
    w = _init((in_channels, out_channels, kernel, kernel), init_std, rng, dtype)
    b = np.zeros(out_channels, dtype=dtype)
    return LayerParams("conv2d_transpose", Tensor(w, dtype), Tensor(b, dtype),
                       {"stride": stride, "padding": padding})


def batchnorm_params(channels, epsilon=1e-5, momentum=0.1, dtype=DEFAULT_DTYPE):
    gamma = Tensor(np.ones(channels, dtype=dtype), dtype)
    beta = Tensor(np.zeros(channels, dtype=dtype), dtype)
    return LayerParams("batchnorm", gamma, beta,
                       {"epsilon": epsilon, "momentum": momentum},
                       running_mean=Tensor(np.zeros(channels, dtype=dtype), dtype),
                       running_var=Tensor(np.ones(channels, dtype=dtype), dtype))


def fully_connected_params(in_dim, out_dim, init_std=0.02, rng=None, dtype=DEFAULT_DTYPE):
    w = _init((out_dim, in_dim), init_std, rng, dtype)
    b = np.zeros(out_dim, dtype=dtype)
    return LayerParams("fully_connected", Tensor(w, dtype), Tensor(b, dtype))


def _init(shape, std, rng, dtype):
    if rng is None or std == 0.0:
        return np.zeros(shape, dtype=dtype)
    return rng.normal(0.0, std, size=shape).astype(dtype)
