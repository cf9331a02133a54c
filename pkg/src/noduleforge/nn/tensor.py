"""Tensor container and the recording tape for reverse-mode differentiation.

A Tensor is a thin wrapper around a numpy array plus an optional gradient
slot of the same shape.  Math defaults to float64; float32 can be requested
for faster training runs (gradient checks are only meaningful at float64).

Differentiation is tape-based: forward ops executed with a Tape append a
closure that propagates the output gradient back to the inputs.  Calling
``backward`` on a scalar walks the tape in reverse and then clears it.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float64


class Tensor:
    """n-dimensional real array with an attached gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={tuple(self.data.shape)}, dtype={self.data.dtype})"


def zeros(shape, dtype=None):
    return Tensor(np.zeros(shape, dtype=dtype or DEFAULT_DTYPE))


def accumulate_grad(t: Tensor, g: np.ndarray):
    """Add a gradient contribution into a tensor's grad slot."""
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


class Tape:
    """Record of forward operations since the last reset.

    Each record is a closure that reads the output tensor's grad and
    accumulates into the input tensors' grads.  A tape belongs to one
    training run and is not shared across threads.
    """

    def __init__(self):
        self._records = []

    def record(self, backward_fn):
        self._records.append(backward_fn)

    def __len__(self):
        return len(self._records)

    def clear(self):
        self._records.clear()


def backward(output_scalar: Tensor, tape: Tape):
    """Fill grad slots of everything on the tape by reverse traversal.

    The output must be a scalar (size 1).  The tape is cleared afterwards,
    so a second backward requires a fresh forward pass.
    """
    if output_scalar.data.size != 1:
        raise ValueError(
            f"backward requires a scalar output, got shape {output_scalar.data.shape}"
        )
    output_scalar.grad = np.ones_like(output_scalar.data)
    for fn in reversed(tape._records):
        fn()
    tape.clear()
