"""Adam optimizer with bias-corrected moments.

Defaults follow the DC-GAN convention: beta1 0.5, beta2 0.999, eps 1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moment estimates and the shared step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError(f"betas must be in (0,1), got {self.beta1}, {self.beta2}")
        if self.t < 0:
            raise ValueError(f"step counter must be >= 0, got {self.t}")


def adam_state_for(param: np.ndarray, learning_rate=1e-4, beta1=0.5,
                   beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState(m=np.zeros_like(param), v=np.zeros_like(param),
                     beta1=beta1, beta2=beta2, epsilon=epsilon,
                     learning_rate=learning_rate)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState,
              name: str = "param") -> None:
    """One in-place Adam update; t is incremented before bias correction."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ValueError(
            f"adam_step shape mismatch for {name}: param {param.shape}, "
            f"grad {grad.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise ValueError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class Adam:
    """Optimizer over a named parameter dict, reading grads from the tensors."""

    params: dict[str, Tensor]
    learning_rate: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    states: dict[str, AdamState] = field(init=False)

    def __post_init__(self):
        self.states = {
            name: adam_state_for(p.data, self.learning_rate, self.beta1,
                                 self.beta2, self.epsilon)
            for name, p in self.params.items()
        }

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, self.states[name], name=name)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
