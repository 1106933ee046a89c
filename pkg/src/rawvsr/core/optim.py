"""Trainable parameters and the Adam optimizer."""

import numpy as np

from ..errors import ContractViolation, NumericalAbort


class Param:
    """A tensor value with an accumulated gradient of identical shape."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name=""):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class AdamState:
    """First/second moment accumulators for one parameter."""

    __slots__ = ("step", "m", "v", "beta1", "beta2", "epsilon")

    def __init__(self, shape, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ContractViolation(f"betas must lie in (0,1), got {beta1}, {beta2}")
        self.step = 0
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon


def adam_step(params, states, lr):
    """One bias-corrected Adam update over matched (param, state) lists."""
    if lr <= 0:
        raise ContractViolation(f"learning rate must be positive, got {lr}")
    if len(params) != len(states):
        raise ContractViolation(f"{len(params)} params vs {len(states)} states")
    for p, s in zip(params, states):
        if p.grad.shape != s.m.shape:
            raise ContractViolation(
                f"state shape {s.m.shape} does not match param {p.name or '?'} {p.grad.shape}"
            )
        if not np.all(np.isfinite(p.grad)):
            raise NumericalAbort(f"non-finite gradient in parameter {p.name or '<unnamed>'}")
        s.step += 1
        s.m = s.beta1 * s.m + (1.0 - s.beta1) * p.grad
        s.v = s.beta2 * s.v + (1.0 - s.beta2) * p.grad * p.grad
        m_hat = s.m / (1.0 - s.beta1**s.step)
        v_hat = s.v / (1.0 - s.beta2**s.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + s.epsilon)


def lr_schedule(epoch, initial_lr):
    """Halve the learning rate every 20 epochs, frozen from epoch 100 on."""
    if initial_lr <= 0:
        raise ContractViolation(f"initial_lr must be positive, got {initial_lr}")
    if epoch < 0:
        raise ContractViolation(f"epoch must be non-negative, got {epoch}")
    return initial_lr * 0.5 ** (min(epoch, 100) // 20)
