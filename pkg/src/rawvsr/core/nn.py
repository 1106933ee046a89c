"""Parameter-holding module base and the two primitive layers.

A ``Module`` owns parameters; ``forward`` returns ``(output, cache)`` and
``backward(cache, grad_out)`` returns the input gradient while accumulating
parameter gradients. Caches are per-call, so one module can appear several
times in a forward pass (weight sharing) without interference.
"""

import contextlib

import numpy as np

from . import func
from .optim import Param


def uniform_init(rng, shape, fan_in):
    """Uniform in +/- sqrt(1/fan_in); keeps activations order-1 at toy widths."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# Optional observation hook: layers with a kinked activation report their
# pre-activation values here. Used by gradient checks to verify they run at a
# locally smooth point (finite differences are invalid across a kink).
_PREACT_SINK = None


@contextlib.contextmanager
def preact_tap(sink):
    global _PREACT_SINK
    _PREACT_SINK = sink
    try:
        yield sink
    finally:
        _PREACT_SINK = None


class Module:
    def named_params(self, prefix=""):
        """Depth-first (attribute order) list of (dotted name, Param)."""
        out = []
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Param):
                out.append((path, val))
            elif isinstance(val, Module):
                out.extend(val.named_params(path + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_params(f"{path}.{i}."))
                    elif isinstance(item, Param):
                        out.append((f"{path}.{i}", item))
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()


class Conv2d(Module):
    """3x3-style convolution layer with optional built-in leaky activation."""

    def __init__(self, c_in, c_out, k=3, stride=1, padding=None, rng=None,
                 activation=False, slope=0.1):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.activation = activation
        self.slope = slope
        self.weight = Param(uniform_init(rng, (c_out, c_in, k, k), c_in * k * k))
        self.bias = Param(np.zeros(c_out))

    def forward(self, x):
        y, cv = func.conv2d_fwd(x, self.weight.value, self.bias.value,
                                self.stride, self.padding)
        if self.activation:
            if _PREACT_SINK is not None:
                _PREACT_SINK.append((self, y))
            y, act = func.leaky_relu_fwd(y, self.slope)
            return y, (cv, act)
        return y, (cv, None)

    def backward(self, cache, gy):
        cv, act = cache
        if act is not None:
            gy = func.leaky_relu_bwd(act, gy)
        gx, gw, gb = func.conv2d_bwd(cv, gy)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None):
        rng = rng or np.random.default_rng(0)
        self.weight = Param(uniform_init(rng, (n_out, n_in), n_in))
        self.bias = Param(np.zeros(n_out))

    def forward(self, x):
        return func.linear_fwd(x, self.weight.value, self.bias.value)

    def backward(self, cache, gy):
        gx, gw, gb = func.linear_bwd(cache, gy)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx
