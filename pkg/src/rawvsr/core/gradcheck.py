"""Finite-difference oracle for hand-written backward passes."""

import numpy as np

from ..errors import ContractViolation, GradCheckError


def grad_check(op, inputs, eps=1e-5, rng=None, max_entries=None):
    """Compare analytic gradients of ``op`` against central differences.

    ``op(*inputs)`` must return ``(output, vjp)`` where ``vjp(cotangent)``
    yields one gradient array per input. The output is reduced to a scalar
    through a random projection; the scalar is then differenced element by
    element. Returns the maximum relative error
    ``|a - n| / max(|a|, |n|, 1e-8)`` over all checked elements.

    ``max_entries`` caps the number of coordinates checked per input (a
    deterministic random subsample) so large operations stay affordable.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractViolation(f"eps must lie in [1e-7, 1e-3], got {eps}")
    rng = rng or np.random.default_rng(0)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]

    out, vjp = op(*inputs)
    proj = rng.standard_normal(np.shape(out))
    # Keep the projected scalar small so float64 roundoff on it stays below
    # the 1e-8 denominator floor; the relative comparison is scale-invariant.
    base = abs(float(np.sum(proj * out)))
    if base > 1e-3:
        proj *= 1e-3 / base
    grads = vjp(proj)
    if len(grads) != len(inputs):
        raise GradCheckError(f"vjp returned {len(grads)} grads for {len(inputs)} inputs")

    worst = 0.0
    for i, (x, g) in enumerate(zip(inputs, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != x.shape:
            raise GradCheckError(f"input {i}: grad shape {g.shape} != input shape {x.shape}")
        bad = np.flatnonzero(~np.isfinite(g))
        if bad.size:
            raise GradCheckError(f"input {i}: non-finite analytic gradient at flat index {bad[0]}")
        coords = np.arange(x.size)
        if max_entries is not None and x.size > max_entries:
            coords = rng.choice(x.size, size=max_entries, replace=False)
        flat = x.ravel()
        gflat = g.ravel()
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            out_plus = op(*inputs)[0]
            flat[k] = orig - eps
            out_minus = op(*inputs)[0]
            flat[k] = orig
            # project the elementwise difference: avoids cancellation between
            # two nearly equal scalars
            numeric = float(np.sum(proj * (out_plus - out_minus))) / (2.0 * eps)
            analytic = gflat[k]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
    return worst
