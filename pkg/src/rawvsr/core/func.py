"""Functional forward/backward pairs on float64 arrays.

Every differentiable operation comes as ``op_fwd(...) -> (y, cache)`` plus
``op_bwd(cache, gy) -> grads``; the backward passes are written by hand and
validated against finite differences (see ``gradcheck``). Arrays are treated
as immutable values: operations allocate their outputs.
"""

import numpy as np

from .. import kernels
from ..errors import ContractViolation


def as_f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# convolution


def conv2d_fwd(x, w, b, stride=1, padding=0):
    """Cross-correlation of [N,C,H,W] with [O,C,kH,kW] under zero padding.

    Output spatial size is (H + 2*padding - kH)//stride + 1 (same for W).
    """
    x = as_f64(x)
    w = as_f64(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ContractViolation(f"conv2d expects 4-d input/weight, got {x.ndim}-d/{w.ndim}-d")
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractViolation(f"conv2d kernel dims must be odd, got {kh}x{kw}")
    if cw != c:
        raise ContractViolation(f"conv2d channel mismatch: input has {c}, weight expects {cw}")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ContractViolation(
            f"conv2d input {h}x{wd} with padding {padding} smaller than kernel {kh}x{kw}"
        )
    if b is None:
        b = np.zeros(o)
    b = as_f64(b)
    if b.shape != (o,):
        raise ContractViolation(f"conv2d bias shape {b.shape} != ({o},)")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    cols = kernels.im2col(x, kh, kw, stride, padding)
    wm = w.reshape(o, c * kh * kw)
    y = np.matmul(wm, cols) + b[:, None]
    cache = (cols, wm, w.shape, x.shape, stride, padding)
    return y.reshape(n, o, ho, wo), cache


def conv2d_bwd(cache, gy):
    """Gradients of conv2d_fwd w.r.t. (input, weight, bias)."""
    cols, wm, wshape, xshape, stride, padding = cache
    n, _, h, wd = xshape
    o, c, kh, kw = wshape
    gym = as_f64(gy).reshape(n, o, -1)
    gb = gym.sum(axis=(0, 2))
    gw = np.matmul(gym, cols.transpose(0, 2, 1)).sum(axis=0).reshape(wshape)
    gcols = np.matmul(wm.T, gym)
    gx = kernels.col2im(np.ascontiguousarray(gcols), h, wd, kh, kw, stride, padding)
    return gx, gw, gb


def conv2d(x, w, b, stride=1, padding=0):
    return conv2d_fwd(x, w, b, stride, padding)[0]


# ---------------------------------------------------------------------------
# sub-pixel rearrangement


def pixel_shuffle(x, r):
    """Depth-to-space: [N, C*r*r, H, W] -> [N, C, r*H, r*W]."""
    x = np.asarray(x)
    n, c, h, w = x.shape
    if r < 1 or c % (r * r) != 0:
        raise ContractViolation(f"pixel_shuffle: {c} channels not divisible by r^2={r * r}")
    co = c // (r * r)
    y = x.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, co, h * r, w * r))


def pixel_unshuffle(x, r):
    """Space-to-depth inverse of pixel_shuffle: [N,C,r*H,r*W] -> [N,C*r*r,H,W]."""
    x = np.asarray(x)
    n, c, h, w = x.shape
    if r < 1 or h % r != 0 or w % r != 0:
        raise ContractViolation(f"pixel_unshuffle: spatial {h}x{w} not divisible by r={r}")
    ho, wo = h // r, w // r
    y = x.reshape(n, c, ho, r, wo, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y.reshape(n, c * r * r, ho, wo))


# The two rearrangements are permutations, so each is the other's adjoint.
def pixel_shuffle_bwd(gy, r):
    return pixel_unshuffle(gy, r)


def pixel_unshuffle_bwd(gy, r):
    return pixel_shuffle(gy, r)


# ---------------------------------------------------------------------------
# fractional sampling


def bilinear_sample_fwd(feature, points):
    """Sample [C,H,W] at fractional (y, x) positions -> [C, P].

    Positions outside the grid use zero-valued phantom neighbors; fully
    outside [-1, H] x [-1, W] the sample is 0.
    """
    feature = as_f64(feature)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ys = np.ascontiguousarray(pts[:, 0])[None, :]
    xs = np.ascontiguousarray(pts[:, 1])[None, :]
    out = kernels.bilinear_gather(feature[None], ys, xs)
    return out[0], (feature, ys, xs)


def bilinear_sample_bwd(cache, gout):
    """Returns (grad_feature [C,H,W], grad_points [P,2])."""
    feature, ys, xs = cache
    gfeat, gys, gxs = kernels.bilinear_scatter(
        feature[None], ys, xs, as_f64(gout)[None]
    )
    return gfeat[0], np.stack([gys[0], gxs[0]], axis=1)


def bilinear_sample(feature, points):
    return bilinear_sample_fwd(feature, points)[0]


# ---------------------------------------------------------------------------
# pointwise


def leaky_relu_fwd(x, slope=0.1):
    x = np.asarray(x)
    y = np.where(x > 0, x, slope * x)
    return y, (x > 0, slope)


def leaky_relu_bwd(cache, gy):
    pos, slope = cache
    return np.where(pos, gy, slope * gy)


def sigmoid_fwd(x):
    y = 1.0 / (1.0 + np.exp(-np.asarray(x)))
    return y, y


def sigmoid_bwd(cache, gy):
    y = cache
    return gy * y * (1.0 - y)


# ---------------------------------------------------------------------------
# dense layer (used by the squeeze-excitation bottleneck)


def linear_fwd(x, w, b):
    """[N, In] @ [Out, In]^T + [Out]."""
    x = as_f64(x)
    y = x @ w.T + b
    return y, (x, w)


def linear_bwd(cache, gy):
    x, w = cache
    gy = as_f64(gy)
    return gy @ w, gy.T @ x, gy.sum(axis=0)
