"""Synthetic degradation: defocus blur, box downsampling, RGGB mosaicing,
bilinear demosaicing, heteroscedastic noise, and their composition.

The low-resolution raw frame is produced as
``mosaic(downsample(blur(hr_linear))) + noise`` with the noise applied to the
mosaic (variance sigma1_sq * signal + sigma2_sq, the shot-plus-read model).
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from .frames import BayerFrame, RGBFrame, clip01

BLUR_SIZES = (3, 5, 7, 9, 11)


@dataclass(frozen=True)
class DegradationConfig:
    scale: int = 4
    blur_size: int = 5
    sigma1_sq: float = 0.0
    sigma2_sq: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.scale not in (2, 4):
            raise ContractViolation(f"scale must be 2 or 4, got {self.scale}")
        if self.blur_size not in BLUR_SIZES:
            raise ContractViolation(f"blur_size must be one of {BLUR_SIZES}, got {self.blur_size}")
        if not 0.0 <= self.sigma1_sq <= 0.1:
            raise ContractViolation(f"sigma1_sq must lie in [0, 0.1], got {self.sigma1_sq}")
        if not 0.0 <= self.sigma2_sq <= 0.02:
            raise ContractViolation(f"sigma2_sq must lie in [0, 0.02], got {self.sigma2_sq}")


def defocus_kernel(size):
    """Uniform disk: 1 inside radius size/2 (pixel centers), normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ContractViolation(f"kernel size must be odd and >= 1, got {size}")
    c = size // 2
    yy, xx = np.mgrid[0:size, 0:size]
    inside = (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2.0) ** 2
    k = inside.astype(np.float64)
    return k / k.sum()


def reflect_index(i, n):
    """Mirror index without edge repetition: -1 -> 1, n -> n-2."""
    period = 2 * n - 2
    i = np.abs(i) % period
    return np.where(i >= n, period - i, i)


def convolve_frame(frame, kernel):
    """Per-channel 2-D convolution with reflect padding, same output size."""
    k = kernel.shape[0]
    if kernel.shape[0] != kernel.shape[1] or k % 2 == 0:
        raise ContractViolation(f"kernel must be square and odd, got {kernel.shape}")
    if k == 1:
        return RGBFrame(frame.data * kernel[0, 0], frame.color_state)
    r = k // 2
    padded = np.pad(frame.data, ((0, 0), (r, r), (r, r)), mode="reflect")
    h, w = frame.data.shape[1:]
    out = np.zeros_like(frame.data)
    for dy in range(k):
        for dx in range(k):
            wgt = kernel[dy, dx]
            if wgt != 0.0:
                out += wgt * padded[:, dy : dy + h, dx : dx + w]
    return RGBFrame(clip01(out), frame.color_state)


def downsample(frame, s):
    """Non-overlapping s*s block averaging per channel."""
    if s == 1:
        return RGBFrame(frame.data.copy(), frame.color_state)
    c, h, w = frame.data.shape
    if h % s or w % s:
        raise ContractViolation(f"frame {h}x{w} not divisible by scale {s}")
    blocks = frame.data.reshape(c, h // s, s, w // s, s)
    return RGBFrame(blocks.mean(axis=(2, 4)), frame.color_state)


def mosaic(frame):
    """Sample the RGGB-dictated channel at each position."""
    if frame.color_state != "linear":
        raise ContractViolation("mosaic expects a linear frame")
    h, w = frame.height, frame.width
    if h % 2 or w % 2:
        raise ContractViolation(f"mosaic needs even dims, got {h}x{w}")
    r, g, b = frame.data
    out = np.empty((h, w))
    out[0::2, 0::2] = r[0::2, 0::2]
    out[0::2, 1::2] = g[0::2, 1::2]
    out[1::2, 0::2] = g[1::2, 0::2]
    out[1::2, 1::2] = b[1::2, 1::2]
    return BayerFrame(out)


# Interpolation stencils on the channel-sparse planes. Green uses its 4-
# neighborhood; red/blue use the 8-neighborhood. Dividing by 4 (a power of
# two) keeps sampled sites bit-exact.
_KERNEL_G = np.array([[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]]) / 4.0
_KERNEL_RB = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0


def _interp_sparse(plane, kernel):
    padded = np.pad(plane, 1, mode="reflect")
    h, w = plane.shape
    out = np.zeros_like(plane)
    for dy in range(3):
        for dx in range(3):
            wgt = kernel[dy, dx]
            if wgt != 0.0:
                out += wgt * padded[dy : dy + h, dx : dx + w]
    return out


def demosaic_bilinear(bayer):
    """Fill missing channels from same-channel neighbors (reflect borders).

    Sampled sites are preserved exactly; reflect padding keeps the Bayer
    phase (mirror indices have the original parity), so borders interpolate
    from genuine same-channel neighbors.
    """
    h, w = bayer.height, bayer.width
    mosaic_plane = bayer.plane()
    r = np.zeros((h, w))
    g = np.zeros((h, w))
    b = np.zeros((h, w))
    r[0::2, 0::2] = mosaic_plane[0::2, 0::2]
    g[0::2, 1::2] = mosaic_plane[0::2, 1::2]
    g[1::2, 0::2] = mosaic_plane[1::2, 0::2]
    b[1::2, 1::2] = mosaic_plane[1::2, 1::2]
    out = np.stack([
        _interp_sparse(r, _KERNEL_RB),
        _interp_sparse(g, _KERNEL_G),
        _interp_sparse(b, _KERNEL_RB),
    ])
    return RGBFrame(out, "linear")


def add_hetero_noise(bayer, sigma1_sq, sigma2_sq, seed, clamp=True):
    """Per-pixel Gaussian noise with variance sigma1_sq * value + sigma2_sq.

    Deterministic for a given seed. ``clamp=False`` skips the [0,1] clamp
    (used to measure the pre-clamp noise variance); the pipeline always
    clamps.
    """
    if sigma1_sq < 0 or sigma2_sq < 0:
        raise ContractViolation("noise variance parameters must be non-negative")
    x = bayer.plane()
    std = np.sqrt(sigma1_sq * x + sigma2_sq)
    noisy = x + np.random.default_rng(seed).standard_normal(x.shape) * std
    if clamp:
        return BayerFrame(clip01(noisy))
    return noisy


def degrade(x_lin, config):
    """Blur, box-downsample, mosaic, then add heteroscedastic noise."""
    if x_lin.height % (2 * config.scale) or x_lin.width % (2 * config.scale):
        raise ContractViolation(
            f"frame {x_lin.height}x{x_lin.width} not divisible by 2*scale={2 * config.scale}"
        )
    blurred = convolve_frame(x_lin, defocus_kernel(config.blur_size))
    small = downsample(blurred, config.scale)
    return add_hetero_noise(mosaic(small), config.sigma1_sq, config.sigma2_sq, config.rng_seed)


def _cubic_weight(t):
    # Catmull-Rom kernel (a = -0.5).
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    w[near] = 1.5 * t[near] ** 3 - 2.5 * t[near] ** 2 + 1.0
    w[far] = -0.5 * t[far] ** 3 + 2.5 * t[far] ** 2 - 4.0 * t[far] + 2.0
    return w


def _cubic_axis_weights(n_out, n_in, s):
    centers = (np.arange(n_out) + 0.5) / s - 0.5
    base = np.floor(centers).astype(int)
    idx = base[:, None] + np.arange(-1, 3)[None, :]
    wgt = _cubic_weight(idx - centers[:, None])
    wgt /= wgt.sum(axis=1, keepdims=True)
    return reflect_index(idx, n_in), wgt


def bicubic_upsample(frame, s):
    """Separable Catmull-Rom upsampling by integer factor s (reflect borders)."""
    c, h, w = frame.data.shape
    iy, wy = _cubic_axis_weights(h * s, h, s)
    ix, wx = _cubic_axis_weights(w * s, w, s)
    rows = np.einsum("ok,cokw->cow", wy, frame.data[:, iy, :])
    out = np.einsum("ok,chok->cho", wx, rows[:, :, ix])
    return RGBFrame(clip01(out), frame.color_state)
