"""Image quality metrics: differentiable SSIM and PSNR.

SSIM follows the reference single-scale recipe: 11x11 Gaussian window with
sigma 1.5, K1=0.01, K2=0.03, dynamic range 1, covariances normalized by the
window weights, statistics restricted to fully valid window positions,
computed per channel and averaged. The backward pass is written by hand; the
window adjoint is a full correlation with the (symmetric) window itself.
"""

import numpy as np

from .core import func
from .errors import ContractViolation

_SIGMA = 1.5
_RADIUS = 5
_K1, _K2 = 0.01, 0.03
_C1 = (_K1 * 1.0) ** 2
_C2 = (_K2 * 1.0) ** 2


def _window():
    x = np.arange(-_RADIUS, _RADIUS + 1, dtype=np.float64)
    k = np.exp(-0.5 * x * x / (_SIGMA * _SIGMA))
    k /= k.sum()
    return np.outer(k, k)


_W2D = _window()
_WEIGHT = _W2D[None, None]


def _as_images(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ContractViolation(f"expected [C,H,W] or [N,C,H,W], got {x.shape}")
    return x, False


def _filt(x):
    n, c, h, w = x.shape
    y = func.conv2d(x.reshape(n * c, 1, h, w), _WEIGHT, None)
    return y.reshape(n, c, h - 2 * _RADIUS, w - 2 * _RADIUS)


def _filt_adjoint(g):
    n, c, h, w = g.shape
    y = func.conv2d(g.reshape(n * c, 1, h, w), _WEIGHT, None, padding=2 * _RADIUS)
    return y.reshape(n, c, h + 2 * _RADIUS, w + 2 * _RADIUS)


def ssim_fwd(a, b):
    """Mean SSIM over channels (and batch); differentiable w.r.t. both frames."""
    a, squeeze = _as_images(a)
    b, _ = _as_images(b)
    if a.shape != b.shape:
        raise ContractViolation(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.shape[2] < 2 * _RADIUS + 1 or a.shape[3] < 2 * _RADIUS + 1:
        raise ContractViolation(f"frames smaller than the {2 * _RADIUS + 1}-px ssim window")
    mu_a = _filt(a)
    mu_b = _filt(b)
    raw_aa = _filt(a * a)
    raw_bb = _filt(b * b)
    raw_ab = _filt(a * b)
    lum_num = 2.0 * mu_a * mu_b + _C1
    cov_num = 2.0 * (raw_ab - mu_a * mu_b) + _C2
    lum_den = mu_a * mu_a + mu_b * mu_b + _C1
    cov_den = (raw_aa - mu_a * mu_a) + (raw_bb - mu_b * mu_b) + _C2
    smap = (lum_num * cov_num) / (lum_den * cov_den)
    cache = (a, b, mu_a, mu_b, lum_num, cov_num, lum_den, cov_den, smap, squeeze)
    return float(smap.mean()), cache


def ssim_bwd(cache, gscalar=1.0):
    """Gradients of the mean SSIM value w.r.t. both input frames."""
    a, b, mu_a, mu_b, lum_num, cov_num, lum_den, cov_den, smap, squeeze = cache
    u = gscalar / smap.size
    den = lum_den * cov_den
    d_lnum = u * cov_num / den
    d_cnum = u * lum_num / den
    d_lden = -u * smap / lum_den
    d_cden = -u * smap / cov_den
    # Statistics: mu_a, mu_b, and the raw window moments of a*a, b*b, a*b.
    g_mu_a = 2.0 * (d_lnum * mu_b - d_cnum * mu_b + d_lden * mu_a - d_cden * mu_a)
    g_mu_b = 2.0 * (d_lnum * mu_a - d_cnum * mu_a + d_lden * mu_b - d_cden * mu_b)
    g_raw_ab = 2.0 * d_cnum
    g_raw_aa = d_cden
    g_raw_bb = d_cden
    ga = _filt_adjoint(g_mu_a) + 2.0 * a * _filt_adjoint(g_raw_aa) + b * _filt_adjoint(g_raw_ab)
    gb = _filt_adjoint(g_mu_b) + 2.0 * b * _filt_adjoint(g_raw_bb) + a * _filt_adjoint(g_raw_ab)
    if squeeze:
        return ga[0], gb[0]
    return ga, gb


def ssim(a, b):
    a_data = a.data if hasattr(a, "data") else a
    b_data = b.data if hasattr(b, "data") else b
    return ssim_fwd(a_data, b_data)[0]


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"mse shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b):
    """10*log10(1/MSE) for [0,1]-range frames; +inf for identical frames."""
    a_data = a.data if hasattr(a, "data") else a
    b_data = b.data if hasattr(b, "data") else b
    err = mse(a_data, b_data)
    if err == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / err)
