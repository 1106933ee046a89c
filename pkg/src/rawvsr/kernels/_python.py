"""Pure-numpy implementations of the hot kernels.

Semantics are identical to the compiled backend in ``_native.pyx``; this
module is the fallback selected when the extension is unavailable (or when
``RAWVSR_KERNELS=python``). im2col/col2im loop over the kernel taps only, so
they stay vectorized; the bilinear scatter uses ``bincount`` to avoid
``np.add.at``.
"""

import numpy as np

BACKEND_NAME = "python"


def im2col(x, kh, kw, stride, pad):
    """[N,C,H,W] -> [N, C*kh*kw, Ho*Wo] patch matrix (zero padding)."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if pad:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
        xp[:, :, pad : pad + h, pad : pad + w] = x
    else:
        xp = x
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im(cols, h, w, kh, kw, stride, pad):
    """Adjoint of im2col: scatter-add patches back to [N,C,H,W]."""
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += cols[:, :, i, j]
    if pad:
        return xp[:, :, pad : pad + h, pad : pad + w].copy()
    return xp


def _corner_terms(h, w, ys, xs):
    # Integer corners and interpolation weights for zero-padded bilinear
    # lookup. Returns per-corner (flat index clipped in-bounds, mask, weight).
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    out = []
    for dy, dx, wgt in (
        (0, 0, (1.0 - fy) * (1.0 - fx)),
        (0, 1, (1.0 - fy) * fx),
        (1, 0, fy * (1.0 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        flat = np.where(ok, yy * w + xx, 0)
        out.append((flat, ok, wgt))
    return out, fy, fx


def bilinear_gather(feat, ys, xs):
    """Sample [N,C,H,W] at fractional (ys, xs) [N,M] -> [N,C,M], zero outside."""
    n, c, h, w = feat.shape
    m = ys.shape[1]
    flat = feat.reshape(n, c, h * w)
    out = np.zeros((n, c, m), dtype=np.float64)
    for b in range(n):
        terms, _, _ = _corner_terms(h, w, ys[b], xs[b])
        for idx, ok, wgt in terms:
            out[b] += flat[b][:, idx] * (wgt * ok)
    return out


def bilinear_scatter(feat, ys, xs, gout):
    """Backward of bilinear_gather.

    Returns (gfeat [N,C,H,W], gys [N,M], gxs [N,M]) for upstream gradient
    gout [N,C,M].
    """
    n, c, h, w = feat.shape
    m = ys.shape[1]
    flat = feat.reshape(n, c, h * w)
    gfeat = np.zeros((n, c, h * w), dtype=np.float64)
    gys = np.zeros((n, m), dtype=np.float64)
    gxs = np.zeros((n, m), dtype=np.float64)
    chan_off = (np.arange(c, dtype=np.int64) * (h * w))[:, None]
    for b in range(n):
        terms, fy, fx = _corner_terms(h, w, ys[b], xs[b])
        (i00, k00, _), (i01, k01, _), (i10, k10, _), (i11, k11, _) = terms
        v00 = flat[b][:, i00] * k00
        v01 = flat[b][:, i01] * k01
        v10 = flat[b][:, i10] * k10
        v11 = flat[b][:, i11] * k11
        g = gout[b]
        gys[b] = np.einsum("cm,cm->m", g, (1.0 - fx) * (v10 - v00) + fx * (v11 - v01))
        gxs[b] = np.einsum("cm,cm->m", g, (1.0 - fy) * (v01 - v00) + fy * (v11 - v10))
        for idx, ok, wgt in terms:
            contrib = (g * (wgt * ok)).ravel()
            target = (chan_off + idx[None, :]).ravel()
            gfeat[b] += np.bincount(target, weights=contrib, minlength=c * h * w).reshape(c, h * w)
    return gfeat.reshape(n, c, h, w), gys, gxs
