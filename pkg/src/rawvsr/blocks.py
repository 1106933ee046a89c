"""Alignment and reconstruction layers.

The pairwise-fusion block aligns two feature maps with modulated deformable
convolutions (learned per-pixel offsets and gates over the 9 taps of a 3x3
grid) and merges them; the fusion tree chains these blocks with the same
wiring as the message schedule in ``hmm`` (left chain of 3, right chain of 2,
one final fusion for a 7-frame window). Reconstruction stacks residual dense
blocks under squeeze-excitation channel attention.

Modules accept [C,H,W] or [N,C,H,W]; internally everything is batched.
"""

import contextlib

import numpy as np

from . import kernels
from .core import func, nn
from .core.nn import Conv2d, Linear, Module, uniform_init
from .core.optim import Param
from .errors import ContractViolation

TAPS = 9
# 3x3 grid offsets in tap order (matches weight.reshape(O, C, 9)).
BASE_OFFSETS = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=np.float64)


def _as_batched(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ContractViolation(f"expected [C,H,W] or [N,C,H,W], got shape {x.shape}")


def _debatch(y, squeeze):
    return y[0] if squeeze else y


# Observation hook for deformable sampling positions (gradient checks verify
# no position sits on an integer grid line, the kink of bilinear weights).
_SAMPLE_SINK = None


@contextlib.contextmanager
def sample_tap(sink):
    global _SAMPLE_SINK
    _SAMPLE_SINK = sink
    try:
        yield sink
    finally:
        _SAMPLE_SINK = None


class OffsetField:
    """Per-pixel sampling offsets dp [2K,H,W] (y,x pairs, pixels) and
    modulation gates ds [K,H,W] in (0,1)."""

    __slots__ = ("dp", "ds")

    def __init__(self, dp, ds):
        dp, _ = _as_batched(dp)
        ds, _ = _as_batched(ds)
        if dp.shape[1] != 2 * TAPS or ds.shape[1] != TAPS:
            raise ContractViolation(
                f"offset field needs {2 * TAPS}+{TAPS} channels, got {dp.shape[1]}+{ds.shape[1]}"
            )
        if not np.all(np.isfinite(dp)):
            raise ContractViolation("offsets must be finite")
        self.dp = dp
        self.ds = ds


class DeformConv2d(Module):
    """Modulated deformable 3x3 convolution.

    Each output position P sums, over taps i and input channels, the weight
    times the feature sampled bilinearly at P + grid_i + dp_i(P), gated by
    ds_i(P). Zero offsets with unit gates reduce to a plain zero-padded 3x3
    convolution (no bias).
    """

    def __init__(self, c_in, c_out, rng=None):
        rng = rng or np.random.default_rng(0)
        self.weight = Param(uniform_init(rng, (c_out, c_in, 3, 3), c_in * TAPS))

    def forward(self, x, offsets):
        x, squeeze = _as_batched(x)
        n, c, h, w = x.shape
        dp, ds = offsets.dp, offsets.ds
        if dp.shape[0] != n or dp.shape[2:] != (h, w):
            raise ContractViolation(
                f"offset field {dp.shape} not aligned with feature {x.shape}"
            )
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        ys = yy[None, None] + BASE_OFFSETS[:, 0][None, :, None, None] + dp[:, 0::2]
        xs = xx[None, None] + BASE_OFFSETS[:, 1][None, :, None, None] + dp[:, 1::2]
        ys = np.ascontiguousarray(ys.reshape(n, TAPS * h * w))
        xs = np.ascontiguousarray(xs.reshape(n, TAPS * h * w))
        if _SAMPLE_SINK is not None:
            _SAMPLE_SINK.append((self, ys.reshape(n, TAPS, h, w), xs.reshape(n, TAPS, h, w)))
        samp = kernels.bilinear_gather(x, ys, xs).reshape(n, c, TAPS, h * w)
        mod = samp * ds.reshape(n, 1, TAPS, h * w)
        wk = self.weight.value.reshape(-1, c * TAPS)
        y = np.matmul(wk, mod.reshape(n, c * TAPS, h * w))
        cache = (x, ys, xs, samp, ds, mod, squeeze)
        return _debatch(y.reshape(n, -1, h, w), squeeze), cache

    def backward(self, cache, gy):
        x, ys, xs, samp, ds, mod, squeeze = cache
        n, c, h, w = x.shape
        gy, _ = _as_batched(gy)
        gym = gy.reshape(n, -1, h * w)
        wk = self.weight.value.reshape(-1, c * TAPS)
        mod_flat = mod.reshape(n, c * TAPS, h * w)
        self.weight.grad += np.matmul(gym, mod_flat.transpose(0, 2, 1)).sum(axis=0).reshape(
            self.weight.shape
        )
        gmod = np.matmul(wk.T, gym).reshape(n, c, TAPS, h * w)
        gds = (gmod * samp).sum(axis=1).reshape(n, TAPS, h, w)
        gsamp = gmod * ds.reshape(n, 1, TAPS, h * w)
        gx, gys, gxs = kernels.bilinear_scatter(
            x, ys, xs, np.ascontiguousarray(gsamp.reshape(n, c, TAPS * h * w))
        )
        gdp = np.empty((n, 2 * TAPS, h, w))
        gdp[:, 0::2] = gys.reshape(n, TAPS, h, w)
        gdp[:, 1::2] = gxs.reshape(n, TAPS, h, w)
        return _debatch(gx, squeeze), OffsetField(gdp, gds)


class OffsetGenerator(Module):
    """Two 3x3 conv layers with activation, then a 3x3 head emitting 2K raw
    offsets and K gate logits (sigmoid). The head starts at zero so training
    begins from plain-convolution behavior (dp=0, ds=0.5)."""

    def __init__(self, c_cat, rng=None):
        rng = rng or np.random.default_rng(0)
        mid = max(c_cat // 2, TAPS)
        self.conv1 = Conv2d(c_cat, mid, rng=rng, activation=True)
        self.conv2 = Conv2d(mid, mid, rng=rng, activation=True)
        self.head = Conv2d(mid, 3 * TAPS, rng=rng)
        self.head.weight.value[...] = 0.0

    def forward(self, concat_features):
        x, squeeze = _as_batched(concat_features)
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.conv2.forward(h1)
        raw, c3 = self.head.forward(h2)
        dp = raw[:, : 2 * TAPS]
        gates, csig = func.sigmoid_fwd(raw[:, 2 * TAPS :])
        return OffsetField(dp, gates), (c1, c2, c3, csig, squeeze)

    def backward(self, cache, gfield):
        c1, c2, c3, csig, squeeze = cache
        glogits = func.sigmoid_bwd(csig, gfield.ds)
        graw = np.concatenate([gfield.dp, glogits], axis=1)
        gh2 = self.head.backward(c3, graw)
        gh1 = self.conv2.backward(c2, gh2)
        gx = self.conv1.backward(c1, gh1)
        return _debatch(gx, squeeze)


class PFBlock(Module):
    """Pairwise fusion: align both inputs with independently generated
    offsets, then merge the aligned pair through two 3x3 convolutions."""

    def __init__(self, channels, rng=None):
        rng = rng or np.random.default_rng(0)
        self.gen_a = OffsetGenerator(2 * channels, rng=rng)
        self.gen_b = OffsetGenerator(2 * channels, rng=rng)
        self.deform_a = DeformConv2d(channels, channels, rng=rng)
        self.deform_b = DeformConv2d(channels, channels, rng=rng)
        self.fuse1 = Conv2d(2 * channels, channels, rng=rng, activation=True)
        self.fuse2 = Conv2d(channels, channels, rng=rng)

    def forward(self, f_a, f_b):
        f_a, squeeze = _as_batched(f_a)
        f_b, _ = _as_batched(f_b)
        if f_a.shape != f_b.shape:
            raise ContractViolation(f"pf_block inputs differ: {f_a.shape} vs {f_b.shape}")
        cat = np.concatenate([f_a, f_b], axis=1)
        off_a, ca = self.gen_a.forward(cat)
        off_b, cb = self.gen_b.forward(cat)
        al_a, da = self.deform_a.forward(f_a, off_a)
        al_b, db = self.deform_b.forward(f_b, off_b)
        cat2 = np.concatenate([al_a, al_b], axis=1)
        h, c1 = self.fuse1.forward(cat2)
        y, c2 = self.fuse2.forward(h)
        return _debatch(y, squeeze), (ca, cb, da, db, c1, c2, f_a.shape[1], squeeze)

    def backward(self, cache, gy):
        ca, cb, da, db, c1, c2, c_half, squeeze = cache
        gy, _ = _as_batched(gy)
        gh = self.fuse2.backward(c2, gy)
        gcat2 = self.fuse1.backward(c1, gh)
        g_al_a, g_al_b = gcat2[:, :c_half], gcat2[:, c_half:]
        gfa, goff_a = self.deform_a.backward(da, g_al_a)
        gfb, goff_b = self.deform_b.backward(db, g_al_b)
        gcat = self.gen_a.backward(ca, goff_a) + self.gen_b.backward(cb, goff_b)
        gfa = gfa + gcat[:, :c_half]
        gfb = gfb + gcat[:, c_half:]
        return _debatch(gfa, squeeze), _debatch(gfb, squeeze)


def fusion_plan(num_frames):
    """Wiring of the fusion tree as (left, right, out) node labels.

    Isomorphic by construction requirement to the inference schedule in
    ``hmm.fusion_schedule``; the test suite compares the two.
    """
    if num_frames < 3 or num_frames % 2 == 0:
        raise ContractViolation(f"need an odd frame count >= 3, got {num_frames}")
    half = num_frames // 2
    plan = []
    prev = f"n{-half}"
    for pos in range(-half + 1, 1):
        plan.append((prev, f"n{pos}", f"f{pos}"))
        prev = f"f{pos}"
    prev = f"n{half}"
    for pos in range(half - 1, 0, -1):
        plan.append((f"n{pos}", prev, f"f{pos}"))
        prev = f"f{pos}"
    plan.append(("f0", prev if half > 1 else f"n{half}", "out"))
    return plan


class SDIFuse(Module):
    """Fusion tree over 2L+1 frame features using 2L pairwise-fusion blocks,
    each with independent parameters."""

    def __init__(self, channels, num_frames=7, rng=None):
        rng = rng or np.random.default_rng(0)
        self.num_frames = num_frames
        self.plan = fusion_plan(num_frames)
        self.blocks = [PFBlock(channels, rng=rng) for _ in self.plan]

    def forward(self, features):
        if len(features) != self.num_frames:
            raise ContractViolation(
                f"expected {self.num_frames} frame features, got {len(features)}"
            )
        half = self.num_frames // 2
        batched = [_as_batched(f) for f in features]
        squeeze = batched[0][1]
        nodes = {f"n{i - half}": b for i, (b, _) in enumerate(batched)}
        caches = []
        for block, (left, right, out) in zip(self.blocks, self.plan):
            nodes[out], cache = block.forward(nodes[left], nodes[right])
            caches.append(cache)
        return _debatch(nodes["out"], squeeze), (caches, squeeze)

    def backward(self, cache, gy):
        caches, squeeze = cache
        gy, _ = _as_batched(gy)
        grads = {"out": gy}
        for block, (left, right, out), blk_cache in zip(
            reversed(self.blocks), reversed(self.plan), reversed(caches)
        ):
            gl, gr = block.backward(blk_cache, grads.pop(out))
            grads[left] = grads.get(left, 0.0) + gl
            grads[right] = grads.get(right, 0.0) + gr
        half = self.num_frames // 2
        return [_debatch(grads[f"n{i - half}"], squeeze) for i in range(self.num_frames)]


class RDB(Module):
    """Residual dense block: d densely connected 3x3 convs of growth g, a 1x1
    local-fusion conv back to C, and a residual add of the input."""

    def __init__(self, channels, growth=16, layers=4, rng=None):
        rng = rng or np.random.default_rng(0)
        self.convs = [
            Conv2d(channels + j * growth, growth, rng=rng, activation=True)
            for j in range(layers)
        ]
        self.fuse = Conv2d(channels + layers * growth, channels, k=1, rng=rng)

    def forward(self, x):
        x, squeeze = _as_batched(x)
        feats = [x]
        caches = []
        for conv in self.convs:
            y, c = conv.forward(np.concatenate(feats, axis=1))
            feats.append(y)
            caches.append(c)
        fused, cf = self.fuse.forward(np.concatenate(feats, axis=1))
        widths = [f.shape[1] for f in feats]
        return _debatch(x + fused, squeeze), (caches, cf, widths, squeeze)

    def backward(self, cache, gy):
        caches, cf, widths, squeeze = cache
        gy, _ = _as_batched(gy)
        gcat = self.fuse.backward(cf, gy)
        splits = np.cumsum(widths)[:-1]
        gfeats = list(np.split(gcat, splits, axis=1))
        for conv, c in zip(reversed(self.convs), reversed(caches)):
            gin = conv.backward(c, gfeats.pop())
            sub = np.split(gin, np.cumsum([w for w in widths[: len(gfeats)]])[:-1], axis=1)
            for i, g in enumerate(sub):
                gfeats[i] = gfeats[i] + g
        return _debatch(gy + gfeats[0], squeeze)


class SEFuse(Module):
    """Channel attention over M concatenated inputs: global average pool,
    bottleneck MLP with sigmoid gates, rescale, then a 1x1 merge conv."""

    def __init__(self, num_inputs, channels, reduction=4, rng=None):
        rng = rng or np.random.default_rng(0)
        total = num_inputs * channels
        hidden = max(total // reduction, 1)
        self.num_inputs = num_inputs
        self.fc1 = Linear(total, hidden, rng=rng)
        self.fc2 = Linear(hidden, total, rng=rng)
        self.merge = Conv2d(total, channels, k=1, rng=rng)

    def attention(self, cat):
        """Sigmoid per-channel weights for a concatenated [N,MC,H,W] input."""
        vec = cat.mean(axis=(2, 3))
        h1, c1 = self.fc1.forward(vec)
        if nn._PREACT_SINK is not None:
            nn._PREACT_SINK.append((self.fc1, h1[:, :, None, None]))
        a1, ca = func.leaky_relu_fwd(h1)
        h2, c2 = self.fc2.forward(a1)
        gates, cs = func.sigmoid_fwd(h2)
        return gates, (c1, ca, c2, cs)

    def forward(self, features):
        if len(features) != self.num_inputs:
            raise ContractViolation(f"expected {self.num_inputs} inputs, got {len(features)}")
        batched = [_as_batched(f) for f in features]
        squeeze = batched[0][1]
        cat = np.concatenate([b for b, _ in batched], axis=1)
        gates, att_cache = self.attention(cat)
        scaled = cat * gates[:, :, None, None]
        y, cm = self.merge.forward(scaled)
        return _debatch(y, squeeze), (cat, gates, att_cache, cm, squeeze)

    def backward(self, cache, gy):
        cat, gates, (c1, ca, c2, cs), cm, squeeze = cache
        gy, _ = _as_batched(gy)
        gscaled = self.merge.backward(cm, gy)
        ggates = (gscaled * cat).sum(axis=(2, 3))
        gcat = gscaled * gates[:, :, None, None]
        gh2 = func.sigmoid_bwd(cs, ggates)
        ga1 = self.fc2.backward(c2, gh2)
        gh1 = func.leaky_relu_bwd(ca, ga1)
        gvec = self.fc1.backward(c1, gh1)
        gcat += gvec[:, :, None, None] / (cat.shape[2] * cat.shape[3])
        width = cat.shape[1] // self.num_inputs
        return [
            _debatch(gcat[:, i * width : (i + 1) * width], squeeze)
            for i in range(self.num_inputs)
        ]


class ARDB(Module):
    """Attention-based residual dense block: entry conv, two RDBs, the three
    intermediate maps fused under channel attention, residual input add."""

    def __init__(self, channels, growth=16, layers=4, reduction=4, rng=None):
        rng = rng or np.random.default_rng(0)
        self.entry = Conv2d(channels, channels, rng=rng, activation=True)
        self.rdb1 = RDB(channels, growth, layers, rng=rng)
        self.rdb2 = RDB(channels, growth, layers, rng=rng)
        self.se = SEFuse(3, channels, reduction, rng=rng)

    def forward(self, x):
        x, squeeze = _as_batched(x)
        e, ce = self.entry.forward(x)
        r1, c1 = self.rdb1.forward(e)
        r2, c2 = self.rdb2.forward(r1)
        fused, cs = self.se.forward([e, r1, r2])
        return _debatch(x + fused, squeeze), (ce, c1, c2, cs, squeeze)

    def backward(self, cache, gy):
        ce, c1, c2, cs, squeeze = cache
        gy, _ = _as_batched(gy)
        ge, gr1, gr2 = self.se.backward(cs, gy)
        gr1 = gr1 + self.rdb2.backward(c2, gr2)
        ge = ge + self.rdb1.backward(c1, gr1)
        return _debatch(gy + self.entry.backward(ce, ge), squeeze)


class Reconstruction(Module):
    """Four ARDBs in sequence, globally fused under channel attention, with a
    residual add of the module input."""

    def __init__(self, channels, growth=16, layers=4, reduction=4, num_blocks=4, rng=None):
        rng = rng or np.random.default_rng(0)
        self.ardbs = [ARDB(channels, growth, layers, reduction, rng=rng)
                      for _ in range(num_blocks)]
        self.se = SEFuse(num_blocks, channels, reduction, rng=rng)

    def forward(self, x):
        x, squeeze = _as_batched(x)
        outs = []
        caches = []
        cur = x
        for ardb in self.ardbs:
            cur, c = ardb.forward(cur)
            outs.append(cur)
            caches.append(c)
        fused, cs = self.se.forward(outs)
        return _debatch(x + fused, squeeze), (caches, cs, squeeze)

    def backward(self, cache, gy):
        caches, cs, squeeze = cache
        gy, _ = _as_batched(gy)
        gouts = self.se.backward(cs, gy)
        gcur = 0.0
        for ardb, c, gout in zip(reversed(self.ardbs), reversed(caches), reversed(gouts)):
            gcur = ardb.backward(c, gout + gcur)
        return _debatch(gy + gcur, squeeze)


class UNet(Module):
    """Two-level encoder/decoder: stride-2 convs double the channels going
    down, sub-pixel shuffles come back up, skips concatenate + 1x1 merge."""

    def __init__(self, channels, rng=None):
        rng = rng or np.random.default_rng(0)
        c = channels
        self.enc0 = Conv2d(c, c, rng=rng, activation=True)
        self.down1 = Conv2d(c, 2 * c, stride=2, rng=rng, activation=True)
        self.enc1 = Conv2d(2 * c, 2 * c, rng=rng, activation=True)
        self.down2 = Conv2d(2 * c, 4 * c, stride=2, rng=rng, activation=True)
        self.mid = Conv2d(4 * c, 4 * c, rng=rng, activation=True)
        self.up1 = Conv2d(4 * c, 8 * c, rng=rng, activation=True)
        self.merge1 = Conv2d(4 * c, 2 * c, k=1, rng=rng, activation=True)
        self.up2 = Conv2d(2 * c, 4 * c, rng=rng, activation=True)
        self.merge2 = Conv2d(2 * c, c, k=1, rng=rng, activation=True)

    def forward(self, x):
        x, squeeze = _as_batched(x)
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ContractViolation(f"spatial dims must be divisible by 4, got {x.shape[2:]}")
        e0, c0 = self.enc0.forward(x)
        d1, cd1 = self.down1.forward(e0)
        e1, c1 = self.enc1.forward(d1)
        d2, cd2 = self.down2.forward(e1)
        m, cm = self.mid.forward(d2)
        u1, cu1 = self.up1.forward(m)
        u1s = func.pixel_shuffle(u1, 2)
        s1, cm1 = self.merge1.forward(np.concatenate([u1s, e1], axis=1))
        u2, cu2 = self.up2.forward(s1)
        u2s = func.pixel_shuffle(u2, 2)
        y, cm2 = self.merge2.forward(np.concatenate([u2s, e0], axis=1))
        widths = (u1s.shape[1], u2s.shape[1])
        return _debatch(y, squeeze), (c0, cd1, c1, cd2, cm, cu1, cm1, cu2, cm2, widths, squeeze)

    def backward(self, cache, gy):
        c0, cd1, c1, cd2, cm, cu1, cm1, cu2, cm2, widths, squeeze = cache
        gy, _ = _as_batched(gy)
        gcat2 = self.merge2.backward(cm2, gy)
        gu2s, ge0 = gcat2[:, : widths[1]], gcat2[:, widths[1] :]
        gs1 = self.up2.backward(cu2, func.pixel_shuffle_bwd(gu2s, 2))
        gcat1 = self.merge1.backward(cm1, gs1)
        gu1s, ge1 = gcat1[:, : widths[0]], gcat1[:, widths[0] :]
        gm = self.up1.backward(cu1, func.pixel_shuffle_bwd(gu1s, 2))
        gd2 = self.mid.backward(cm, gm)
        ge1 = ge1 + self.down2.backward(cd2, gd2)
        gd1 = self.enc1.backward(c1, ge1)
        ge0 = ge0 + self.down1.backward(cd1, gd1)
        return _debatch(self.enc0.backward(c0, ge0), squeeze)


class DemosaicHead(Module):
    """Pack the RGGB tile into 4 channels at half resolution, convolve, and
    shuffle back: [1,H,W] mosaic -> [C,H,W] feature, spatial size unchanged."""

    def __init__(self, channels, rng=None):
        rng = rng or np.random.default_rng(0)
        self.conv = Conv2d(4, 4 * channels, rng=rng, activation=True)

    def forward(self, x):
        x, squeeze = _as_batched(x)
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ContractViolation(f"mosaic dims must be even, got {x.shape[2:]}")
        packed = func.pixel_unshuffle(x, 2)
        y, c = self.conv.forward(packed)
        return _debatch(func.pixel_shuffle(y, 2), squeeze), (c, squeeze)

    def backward(self, cache, gy):
        c, squeeze = cache
        gy, _ = _as_batched(gy)
        gpacked = self.conv.backward(c, func.pixel_shuffle_bwd(gy, 2))
        return _debatch(func.pixel_unshuffle_bwd(gpacked, 2), squeeze)


class UpsampleHead(Module):
    """Three convs and one sub-pixel shuffle: [C,H,W] -> [3,S*H,S*W]."""

    def __init__(self, channels, scale, out_channels=3, rng=None):
        if scale not in (2, 4):
            raise ContractViolation(f"scale must be 2 or 4, got {scale}")
        rng = rng or np.random.default_rng(0)
        self.scale = scale
        self.conv1 = Conv2d(channels, channels, rng=rng, activation=True)
        self.conv2 = Conv2d(channels, channels, rng=rng, activation=True)
        self.conv3 = Conv2d(channels, out_channels * scale * scale, rng=rng)

    def forward(self, x, clamp=False):
        x, squeeze = _as_batched(x)
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.conv2.forward(h1)
        h3, c3 = self.conv3.forward(h2)
        y = func.pixel_shuffle(h3, self.scale)
        if clamp:
            y = np.clip(y, 0.0, 1.0)
        return _debatch(y, squeeze), (c1, c2, c3, clamp, squeeze)

    def backward(self, cache, gy):
        c1, c2, c3, clamp, squeeze = cache
        if clamp:
            raise ContractViolation("clamped (inference-mode) outputs are not differentiable")
        gy, _ = _as_batched(gy)
        gh3 = func.pixel_shuffle_bwd(gy, self.scale)
        gh2 = self.conv3.backward(c3, gh3)
        gh1 = self.conv2.backward(c2, gh2)
        return _debatch(self.conv1.backward(c1, gh1), squeeze)


# Row-major 3x3 identity, broadcast over shuffle phases in the head bias.
_IDENTITY9 = np.eye(3).ravel()


class ColorTransformHead(Module):
    """Like the upsampling head but emitting 9 channels per pixel, reshaped to
    a per-pixel 3x3 color matrix. The zero-initialized last layer carries an
    identity bias, so a fresh head produces the identity transform."""

    def __init__(self, channels, scale, rng=None):
        if scale not in (2, 4):
            raise ContractViolation(f"scale must be 2 or 4, got {scale}")
        rng = rng or np.random.default_rng(0)
        self.scale = scale
        self.conv1 = Conv2d(channels, channels, rng=rng, activation=True)
        self.conv2 = Conv2d(channels, channels, rng=rng, activation=True)
        self.head = Conv2d(channels, 9 * scale * scale, rng=rng)
        self.head.weight.value[...] = 0.0
        self.head.bias.value[...] = np.repeat(_IDENTITY9, scale * scale)

    def forward(self, x):
        x, squeeze = _as_batched(x)
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.conv2.forward(h1)
        h3, c3 = self.head.forward(h2)
        planes = func.pixel_shuffle(h3, self.scale)
        n, _, hh, ww = planes.shape
        field = np.ascontiguousarray(planes.transpose(0, 2, 3, 1)).reshape(n, hh, ww, 3, 3)
        return _debatch(field, squeeze), (c1, c2, c3, squeeze)

    def backward(self, cache, gfield):
        c1, c2, c3, squeeze = cache
        if gfield.ndim == 4:
            gfield = gfield[None]
        n, hh, ww = gfield.shape[:3]
        gplanes = np.ascontiguousarray(
            gfield.reshape(n, hh, ww, 9).transpose(0, 3, 1, 2)
        )
        gh3 = func.pixel_shuffle_bwd(gplanes, self.scale)
        gh2 = self.head.backward(c3, gh3)
        gh1 = self.conv2.backward(c2, gh2)
        return _debatch(self.conv1.backward(c1, gh1), squeeze)


def apply_color_transform_fwd(x, field):
    """Per-pixel matrix-vector product: out[:,i,j] = T(i,j) @ x[:,i,j]."""
    x, squeeze = _as_batched(x)
    if field.ndim == 4:
        field = field[None]
    if field.shape[1:3] != x.shape[2:]:
        raise ContractViolation(
            f"transform field {field.shape[1:3]} does not match frame {x.shape[2:]}"
        )
    y = np.einsum("nijcd,ndij->ncij", field, x)
    return _debatch(y, squeeze), (x, field, squeeze)


def apply_color_transform_bwd(cache, gy):
    x, field, squeeze = cache
    gy, _ = _as_batched(gy)
    gx = np.einsum("nijcd,ncij->ndij", field, gy)
    gfield = np.einsum("ncij,ndij->nijcd", gy, x)
    return _debatch(gx, squeeze), _debatch(gfield, squeeze)


def apply_color_transform(x, field):
    return apply_color_transform_fwd(x, field)[0]
