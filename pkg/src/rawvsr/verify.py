"""Verification suites behind ``rawvsr verify`` and the acceptance tests.

Three suites: ``hmm`` (pairwise-fusion decomposition equals brute-force
enumeration, plus the sufficiency audit), ``grad`` (central-difference checks
of every differentiable block, plus the deformable-reduction identity), and
``pipeline`` (bit-exact round trips, compositionality, and the noise
variance). Each check returns its worst-case deviation so failures are
diagnosable from the CLI output.
"""

from dataclasses import dataclass

import numpy as np

from . import blocks, hmm, metrics
from .core import func, nn
from .core.gradcheck import grad_check
from .config import RawVSRConfig
from .model import RawVSRNet, loss_fwd, loss_bwd
from .pipeline.degrade import (DegradationConfig, add_hetero_noise,
                               convolve_frame, defocus_kernel, degrade,
                               demosaic_bilinear, downsample, mosaic)
from .pipeline.frames import BayerFrame, RGBFrame


@dataclass
class CheckResult:
    name: str
    passed: bool
    deviation: float
    tolerance: float

    def line(self):
        status = "pass" if self.passed else "FAIL"
        return f"{status} {self.name}: worst {self.deviation:.3e} (tol {self.tolerance:.1e})"


def _result(name, deviation, tolerance):
    return CheckResult(name, deviation <= tolerance, float(deviation), tolerance)


# --------------------------------------------------------------------------
# hmm suite


def suite_hmm(seed=0, trials=200, quick=False):
    if quick:
        trials = min(trials, 20)
    rep = hmm.decomposition_check(trials=trials, seed=seed)
    out = [_result(f"hmm decomposition ({rep.trials} models)", rep.max_deviation, 1e-10)]
    suff = hmm.sufficiency_check(num_trials=5 if quick else 50, seed=seed + 1)
    out.append(_result(f"hmm sufficiency ({suff.trials} models)", suff.max_deviation, 1e-10))
    return out


# --------------------------------------------------------------------------
# grad suite


def _map_offset_owners(module):
    owners = {}

    def walk(m):
        if isinstance(m, blocks.PFBlock):
            owners[id(m.deform_a)] = m.gen_a
            owners[id(m.deform_b)] = m.gen_b
        for v in vars(m).values():
            if isinstance(v, nn.Module):
                walk(v)
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, nn.Module):
                        walk(item)

    walk(module)
    return owners


def _prepare_smooth_point(module, run_fwd, margin=1e-3, max_iter=60):
    """Shift biases until the check point is locally smooth.

    Central differences are invalid across a kink; this pushes every leaky
    pre-activation and every deformable sampling position at least ``margin``
    away from one, which no eps<=1e-5 perturbation can bridge.
    """
    owners = _map_offset_owners(module)
    for _ in range(max_iter):
        preacts, samples = [], []
        with nn.preact_tap(preacts), blocks.sample_tap(samples):
            run_fwd()
        dirty = False
        for layer, z in preacts:
            bad = np.abs(z).min(axis=(0, 2, 3)) < margin
            if bad.any():
                layer.bias.value[bad] += 3.0 * margin
                dirty = True
        for deform, ys, xs in samples:
            gen = owners.get(id(deform))
            if gen is None:
                continue
            for axis, arr in ((0, ys), (1, xs)):
                frac = np.abs(arr - np.round(arr)).min(axis=(0, 2, 3))
                for tap in np.flatnonzero(frac < margin):
                    gen.head.bias.value[2 * int(tap) + axis] += 3.0 * margin
                    dirty = True
        if not dirty:
            return
    raise RuntimeError("could not reach a locally smooth gradient-check point")


def _module_check(module, inputs, forwarder, rng, max_entries, eps=1e-5):
    """Gradcheck a module w.r.t. its array inputs and every parameter."""
    _prepare_smooth_point(module, lambda: forwarder(module, *inputs))
    params = module.params()
    base = [np.array(x) for x in inputs] + [p.value.copy() for p in params]
    n_in = len(inputs)

    def op(*args):
        for p, v in zip(params, args[n_in:]):
            p.value[...] = v
        y, cache = forwarder(module, *args[:n_in])

        def vjp(gy):
            module.zero_grads()
            gxs = module.backward(cache, gy)
            if not isinstance(gxs, (tuple, list)):
                gxs = (gxs,)
            return (*gxs, *[p.grad.copy() for p in params])

        return y, vjp

    return grad_check(op, base, eps=eps, rng=rng, max_entries=max_entries)


def _check_conv2d(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3)) * 0.5
    b = rng.standard_normal(3) * 0.1

    def op(xv, wv, bv):
        y, c = func.conv2d_fwd(xv, wv, bv, 1, 1)
        return y, lambda gy: func.conv2d_bwd(c, gy)

    return grad_check(op, [x, w, b], rng=rng)


def _check_bilinear(rng):
    feat = rng.standard_normal((2, 5, 5))
    # keep fractional parts away from the grid (kinks of bilinear weights)
    base = np.array([[0.3, 1.4], [2.6, 3.3], [3.4, 0.6], [-0.4, 2.3], [4.3, 4.4], [1.6, -0.6]])

    def op(fv, pv):
        y, c = func.bilinear_sample_fwd(fv, pv)
        return y, lambda gy: func.bilinear_sample_bwd(c, gy)

    return grad_check(op, [feat, base], rng=rng)


def _fractional_offsets(rng, h, w):
    dp = rng.uniform(-1.3, 1.3, (2 * blocks.TAPS, h, w)) + 0.17
    ds = rng.uniform(0.2, 0.9, (blocks.TAPS, h, w))
    return dp, ds


def _check_deform(rng):
    h = w = 5
    x = rng.standard_normal((2, h, w))
    dc = blocks.DeformConv2d(2, 3, rng=np.random.default_rng(rng.integers(1 << 31)))
    dp, ds = _fractional_offsets(rng, h, w)

    def op(xv, wv, dpv, dsv):
        dc.weight.value[...] = wv
        y, c = dc.forward(xv, blocks.OffsetField(dpv, dsv))

        def vjp(gy):
            dc.zero_grads()
            gx, goff = dc.backward(c, gy)
            return gx, dc.weight.grad.copy(), goff.dp[0], goff.ds[0]

        return y, vjp

    return grad_check(op, [x, dc.weight.value.copy(), dp, ds], rng=rng, max_entries=70)


def _check_offset_gen(rng):
    gen = blocks.OffsetGenerator(4, rng=np.random.default_rng(rng.integers(1 << 31)))
    # zero-initialized head would hide the gate path; randomize it for the check
    gen.head.weight.value[...] = rng.standard_normal(gen.head.weight.shape) * 0.3
    x = rng.standard_normal((4, 5, 5))
    _prepare_smooth_point(gen, lambda: gen.forward(x))

    def op(xv, *pvals):
        params = gen.params()
        for p, v in zip(params, pvals):
            p.value[...] = v
        field, cache = gen.forward(xv)
        out = np.concatenate([field.dp, field.ds], axis=1)[0]

        def vjp(gy):
            gen.zero_grads()
            gdp, gds = gy[None, : 2 * blocks.TAPS], gy[None, 2 * blocks.TAPS :]
            gx = gen.backward(cache, blocks.OffsetField(gdp, gds))
            return (gx, *[p.grad.copy() for p in params])

        return out, vjp

    base = [x] + [p.value.copy() for p in gen.params()]
    return grad_check(op, base, rng=rng, max_entries=30)


def _randomize_offset_heads(module, rng):
    """Move deformable sampling off the integer grid.

    Freshly initialized offset generators emit dp=0, which parks every sample
    on a bilinear-interpolation kink where central differences are invalid;
    gradient checks of composites therefore perturb the heads first.
    """
    for name, p in module.named_params():
        if ".head." in name or name.startswith("head."):
            if p.value.ndim == 4:
                p.value[...] = rng.standard_normal(p.shape) * 0.25
            else:
                p.value[...] = rng.uniform(0.1, 0.35, p.shape)


def _check_pf(rng):
    pf = blocks.PFBlock(2, rng=np.random.default_rng(rng.integers(1 << 31)))
    _randomize_offset_heads(pf, rng)
    fa = rng.standard_normal((2, 5, 5))
    fb = rng.standard_normal((2, 5, 5))
    return _module_check(pf, [fa, fb], lambda m, a, b: m.forward(a, b), rng, max_entries=20)


def _check_sdi(rng):
    sdi = blocks.SDIFuse(2, num_frames=3, rng=np.random.default_rng(rng.integers(1 << 31)))
    _randomize_offset_heads(sdi, rng)
    feats = [rng.standard_normal((2, 5, 5)) for _ in range(3)]

    def forwarder(m, *fs):
        return m.forward(list(fs))

    return _module_check(sdi, feats, forwarder, rng, max_entries=8)


def _check_rdb(rng):
    rdb = blocks.RDB(3, growth=2, layers=2, rng=np.random.default_rng(rng.integers(1 << 31)))
    x = rng.standard_normal((3, 6, 6))
    return _module_check(rdb, [x], lambda m, v: m.forward(v), rng, max_entries=30)


def _check_se(rng):
    se = blocks.SEFuse(3, 2, rng=np.random.default_rng(rng.integers(1 << 31)))
    feats = [rng.standard_normal((2, 6, 6)) for _ in range(3)]

    def forwarder(m, *fs):
        return m.forward(list(fs))

    return _module_check(se, feats, forwarder, rng, max_entries=30)


def _check_ardb(rng):
    ardb = blocks.ARDB(2, growth=2, layers=2, rng=np.random.default_rng(rng.integers(1 << 31)))
    x = rng.standard_normal((2, 6, 6))
    return _module_check(ardb, [x], lambda m, v: m.forward(v), rng, max_entries=12)


def _check_reconstruction(rng):
    rec = blocks.Reconstruction(8, growth=8, layers=2,
                                rng=np.random.default_rng(rng.integers(1 << 31)))
    x = rng.standard_normal((8, 8, 8))
    return _module_check(rec, [x], lambda m, v: m.forward(v), rng, max_entries=4)


def _check_unet(rng):
    net = blocks.UNet(4, rng=np.random.default_rng(rng.integers(1 << 31)))
    x = rng.standard_normal((4, 8, 8))
    return _module_check(net, [x], lambda m, v: m.forward(v), rng, max_entries=8)


def _check_demosaic_head(rng):
    head = blocks.DemosaicHead(4, rng=np.random.default_rng(rng.integers(1 << 31)))
    x = rng.standard_normal((1, 8, 8))
    return _module_check(head, [x], lambda m, v: m.forward(v), rng, max_entries=20)


def _check_upsample_head(rng):
    head = blocks.UpsampleHead(4, 2, rng=np.random.default_rng(rng.integers(1 << 31)))
    x = rng.standard_normal((4, 6, 6))
    return _module_check(head, [x], lambda m, v: m.forward(v), rng, max_entries=15)


def _check_color_head(rng):
    head = blocks.ColorTransformHead(4, 2, rng=np.random.default_rng(rng.integers(1 << 31)))
    head.head.weight.value[...] = rng.standard_normal(head.head.weight.shape) * 0.2
    x = rng.standard_normal((4, 6, 6))
    return _module_check(head, [x], lambda m, v: m.forward(v), rng, max_entries=15)


def _check_apply_transform(rng):
    x = rng.standard_normal((3, 6, 6))
    field = rng.standard_normal((6, 6, 3, 3))

    def op(xv, tv):
        y, c = blocks.apply_color_transform_fwd(xv, tv)
        return y, lambda gy: blocks.apply_color_transform_bwd(c, gy)

    return grad_check(op, [x, field], rng=rng, max_entries=80)


def _check_ssim(rng):
    a = rng.uniform(0.05, 0.95, (3, 16, 16))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)

    def op(av, bv):
        v, c = metrics.ssim_fwd(av, bv)
        return np.array(v), lambda g: metrics.ssim_bwd(c, float(g))

    # eps 1e-4: the projected scalar is large relative to per-pixel
    # sensitivity, so smaller steps are roundoff-dominated.
    return grad_check(op, [a, b], eps=1e-4, rng=rng, max_entries=40)


def _check_full_loss(rng):
    cfg = RawVSRConfig(num_frames=3, scale=2, feat_channels=8, growth=8,
                       rdb_layers=2, patch_size=8, isp_jitter=False)
    model = RawVSRNet(cfg, rng=np.random.default_rng(rng.integers(1 << 31)))
    # fresh offset/color heads sit at degenerate points (grid-aligned
    # sampling, exact identity transform); perturb them before checking
    _randomize_offset_heads(model, rng)
    raws = rng.uniform(0.1, 0.9, (1, 3, 1, 8, 8))
    ref = rng.uniform(0.1, 0.9, (1, 3, 8, 8))
    gt = rng.uniform(0.1, 0.9, (1, 3, 16, 16))
    _prepare_smooth_point(model, lambda: model.forward(raws, ref))
    params = model.params()

    def op(rv, refv, *pvals):
        for p, v in zip(params, pvals):
            p.value[...] = v
        out, cache = model.forward(rv, refv)
        total, _, lcache = loss_fwd(out, gt, cfg)

        def vjp(g):
            g_final, g_prov = loss_bwd(lcache)
            model.zero_grads()
            g_raws, g_ref = model.backward(cache, float(g) * g_final, float(g) * g_prov)
            return (g_raws, g_ref, *[p.grad.copy() for p in params])

        return np.array(total), vjp

    base = [raws, ref] + [p.value.copy() for p in params]
    return grad_check(op, base, eps=1e-4, rng=rng, max_entries=3)


def _check_deform_reduction(rng):
    x = rng.standard_normal((3, 6, 6))
    dc = blocks.DeformConv2d(3, 4, rng=np.random.default_rng(rng.integers(1 << 31)))
    field = blocks.OffsetField(np.zeros((2 * blocks.TAPS, 6, 6)), np.ones((blocks.TAPS, 6, 6)))
    y, _ = dc.forward(x, field)
    ref = func.conv2d(x[None], dc.weight.value, None, 1, 1)[0]
    return float(np.abs(y - ref).max())


_GRAD_CHECKS = [
    ("conv2d", _check_conv2d, 1e-4),
    ("bilinear_sample", _check_bilinear, 1e-4),
    ("modulated_deform_conv", _check_deform, 1e-4),
    ("offset_generator", _check_offset_gen, 1e-4),
    ("pf_block", _check_pf, 1e-4),
    ("sdi_fuse", _check_sdi, 1e-4),
    ("rdb", _check_rdb, 1e-4),
    ("se_attention", _check_se, 1e-4),
    ("ardb", _check_ardb, 1e-4),
    ("reconstruction", _check_reconstruction, 1e-4),
    ("unet_extract", _check_unet, 1e-4),
    ("demosaic_head", _check_demosaic_head, 1e-4),
    ("upsample_head", _check_upsample_head, 1e-4),
    ("color_transform_head", _check_color_head, 1e-4),
    ("apply_color_transform", _check_apply_transform, 1e-4),
    ("ssim", _check_ssim, 1e-4),
    ("full_loss", _check_full_loss, 1e-3),
]


def suite_grad(seed=0, quick=False):
    rng = np.random.default_rng(seed)
    out = [_result("deformable reduction to conv2d", _check_deform_reduction(rng), 1e-12)]
    for name, check, tol in _GRAD_CHECKS:
        if quick and name in ("reconstruction", "full_loss", "sdi_fuse"):
            continue
        out.append(_result(f"grad {name}", check(rng), tol))
    return out


# --------------------------------------------------------------------------
# pipeline suite


def suite_pipeline(seed=0, quick=False):
    rng = np.random.default_rng(seed)
    out = []

    worst = 0.0
    for r in (1, 2, 4):
        x = rng.standard_normal((2, 16, 8, 8))
        rt1 = func.pixel_unshuffle(func.pixel_shuffle(x, r), r)
        x2 = rng.standard_normal((2, 4, 8, 8))
        rt2 = func.pixel_shuffle(func.pixel_unshuffle(x2, r), r)
        if not (np.array_equal(rt1, x) and np.array_equal(rt2, x2)):
            worst = 1.0
    out.append(_result("pixel shuffle/unshuffle bitwise inversion", worst, 0.0))

    bayer = BayerFrame(rng.uniform(0, 1, (1, 12, 16)))
    ident = mosaic(demosaic_bilinear(bayer))
    out.append(_result(
        "mosaic after demosaic identity",
        0.0 if np.array_equal(ident.data, bayer.data) else 1.0, 0.0,
    ))

    frame = RGBFrame(rng.uniform(0, 1, (3, 16, 16)), "linear")
    cfg = DegradationConfig(scale=2, blur_size=3, sigma1_sq=0.02, sigma2_sq=0.004,
                               rng_seed=77)
    direct = degrade(frame, cfg)
    manual = add_hetero_noise(
        mosaic(downsample(convolve_frame(frame, defocus_kernel(3)), 2)),
        cfg.sigma1_sq, cfg.sigma2_sq, cfg.rng_seed,
    )
    out.append(_result(
        "degrade equals explicit 4-stage composition",
        0.0 if np.array_equal(direct.data, manual.data) else 1.0, 0.0,
    ))

    const = RGBFrame(np.stack([np.full((10, 10), v) for v in (0.8, 0.5, 0.3)]), "linear")
    dev_const = float(np.abs(demosaic_bilinear(mosaic(const)).data - const.data).max())
    ramp = np.tile(np.linspace(0.1, 0.9, 12)[None, None, :], (3, 12, 1))
    ramp_rec = demosaic_bilinear(mosaic(RGBFrame(ramp, "linear"))).data
    dev_ramp = float(np.abs(ramp_rec[:, 2:-2, 2:-2] - ramp[:, 2:-2, 2:-2]).max())
    out.append(_result("demosaic constant exactness", dev_const, 0.0))
    out.append(_result("demosaic interior ramp exactness", dev_ramp, 1e-12))

    n = 1024 if quick else 1024
    big = BayerFrame(np.full((1, n, n), 0.5))
    noisy = add_hetero_noise(big, 0.1, 0.02, seed + 5, clamp=False)
    var = float(np.var(noisy - 0.5))
    target = 0.1 * 0.5 + 0.02
    out.append(_result("noise variance vs sigma1^2*x+sigma2^2", abs(var - target) / target, 0.03))
    return out


SUITES = {"hmm": suite_hmm, "grad": suite_grad, "pipeline": suite_pipeline}


def run_suites(names, seed=0, trials=200, quick=False):
    results = []
    for name in names:
        if name == "hmm":
            results.extend(suite_hmm(seed=seed, trials=trials, quick=quick))
        elif name == "grad":
            results.extend(suite_grad(seed=seed, quick=quick))
        elif name == "pipeline":
            results.extend(suite_pipeline(seed=seed, quick=quick))
        else:
            raise ValueError(f"unknown suite {name!r}")
    return results
