"""Dual-branch network and its training loss.

The texture branch converts each mosaic frame to features, extracts
multi-scale features per frame, fuses the 2L+1 feature maps through the
pairwise-fusion tree, refines with the attention reconstruction stack, and
upsamples to a provisional frame. The color branch lifts the color reference
with a single convolution, runs the *same* extractor and reconstruction
modules (shared parameter objects), and emits a per-pixel 3x3 transform. The
final frame is exactly the transform applied to the provisional frame.

Loss: MSE(final, gt) + lambda_f * (1 - SSIM(final, gt))
      + lambda_p * (1 - SSIM(provisional, gt)).
The provisional frame is supervised only through SSIM, which tolerates color
shifts, so texture restoration and color correction stay disentangled.
"""

from dataclasses import dataclass

import numpy as np

from . import blocks, metrics
from .core import tensorio
from .core.nn import Conv2d, Module
from .errors import ContractViolation


@dataclass
class NetworkOutput:
    """provisional [*,3,SH,SW], final = transform applied per pixel, and the
    transform field [*,SH,SW,3,3]."""

    provisional: np.ndarray
    final: np.ndarray
    transform: np.ndarray


class RawVSRNet(Module):
    def __init__(self, config, rng=None):
        rng = rng or np.random.default_rng(config.seed)
        c = config.feat_channels
        self.config = config
        self.demosaic = blocks.DemosaicHead(c, rng=rng)
        self.extract = blocks.UNet(c, rng=rng)
        self.sdi = blocks.SDIFuse(c, config.num_frames, rng=rng)
        self.recon = blocks.Reconstruction(
            c, growth=config.growth, layers=config.rdb_layers,
            reduction=config.se_reduction, rng=rng,
        )
        self.upsample = blocks.UpsampleHead(c, config.scale, rng=rng)
        self.ref_conv = Conv2d(3, c, rng=rng, activation=True)
        self.color_head = blocks.ColorTransformHead(c, config.scale, rng=rng)

    # ------------------------------------------------------------------
    def forward(self, raws, color_ref, clamp=False):
        """raws: [N, F, 1, h, w]; color_ref: [N, 3, h, w] (same h, w).

        ``clamp`` clips the provisional frame into [0,1] (inference only);
        the final frame is always the transform applied to the returned
        provisional frame, never separately clamped.
        """
        raws = np.asarray(raws, dtype=np.float64)
        color_ref = np.asarray(color_ref, dtype=np.float64)
        if raws.ndim != 5 or raws.shape[1] != self.config.num_frames:
            raise ContractViolation(
                f"raw stack must be [N,{self.config.num_frames},1,h,w], got {raws.shape}"
            )
        if color_ref.shape != (raws.shape[0], 3, raws.shape[3], raws.shape[4]):
            raise ContractViolation(
                f"color reference {color_ref.shape} does not match raw frames {raws.shape}"
            )
        # all frames share the demosaic/extractor weights; fold them into one
        # batched call and split back into per-frame features for the fusion tree
        n, f = raws.shape[:2]
        stacked = raws.reshape(n * f, 1, raws.shape[3], raws.shape[4])
        d_all, cd = self.demosaic.forward(stacked)
        e_all, ce = self.extract.forward(d_all)
        per_frame = e_all.reshape(n, f, *e_all.shape[1:])
        feats = [np.ascontiguousarray(per_frame[:, k]) for k in range(f)]
        fused, c_sdi = self.sdi.forward(feats)
        refined, c_rec = self.recon.forward(fused)
        provisional, c_up = self.upsample.forward(refined, clamp=clamp)

        lifted, c_ref = self.ref_conv.forward(color_ref)
        ce2, c_ext2 = self.extract.forward(lifted)
        cr2, c_rec2 = self.recon.forward(ce2)
        transform, c_head = self.color_head.forward(cr2)

        final, c_apply = blocks.apply_color_transform_fwd(provisional, transform)
        cache = ((n, f), cd, ce, c_sdi, c_rec, c_up, c_ref, c_ext2, c_rec2, c_head, c_apply)
        return NetworkOutput(provisional, final, transform), cache

    def backward(self, cache, g_final, g_provisional=None):
        """Accumulate parameter gradients; returns (grad_raws, grad_ref)."""
        ((n, f), cd, ce, c_sdi, c_rec, c_up, c_ref, c_ext2, c_rec2, c_head,
         c_apply) = cache
        g_prov, g_transform = blocks.apply_color_transform_bwd(c_apply, g_final)
        if g_provisional is not None:
            g_prov = g_prov + g_provisional

        g_cr2 = self.color_head.backward(c_head, g_transform)
        g_ce2 = self.recon.backward(c_rec2, g_cr2)
        g_lift = self.extract.backward(c_ext2, g_ce2)
        g_ref = self.ref_conv.backward(c_ref, g_lift)

        g_refined = self.upsample.backward(c_up, g_prov)
        g_fused = self.recon.backward(c_rec, g_refined)
        g_feats = self.sdi.backward(c_sdi, g_fused)
        g_all = np.stack(g_feats, axis=1).reshape(n * f, *g_feats[0].shape[1:])
        g_d = self.extract.backward(ce, g_all)
        g_stacked = self.demosaic.backward(cd, g_d)
        return g_stacked.reshape(n, f, *g_stacked.shape[1:]), g_ref

    # ------------------------------------------------------------------
    def state_dict(self):
        return {name: p.value for name, p in self.named_params()}

    def load_state_dict(self, state):
        for name, p in self.named_params():
            if name not in state:
                raise ContractViolation(f"checkpoint is missing parameter {name}")
            if state[name].shape != p.value.shape:
                raise ContractViolation(
                    f"checkpoint shape {state[name].shape} != model shape "
                    f"{p.value.shape} for {name}"
                )
            p.value[...] = state[name]

    def save(self, directory, config_text=None):
        extra = {"config.txt": config_text} if config_text else None
        tensorio.save_checkpoint(directory, self.state_dict(), extra_text=extra)


def loss_fwd(out, gt, config):
    """Total loss, per-term values, and the cache for loss_bwd."""
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != np.shape(out.final):
        raise ContractViolation(f"ground truth {gt.shape} != output {np.shape(out.final)}")
    diff = out.final - gt
    l_mse = float(np.mean(diff * diff))
    ssim_f, cache_f = metrics.ssim_fwd(out.final, gt)
    ssim_p, cache_p = metrics.ssim_fwd(out.provisional, gt)
    l_ssim_f = 1.0 - ssim_f
    l_ssim_p = 1.0 - ssim_p
    total = l_mse + config.lambda_f * l_ssim_f + config.lambda_p * l_ssim_p
    parts = {"loss": total, "mse_f": l_mse, "ssim_f": l_ssim_f, "ssim_p": l_ssim_p}
    return total, parts, (diff, cache_f, cache_p, config)


def loss_bwd(cache):
    """Gradients of the total loss w.r.t. (final, provisional)."""
    diff, cache_f, cache_p, config = cache
    g_final = 2.0 * diff / diff.size
    ga_f, _ = metrics.ssim_bwd(cache_f, -config.lambda_f)
    g_final = g_final + ga_f
    g_prov, _ = metrics.ssim_bwd(cache_p, -config.lambda_p)
    return g_final, g_prov
