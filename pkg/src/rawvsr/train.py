"""Training loop, Bayer-aware augmentation, sliding-window inference, and
temporal profiles.

Augmentation operates on the packed 4-plane representation of mosaic frames
(one sub-plane per RGGB phase), so flips and 90-degree rotations keep the
RGGB site pattern intact, preserve the frame size, and stay involutive; the
color reference and ground truth receive the plain geometric transform.

When ``isp_jitter`` is enabled, each training sample renders its color
reference and ground truth through a randomly parameterized display pipeline
(from the stored linear sources), which teaches the color branch to follow
the reference style instead of memorizing one fixed rendering.
"""

import time
from pathlib import Path

import numpy as np

from . import metrics
from .core import func
from .core.optim import AdamState, adam_step, lr_schedule
from .errors import ContractViolation, NumericalAbort
from .model import RawVSRNet, loss_fwd, loss_bwd
from .pipeline.degrade import demosaic_bilinear
from .pipeline.frames import BayerFrame, RGBFrame, clip01
from .pipeline.dataset import load_dataset
from .pipeline.isp import IspParams, simulate_isp


# --------------------------------------------------------------------------
# augmentation


def _pack(bayer_plane):
    return func.pixel_unshuffle(bayer_plane[None, None], 2)[0]


def _unpack(planes):
    return func.pixel_shuffle(planes[None], 2)[0, 0]


def _bayer_transform(plane, hflip, rot_k):
    packed = _pack(plane)
    if hflip:
        packed = packed[:, :, ::-1]
    if rot_k:
        packed = np.rot90(packed, rot_k, axes=(1, 2))
    return _unpack(np.ascontiguousarray(packed))


def _rgb_transform(chw, hflip, rot_k):
    if hflip:
        chw = chw[:, :, ::-1]
    if rot_k:
        chw = np.rot90(chw, rot_k, axes=(1, 2))
    return np.ascontiguousarray(chw)


def augment(raw_planes, ref, gt, rng):
    """Consistent random reversal/flip/rotation of one training sample.

    ``raw_planes``: list of [h,w] mosaic planes; ``ref``: [3,h,w];
    ``gt``: [3,H,W]. Rotation requires square patches.
    """
    reverse = bool(rng.integers(2))
    hflip = bool(rng.integers(2))
    rot_k = int(rng.integers(4))
    if rot_k and (raw_planes[0].shape[0] != raw_planes[0].shape[1]):
        raise ContractViolation("rotation augmentation needs square patches")
    if reverse:
        raw_planes = raw_planes[::-1]
    raw_planes = [_bayer_transform(p, hflip, rot_k) for p in raw_planes]
    return raw_planes, _rgb_transform(ref, hflip, rot_k), _rgb_transform(gt, hflip, rot_k)


# --------------------------------------------------------------------------
# sampling


def _jittered_isp(rng):
    return IspParams(
        gamma=2.2,
        exposure=float(rng.uniform(-0.2, 0.4)),
        contrast=float(rng.uniform(-10.0, 10.0)),
        color_temperature=float(rng.uniform(5000.0, 9000.0)),
        quantize_bits=16,
    )


class _Sampler:
    """Random (sequence, center, patch) triples with optional ISP jitter."""

    def __init__(self, sequences, cfg, rng):
        self.sequences = sequences
        self.cfg = cfg
        self.rng = rng
        self.scale = sequences[0].record.scale
        for seq in sequences:
            if seq.record.frame_count < cfg.num_frames:
                raise ContractViolation(
                    f"sequence {seq.record.seq_id} has {seq.record.frame_count} frames; "
                    f"need at least {cfg.num_frames}"
                )
        if cfg.isp_jitter:
            self._lin_lr = [[demosaic_bilinear(b).data for b in seq.y_raw]
                            for seq in sequences]

    def draw(self):
        cfg, rng = self.cfg, self.rng
        half = cfg.half_window
        s = self.scale
        seq_idx = int(rng.integers(len(self.sequences)))
        seq = self.sequences[seq_idx]
        center = int(rng.integers(half, seq.record.frame_count - half))
        h, w = seq.y_raw[0].height, seq.y_raw[0].width
        p = min(cfg.patch_size, h, w)
        y0 = 2 * int(rng.integers((h - p) // 2 + 1))
        x0 = 2 * int(rng.integers((w - p) // 2 + 1))
        raws = [seq.y_raw[center + off].plane()[y0 : y0 + p, x0 : x0 + p]
                for off in range(-half, half + 1)]
        hy, hx = s * y0, s * x0
        if cfg.isp_jitter:
            params = _jittered_isp(rng)
            lr_lin = self._lin_lr[seq_idx][center][:, y0 : y0 + p, x0 : x0 + p]
            ref = simulate_isp(RGBFrame(lr_lin, "linear"), params).data
            hr_lin = seq.x_lin[center].data[:, hy : hy + s * p, hx : hx + s * p]
            gt = simulate_isp(RGBFrame(hr_lin, "linear"), params).data
        else:
            ref = seq.y_rgb[center].data[:, y0 : y0 + p, x0 : x0 + p]
            gt = seq.x_rgb[center].data[:, hy : hy + s * p, hx : hx + s * p]
        return augment(raws, ref, gt, rng)

    def batch(self):
        raws, refs, gts = [], [], []
        for _ in range(self.cfg.batch_size):
            planes, ref, gt = self.draw()
            raws.append(np.stack([p[None] for p in planes]))
            refs.append(ref)
            gts.append(gt)
        return np.stack(raws), np.stack(refs), np.stack(gts)


# --------------------------------------------------------------------------
# training


def train(manifest_path, cfg, out_dir, config_text=None, progress=None):
    """Train from a dataset manifest; returns (checkpoint_dir, log_path).

    Deterministic for a fixed config: a single RNG drives sampling and
    augmentation, the model is seeded separately, and batch gradients are
    reduced in a fixed order. Writes ``checkpoint/`` and ``train_log.txt``
    under ``out_dir``; aborts on a non-finite loss, keeping the last
    epoch-end checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sequences = load_dataset(manifest_path)
    if sequences[0].record.scale != cfg.scale:
        raise ContractViolation(
            f"dataset scale {sequences[0].record.scale} != config scale {cfg.scale}"
        )
    model = RawVSRNet(cfg, rng=np.random.default_rng(cfg.seed))
    params = model.params()
    names = [n for n, _ in model.named_params()]
    for name, p in zip(names, params):
        p.name = name
    states = [AdamState(p.shape) for p in params]
    sampler = _Sampler(sequences, cfg, np.random.default_rng(cfg.seed + 1))
    ckpt_dir = out_dir / "checkpoint"
    log_path = out_dir / "train_log.txt"
    log_lines = []
    epoch_losses = []
    t_start = time.time()
    for step in range(cfg.total_steps):
        epoch = step // cfg.steps_per_epoch
        lr = lr_schedule(epoch, cfg.lr)
        raws, refs, gts = sampler.batch()
        out, cache = model.forward(raws, refs)
        total, parts, loss_cache = loss_fwd(out, gts, cfg)
        if not np.isfinite(total):
            log_lines.append(f"abort step {step} non-finite loss")
            log_path.write_text("\n".join(log_lines) + "\n")
            raise NumericalAbort(
                f"non-finite loss at step {step}; last checkpoint: {ckpt_dir}"
            )
        g_final, g_prov = loss_bwd(loss_cache)
        model.zero_grads()
        model.backward(cache, g_final, g_prov)
        adam_step(params, states, lr)
        batch_psnr = metrics.psnr(clip01(out.final), gts)
        batch_ssim = 1.0 - parts["ssim_f"]
        log_lines.append(
            f"step {step} lr {lr!r} loss {total!r} mse_f {parts['mse_f']!r} "
            f"ssim_f {parts['ssim_f']!r} ssim_p {parts['ssim_p']!r} "
            f"psnr {batch_psnr:.4f} ssim {batch_ssim:.6f}"
        )
        epoch_losses.append(total)
        if (step + 1) % cfg.steps_per_epoch == 0:
            log_lines.append(
                f"epoch {epoch} lr {lr!r} mean_loss {float(np.mean(epoch_losses))!r}"
            )
            epoch_losses = []
            model.save(ckpt_dir, config_text)
            if progress is not None:
                progress(epoch, step, total, time.time() - t_start)
    model.save(ckpt_dir, config_text)
    log_path.write_text("\n".join(log_lines) + "\n")
    return ckpt_dir, log_path


# --------------------------------------------------------------------------
# inference


def load_model(ckpt_dir, cfg):
    from .core.tensorio import load_checkpoint

    model = RawVSRNet(cfg, rng=np.random.default_rng(cfg.seed))
    model.load_state_dict(load_checkpoint(ckpt_dir))
    return model


def infer(model, raw_frames, color_refs=None, isp_params=None):
    """Sliding-window inference over a sequence of BayerFrames.

    Window ends replicate the boundary frames, so the output has one
    (final, provisional) pair per input frame. The color reference per
    window comes from ``color_refs`` (a list of RGBFrames) or is synthesized
    from the center frame via ``isp_params``. The provisional frame is
    clamped at inference; the final frame is the per-pixel transform of that
    clamped provisional frame.
    """
    if (color_refs is None) == (isp_params is None):
        raise ContractViolation("provide exactly one of color_refs or isp_params")
    n = len(raw_frames)
    half = model.config.num_frames // 2
    finals, provisionals = [], []
    for center in range(n):
        idx = np.clip(np.arange(center - half, center + half + 1), 0, n - 1)
        raws = np.stack([raw_frames[i].data for i in idx])[None]
        if color_refs is not None:
            ref = color_refs[center].data
        else:
            ref = simulate_isp(demosaic_bilinear(raw_frames[center]), isp_params).data
        out, _ = model.forward(raws, ref[None], clamp=True)
        finals.append(out.final[0])
        provisionals.append(out.provisional[0])
    return finals, provisionals


def temporal_profile(frames, axis, index):
    """Stack one row (or column) from each frame into a [3, n, length] image."""
    if axis not in ("row", "col"):
        raise ContractViolation(f"axis must be 'row' or 'col', got {axis!r}")
    arrays = [f.data if isinstance(f, RGBFrame) else np.asarray(f) for f in frames]
    h, w = arrays[0].shape[1:]
    limit = h if axis == "row" else w
    if not 0 <= index < limit:
        raise ContractViolation(f"{axis} index {index} out of range [0, {limit})")
    if axis == "row":
        lines = [a[:, index, :] for a in arrays]
    else:
        lines = [a[:, :, index] for a in arrays]
    return np.stack(lines, axis=1)
