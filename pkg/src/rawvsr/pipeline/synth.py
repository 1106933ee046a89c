"""Procedural high-resolution source videos with known sub-pixel motion.

Every kind draws its pattern parameters once, then evaluates a closed-form
pattern at motion-shifted coordinates; frame k of a translating sequence is
exactly the pattern sampled at (y - k*vy, x - k*vx). No resampling error, and
integer velocities reproduce pure index shifts bit for bit.
"""

import numpy as np

from ..errors import ContractViolation
from .frames import RGBFrame

KINDS = ("moving_bars", "drifting_texture", "rotating_disk")


def _bars_pattern(rng):
    freqs = 1.0 / rng.uniform(6.0, 14.0, size=3)
    phases = rng.uniform(0.0, 2 * np.pi, size=3)

    def render(yy, xx):
        chans = []
        for c in range(3):
            wave = np.sin(2 * np.pi * freqs[c] * yy + phases[c])
            chans.append(0.5 + 0.42 * np.tanh(3.0 * wave) / np.tanh(3.0))
        return np.stack(chans)

    return render


def _texture_pattern(rng):
    comps = [
        (rng.uniform(-0.25, 0.25, size=2), rng.uniform(0, 2 * np.pi), rng.uniform(0.04, 0.11, size=3))
        for _ in range(6)
    ]

    def render(yy, xx):
        out = np.full((3, *yy.shape), 0.5)
        for (fy, fx), phase, amp in comps:
            wave = np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
            out += amp[:, None, None] * wave[None]
        return np.clip(out, 0.02, 0.98)

    return render


def _disk_pattern(rng, h, w):
    chan_gain = rng.uniform(0.9, 1.1, size=3)
    cy0, cx0 = (h - 1) / 2.0, (w - 1) / 2.0
    rad_max = 0.42 * min(h, w)

    def render(yy, xx, angle):
        cy, cx = yy - cy0, xx - cx0
        rot_y = np.cos(angle) * cy + np.sin(angle) * cx
        rot_x = -np.sin(angle) * cy + np.cos(angle) * cx
        radius = np.hypot(cy, cx)
        disk = radius <= rad_max
        spokes = np.sin(6.0 * np.arctan2(rot_y, rot_x)) * np.sin(0.35 * radius)
        base = 0.5 + 0.4 * spokes
        return np.stack(
            [np.where(disk, np.clip(base * g, 0.02, 0.98), 0.1) for g in chan_gain]
        )

    return render


def synth_video(kind, frames, h, w, seed, velocity=None):
    """Deterministic [0,1] linear sequence; translation <= 3 px/frame."""
    if kind not in KINDS:
        raise ContractViolation(f"unknown kind {kind!r}; choose from {KINDS}")
    if frames < 7:
        raise ContractViolation(f"need at least 7 frames (network window), got {frames}")
    rng = np.random.default_rng(seed)
    if velocity is None:
        velocity = (1.0, 0.0) if kind == "moving_bars" else tuple(rng.uniform(-1.5, 1.5, 2))
    vy, vx = float(velocity[0]), float(velocity[1])
    if max(abs(vy), abs(vx)) > 3.0:
        raise ContractViolation(f"per-frame translation must stay <= 3 px, got {velocity}")
    yy0, xx0 = np.mgrid[0:h, 0:w].astype(np.float64)
    out = []
    if kind == "rotating_disk":
        render = _disk_pattern(rng, h, w)
        for k in range(frames):
            out.append(RGBFrame(render(yy0, xx0, angle=2 * np.pi * k / 60.0), "linear"))
        return out
    render = _bars_pattern(rng) if kind == "moving_bars" else _texture_pattern(rng)
    for k in range(frames):
        out.append(RGBFrame(render(yy0 - vy * k, xx0 - vx * k), "linear"))
    return out
