"""On-disk datasets: 16-bit PGM/PPM frame files plus a line-oriented manifest.

Per sequence the four artifacts are written under ``<out>/<seq_id>/``:
``y_raw_%04d.pgm`` (degraded mosaic), ``y_rgb_%04d.ppm`` (its rendered
reference), ``x_rgb_%04d.ppm`` (rendered ground truth), ``x_lin_%04d.ppm``
(linear source, stored without gamma). Manifest records are
``id frame_count scale blur_size sigma1_sq sigma2_sq seed relative_dir``.
The per-frame noise seed is ``config.rng_seed + frame_index``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractViolation
from .degrade import DegradationConfig, add_hetero_noise, degrade
from .frames import BayerFrame, RGBFrame
from .isp import simulate_isp

MANIFEST_NAME = "manifest.txt"


# --------------------------------------------------------------------------
# Netpbm 16-bit I/O (binary P5/P6, maxval 65535, big-endian samples)


def _write_netpbm(path, magic, plane_hw_or_hwc):
    arr = plane_hw_or_hwc
    h, w = arr.shape[:2]
    quant = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(">u2")
    try:
        with open(path, "wb") as fh:
            fh.write(f"{magic}\n{w} {h}\n65535\n".encode())
            fh.write(quant.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def write_pgm16(path, plane):
    _write_netpbm(path, "P5", np.asarray(plane))


def write_ppm16(path, chw):
    _write_netpbm(path, "P6", np.transpose(np.asarray(chw), (1, 2, 0)))


def _read_netpbm(path, magic):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"failed reading {path}: {exc}") from exc
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0].decode() != magic:
        raise ContractViolation(f"{path}: expected {magic}, got {fields[0].decode()!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 65535:
        raise ContractViolation(f"{path}: expected 16-bit maxval 65535, got {maxval}")
    channels = 1 if magic == "P5" else 3
    data = np.frombuffer(raw, dtype=">u2", offset=pos, count=h * w * channels)
    data = data.astype(np.float64) / 65535.0
    if magic == "P5":
        return data.reshape(h, w)
    return np.transpose(data.reshape(h, w, 3), (2, 0, 1))


def read_pgm16(path):
    return _read_netpbm(path, "P5")


def read_ppm16(path):
    return _read_netpbm(path, "P6")


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class SequenceRecord:
    seq_id: str
    frame_count: int
    scale: int
    blur_size: int
    sigma1_sq: float
    sigma2_sq: float
    seed: int
    rel_dir: str

    def to_line(self):
        return (
            f"{self.seq_id} {self.frame_count} {self.scale} {self.blur_size} "
            f"{self.sigma1_sq!r} {self.sigma2_sq!r} {self.seed} {self.rel_dir}"
        )

    @classmethod
    def from_line(cls, line):
        f = line.split()
        if len(f) != 8:
            raise ContractViolation(f"malformed manifest record: {line!r}")
        return cls(f[0], int(f[1]), int(f[2]), int(f[3]), float(f[4]), float(f[5]),
                   int(f[6]), f[7])


def read_manifest(path):
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    return [SequenceRecord.from_line(ln) for ln in lines]


def _append_manifest(out_dir, record):
    with open(Path(out_dir) / MANIFEST_NAME, "a") as fh:
        fh.write(record.to_line() + "\n")


# --------------------------------------------------------------------------
# dataset construction


def frame_noise_seed(config, frame_index):
    return config.rng_seed + frame_index


def make_dataset(hr_frames, config, isp, out_dir, seq_id="seq0000", append=False):
    """Degrade one HR sequence and write all four per-frame artifacts.

    Returns the manifest path. ``append=True`` adds to an existing manifest
    (used when synthesizing multi-sequence datasets).
    """
    if len(hr_frames) < 7:
        raise ContractViolation(f"need at least 7 frames, got {len(hr_frames)}")
    s = config.scale
    for f in hr_frames:
        if f.height % (2 * s) or f.width % (2 * s):
            raise ContractViolation(
                f"frame {f.height}x{f.width} not divisible by 2*scale={2 * s}"
            )
    out_dir = Path(out_dir)
    seq_dir = out_dir / seq_id
    seq_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / MANIFEST_NAME
    if not append and manifest.exists():
        manifest.unlink()
    for k, x_lin in enumerate(hr_frames):
        per_frame = DegradationConfig(
            scale=s, blur_size=config.blur_size, sigma1_sq=config.sigma1_sq,
            sigma2_sq=config.sigma2_sq, rng_seed=frame_noise_seed(config, k),
        )
        y_raw = degrade(x_lin, per_frame)
        from .degrade import demosaic_bilinear

        y_rgb = simulate_isp(demosaic_bilinear(y_raw), isp)
        x_rgb = simulate_isp(x_lin, isp)
        write_pgm16(seq_dir / f"y_raw_{k:04d}.pgm", y_raw.plane())
        write_ppm16(seq_dir / f"y_rgb_{k:04d}.ppm", y_rgb.data)
        write_ppm16(seq_dir / f"x_rgb_{k:04d}.ppm", x_rgb.data)
        write_ppm16(seq_dir / f"x_lin_{k:04d}.ppm", x_lin.data)
    record = SequenceRecord(
        seq_id=seq_id, frame_count=len(hr_frames), scale=s, blur_size=config.blur_size,
        sigma1_sq=config.sigma1_sq, sigma2_sq=config.sigma2_sq, seed=config.rng_seed,
        rel_dir=seq_id,
    )
    _append_manifest(out_dir, record)
    return manifest


class SequenceData:
    """All frames of one sequence loaded into memory."""

    def __init__(self, record, base_dir):
        seq_dir = Path(base_dir) / record.rel_dir
        self.record = record
        self.y_raw = [BayerFrame(read_pgm16(seq_dir / f"y_raw_{k:04d}.pgm")[None])
                      for k in range(record.frame_count)]
        self.y_rgb = [RGBFrame(read_ppm16(seq_dir / f"y_rgb_{k:04d}.ppm"), "display")
                      for k in range(record.frame_count)]
        self.x_rgb = [RGBFrame(read_ppm16(seq_dir / f"x_rgb_{k:04d}.ppm"), "display")
                      for k in range(record.frame_count)]
        self.x_lin = [RGBFrame(read_ppm16(seq_dir / f"x_lin_{k:04d}.ppm"), "linear")
                      for k in range(record.frame_count)]


def load_dataset(manifest_path):
    manifest_path = Path(manifest_path)
    records = read_manifest(manifest_path)
    if not records:
        raise ContractViolation(f"empty manifest: {manifest_path}")
    return [SequenceData(rec, manifest_path.parent) for rec in records]
