"""Raw-domain data pipeline: degradation, ISP simulation, synthesis, storage."""

from .degrade import (
    BLUR_SIZES,
    DegradationConfig,
    add_hetero_noise,
    bicubic_upsample,
    convolve_frame,
    defocus_kernel,
    degrade,
    demosaic_bilinear,
    downsample,
    mosaic,
)
from .dataset import (
    SequenceData,
    SequenceRecord,
    load_dataset,
    make_dataset,
    read_manifest,
    read_pgm16,
    read_ppm16,
    write_pgm16,
    write_ppm16,
)
from .frames import BayerFrame, RGBFrame, clip01
from .isp import PRESETS, IspParams, preset, simulate_isp, temperature_gains
from .synth import KINDS, synth_video

__all__ = [
    "BLUR_SIZES", "DegradationConfig", "add_hetero_noise", "bicubic_upsample",
    "convolve_frame", "defocus_kernel", "degrade", "demosaic_bilinear",
    "downsample", "mosaic", "SequenceData", "SequenceRecord", "load_dataset",
    "make_dataset", "read_manifest", "read_pgm16", "read_ppm16", "write_pgm16",
    "write_ppm16", "BayerFrame", "RGBFrame", "clip01", "PRESETS", "IspParams",
    "preset", "simulate_isp", "temperature_gains", "KINDS", "synth_video",
]
