"""Parametric display pipeline turning linear frames into color references.

Stage order: exposure gain, white balance (from color temperature), 3x3 color
matrix, contrast remap around mid-gray, gamma encoding, quantization. Each
stage clamps to [0,1]. The temperature-to-gain map is piecewise linear with
gain_R(6000K)=1.0, gain_R(8000K)=1.25 and gain_B mirrored, so warmer settings
strictly raise R and lower B.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation
from .frames import RGBFrame, clip01


def _identity_matrix():
    return np.eye(3)


@dataclass(frozen=True)
class IspParams:
    wb_gains: tuple = (1.0, 1.0, 1.0)
    color_matrix: np.ndarray = field(default_factory=_identity_matrix)
    gamma: float = 2.2
    exposure: float = 0.0
    contrast: float = 0.0
    color_temperature: float = 6000.0
    quantize_bits: int = 8

    def __post_init__(self):
        object.__setattr__(self, "color_matrix", np.asarray(self.color_matrix, dtype=np.float64))
        if len(self.wb_gains) != 3 or any(g <= 0 for g in self.wb_gains):
            raise ContractViolation(f"wb_gains must be 3 positive reals, got {self.wb_gains}")
        if abs(self.wb_gains[1] - 1.0) > 1e-12:
            raise ContractViolation("green white-balance gain must be 1 (normalization)")
        if self.color_matrix.shape != (3, 3):
            raise ContractViolation(f"color_matrix must be 3x3, got {self.color_matrix.shape}")
        if np.any(np.abs(self.color_matrix.sum(axis=1) - 1.0) > 1e-9):
            raise ContractViolation("color_matrix rows must sum to 1 (white-preserving)")
        if self.gamma <= 0:
            raise ContractViolation(f"gamma must be positive, got {self.gamma}")
        if self.quantize_bits not in (8, 16):
            raise ContractViolation(f"quantize_bits must be 8 or 16, got {self.quantize_bits}")


def temperature_gains(kelvin):
    """(r, g, b) gains; linear in temperature, anchored at 6000K/8000K."""
    delta = 0.25 * (kelvin - 6000.0) / 2000.0
    r = max(1.0 + delta, 0.05)
    b = max(1.0 - delta, 0.05)
    return r, 1.0, b


def simulate_isp(frame, params):
    """Render a linear frame to a display-referred color reference."""
    if frame.color_state != "linear":
        raise ContractViolation("simulate_isp expects a linear frame")
    x = frame.data * 2.0**params.exposure
    x = clip01(x)
    tr, tg, tb = temperature_gains(params.color_temperature)
    gains = np.array([params.wb_gains[0] * tr, tg, params.wb_gains[2] * tb])
    x = clip01(x * gains[:, None, None])
    x = clip01(np.einsum("cd,dhw->chw", params.color_matrix, x))
    x = clip01(0.5 + (1.0 + params.contrast / 100.0) * (x - 0.5))
    x = x ** (1.0 / params.gamma)
    maxv = 2**params.quantize_bits - 1
    x = np.round(x * maxv) / maxv
    return RGBFrame(x, "display")


# Simulated device styles: warm/cold shift only the temperature; bright also
# lifts exposure and softens contrast.
PRESETS = {
    "neutral": IspParams(),
    "warm": IspParams(color_temperature=8000.0),
    "cold": IspParams(color_temperature=5200.0),
    "bright": IspParams(exposure=0.7, contrast=-8.0, color_temperature=6500.0),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ContractViolation(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
