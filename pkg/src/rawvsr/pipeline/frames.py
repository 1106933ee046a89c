"""Frame value types: full-color frames and RGGB mosaic frames."""

import numpy as np

from ..errors import ContractViolation

_RANGE_TOL = 1e-9


def clip01(data):
    return np.clip(data, 0.0, 1.0)


def _checked(data, shape_hint):
    data = np.ascontiguousarray(data, dtype=np.float64)
    if np.min(data) < -_RANGE_TOL or np.max(data) > 1.0 + _RANGE_TOL:
        raise ContractViolation(
            f"{shape_hint} values outside [0,1]: min={data.min():g} max={data.max():g}"
        )
    return clip01(data)


class RGBFrame:
    """[3,H,W] frame in [0,1]; ``color_state`` is 'linear' or 'display'."""

    __slots__ = ("data", "color_state")

    def __init__(self, data, color_state="linear"):
        data = _checked(data, "RGBFrame")
        if data.ndim != 3 or data.shape[0] != 3:
            raise ContractViolation(f"RGBFrame expects [3,H,W], got {data.shape}")
        if color_state not in ("linear", "display"):
            raise ContractViolation(f"unknown color_state {color_state!r}")
        self.data = data
        self.color_state = color_state

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


class BayerFrame:
    """[1,H,W] single-channel mosaic, fixed RGGB: R at (even,even),
    G at (even,odd)/(odd,even), B at (odd,odd). Dims must be even."""

    pattern = "RGGB"
    __slots__ = ("data",)

    def __init__(self, data):
        data = _checked(data, "BayerFrame")
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] != 1:
            raise ContractViolation(f"BayerFrame expects [1,H,W], got {data.shape}")
        if data.shape[1] % 2 or data.shape[2] % 2:
            raise ContractViolation(
                f"BayerFrame dims must be even for RGGB tiling, got {data.shape[1:]}"
            )
        self.data = data

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def plane(self):
        return self.data[0]
