"""Dense-tensor substrate: functional ops, layers, optimizer, oracles, I/O."""

from . import func, nn, optim, tensorio
from .func import bilinear_sample, conv2d, pixel_shuffle, pixel_unshuffle
from .gradcheck import grad_check
from .nn import Conv2d, Linear, Module
from .optim import AdamState, Param, adam_step, lr_schedule
from .tensorio import load_checkpoint, load_tensor, save_checkpoint, save_tensor

__all__ = [
    "func", "nn", "optim", "tensorio",
    "conv2d", "pixel_shuffle", "pixel_unshuffle", "bilinear_sample",
    "grad_check", "Module", "Conv2d", "Linear",
    "Param", "AdamState", "adam_step", "lr_schedule",
    "save_tensor", "load_tensor", "save_checkpoint", "load_checkpoint",
]
