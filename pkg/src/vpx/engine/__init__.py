"""Dense-tensor compute core: layers with exact backward passes, SGD, TDF I/O.

Tensors are C-contiguous ``numpy.float32`` arrays laid out as
``(batch, channels, *spatial)``; kernels also accept float64, which the
gradient checks use as their reference precision.
"""
import numpy as np

from .conv import conv_backward, conv_forward, output_extent
from .conv import method as conv_method
from .conv import set_method as set_conv_method
from .ops import (
    batchnorm_backward,
    batchnorm_forward,
    linear_backward,
    linear_forward,
    maxpool_backward,
    maxpool_forward,
    mse_loss,
    relu_backward,
    relu_forward,
    upsample_backward,
    upsample_forward,
)
from .optim import OptimizerState, sgd_step
from .spec import LayerSpec, ShapeError
from .tdf import TDFError, load_archive, load_tdf, read_tdf, save_archive, save_tdf, write_tdf

Tensor = np.ndarray

__all__ = [
    "LayerSpec", "ShapeError", "Tensor", "OptimizerState", "TDFError",
    "conv_forward", "conv_backward", "output_extent", "conv_method", "set_conv_method",
    "batchnorm_forward", "batchnorm_backward", "relu_forward", "relu_backward",
    "maxpool_forward", "maxpool_backward", "linear_forward", "linear_backward",
    "upsample_forward", "upsample_backward", "mse_loss", "sgd_step",
    "read_tdf", "write_tdf", "load_tdf", "save_tdf", "load_archive", "save_archive",
]
