from .kernels import BACKEND
from .ops import conv2d, cosine_loss, residual_block, upconv2x
from .optim import AdamState, adam_step
from .tensor import Tensor, concat_channels, relu
from .train import infer_normals, initial_val_loss, patch_to_arrays, train
from .unet import UNetConfig, init_params, l2_weight_penalty, unet_forward

__all__ = [
    "BACKEND", "Tensor", "relu", "concat_channels",
    "conv2d", "upconv2x", "residual_block", "cosine_loss",
    "AdamState", "adam_step",
    "UNetConfig", "init_params", "unet_forward", "l2_weight_penalty",
    "train", "initial_val_loss", "infer_normals", "patch_to_arrays",
]
