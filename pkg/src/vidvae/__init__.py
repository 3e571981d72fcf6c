"""Video VAE with spatio-temporal compression and a latent space aligned, via
regularization, to a frozen reference image VAE."""

from .config import ModelConfig, image_config_of
from .inflate import inflate_2d_to_3d
from .model import build_discriminator, build_model, count_params, decode, discriminate, encode
from .params import ParamStore
from .regularize import PsiSpec, map_psi, reg_loss_decoder, reg_loss_encoder
from .storage import load_checkpoint, load_raw_video, save_checkpoint, save_raw_video
from .tiling import TilePlan, plan_tiles, tiled_decode, tiled_encode

__version__ = "0.1.0"

__all__ = [
    "ModelConfig", "image_config_of", "ParamStore",
    "build_model", "build_discriminator", "encode", "decode", "discriminate", "count_params",
    "inflate_2d_to_3d",
    "PsiSpec", "map_psi", "reg_loss_encoder", "reg_loss_decoder",
    "TilePlan", "plan_tiles", "tiled_encode", "tiled_decode",
    "save_checkpoint", "load_checkpoint", "save_raw_video", "load_raw_video",
]
