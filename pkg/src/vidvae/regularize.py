"""Mapping functions and the two latent-space alignment losses against a frozen
reference image VAE.

A mapping takes a (B, T+1, H, W, 3) video to T/rho_t + 1 frames (one per latent
frame); frame 0 always passes through unmodified, and each later output frame
summarizes one window of rho_t input frames starting from the second frame:

* ``slice``   — last frame of each window (aligned with the causal last-tap convs)
* ``average`` — arithmetic mean of each window
* ``random``  — uniform pick within each window, seeded per call
* ``first``   — frame 0 only (degenerates the losses to the image case)
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .errors import ContractError, ShapeError
from .model import as_float_array, decode, encode
from .params import ParamStore

PSI_KINDS = ("first", "slice", "average", "random")

_ALIASES = {"first-frame": "first", "1st-frame": "first"}


@dataclass(frozen=True)
class PsiSpec:
    kind: str
    rho_t: int
    rng_seed: int = 0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in PSI_KINDS:
            raise ContractError(f"psi kind must be one of {PSI_KINDS}, got {self.kind!r}")
        if self.rho_t < 1:
            raise ContractError("rho_t must be >= 1")

    def with_seed(self, seed: int) -> "PsiSpec":
        return PsiSpec(self.kind, self.rho_t, seed)


def map_psi(spec: PsiSpec, video: np.ndarray) -> np.ndarray:
    """Apply the mapping; input (B, T+1, H, W, C), T divisible by rho_t."""
    video = np.asarray(video)
    if video.ndim != 5:
        raise ShapeError(f"expected rank-5 video, got {video.shape}")
    total = video.shape[1]
    T = total - 1
    if T % spec.rho_t:
        raise ShapeError(f"frame count {total} is not 1 (mod {spec.rho_t})")
    if spec.kind == "first":
        return video[:, :1].copy()
    windows = T // spec.rho_t
    if spec.kind == "slice":
        return video[:, ::spec.rho_t].copy()
    if spec.kind == "average":
        out = np.empty((video.shape[0], windows + 1) + video.shape[2:], dtype=video.dtype)
        out[:, 0] = video[:, 0]
        for j in range(windows):
            out[:, j + 1] = video[:, 1 + j * spec.rho_t:1 + (j + 1) * spec.rho_t].mean(axis=1)
        return out
    # random: uniform pick within each window, reproducible from rng_seed
    rng = np.random.default_rng(spec.rng_seed)
    picks = [0] + [1 + j * spec.rho_t + int(rng.integers(spec.rho_t)) for j in range(windows)]
    return video[:, picks].copy()


def reg_loss_encoder(image_params: ParamStore, image_cfg: ModelConfig,
                     video_params: ParamStore, video_cfg: ModelConfig,
                     video: np.ndarray, psi: PsiSpec) -> Tensor:
    """Image-encoder route: mean squared error between X and the video decode of
    the frozen image encoder's per-frame posterior means of psi(X). Gradients
    reach only the video decoder."""
    video = as_float_array(video)
    if psi.kind == "first" and video.shape[1] > 1:
        raise ShapeError("first-frame psi cannot reconcile to T+1 frames for a multi-frame video")
    mapped = map_psi(psi, video)
    with ad.no_grad():
        z = encode(image_params, image_cfg, mapped).mean
    recon = decode(video_params, video_cfg, Tensor(z.data))
    if recon.shape != video.shape:
        raise ShapeError(f"decoded shape {recon.shape} does not reconcile with input {video.shape}")
    return ad.mse(recon, Tensor(video))


def reg_loss_decoder(image_params: ParamStore, image_cfg: ModelConfig,
                     video_params: ParamStore, video_cfg: ModelConfig,
                     video: np.ndarray, psi: PsiSpec, eps: np.ndarray | None = None) -> Tensor:
    """Image-decoder route: mean squared error between psi(X) and the frozen
    image decoder's per-frame decode of the video encoder's posterior sample.
    Gradients reach the video encoder through the frozen decoder. With
    psi=first both sides restrict to frame 0 (the degenerate image loss)."""
    video = as_float_array(video)
    posterior = encode(video_params, video_cfg, video, eps=eps)
    recon = decode(image_params, image_cfg, posterior.sample)
    target = map_psi(psi, video)
    if psi.kind == "first":
        recon = ad.narrow(recon, 1, 0, 1)
    if recon.shape != target.shape:
        raise ShapeError(f"image-decoded shape {recon.shape} != psi target {target.shape}")
    return ad.mse(recon, Tensor(target))
