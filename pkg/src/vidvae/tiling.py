"""Block-wise temporal (and optionally spatial) encode/decode of long videos
under a bounded memory footprint.

Temporal blocks hold 1 + f*rho_t frames and overlap their neighbour by exactly
one frame; after encoding, every block but the first discards its first latent
frame before concatenation, so the assembled latent matches the un-tiled
length 1 + T/rho_t. Decoding mirrors this with blocks of 1 + f latent frames,
one-latent overlap and a first-frame discard. Seams are hard cuts; deviations
from the un-tiled path stay within the temporal receptive field of block
boundaries because normalization statistics are per-frame.

Spatial tiles overlap by a configurable band and are blended with linear ramps.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import ModelConfig
from .errors import ShapeError
from .model import check_encode_shape, decode, encode
from .params import ParamStore


@dataclass(frozen=True)
class SpatialGrid:
    tile_h: int
    tile_w: int
    overlap: int


@dataclass
class TilePlan:
    block_frames: int                       # f, latent frames added per full block
    rho_t: int
    blocks: list[tuple[int, int]]           # (start frame, frame count) per block
    discards: list[int]                     # leading latent frames dropped per block
    spatial: SpatialGrid | None = field(default=None)

    @property
    def total_frames(self) -> int:
        return self.blocks[-1][0] + self.blocks[-1][1]

    @property
    def total_latents(self) -> int:
        return sum(1 + (n - 1) // self.rho_t - d for (_, n), d in zip(self.blocks, self.discards))


def plan_tiles(total_frames: int, f: int, rho_t: int,
               spatial: SpatialGrid | None = None) -> TilePlan:
    """Deterministic block plan: block i starts at frame i*f*rho_t, spans
    1 + f*rho_t frames (the last block shrinks to 1 + f'*rho_t, f' >= 1)."""
    if total_frames < 1 or (total_frames - 1) % rho_t:
        raise ShapeError(f"total frames {total_frames} violates 1 (mod {rho_t})")
    if f < 1:
        raise ShapeError("block size f must be >= 1")
    if spatial is not None:
        if spatial.overlap < 0 or spatial.tile_h <= spatial.overlap or spatial.tile_w <= spatial.overlap:
            raise ShapeError("spatial tile extents must exceed the overlap")
    stride = f * rho_t
    blocks = []
    discards = []
    start = 0
    while True:
        count = min(1 + stride, total_frames - start)
        blocks.append((start, count))
        discards.append(0 if start == 0 else 1)
        if start + count >= total_frames:
            break
        start += stride
    return TilePlan(block_frames=f, rho_t=rho_t, blocks=blocks, discards=discards,
                    spatial=spatial)


def _spatial_tiles(extent: int, tile: int, overlap: int) -> list[tuple[int, int]]:
    """(start, size) covering [0, extent) with the requested overlap."""
    if tile >= extent:
        return [(0, extent)]
    step = tile - overlap
    starts = list(range(0, extent - tile, step)) + [extent - tile]
    return [(s, tile) for s in starts]


def _blend_band(length: int, ramp: int, rise: bool) -> np.ndarray:
    w = np.ones(length, dtype=np.float32)
    if ramp > 0:
        r = (np.arange(1, ramp + 1, dtype=np.float32)) / (ramp + 1)
        if rise:
            w[:ramp] = r
        else:
            w[length - ramp:] = r[::-1]
    return w


def _blend_weights(h: int, w: int, pos_h: tuple[int, int], pos_w: tuple[int, int],
                   full_h: int, full_w: int, ramp: int) -> np.ndarray:
    wy = np.ones(h, dtype=np.float32)
    wx = np.ones(w, dtype=np.float32)
    if pos_h[0] > 0:
        wy *= _blend_band(h, ramp, rise=True)
    if pos_h[0] + h < full_h:
        wy *= _blend_band(h, ramp, rise=False)
    if pos_w[0] > 0:
        wx *= _blend_band(w, ramp, rise=True)
    if pos_w[0] + w < full_w:
        wx *= _blend_band(w, ramp, rise=False)
    return wy[:, None] * wx[None, :]


def _run_spatial(fn, x: np.ndarray, grid: SpatialGrid, scale_in: int, scale_out: int,
                 out_channels: int) -> np.ndarray:
    """Apply ``fn`` tile-wise over H/W with linearly blended overlaps.

    ``scale_in``/``scale_out`` relate input tile extents to output extents
    (e.g. encode: rho_s in, 1 out)."""
    B, T, H, W, _ = x.shape
    tiles_h = _spatial_tiles(H, grid.tile_h, grid.overlap)
    tiles_w = _spatial_tiles(W, grid.tile_w, grid.overlap)
    out_h = H * scale_out // scale_in
    out_w = W * scale_out // scale_in
    T_out = None
    acc = None
    norm = np.zeros((out_h, out_w), dtype=np.float32)
    ramp = grid.overlap * scale_out // scale_in
    for (hs, hn) in tiles_h:
        for (ws, wn) in tiles_w:
            tile = x[:, :, hs:hs + hn, ws:ws + wn, :]
            y = fn(tile)
            if acc is None:
                T_out = y.shape[1]
                acc = np.zeros((B, T_out, out_h, out_w, out_channels), dtype=np.float32)
            oh = hs * scale_out // scale_in
            ow = ws * scale_out // scale_in
            weight = _blend_weights(y.shape[2], y.shape[3], (hs, hn), (ws, wn), H, W, ramp)
            acc[:, :, oh:oh + y.shape[2], ow:ow + y.shape[3], :] += y * weight[None, None, :, :, None]
            norm[oh:oh + y.shape[2], ow:ow + y.shape[3]] += weight
    return acc / norm[None, None, :, :, None]


def tiled_encode(params: ParamStore, cfg: ModelConfig, video: np.ndarray,
                 plan: TilePlan, eps_blocks: list[np.ndarray] | None = None) -> np.ndarray:
    """Encode block-wise and concatenate along time, dropping the first latent
    frame of every block after the first. The latent frame count equals the
    un-tiled encoder's. Deterministic posterior means are used unless
    ``eps_blocks`` supplies one noise tensor per block (samples then)."""
    video = np.asarray(video, dtype=np.float32)
    check_encode_shape(cfg, video.shape)
    if plan.total_frames != video.shape[1]:
        raise ShapeError(f"plan covers {plan.total_frames} frames, video has {video.shape[1]}")
    if plan.spatial is not None:
        for v in (plan.spatial.tile_h, plan.spatial.tile_w, plan.spatial.overlap):
            if v % cfg.rho_s:
                raise ShapeError(f"spatial tile extents must be multiples of rho_s={cfg.rho_s}")
        if eps_blocks is not None:
            raise ShapeError("per-block noise is incompatible with spatial tiling")
    if eps_blocks is not None and len(eps_blocks) != len(plan.blocks):
        raise ShapeError(f"expected {len(plan.blocks)} noise blocks, got {len(eps_blocks)}")

    def encode_block(block: np.ndarray, eps=None) -> np.ndarray:
        with ad.no_grad():
            post = encode(params, cfg, block, eps=eps)
            return (post.mean if eps is None else post.sample).data

    pieces = []
    for i, ((start, count), drop) in enumerate(zip(plan.blocks, plan.discards)):
        block = video[:, start:start + count]
        if plan.spatial is not None:
            z = _run_spatial(encode_block, block, plan.spatial, cfg.rho_s, 1,
                             cfg.latent_channels)
        else:
            z = encode_block(block, None if eps_blocks is None else eps_blocks[i])
        pieces.append(z[:, drop:])
    return np.concatenate(pieces, axis=1)


def tiled_decode(params: ParamStore, cfg: ModelConfig, latent: np.ndarray,
                 plan: TilePlan) -> np.ndarray:
    """Decode block-wise with one-latent overlaps, dropping the first decoded
    frame of every block after the first; total frames = 1 + (n-1)*rho_t."""
    latent = np.asarray(latent, dtype=np.float32)
    if latent.ndim != 5 or latent.shape[4] != cfg.latent_channels:
        raise ShapeError(f"expected latent (B, n, h, w, {cfg.latent_channels}), got {latent.shape}")
    n = latent.shape[1]
    f = plan.block_frames

    def decode_block(z: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return decode(params, cfg, z).data

    pieces = []
    start = 0
    first = True
    while True:
        count = min(1 + f, n - start)
        z = latent[:, start:start + count]
        if plan.spatial is not None:
            grid = SpatialGrid(tile_h=max(1, plan.spatial.tile_h // cfg.rho_s),
                               tile_w=max(1, plan.spatial.tile_w // cfg.rho_s),
                               overlap=max(0, plan.spatial.overlap // cfg.rho_s))
            y = _run_spatial(decode_block, z, grid, 1, cfg.rho_s, 3)
        else:
            y = decode_block(z)
        pieces.append(y if first else y[:, 1:])
        first = False
        start += f
        if start + 1 >= n:
            break
    return np.concatenate(pieces, axis=1)
