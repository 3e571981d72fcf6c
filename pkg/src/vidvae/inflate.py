"""2D-to-3D weight inflation.

Every conv that gains temporal extent receives the 2D kernel at its LAST
temporal tap (index k_t - 1) with all other taps zero; combined with
reflect-first-frame padding this makes the untrained video model reproduce the
image model exactly on single frames. Temporal-upsample convs replicate the 2D
kernel into each of the ``s`` output-channel groups (biases tiled), so a
constant latent decodes to the constant video the 2D decoder would produce.
Biases and all non-conv parameters are copied verbatim.
"""

import numpy as np

from .config import ModelConfig, check_inflatable
from .errors import InflationError
from .model import Decoder, Encoder
from .params import ParamStore


def _conv_shape_table(cfg: ModelConfig) -> dict[str, tuple]:
    table = {}

    def add_conv(c):
        table[c.name + ".weight"] = c.weight_shape

    for side in (Encoder(cfg), Decoder(cfg)):
        add_conv(side.conv_in)
        for blocks, resample in side.levels:
            for b in blocks:
                add_conv(b.conv_a)
                add_conv(b.conv_b)
                if b.shortcut is not None:
                    add_conv(b.shortcut)
            if resample is not None:
                add_conv(resample.conv)
        for b in side.mid:
            add_conv(b.conv_a)
            add_conv(b.conv_b)
        add_conv(side.conv_out)
    return table


def inflate_weight(w2d: np.ndarray, out_shape: tuple) -> np.ndarray:
    """Embed a (O, I, 1, kh, kw) kernel into ``out_shape``; handles both the
    plain temporal widening and the grouped output-channel replication of
    temporal-upsample convs."""
    o2, i2, kt2, kh2, kw2 = w2d.shape
    o3, i3, kt3, kh3, kw3 = out_shape
    if kt2 != 1 or i2 != i3 or kh2 != kh3 or kw2 != kw3 or o3 % o2:
        raise InflationError(f"cannot inflate kernel {w2d.shape} -> {out_shape}")
    groups = o3 // o2
    out = np.zeros(out_shape, dtype=w2d.dtype)
    for g in range(groups):
        out[g * o2:(g + 1) * o2, :, kt3 - 1] = w2d[:, :, 0]
    return out


def inflate_2d_to_3d(image_params: ParamStore, image_cfg: ModelConfig,
                     video_cfg: ModelConfig) -> ParamStore:
    """Build a video-VAE parameter store initialized from the image VAE."""
    image_cfg.validate()
    video_cfg.validate()
    check_inflatable(image_cfg, video_cfg)

    video_shapes = _conv_shape_table(video_cfg)
    out = ParamStore()
    unmatched = []

    image_names = set(image_params.names())
    expected = set(image_names)  # same topology -> same name set

    for name in sorted(expected):
        src = image_params[name].data
        if name in video_shapes:
            tgt_shape = video_shapes[name]
            if src.shape == tgt_shape:
                out.create(name, src.copy())
            else:
                try:
                    out.create(name, inflate_weight(src, tgt_shape))
                except InflationError:
                    unmatched.append(name)
        elif name.endswith(".bias"):
            conv_w = name[:-5] + ".weight"
            if conv_w in video_shapes:
                o3 = video_shapes[conv_w][0]
                if o3 == src.shape[0]:
                    out.create(name, src.copy())
                elif o3 % src.shape[0] == 0:
                    out.create(name, np.tile(src, o3 // src.shape[0]))
                else:
                    unmatched.append(name)
            else:
                unmatched.append(name)
        else:
            # gains, shifts: identical shapes by construction
            out.create(name, src.copy())

    missing = [n for n in video_shapes if n not in image_names]
    unmatched.extend(missing)
    if unmatched:
        raise InflationError("topology mismatch, unmatched parameters: " + ", ".join(sorted(unmatched)))
    return out
