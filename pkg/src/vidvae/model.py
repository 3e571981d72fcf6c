"""Encoder, decoder and discriminator construction plus the encode/decode entry
points.

Structure (mirroring the SD-VAE block family at configurable width):

* encoder: conv_in -> [ResBlock x R, Downsample]* -> mid ResBlocks -> norm/act ->
  conv_out emitting 2c channels (posterior mean and log-variance).
* decoder: conv_in -> mid ResBlocks -> [ResBlock x R, Upsample]* (levels in
  reverse) -> norm/act -> conv_out emitting 3 channels.
* discriminator: strided conv stack with leaky activations and a zero-initialized
  final layer producing patch logits.

Temporal downsampling happens via stride-2 temporal convs at the first
``temporal_down_levels`` encoder levels; temporal upsampling via convs whose
output channels are doubled followed by a channel-to-time reshape that leaves
the first frame un-expanded, so n latent frames decode to 1 + (n-1) * rho_t
pixel frames.

Hybrid 2D+3D assignment is fixed: within each ResBlock conv_a is 3D and conv_b
is 2D, shortcuts stay 2D; conv_in is 3D and conv_out 2D; down/upsample convs are
3D exactly where they carry temporal stride or expansion.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ALL_2D, ALL_3D, ModelConfig
from .errors import ShapeError
from .ops import REFLECT_FIRST, ConvKernel3D, conv3d, group_norm, temporal_expand, upsample_nearest2x
from .params import ParamStore

LOG_VAR_CLAMP = (-30.0, 20.0)


def as_float_array(x) -> np.ndarray:
    """float32 by default; float64 arrays pass through (gradient-check mode)."""
    arr = np.asarray(x)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


def _conv_kt(cfg: ModelConfig, role: str) -> int:
    """Temporal kernel extent for a conv given the config's 2D/3D mix."""
    if cfg.conv_mix == ALL_2D:
        return 1
    if cfg.conv_mix == ALL_3D:
        return cfg.temporal_kernel
    three_d = role in ("conv_a", "conv_in", "temporal_resample")
    return cfg.temporal_kernel if three_d else 1


class Conv:
    def __init__(self, name: str, in_ch: int, out_ch: int, kt: int, ks: int = 3,
                 stride: tuple[int, int, int] = (1, 1, 1), pad: int | None = None):
        self.name = name
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kt = kt
        self.ks = ks
        self.stride = stride
        self.pad = (ks // 2) if pad is None else pad

    @property
    def weight_shape(self) -> tuple:
        return (self.out_ch, self.in_ch, self.kt, self.ks, self.ks)

    def init_params(self, store: ParamStore, rng: np.random.Generator, zero: bool = False) -> None:
        fan_in = self.in_ch * self.kt * self.ks * self.ks
        if zero:
            w = np.zeros(self.weight_shape, dtype=np.float32)
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), self.weight_shape).astype(np.float32)
        store.create(self.name + ".weight", w)
        store.create(self.name + ".bias", np.zeros(self.out_ch, dtype=np.float32))

    def __call__(self, store: ParamStore, x: Tensor) -> Tensor:
        k = ConvKernel3D(store[self.name + ".weight"], store[self.name + ".bias"],
                         stride=self.stride, spatial_pad=(self.pad, self.pad),
                         temporal_pad=REFLECT_FIRST)
        return conv3d(x, k)


class Norm:
    def __init__(self, name: str, channels: int, groups: int):
        self.name = name
        self.channels = channels
        self.groups = groups

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        store.create(self.name + ".gain", np.ones(self.channels, dtype=np.float32))
        store.create(self.name + ".shift", np.zeros(self.channels, dtype=np.float32))

    def __call__(self, store: ParamStore, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, store[self.name + ".gain"], store[self.name + ".shift"])


class ResBlock:
    def __init__(self, name: str, cfg: ModelConfig, in_ch: int, out_ch: int):
        self.norm1 = Norm(name + ".norm1", in_ch, cfg.norm_groups)
        self.conv_a = Conv(name + ".conv_a", in_ch, out_ch, _conv_kt(cfg, "conv_a"))
        self.norm2 = Norm(name + ".norm2", out_ch, cfg.norm_groups)
        self.conv_b = Conv(name + ".conv_b", out_ch, out_ch, _conv_kt(cfg, "conv_b"))
        self.shortcut = None
        if in_ch != out_ch:
            self.shortcut = Conv(name + ".shortcut", in_ch, out_ch, _conv_kt(cfg, "shortcut"), ks=1)

    def init_params(self, store, rng):
        self.norm1.init_params(store, rng)
        self.conv_a.init_params(store, rng)
        self.norm2.init_params(store, rng)
        self.conv_b.init_params(store, rng)
        if self.shortcut is not None:
            self.shortcut.init_params(store, rng)

    def __call__(self, store, x):
        h = self.conv_a(store, ad.silu(self.norm1(store, x)))
        h = self.conv_b(store, ad.silu(self.norm2(store, h)))
        skip = x if self.shortcut is None else self.shortcut(store, x)
        return ad.add(skip, h)


class Downsample:
    def __init__(self, name: str, cfg: ModelConfig, channels: int, temporal: bool):
        role = "temporal_resample" if temporal else "spatial_resample"
        kt = _conv_kt(cfg, role)
        st = 2 if temporal else 1
        self.conv = Conv(name + ".conv", channels, channels, kt, stride=(st, 2, 2))

    def init_params(self, store, rng):
        self.conv.init_params(store, rng)

    def __call__(self, store, x):
        return self.conv(store, x)


class Upsample:
    def __init__(self, name: str, cfg: ModelConfig, channels: int, temporal: bool):
        role = "temporal_resample" if temporal else "spatial_resample"
        kt = _conv_kt(cfg, role)
        self.temporal = temporal
        self.factor = 2
        out_ch = channels * (self.factor if temporal else 1)
        self.conv = Conv(name + ".conv", channels, out_ch, kt)

    def init_params(self, store, rng):
        self.conv.init_params(store, rng)

    def __call__(self, store, x):
        x = upsample_nearest2x(x)
        x = self.conv(store, x)
        if self.temporal:
            x = temporal_expand(x, self.factor)
        return x


class Encoder:
    def __init__(self, cfg: ModelConfig, prefix: str = "encoder"):
        self.cfg = cfg
        self.conv_in = Conv(f"{prefix}.conv_in", 3, cfg.width(0), _conv_kt(cfg, "conv_in"))
        self.levels = []
        ch = cfg.width(0)
        for lvl in range(cfg.levels):
            out = cfg.width(lvl)
            blocks = []
            for i in range(cfg.resblocks_per_level):
                blocks.append(ResBlock(f"{prefix}.level{lvl}.res{i}", cfg, ch, out))
                ch = out
            down = None
            if lvl < cfg.spatial_down_levels:
                down = Downsample(f"{prefix}.level{lvl}.down", cfg, ch,
                                  temporal=lvl < cfg.temporal_down_levels)
            self.levels.append((blocks, down))
        self.mid = [ResBlock(f"{prefix}.mid.res{i}", cfg, ch, ch) for i in range(2)]
        self.norm_out = Norm(f"{prefix}.norm_out", ch, cfg.norm_groups)
        self.conv_out = Conv(f"{prefix}.conv_out", ch, 2 * cfg.latent_channels,
                             _conv_kt(cfg, "conv_out"))

    def init_params(self, store, rng):
        self.conv_in.init_params(store, rng)
        for blocks, down in self.levels:
            for b in blocks:
                b.init_params(store, rng)
            if down is not None:
                down.init_params(store, rng)
        for b in self.mid:
            b.init_params(store, rng)
        self.norm_out.init_params(store, rng)
        self.conv_out.init_params(store, rng)

    def __call__(self, store, x: Tensor) -> Tensor:
        h = self.conv_in(store, x)
        for blocks, down in self.levels:
            for b in blocks:
                h = b(store, h)
            if down is not None:
                h = down(store, h)
        for b in self.mid:
            h = b(store, h)
        return self.conv_out(store, ad.silu(self.norm_out(store, h)))


class Decoder:
    def __init__(self, cfg: ModelConfig, prefix: str = "decoder"):
        self.cfg = cfg
        ch = cfg.width(cfg.levels - 1)
        self.conv_in = Conv(f"{prefix}.conv_in", cfg.latent_channels, ch, _conv_kt(cfg, "conv_in"))
        self.mid = [ResBlock(f"{prefix}.mid.res{i}", cfg, ch, ch) for i in range(2)]
        self.levels = []
        for lvl in reversed(range(cfg.levels)):
            out = cfg.width(lvl)
            blocks = []
            for i in range(cfg.resblocks_per_level):
                blocks.append(ResBlock(f"{prefix}.level{lvl}.res{i}", cfg, ch, out))
                ch = out
            up = None
            if lvl < cfg.spatial_down_levels:
                up = Upsample(f"{prefix}.level{lvl}.up", cfg, ch,
                              temporal=lvl < cfg.temporal_down_levels)
            self.levels.append((blocks, up))
        self.norm_out = Norm(f"{prefix}.norm_out", ch, cfg.norm_groups)
        self.conv_out = Conv(f"{prefix}.conv_out", ch, 3, _conv_kt(cfg, "conv_out"))

    def init_params(self, store, rng):
        self.conv_in.init_params(store, rng)
        for b in self.mid:
            b.init_params(store, rng)
        for blocks, up in self.levels:
            for b in blocks:
                b.init_params(store, rng)
            if up is not None:
                up.init_params(store, rng)
        self.norm_out.init_params(store, rng)
        self.conv_out.init_params(store, rng)

    def __call__(self, store, z: Tensor) -> Tensor:
        h = self.conv_in(store, z)
        for b in self.mid:
            h = b(store, h)
        for blocks, up in self.levels:
            for b in blocks:
                h = b(store, h)
            if up is not None:
                h = up(store, h)
        return self.conv_out(store, ad.silu(self.norm_out(store, h)))


class Discriminator:
    """Strided 3D conv stack with leaky activations and patch logits
    (hinge-compatible). The final layer is zero-initialized so a fresh
    discriminator scores everything 0."""

    def __init__(self, cfg: ModelConfig, prefix: str = "disc"):
        self.cfg = cfg
        kt = cfg.temporal_kernel
        self.convs = []
        ch = 3
        for i in range(cfg.discriminator_layers):
            out = cfg.base_channels * min(2 ** i, 8)
            self.convs.append(Conv(f"{prefix}.conv{i}", ch, out, kt, stride=(1, 2, 2)))
            ch = out
        self.final = Conv(f"{prefix}.final", ch, 1, kt)

    def init_params(self, store, rng):
        for c in self.convs:
            c.init_params(store, rng)
        self.final.init_params(store, rng, zero=True)

    def __call__(self, store, x: Tensor) -> Tensor:
        h = x
        for c in self.convs:
            h = ad.leaky_relu(c(store, h), 0.2)
        return self.final(store, h)


@dataclass
class LatentPosterior:
    """Diagonal Gaussian q(z|x): mean, log-variance and a recorded sample
    mean + exp(log_var / 2) * eps. All three share the latent shape."""

    mean: Tensor
    log_var: Tensor
    sample: Tensor
    eps: np.ndarray


def build_model(cfg: ModelConfig, seed: int) -> tuple[Encoder, Decoder, ParamStore]:
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore()
    enc = Encoder(cfg)
    dec = Decoder(cfg)
    enc.init_params(store, rng)
    dec.init_params(store, rng)
    return enc, dec, store


def build_discriminator(cfg: ModelConfig, seed: int, store: ParamStore | None = None) -> tuple[Discriminator, ParamStore]:
    cfg.validate()
    rng = np.random.default_rng(seed)
    if store is None:
        store = ParamStore()
    disc = Discriminator(cfg)
    disc.init_params(store, rng)
    return disc, store


def check_encode_shape(cfg: ModelConfig, shape: tuple) -> None:
    if len(shape) != 5 or shape[4] != 3:
        raise ShapeError(f"expected (B, T, H, W, 3) pixel tensor, got {shape}")
    B, T, H, W, C = shape
    if T < 1 or (T - 1) % cfg.rho_t:
        raise ShapeError(
            f"frame count {T} violates the T = 1 (mod {cfg.rho_t}) congruence required by "
            f"temporal compression rate {cfg.rho_t}")
    if H % cfg.rho_s or W % cfg.rho_s:
        raise ShapeError(f"H, W must be divisible by rho_s={cfg.rho_s}, got {H}x{W}")


def encode(store: ParamStore, cfg: ModelConfig, video, eps=None,
           rng: np.random.Generator | None = None) -> LatentPosterior:
    """Run the encoder and form the posterior. Deterministic given ``eps``;
    with ``eps=None`` noise comes from ``rng`` (or is zero if neither given,
    i.e. the sample equals the mean)."""
    x = video if isinstance(video, Tensor) else Tensor(as_float_array(video))
    check_encode_shape(cfg, x.shape)
    stats = Encoder(cfg)(store, x)
    c = cfg.latent_channels
    mean = ad.narrow(stats, 4, 0, c)
    log_var = ad.clamp(ad.narrow(stats, 4, c, c), *LOG_VAR_CLAMP)
    if eps is None:
        if rng is None:
            eps = np.zeros(mean.shape, dtype=mean.data.dtype)
        else:
            eps = rng.standard_normal(mean.shape).astype(mean.data.dtype)
    else:
        eps = np.asarray(eps, dtype=mean.data.dtype)
        if eps.shape != mean.shape:
            raise ShapeError(f"eps shape {eps.shape} != posterior shape {mean.shape}")
    std = ad.exp(ad.mul(log_var, 0.5))
    sample = ad.add(mean, ad.mul(std, Tensor(eps)))
    return LatentPosterior(mean=mean, log_var=log_var, sample=sample, eps=eps)


def decode(store: ParamStore, cfg: ModelConfig, latent) -> Tensor:
    """Decode n latent frames into 1 + (n-1) * rho_t pixel frames."""
    z = latent if isinstance(latent, Tensor) else Tensor(as_float_array(latent))
    if z.data.ndim != 5 or z.shape[4] != cfg.latent_channels:
        raise ShapeError(
            f"expected latent (B, n, h, w, {cfg.latent_channels}), got {z.shape}")
    return Decoder(cfg)(store, z)


def discriminate(store: ParamStore, cfg: ModelConfig, video) -> Tensor:
    """Patch-level real/fake logit map for a pixel video."""
    x = video if isinstance(video, Tensor) else Tensor(as_float_array(video))
    if x.data.ndim != 5 or x.shape[4] != 3 or x.shape[1] < 1:
        raise ShapeError(f"expected (B, T>=1, H, W, 3) pixel tensor, got {x.shape}")
    return Discriminator(cfg)(store, x)


def count_params(store: ParamStore) -> int:
    return store.count_params()


def temporal_receptive_field(cfg: ModelConfig) -> tuple[int, int]:
    """(anchor_stride, lookback): latent frame j is anchored at input frame
    j * anchor_stride and, under last-tap alignment, depends only on input
    frames in [j * anchor_stride - lookback, j * anchor_stride]."""
    rate = 1
    lookback = 0

    def visit_conv(conv: Conv):
        nonlocal rate, lookback
        lookback += (conv.kt - 1) * rate
        rate *= conv.stride[0]

    def visit_res(b: ResBlock):
        # the main path dominates the parallel shortcut
        visit_conv(b.conv_a)
        visit_conv(b.conv_b)

    enc = Encoder(cfg)
    visit_conv(enc.conv_in)
    for blocks, down in enc.levels:
        for b in blocks:
            visit_res(b)
        if down is not None:
            visit_conv(down.conv)
    for b in enc.mid:
        visit_res(b)
    visit_conv(enc.conv_out)
    return rate, lookback
