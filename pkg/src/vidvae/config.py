"""Declarative encoder/decoder/discriminator topology.

The same dataclass describes the pure image VAE (conv_mix="all-2d"), the hybrid
2D+3D video VAE and the all-3D variant; weight inflation requires two configs
that differ only in conv_mix, temporal levels and temporal kernel size.
"""

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

ALL_2D = "all-2d"
HYBRID = "hybrid-2d3d"
ALL_3D = "all-3d"

CONV_MIXES = (ALL_2D, HYBRID, ALL_3D)

# Fields allowed to differ between an image config and its inflated video config.
INFLATION_FIELDS = ("conv_mix", "temporal_down_levels", "temporal_kernel")


@dataclass(frozen=True)
class ModelConfig:
    latent_channels: int = 4
    base_channels: int = 16
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    spatial_down_levels: int = 3
    temporal_down_levels: int = 2
    resblocks_per_level: int = 2
    conv_mix: str = HYBRID
    temporal_kernel: int = 3
    discriminator_layers: int = 3
    norm_groups: int = 8
    mid_attention: bool = False

    @property
    def rho_s(self) -> int:
        return 2 ** self.spatial_down_levels

    @property
    def rho_t(self) -> int:
        return 2 ** self.temporal_down_levels

    @property
    def levels(self) -> int:
        return len(self.channel_multipliers)

    def width(self, level: int) -> int:
        return self.base_channels * self.channel_multipliers[level]

    def validate(self) -> "ModelConfig":
        if self.conv_mix not in CONV_MIXES:
            raise ConfigError(f"conv_mix must be one of {CONV_MIXES}, got {self.conv_mix!r}")
        if not self.channel_multipliers:
            raise ConfigError("channel_multipliers must be non-empty")
        if self.spatial_down_levels < 0 or self.spatial_down_levels > self.levels:
            raise ConfigError("spatial_down_levels must lie in [0, len(channel_multipliers)]")
        if self.temporal_down_levels < 0 or self.temporal_down_levels > self.spatial_down_levels:
            raise ConfigError("temporal_down_levels must lie in [0, spatial_down_levels]")
        if self.conv_mix == ALL_2D and self.temporal_down_levels != 0:
            raise ConfigError("all-2d models are pure image VAEs: temporal_down_levels must be 0")
        if self.temporal_kernel < 1:
            raise ConfigError("temporal_kernel must be >= 1")
        if self.latent_channels < 1 or self.base_channels < 1 or self.resblocks_per_level < 1:
            raise ConfigError("latent_channels, base_channels, resblocks_per_level must be >= 1")
        if self.discriminator_layers < 1:
            raise ConfigError("discriminator_layers must be >= 1")
        for m in self.channel_multipliers:
            if (self.base_channels * m) % self.norm_groups:
                raise ConfigError(
                    f"width {self.base_channels * m} not divisible by norm_groups {self.norm_groups}")
        if self.mid_attention:
            raise ConfigError("mid_attention is not supported at desk scale (mid block is ResBlocks)")
        return self

    def kt(self) -> int:
        """Effective temporal kernel extent for 3D-assigned convs."""
        return 1 if self.conv_mix == ALL_2D else self.temporal_kernel

    # -- key=value serialization (shared with checkpoint config blocks) ------

    def to_kv(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "channel_multipliers":
                v = ",".join(str(m) for m in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out[f.name] = str(v)
        return out

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, raw in kv.items():
            if key not in by_name:
                raise ConfigError(f"unknown model config key {key!r}")
            if key == "channel_multipliers":
                kwargs[key] = tuple(int(p) for p in raw.split(",") if p)
            elif key == "conv_mix":
                kwargs[key] = raw
            elif key == "mid_attention":
                kwargs[key] = raw.lower() in ("true", "1", "yes")
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs).validate()


def image_config_of(video: ModelConfig) -> ModelConfig:
    """The all-2d config with the same channel topology as ``video``."""
    return replace(video, conv_mix=ALL_2D, temporal_down_levels=0, temporal_kernel=1)


def check_inflatable(image: ModelConfig, video: ModelConfig) -> None:
    """Configs may differ only in conv_mix, temporal levels and k_t."""
    from .errors import InflationError

    for f in fields(ModelConfig):
        if f.name in INFLATION_FIELDS:
            continue
        if getattr(image, f.name) != getattr(video, f.name):
            raise InflationError(f"configs differ in {f.name!r}, which inflation cannot bridge")
    if image.conv_mix != ALL_2D:
        raise InflationError("inflation source must be an all-2d image config")


def parse_kv_file(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_kv(kv: dict[str, str]) -> str:
    return "".join(f"{k}={kv[k]}\n" for k in sorted(kv))
