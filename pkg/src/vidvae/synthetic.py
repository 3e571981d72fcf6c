"""Synthetic video generation for training and evaluation.

All kinds emit (frames, H, W, 3) float32 in [-1, 1] with temporally coherent
motion, deterministically from the spec's seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

KINDS = ("moving-rects", "drifting-gradient", "bouncing-disc", "textured-noise-pan")


@dataclass(frozen=True)
class SyntheticVideoSpec:
    kind: str
    frames: int = 9
    height: int = 32
    width: int = 32
    object_count: int = 3
    velocity: float = 1.5  # max displacement per frame, pixels
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r}")
        if self.frames < 1 or self.height < 4 or self.width < 4:
            raise ConfigError("degenerate synthetic video dimensions")


def _bounce(p: float, v: float, lo: float, hi: float) -> tuple[float, float]:
    p += v
    if p < lo:
        p, v = 2 * lo - p, -v
    elif p > hi:
        p, v = 2 * hi - p, -v
    return p, v


def _moving_rects(spec: SyntheticVideoSpec, rng: np.random.Generator) -> np.ndarray:
    F, H, W = spec.frames, spec.height, spec.width
    out = np.full((F, H, W, 3), -0.85, dtype=np.float32)
    for _ in range(spec.object_count):
        rh = int(rng.integers(H // 8 + 2, H // 3 + 2))
        rw = int(rng.integers(W // 8 + 2, W // 3 + 2))
        y = float(rng.uniform(0, H - rh))
        x = float(rng.uniform(0, W - rw))
        vy = float(rng.uniform(-spec.velocity, spec.velocity))
        vx = float(rng.uniform(-spec.velocity, spec.velocity))
        color = rng.uniform(-0.6, 1.0, size=3).astype(np.float32)
        for t in range(F):
            yi, xi = int(round(y)), int(round(x))
            out[t, yi:yi + rh, xi:xi + rw] = color
            y, vy = _bounce(y, vy, 0, H - rh)
            x, vx = _bounce(x, vx, 0, W - rw)
    return out


def _drifting_gradient(spec: SyntheticVideoSpec, rng: np.random.Generator) -> np.ndarray:
    F, H, W = spec.frames, spec.height, spec.width
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    out = np.zeros((F, H, W, 3), dtype=np.float32)
    for c in range(3):
        fy = rng.uniform(0.5, 1.5) / H
        fx = rng.uniform(0.5, 1.5) / W
        phase = rng.uniform(0, 2 * np.pi)
        # phase speed bounded so the pattern drifts <= velocity px/frame
        speed = 2 * np.pi * max(fy, fx) * rng.uniform(0.2, 1.0) * spec.velocity
        for t in range(F):
            out[t, :, :, c] = np.sin(2 * np.pi * (fy * yy + fx * xx) + phase + speed * t)
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def _render_disc(H: int, W: int, cy: float, cx: float, r: float, color) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    alpha = np.clip(r - dist, 0.0, 1.0)[..., None]  # 1px smooth edge
    return alpha * color


def _bouncing_disc(spec: SyntheticVideoSpec, rng: np.random.Generator) -> np.ndarray:
    F, H, W = spec.frames, spec.height, spec.width
    r = max(2.0, min(H, W) / 6.0)
    margin = r + 1.5
    cy = float(rng.uniform(margin, H - 1 - margin))
    cx = float(rng.uniform(margin, W - 1 - margin))
    vy = float(rng.uniform(0.3, 1.0)) * spec.velocity * (1 if rng.random() < 0.5 else -1)
    vx = float(rng.uniform(0.3, 1.0)) * spec.velocity * (1 if rng.random() < 0.5 else -1)
    color = rng.uniform(0.2, 1.0, size=3).astype(np.float32)
    out = np.full((F, H, W, 3), -1.0, dtype=np.float32)
    for t in range(F):
        out[t] += 2.0 * _render_disc(H, W, cy, cx, r, color)
        cy, vy = _bounce(cy, vy, margin, H - 1 - margin)
        cx, vx = _bounce(cx, vx, margin, W - 1 - margin)
    return np.clip(out, -1.0, 1.0)


def _textured_noise_pan(spec: SyntheticVideoSpec, rng: np.random.Generator) -> np.ndarray:
    F, H, W = spec.frames, spec.height, spec.width
    tex = rng.uniform(-1.0, 1.0, size=(H, W, 3)).astype(np.float32)
    # light box smoothing keeps the texture compressible but structured
    for axis in (0, 1):
        tex = (tex + np.roll(tex, 1, axis=axis) + np.roll(tex, -1, axis=axis)) / 3.0
    vy = int(np.trunc(rng.uniform(-spec.velocity, spec.velocity)))
    vx = int(np.trunc(rng.uniform(-spec.velocity, spec.velocity)))
    if vy == 0 and vx == 0:
        vx = 1
    out = np.empty((F, H, W, 3), dtype=np.float32)
    for t in range(F):
        out[t] = np.roll(tex, (t * vy, t * vx), axis=(0, 1))
    return np.clip(out, -1.0, 1.0)


_GENERATORS = {
    "moving-rects": _moving_rects,
    "drifting-gradient": _drifting_gradient,
    "bouncing-disc": _bouncing_disc,
    "textured-noise-pan": _textured_noise_pan,
}


def gen_synthetic(spec: SyntheticVideoSpec) -> np.ndarray:
    """Deterministic (frames, H, W, 3) video in [-1, 1] for the spec's seed."""
    rng = np.random.default_rng(spec.seed)
    video = _GENERATORS[spec.kind](spec, rng)
    assert video.dtype == np.float32 and video.shape == (spec.frames, spec.height, spec.width, 3)
    return video


def build_pool(kinds: list[str], count: int, frames: int, height: int, width: int,
               base_seed: int) -> np.ndarray:
    """(count, frames, H, W, 3) pool cycling through the requested kinds."""
    if count < 1:
        raise ConfigError("synthetic pool must have at least one video")
    vids = []
    for i in range(count):
        spec = SyntheticVideoSpec(kind=kinds[i % len(kinds)], frames=frames, height=height,
                                  width=width, seed=base_seed + i)
        vids.append(gen_synthetic(spec))
    return np.stack(vids)
