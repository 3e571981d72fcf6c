"""Training loop over mixed image/video batches: alternating VAE and
discriminator updates against a frozen reference image VAE."""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ModelConfig, parse_kv_file
from .errors import ConfigError
from .losses import LossWeights, adversarial_losses, total_loss
from .optim import AdamW, cosine_lr
from .params import ParamStore
from .regularize import PsiSpec
from .synthetic import KINDS, build_pool


@dataclass(frozen=True)
class ScheduleEntry:
    tag: str
    frames: int
    height: int
    width: int
    batch_size: int
    probability: float


@dataclass
class BatchSchedule:
    entries: list[ScheduleEntry]

    def validate(self, rho_t: int) -> "BatchSchedule":
        if not self.entries:
            raise ConfigError("batch schedule is empty")
        total = sum(e.probability for e in self.entries)
        if abs(total - 1.0) > 1e-6:
            raise ConfigError(f"schedule probabilities sum to {total}, expected 1")
        for e in self.entries:
            if e.frames < 1 or (e.frames - 1) % rho_t:
                raise ConfigError(
                    f"schedule entry {e.tag!r}: frames {e.frames} violates 1 (mod {rho_t})")
            if e.batch_size < 1:
                raise ConfigError(f"schedule entry {e.tag!r}: batch size must be >= 1")
        return self

    @classmethod
    def parse(cls, text: str) -> "BatchSchedule":
        """Format: ``tag:TxHxW:batch:prob`` entries separated by commas."""
        entries = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                tag, dims, batch, prob = part.split(":")
                t, h, w = (int(v) for v in dims.split("x"))
                entries.append(ScheduleEntry(tag, t, h, w, int(batch), float(prob)))
            except ValueError as e:
                raise ConfigError(f"bad schedule entry {part!r}: {e}") from None
        return cls(entries)


def sample_batch(schedule: BatchSchedule, datasets: dict[str, np.ndarray],
                 rng: np.random.Generator) -> tuple[str, np.ndarray]:
    """Draw one schedule entry by probability and assemble its batch."""
    probs = [e.probability for e in schedule.entries]
    idx = int(rng.choice(len(schedule.entries), p=probs))
    entry = schedule.entries[idx]
    pool = datasets.get(entry.tag)
    if pool is None or len(pool) == 0:
        raise ConfigError(f"no dataset for schedule tag {entry.tag!r}")
    picks = rng.integers(len(pool), size=entry.batch_size)
    batch = pool[picks]
    expect = (entry.frames, entry.height, entry.width, 3)
    if batch.shape[1:] != expect:
        raise ConfigError(f"dataset {entry.tag!r} shape {batch.shape[1:]} != schedule {expect}")
    return entry.tag, batch


@dataclass
class TrainingConfig:
    steps: int = 500
    seed: int = 0
    lr: float = 1e-4
    weight_decay: float = 0.0
    cosine_decay: bool = False
    lambda1: float = 1.0
    lambda2: float = 0.0
    kl_weight: float = 1e-6
    adv_weight: float = 0.1
    adv_start_step: int = 200
    psi: str = "random"
    checkpoint_every: int = 0  # 0 = only at the end
    pool_size: int = 24
    data_kinds: tuple[str, ...] = ("moving-rects", "bouncing-disc", "drifting-gradient")
    schedule: BatchSchedule = field(
        default_factory=lambda: BatchSchedule([ScheduleEntry("video", 9, 32, 32, 1, 1.0)]))

    def weights(self) -> LossWeights:
        return LossWeights(lambda1=self.lambda1, lambda2=self.lambda2, kl_weight=self.kl_weight,
                           adv_weight=self.adv_weight, adv_start_step=self.adv_start_step)

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "TrainingConfig":
        cfg = cls()
        ints = {"steps", "seed", "adv_start_step", "checkpoint_every", "pool_size"}
        floats = {"lr", "weight_decay", "lambda1", "lambda2", "kl_weight", "adv_weight"}
        for key, raw in kv.items():
            if key in ints:
                cfg = replace(cfg, **{key: int(raw)})
            elif key in floats:
                cfg = replace(cfg, **{key: float(raw)})
            elif key == "cosine_decay":
                cfg = replace(cfg, cosine_decay=raw.lower() in ("true", "1", "yes"))
            elif key == "psi":
                cfg = replace(cfg, psi=raw)
            elif key == "schedule":
                cfg = replace(cfg, schedule=BatchSchedule.parse(raw))
            elif key == "data_kinds":
                kinds = tuple(k.strip() for k in raw.split(",") if k.strip())
                for k in kinds:
                    if k not in KINDS:
                        raise ConfigError(f"unknown synthetic kind {k!r}")
                cfg = replace(cfg, data_kinds=kinds)
            else:
                raise ConfigError(f"unknown training config key {key!r}")
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "TrainingConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_kv(parse_kv_file(fh.read()))


def build_datasets(cfg: TrainingConfig, rho_t: int) -> dict[str, np.ndarray]:
    cfg.schedule.validate(rho_t)
    out = {}
    for i, entry in enumerate(cfg.schedule.entries):
        out[entry.tag] = build_pool(list(cfg.data_kinds), cfg.pool_size, entry.frames,
                                    entry.height, entry.width, cfg.seed * 1000 + i * 100)
    return out


def train_step(video_params: ParamStore, video_cfg: ModelConfig,
               image_params: ParamStore, image_cfg: ModelConfig,
               disc_params: ParamStore | None,
               opt_vae: AdamW, opt_disc: AdamW | None,
               batch: np.ndarray, weights: LossWeights, psi: PsiSpec, step: int,
               rng: np.random.Generator, lr: float | None = None) -> dict[str, float]:
    """One alternating update: a VAE step on the full objective, then (when the
    adversarial term is active) a discriminator step on the hinge loss. The
    frozen image VAE is never touched."""
    t0 = time.perf_counter()
    B, T = batch.shape[:2]
    c = video_cfg.latent_channels
    lat_shape = (B, 1 + (T - 1) // video_cfg.rho_t, batch.shape[2] // video_cfg.rho_s,
                 batch.shape[3] // video_cfg.rho_s, c)
    eps = rng.standard_normal(lat_shape).astype(np.float32)
    step_psi = psi.with_seed(int(rng.integers(2 ** 31)))

    opt_vae.zero_grad()
    total, breakdown, recon = total_loss(video_params, video_cfg, image_params, image_cfg,
                                         disc_params, batch, weights, step_psi, step, eps=eps)
    total.backward()
    opt_vae.step(lr=lr)

    disc_value = 0.0
    if weights.adv_active(step) and disc_params is not None and opt_disc is not None:
        opt_disc.zero_grad()
        _, disc_loss = adversarial_losses(disc_params, video_cfg, batch, recon.detach())
        disc_loss.backward()
        opt_disc.step(lr=lr)
        disc_value = disc_loss.item()

    breakdown["disc"] = disc_value
    breakdown["wall"] = time.perf_counter() - t0
    return breakdown


def train_loop(video_params: ParamStore, video_cfg: ModelConfig,
               image_params: ParamStore, image_cfg: ModelConfig,
               disc_params: ParamStore | None, tcfg: TrainingConfig,
               log_line=None, checkpoint_cb=None) -> list[dict[str, float]]:
    """Run tcfg.steps alternating updates; returns the per-step metric dicts.

    ``log_line(step, metrics)`` is called every step; ``checkpoint_cb(step)``
    per the checkpoint cadence.
    """
    image_params.freeze()
    rng = np.random.default_rng(tcfg.seed)
    datasets = build_datasets(tcfg, video_cfg.rho_t)
    weights = tcfg.weights()
    psi = PsiSpec(tcfg.psi, video_cfg.rho_t)

    opt_vae = AdamW(list(video_params.items()), lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    opt_disc = None
    if disc_params is not None:
        opt_disc = AdamW(list(disc_params.items()), lr=tcfg.lr, weight_decay=tcfg.weight_decay)

    history = []
    for step in range(tcfg.steps):
        _, batch = sample_batch(tcfg.schedule, datasets, rng)
        lr = cosine_lr(tcfg.lr, step, tcfg.steps) if tcfg.cosine_decay else None
        metrics = train_step(video_params, video_cfg, image_params, image_cfg, disc_params,
                             opt_vae, opt_disc, batch, weights, psi, step, rng, lr=lr)
        metrics["step"] = step
        history.append(metrics)
        if log_line is not None:
            log_line(step, metrics)
        if checkpoint_cb is not None and tcfg.checkpoint_every and (step + 1) % tcfg.checkpoint_every == 0:
            checkpoint_cb(step)
    return history


def format_metrics(step: int, metrics: dict[str, float]) -> str:
    keys = ("rec", "kl", "gen", "reg_dec", "reg_en", "total", "disc", "wall")
    parts = [f"step={step}"] + [f"{k}={metrics[k]:.6g}" for k in keys if k in metrics]
    return " ".join(parts)
