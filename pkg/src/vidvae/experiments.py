"""Desk-scale A/B experiments.

* ``ab_compat`` — twin video VAEs against one frozen image VAE: the compatible
  one (inflated + decoder alignment, lambda1=1) versus an independently trained
  one (scratch init, lambda1=lambda2=0); reports the cross-decode MSE (frozen
  image decoder applied to video latents) of both.
* ``psi_comparison`` — one run per mapping kind under identical budgets,
  reporting each model's own video reconstruction MSE on held-out clips.

Both disable the adversarial term: the compared quantity is the effect of the
alignment recipe, and GAN noise at this scale only adds run-to-run variance.
"""

from dataclasses import replace

import numpy as np

from . import autodiff as ad
from .config import ModelConfig
from .inflate import inflate_2d_to_3d
from .model import build_model, decode, encode
from .params import ParamStore
from .regularize import PSI_KINDS, PsiSpec, map_psi
from .synthetic import build_pool
from .train import BatchSchedule, ScheduleEntry, TrainingConfig, train_loop

EVAL_KINDS = ["moving-rects", "bouncing-disc", "drifting-gradient", "textured-noise-pan"]


def pretrain_image_vae(icfg: ModelConfig, steps: int, seed: int, size: int = 32,
                       log_line=None) -> ParamStore:
    """Train a plain image VAE (reconstruction + KL only) on synthetic frames to
    serve as the frozen reference model."""
    _, _, store = build_model(icfg, seed)
    tcfg = TrainingConfig(
        steps=steps, seed=seed, lr=2e-4, lambda1=0.0, lambda2=0.0, adv_weight=0.0,
        psi="first", pool_size=24,
        schedule=BatchSchedule([ScheduleEntry("image", 1, size, size, 4, 1.0)]))
    # with both alignment terms off the frozen reference is never consulted
    train_loop(store, icfg, ParamStore(), icfg, None, tcfg, log_line=log_line)
    return store


def _eval_videos(count: int, frames: int, size: int, seed: int) -> np.ndarray:
    return build_pool(EVAL_KINDS, count, frames, size, size, base_seed=seed)


def cross_decode_mse(video_store: ParamStore, vcfg: ModelConfig,
                     image_store: ParamStore, icfg: ModelConfig,
                     videos: np.ndarray) -> float:
    """MSE of the frozen image decoder on video latents against the slice
    mapping of the input (posterior means, deterministic)."""
    psi = PsiSpec("slice", vcfg.rho_t)
    total = 0.0
    for i in range(videos.shape[0]):
        x = videos[i:i + 1]
        with ad.no_grad():
            z = encode(video_store, vcfg, x).mean
            rec = decode(image_store, icfg, z).data
        total += float(np.mean((rec - map_psi(psi, x)) ** 2))
    return total / videos.shape[0]


def reconstruction_mse(video_store: ParamStore, vcfg: ModelConfig, videos: np.ndarray) -> float:
    total = 0.0
    for i in range(videos.shape[0]):
        x = videos[i:i + 1]
        with ad.no_grad():
            z = encode(video_store, vcfg, x).mean
            rec = decode(video_store, vcfg, z).data
        total += float(np.mean((rec - x) ** 2))
    return total / videos.shape[0]


def _experiment_tcfg(steps: int, seed: int, lambda1: float, psi: str, frames: int,
                     size: int) -> TrainingConfig:
    return TrainingConfig(
        steps=steps, seed=seed, lr=2e-4, lambda1=lambda1, lambda2=0.0, adv_weight=0.0,
        psi=psi, pool_size=24,
        schedule=BatchSchedule([ScheduleEntry("video", frames, size, size, 1, 1.0)]))


def ab_compat(image_store: ParamStore, icfg: ModelConfig, vcfg: ModelConfig,
              steps: int = 1000, seed: int = 0, frames: int = 9, size: int = 32,
              eval_count: int = 8, log_line=None) -> dict[str, float]:
    """Train twin video VAEs and report the cross-decode MSE of both plus their
    ratio (no-reg / reg).

    The compatible twin follows the full recipe: inflated from the frozen image
    VAE and trained with the decoder alignment term (lambda1=1). The
    independent twin trains the same architecture on the same data and budget
    from scratch with lambda1=lambda2=0 — no tie to the image VAE at all, the
    independently-trained failure case."""
    image_store.freeze()
    videos = _eval_videos(eval_count, frames, size, seed=7_000 + seed)
    results = {}
    for label, lam, from_scratch in (("reg", 1.0, False), ("noreg", 0.0, True)):
        if from_scratch:
            _, _, vstore = build_model(vcfg, seed=seed + 500)
        else:
            vstore = inflate_2d_to_3d(image_store, icfg, vcfg)
        tcfg = _experiment_tcfg(steps, seed, lam, "random", frames, size)
        train_loop(vstore, vcfg, image_store, icfg, None, tcfg,
                   log_line=(lambda s, m, lab=label: log_line(lab, s, m)) if log_line else None)
        results[f"cross_decode_mse_{label}"] = cross_decode_mse(vstore, vcfg, image_store, icfg, videos)
        results[f"recon_mse_{label}"] = reconstruction_mse(vstore, vcfg, videos)
    results["ratio"] = results["cross_decode_mse_noreg"] / results["cross_decode_mse_reg"]
    return results


def psi_comparison(image_store: ParamStore, icfg: ModelConfig, vcfg: ModelConfig,
                   steps: int = 600, seed: int = 0, frames: int = 9, size: int = 32,
                   eval_count: int = 12, log_line=None) -> dict[str, float]:
    """Train one model per mapping kind under identical budgets (with cosine
    decay, which damps the late-training target jitter of the stochastic
    mappings); report each model's held-out video reconstruction MSE."""
    image_store.freeze()
    videos = _eval_videos(eval_count, frames, size, seed=7_000 + seed)
    results = {}
    for kind in PSI_KINDS:
        vstore = inflate_2d_to_3d(image_store, icfg, vcfg)
        tcfg = replace(_experiment_tcfg(steps, seed, 1.0, kind, frames, size),
                       cosine_decay=True)
        train_loop(vstore, vcfg, image_store, icfg, None, tcfg,
                   log_line=(lambda s, m, lab=kind: log_line(lab, s, m)) if log_line else None)
        results[kind] = reconstruction_mse(vstore, vcfg, videos)
    return results
