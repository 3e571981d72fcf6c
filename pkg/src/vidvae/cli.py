"""Command-line entry point.

Exit codes: 0 success, 1 contract error (bad flags, shapes, configs), 2 I/O or
file-format error. Every failure prints a single machine-parseable line
``code=N msg=...`` to stderr.
"""

import argparse
import sys
import time

from . import autodiff as ad
from .config import ModelConfig, image_config_of, parse_kv_file
from .errors import ContractError, FormatError, VidVaeError
from .experiments import ab_compat, pretrain_image_vae
from .inflate import inflate_2d_to_3d
from .metrics import psnr as psnr_fn
from .metrics import video_ssim
from .model import build_discriminator, decode, encode
from .params import ParamStore
from .regularize import PSI_KINDS
from .selftest import run_selftest
from .storage import load_checkpoint, load_raw_video, save_checkpoint, save_raw_video
from .tiling import SpatialGrid, plan_tiles, tiled_decode, tiled_encode
from .train import TrainingConfig, format_metrics, train_loop


class _ArgumentError(ContractError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="vidvae", description="Video VAE with an image-VAE-aligned latent space")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--ckpt-in", help="input checkpoint")
        sp.add_argument("--ckpt-out", help="output checkpoint")
        sp.add_argument("--input", help="input file")
        sp.add_argument("--output", help="output file")
        sp.add_argument("--image-ckpt", help="frozen image VAE checkpoint")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--lambda1", type=float)
        sp.add_argument("--lambda2", type=float)
        sp.add_argument("--psi", choices=PSI_KINDS)
        sp.add_argument("--tile-frames", type=int)
        sp.add_argument("--tile-hw", type=int)
        sp.add_argument("--tile-overlap", type=int, default=0)

    for name in ("inflate", "train", "encode", "decode", "eval", "selftest", "ab-compat"):
        common(sub.add_parser(name))
    return p


def _require(args, *names):
    for n in names:
        if getattr(args, n.replace("-", "_")) is None:
            raise _ArgumentError(f"--{n} is required for this command")


def _video_config_from(args, image_cfg: ModelConfig) -> ModelConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            return ModelConfig.from_kv(parse_kv_file(fh.read()))
    from dataclasses import replace

    return replace(image_cfg, conv_mix="hybrid-2d3d",
                   temporal_down_levels=min(2, image_cfg.spatial_down_levels),
                   temporal_kernel=3).validate()


def _tile_plan(args, cfg: ModelConfig, total_frames: int):
    if args.tile_frames is None:
        return None
    spatial = None
    if args.tile_hw:
        spatial = SpatialGrid(tile_h=args.tile_hw, tile_w=args.tile_hw, overlap=args.tile_overlap)
    return plan_tiles(total_frames, args.tile_frames, cfg.rho_t, spatial=spatial)


def _split_model_stores(store: ParamStore) -> tuple[ParamStore, ParamStore | None]:
    """Split a checkpoint store into VAE (encoder.+decoder.) and disc parts."""
    vae = ParamStore()
    disc = ParamStore()
    for name, t in store.items():
        (disc if name.startswith("disc.") else vae).create(name, t.data)
    return vae, (disc if len(disc) else None)


def cmd_inflate(args) -> int:
    _require(args, "ckpt-in", "ckpt-out")
    image_store, image_cfg = load_checkpoint(args.ckpt_in)
    video_cfg = _video_config_from(args, image_cfg)
    video_store = inflate_2d_to_3d(image_store, image_cfg, video_cfg)
    _, _ = build_discriminator(video_cfg, args.seed, store=video_store)
    save_checkpoint(video_store, video_cfg, args.ckpt_out)
    print(f"inflated={args.ckpt_out} params={video_store.count_params()}")
    return 0


def cmd_train(args) -> int:
    _require(args, "ckpt-in", "image-ckpt", "ckpt-out")
    tcfg = TrainingConfig.from_file(args.config) if args.config else TrainingConfig()
    from dataclasses import replace

    if args.steps is not None:
        tcfg = replace(tcfg, steps=args.steps)
    if args.lambda1 is not None:
        tcfg = replace(tcfg, lambda1=args.lambda1)
    if args.lambda2 is not None:
        tcfg = replace(tcfg, lambda2=args.lambda2)
    if args.psi is not None:
        tcfg = replace(tcfg, psi=args.psi)
    tcfg = replace(tcfg, seed=args.seed)

    store, video_cfg = load_checkpoint(args.ckpt_in)
    image_store, image_cfg = load_checkpoint(args.image_ckpt)
    video_store, disc_store = _split_model_stores(store)

    log_fh = open(args.output, "w", encoding="utf-8") if args.output else None

    def log_line(step, metrics):
        line = format_metrics(step, metrics)
        print(line)
        if log_fh:
            log_fh.write(line + "\n")

    def checkpoint_cb(step):
        merged = video_store.copy()
        if disc_store is not None:
            merged.merge(disc_store.copy())
        save_checkpoint(merged, video_cfg, args.ckpt_out)

    try:
        train_loop(video_store, video_cfg, image_store, image_cfg, disc_store, tcfg,
                   log_line=log_line, checkpoint_cb=checkpoint_cb)
    finally:
        if log_fh:
            log_fh.close()
    checkpoint_cb(tcfg.steps - 1)
    print(f"trained={args.ckpt_out} steps={tcfg.steps}")
    return 0


def cmd_encode(args) -> int:
    _require(args, "ckpt-in", "input", "output")
    store, cfg = load_checkpoint(args.ckpt_in)
    video = load_raw_video(args.input)[None]
    plan = _tile_plan(args, cfg, video.shape[1])
    if plan is not None:
        latent = tiled_encode(store, cfg, video, plan)
    else:
        with ad.no_grad():
            latent = encode(store, cfg, video).mean.data
    save_raw_video(latent[0], args.output)
    print(f"encoded={args.output} frames={video.shape[1]} latents={latent.shape[1]}")
    return 0


def cmd_decode(args) -> int:
    _require(args, "ckpt-in", "input", "output")
    store, cfg = load_checkpoint(args.ckpt_in)
    latent = load_raw_video(args.input)[None]
    plan = _tile_plan(args, cfg, 1 + (latent.shape[1] - 1) * cfg.rho_t)
    if plan is not None:
        video = tiled_decode(store, cfg, latent, plan)
    else:
        with ad.no_grad():
            video = decode(store, cfg, latent).data
    save_raw_video(video[0], args.output)
    print(f"decoded={args.output} latents={latent.shape[1]} frames={video.shape[1]}")
    return 0


def cmd_eval(args) -> int:
    _require(args, "ckpt-in", "input")
    store, cfg = load_checkpoint(args.ckpt_in)
    video = load_raw_video(args.input)[None]
    plan = _tile_plan(args, cfg, video.shape[1])
    if plan is not None:
        latent = tiled_encode(store, cfg, video, plan)
        recon = tiled_decode(store, cfg, latent, plan)
    else:
        with ad.no_grad():
            latent = encode(store, cfg, video).mean.data
            recon = decode(store, cfg, latent).data
    lines = [f"psnr={psnr_fn(video, recon):.6f}", f"ssim={video_ssim(video[0], recon[0]):.6f}"]
    report = "\n".join(lines)
    print(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(report + "\n")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest() else 1


def cmd_ab_compat(args) -> int:
    steps = args.steps if args.steps is not None else 1000
    if args.image_ckpt:
        image_store, image_cfg = load_checkpoint(args.image_ckpt)
    else:
        image_cfg = image_config_of(ModelConfig())
        print("pretraining image VAE (1500 steps)")
        image_store = pretrain_image_vae(image_cfg, steps=1500, seed=args.seed)
    video_cfg = _video_config_from(args, image_cfg)
    t0 = time.perf_counter()
    results = ab_compat(image_store, image_cfg, video_cfg, steps=steps, seed=args.seed)
    results["wall"] = time.perf_counter() - t0
    report = "\n".join(f"{k}={v:.6g}" for k, v in sorted(results.items()))
    print(report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(report + "\n")
    return 0


_COMMANDS = {
    "inflate": cmd_inflate,
    "train": cmd_train,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "selftest": cmd_selftest,
    "ab-compat": cmd_ab_compat,
}


def run(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except (FormatError, OSError) as e:
        print(f"code=2 msg={e}", file=sys.stderr)
        return 2
    except (VidVaeError, ValueError) as e:
        print(f"code=1 msg={e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
