"""Acceptance gate: one test per criterion, each printing a pass/fail line with
the measured quantity. Criteria 8-10 train models and are marked slow."""

import time
from dataclasses import replace

import numpy as np
import pytest

from vidvae import autodiff as ad
from vidvae.autodiff import Tensor
from vidvae.cli import run as cli_run
from vidvae.config import ALL_3D, ModelConfig, image_config_of
from vidvae.experiments import pretrain_image_vae, psi_comparison
from vidvae.inflate import inflate_2d_to_3d
from vidvae.losses import adversarial_losses, kl_loss
from vidvae.model import (LatentPosterior, build_discriminator, build_model, count_params,
                          decode, encode, temporal_receptive_field)
from vidvae.ops import (ConvKernel3D, conv3d, grad_check, group_norm, temporal_expand,
                        upsample_nearest2x)
from vidvae.regularize import PsiSpec, map_psi, reg_loss_decoder, reg_loss_encoder
from vidvae.storage import load_checkpoint, load_raw_video, save_checkpoint, save_raw_video
from vidvae.synthetic import build_pool
from vidvae.tiling import plan_tiles, tiled_decode, tiled_encode
from vidvae.train import BatchSchedule, ScheduleEntry, TrainingConfig, train_loop

from reference import hinge_losses, kl_elementwise

DESK = ModelConfig()
DESK_IMAGE = image_config_of(DESK)


def _report(criterion: str, passed: bool, detail: str):
    print(f"[acceptance] {criterion}: {'PASS' if passed else 'FAIL'} ({detail})", flush=True)
    assert passed, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def desk_image_store():
    _, _, store = build_model(DESK_IMAGE, seed=1000)
    return store


@pytest.fixture(scope="module")
def desk_video_store(desk_image_store):
    return inflate_2d_to_3d(desk_image_store, DESK_IMAGE, DESK)


def test_criterion_01_inflation_identity(desk_image_store, desk_video_store):
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst_mu = worst_lv = worst_rec = 0.0
    for _ in range(16):
        x = rng.normal(size=(1, 1, 64, 64, 3)).astype(np.float32) * 0.6
        eps = rng.standard_normal((1, 1, 8, 8, DESK.latent_channels)).astype(np.float32)
        with ad.no_grad():
            pi = encode(desk_image_store, DESK_IMAGE, x, eps=eps)
            pv = encode(desk_video_store, DESK, x, eps=eps)
            ri = decode(desk_image_store, DESK_IMAGE, pi.sample).data
            rv = decode(desk_video_store, DESK, pv.sample).data
        worst_mu = max(worst_mu, float(np.abs(pi.mean.data - pv.mean.data).max()))
        worst_lv = max(worst_lv, float(np.abs(pi.log_var.data - pv.log_var.data).max()))
        worst_rec = max(worst_rec, float(np.abs(ri - rv).max()))
    wall = time.perf_counter() - t0
    _report("criterion-1 inflation-identity",
            worst_mu <= 1e-5 and worst_lv <= 1e-5 and worst_rec <= 1e-4 and wall < 60,
            f"mu={worst_mu:.2e} logvar={worst_lv:.2e} rec={worst_rec:.2e} wall={wall:.1f}s")


def test_criterion_02_compression_contract(desk_video_store):
    ok = True
    details = []
    for total in (1, 5, 9, 17, 33):
        x = np.zeros((1, total, 32, 32, 3), dtype=np.float32)
        with ad.no_grad():
            post = encode(desk_video_store, DESK, x)
            n = post.mean.shape[1]
            y = decode(desk_video_store, DESK, post.mean)
        ok = ok and n == 1 + (total - 1) // 4 and y.shape[1] == total
        details.append(f"{total}->{n}->{y.shape[1]}")
    _report("criterion-2 compression-contract", ok, " ".join(details))


def test_criterion_03_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0

    def track(report, what):
        nonlocal worst
        worst = max(worst, report.max_rel_err)
        assert report.passed, (what, report.max_rel_err)

    # elementwise / reduction / shape ops
    x = Tensor(rng.normal(size=(1, 3, 4, 4, 4)) + 0.7)
    for name, fn in [
        ("add", lambda t: ad.mean_all(ad.add(t, 0.3))),
        ("sub", lambda t: ad.mean_all(ad.sub(1.0, t))),
        ("mul", lambda t: ad.mean_all(ad.mul(t, t))),
        ("exp", lambda t: ad.mean_all(ad.exp(t))),
        ("square", lambda t: ad.mean_all(ad.square(t))),
        ("abs", lambda t: ad.mean_all(ad.absolute(t))),
        ("relu", lambda t: ad.mean_all(ad.relu(t))),
        ("leaky_relu", lambda t: ad.mean_all(ad.leaky_relu(t, 0.2))),
        ("silu", lambda t: ad.mean_all(ad.silu(t))),
        ("clamp", lambda t: ad.mean_all(ad.clamp(t, -0.5, 1.4))),
        ("sum", lambda t: ad.sum_all(ad.silu(t))),
        ("narrow", lambda t: ad.mean_all(ad.narrow(t, 4, 1, 2))),
        ("upsample", lambda t: ad.mean_all(upsample_nearest2x(t))),
        ("temporal_expand", lambda t: ad.mean_all(temporal_expand(t, 2))),
    ]:
        track(grad_check(fn, [Tensor(x.data.copy())], tolerance=1e-4), name)

    # conv3d (plain and strided) and group_norm w.r.t. all arguments
    xi = Tensor(rng.normal(size=(1, 5, 6, 6, 2)))
    w = Tensor(rng.normal(size=(3, 2, 3, 3, 3)) * 0.3)
    b = Tensor(rng.normal(size=(3,)) * 0.1)
    for stride in ((1, 1, 1), (2, 2, 2)):
        def conv_fn(xi, w, b, stride=stride):
            k = ConvKernel3D(w, b, stride=stride, spatial_pad=(1, 1))
            return ad.mean_all(ad.square(conv3d(xi, k)))
        track(grad_check(conv_fn, [Tensor(xi.data.copy()), Tensor(w.data.copy()),
                                   Tensor(b.data.copy())], tolerance=1e-4), f"conv3d{stride}")

    gain = Tensor(np.ones(4) + 0.1 * rng.normal(size=4))
    shift = Tensor(0.1 * rng.normal(size=4))
    xg = Tensor(rng.normal(size=(1, 2, 4, 4, 4)))

    def gn_fn(xg, gain, shift):
        return ad.mean_all(ad.square(group_norm(xg, 2, gain, shift)))

    track(grad_check(gn_fn, [xg, gain, shift], tolerance=1e-4), "group_norm")

    # both regularization losses through micro models, sampled coordinates
    vcfg = ModelConfig(latent_channels=2, base_channels=4, channel_multipliers=(1,),
                       spatial_down_levels=1, temporal_down_levels=1, resblocks_per_level=1,
                       norm_groups=4, discriminator_layers=1).validate()
    icfg = image_config_of(vcfg)
    _, _, istore = build_model(icfg, 9)
    i64 = istore.astype(np.float64).freeze()
    v64 = inflate_2d_to_3d(istore, icfg, vcfg).astype(np.float64)
    xv = rng.normal(size=(1, 3, 8, 8, 3)) * 0.5
    eps = rng.standard_normal((1, 2, 4, 4, 2))

    enc_inputs = [v64[n] for n, _ in v64.subset("encoder.")]
    track(grad_check(lambda *_: reg_loss_decoder(i64, icfg, v64, vcfg, xv,
                                                 PsiSpec("slice", vcfg.rho_t), eps=eps),
                     enc_inputs, tolerance=1e-4, sample=10, seed=3), "reg_loss_decoder")
    dec_inputs = [v64[n] for n, _ in v64.subset("decoder.")]
    track(grad_check(lambda *_: reg_loss_encoder(i64, icfg, v64, vcfg, xv,
                                                 PsiSpec("average", vcfg.rho_t)),
                     dec_inputs, tolerance=1e-4, sample=10, seed=4), "reg_loss_encoder")

    wall = time.perf_counter() - t0
    _report("criterion-3 gradient-correctness", worst <= 1e-4 and wall < 300,
            f"max_rel_err={worst:.2e} wall={wall:.1f}s")


def test_criterion_04_closed_form_losses():
    shape = (1, 2, 2, 2, 4)

    def posterior(mu, lv):
        m = Tensor(np.full(shape, mu, dtype=np.float32))
        v = Tensor(np.full(shape, lv, dtype=np.float32))
        return LatentPosterior(mean=m, log_var=v, sample=m, eps=np.zeros(shape, np.float32))

    kl0 = abs(kl_loss(posterior(0.0, 0.0)).item())
    kl1 = abs(kl_loss(posterior(1.0, 0.0)).item() - 0.5)

    rng = np.random.default_rng(11)
    mean = rng.normal(size=shape).astype(np.float32)
    log_var = rng.normal(size=shape).astype(np.float32)
    p = LatentPosterior(mean=Tensor(mean), log_var=Tensor(log_var), sample=Tensor(mean),
                        eps=np.zeros(shape, np.float32))
    kl_err = abs(kl_loss(p).item() - kl_elementwise(mean, log_var))

    cfg = ModelConfig(base_channels=8, channel_multipliers=(1, 2), spatial_down_levels=2,
                      temporal_down_levels=1, latent_channels=2, resblocks_per_level=1,
                      norm_groups=4, discriminator_layers=2).validate()
    _, disc = build_discriminator(cfg, 12)
    real = rng.normal(size=(1, 3, 16, 16, 3)).astype(np.float32)
    fake = rng.normal(size=(1, 3, 16, 16, 3)).astype(np.float32)
    gen, d = adversarial_losses(disc, cfg, real, fake)
    hinge_zero_err = max(abs(d.item() - 2.0), abs(gen.item()))

    disc.set_data("disc.final.weight", 0.2 * rng.normal(
        size=disc["disc.final.weight"].data.shape).astype(np.float32))
    gen2, d2 = adversarial_losses(disc, cfg, real, fake)
    with ad.no_grad():
        from vidvae.model import discriminate
        lr = discriminate(disc, cfg, real).data
        lf = discriminate(disc, cfg, fake).data
    g_ref, d_ref = hinge_losses(lr, lf)
    hinge_err = max(abs(gen2.item() - g_ref), abs(d2.item() - d_ref))

    _report("criterion-4 closed-form-losses",
            kl0 <= 1e-7 and kl1 <= 1e-7 and kl_err <= 1e-6 and hinge_zero_err <= 1e-6
            and hinge_err <= 1e-6,
            f"kl0={kl0:.1e} kl_half={kl1:.1e} kl_oracle={kl_err:.1e} hinge={hinge_err:.1e}")


def test_criterion_05_psi_contract():
    ok = True
    details = []
    rng = np.random.default_rng(13)
    for rho_t in (2, 4, 8):
        for windows in (0, 1, 3):
            total = 1 + windows * rho_t
            video = rng.normal(size=(1, total, 4, 4, 3)).astype(np.float32)
            for kind in ("slice", "average", "random"):
                out = map_psi(PsiSpec(kind, rho_t, rng_seed=1), video)
                ok = ok and out.shape[1] == windows + 1
                ok = ok and np.array_equal(out[:, 0], video[:, 0])
            const = np.full_like(video, 0.25)
            ok = ok and np.allclose(map_psi(PsiSpec("average", rho_t), const), 0.25)
    # random-window membership with full coverage, 100 seeds
    video = np.arange(9, dtype=np.float32)[None, :, None, None, None] * np.ones((1, 9, 2, 2, 3), np.float32)
    seen1, seen2 = set(), set()
    for seed in range(100):
        out = map_psi(PsiSpec("random", 4, rng_seed=seed), video)
        f1, f2 = float(out[0, 1, 0, 0, 0]), float(out[0, 2, 0, 0, 0])
        ok = ok and f1 in {1.0, 2.0, 3.0, 4.0} and f2 in {5.0, 6.0, 7.0, 8.0}
        seen1.add(f1)
        seen2.add(f2)
    ok = ok and seen1 == {1.0, 2.0, 3.0, 4.0} and seen2 == {5.0, 6.0, 7.0, 8.0}
    _report("criterion-5 psi-contract", ok, f"coverage={sorted(seen1)}/{sorted(seen2)}")


def test_criterion_06_hybrid_efficiency():
    hybrid = count_params(build_model(DESK, 0)[2])
    full3d = count_params(build_model(replace(DESK, conv_mix=ALL_3D), 0)[2])
    ratio = hybrid / full3d
    _report("criterion-6 hybrid-efficiency", 0.60 <= ratio <= 0.80,
            f"hybrid={hybrid} all3d={full3d} ratio={ratio:.4f}")


def test_criterion_07_tiling_algebra(desk_video_store):
    t0 = time.perf_counter()
    store = desk_video_store
    ok = True
    details = []
    stride, lookback = temporal_receptive_field(DESK)
    lookback_latents = -(-lookback // stride)
    for total in (9, 17, 33, 65):
        video = build_pool(["drifting-gradient"], 1, total, 16, 16, base_seed=total)[0][None]
        with ad.no_grad():
            ref_z = encode(store, DESK, video).mean.data
        for f in (1, 2, 4):
            plan = plan_tiles(total, f, DESK.rho_t)
            z = tiled_encode(store, DESK, video, plan)
            ok = ok and z.shape == ref_z.shape
            y = tiled_decode(store, DESK, z, plan)
            ok = ok and y.shape[1] == total
            if len(plan.blocks) == 1:
                ok = ok and np.array_equal(z, ref_z)
            else:
                diff = np.abs(z - ref_z).max(axis=(0, 2, 3, 4))
                for j, (start, count) in enumerate(plan.blocks):
                    first_latent = start // DESK.rho_t + plan.discards[j]
                    last_latent = (start + count - 1) // DESK.rho_t
                    safe_start = first_latent + (lookback_latents if j else 0)
                    for latent in range(safe_start, last_latent + 1):
                        ok = ok and diff[latent] == 0.0
        details.append(f"T={total} ok")
    # memory bounded by one block, independent of length
    video17 = build_pool(["drifting-gradient"], 1, 17, 16, 16, base_seed=1)[0][None]
    video65 = build_pool(["drifting-gradient"], 1, 65, 16, 16, base_seed=2)[0][None]
    with ad.MemoryTracker() as t_short:
        tiled_encode(store, DESK, video17, plan_tiles(17, 1, 4))
    with ad.MemoryTracker() as t_long:
        tiled_encode(store, DESK, video65, plan_tiles(65, 1, 4))
    with ad.MemoryTracker() as t_block:
        with ad.no_grad():
            encode(store, DESK, video17[:, :5])
    mem_ok = t_long.peak_delta <= 1.5 * t_short.peak_delta and t_long.peak_delta <= 8 * t_block.peak_delta
    wall = time.perf_counter() - t0
    _report("criterion-7 tiling-algebra", ok and mem_ok and wall < 120,
            f"{' '.join(details)} mem_long/block={t_long.peak_delta / max(t_block.peak_delta, 1):.2f} wall={wall:.1f}s")


@pytest.mark.slow
def test_criterion_08_training_smoke():
    from vidvae.experiments import _eval_videos, reconstruction_mse

    t0 = time.perf_counter()
    _, _, istore = build_model(DESK_IMAGE, seed=100)
    istore.freeze()
    vstore = inflate_2d_to_3d(istore, DESK_IMAGE, DESK)
    _, dstore = build_discriminator(DESK, seed=101)
    tcfg = TrainingConfig(steps=500, seed=0, lambda1=1.0, adv_weight=0.1, adv_start_step=200,
                          psi="random", pool_size=24,
                          schedule=BatchSchedule([ScheduleEntry("video", 9, 32, 32, 1, 1.0)]))
    videos = _eval_videos(6, 9, 32, seed=5555)
    mse0 = reconstruction_mse(vstore, DESK, videos)
    train_loop(vstore, DESK, istore, DESK_IMAGE, dstore, tcfg)
    mse1 = reconstruction_mse(vstore, DESK, videos)
    wall = time.perf_counter() - t0
    _report("criterion-8 training-smoke", mse1 <= 0.5 * mse0 and wall < 900,
            f"mse {mse0:.4f} -> {mse1:.4f} (ratio {mse1 / mse0:.3f}) wall={wall:.0f}s")


@pytest.fixture(scope="module")
def pretrained_image(tmp_path_factory):
    store = pretrain_image_vae(DESK_IMAGE, steps=1500, seed=0)
    path = tmp_path_factory.mktemp("accept") / "image.ckpt"
    save_checkpoint(store, DESK_IMAGE, str(path))
    return store, path


@pytest.mark.slow
def test_criterion_09_compatibility_ordering(pretrained_image, tmp_path):
    store, path = pretrained_image
    report_path = tmp_path / "ab.txt"
    t0 = time.perf_counter()
    rc = cli_run(["ab-compat", "--image-ckpt", str(path), "--steps", "1000", "--seed", "0",
                  "--output", str(report_path)])
    wall = time.perf_counter() - t0
    assert rc == 0
    kv = dict(line.split("=", 1) for line in report_path.read_text().strip().splitlines())
    reg = float(kv["cross_decode_mse_reg"])
    noreg = float(kv["cross_decode_mse_noreg"])
    _report("criterion-9 compatibility-ordering",
            noreg >= 2.0 * reg and wall < 2400,
            f"cross reg={reg:.5f} noreg={noreg:.5f} factor={noreg / reg:.2f} wall={wall:.0f}s")


@pytest.mark.slow
def test_criterion_10_mapping_function_ordering(pretrained_image):
    store, _ = pretrained_image
    t0 = time.perf_counter()
    results = psi_comparison(store, DESK_IMAGE, DESK, steps=600, seed=0)
    wall = time.perf_counter() - t0
    detail = " ".join(f"{k}={v:.5f}" for k, v in results.items()) + f" wall={wall:.0f}s"
    _report("criterion-10 mapping-ordering",
            results["random"] <= results["first"] and wall < 2400, detail)


def test_criterion_11_format_roundtrips(tmp_path, desk_image_store):
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(desk_image_store, DESK_IMAGE, str(p1))
    loaded, cfg = load_checkpoint(str(p1))
    save_checkpoint(loaded, cfg, str(p2))
    ckpt_ok = p1.read_bytes() == p2.read_bytes()

    rng = np.random.default_rng(0)
    video = rng.normal(size=(5, 16, 16, 3)).astype(np.float32)
    rv = tmp_path / "v.rawv"
    save_raw_video(video, str(rv))
    raw_ok = np.array_equal(load_raw_video(str(rv)), video)

    bad_magic = tmp_path / "bad_magic.ckpt"
    blob = bytearray(p1.read_bytes())
    blob[1] ^= 0x55
    bad_magic.write_bytes(bytes(blob))
    rc_magic = cli_run(["encode", "--ckpt-in", str(bad_magic), "--input", str(rv),
                        "--output", str(tmp_path / "o")])
    bad_version = tmp_path / "bad_version.ckpt"
    blob = bytearray(p1.read_bytes())
    blob[4] = 0xEE
    bad_version.write_bytes(bytes(blob))
    rc_version = cli_run(["encode", "--ckpt-in", str(bad_version), "--input", str(rv),
                          "--output", str(tmp_path / "o")])

    _report("criterion-11 format-roundtrips",
            ckpt_ok and raw_ok and rc_magic == 2 and rc_version == 2,
            f"ckpt_idempotent={ckpt_ok} raw={raw_ok} exit_magic={rc_magic} exit_version={rc_version}")
