"""Self-contained invariant suite behind the ``selftest`` CLI command.

Each check raises AssertionError on violation; the runner prints one pass/fail
line per property. Checks use small configs so the whole suite stays fast.
"""

import os
import tempfile

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ALL_3D, ModelConfig, image_config_of
from .inflate import inflate_2d_to_3d
from .losses import adversarial_losses, kl_loss
from .metrics import psnr, ssim
from .model import (LatentPosterior, build_discriminator, build_model, count_params, decode,
                    encode, temporal_receptive_field)
from .ops import ConvKernel3D, conv3d, grad_check, group_norm
from .regularize import PsiSpec, map_psi
from .storage import load_checkpoint, load_raw_video, save_checkpoint, save_raw_video
from .synthetic import SyntheticVideoSpec, gen_synthetic
from .tiling import plan_tiles, tiled_decode, tiled_encode


def _tiny_cfg() -> ModelConfig:
    return ModelConfig(latent_channels=2, base_channels=8, channel_multipliers=(1, 2),
                       spatial_down_levels=2, temporal_down_levels=1, resblocks_per_level=1,
                       norm_groups=4, discriminator_layers=2).validate()


def _loop_conv(x, w, b, stride, pad):
    """Direct nested-loop conv used as the in-package oracle."""
    O, I, kt, kh, kw = w.shape
    st, sh, sw = stride
    x = np.concatenate([np.repeat(x[:, :1], kt - 1, axis=1), x], axis=1) if kt > 1 else x
    x = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad), (0, 0)])
    B, Tp, Hp, Wp, _ = x.shape
    To, Ho, Wo = (Tp - kt) // st + 1, (Hp - kh) // sh + 1, (Wp - kw) // sw + 1
    out = np.zeros((B, To, Ho, Wo, O))
    for bi in range(B):
        for t in range(To):
            for i in range(Ho):
                for j in range(Wo):
                    patch = x[bi, t * st:t * st + kt, i * sh:i * sh + kh, j * sw:j * sw + kw]
                    for o in range(O):
                        out[bi, t, i, j, o] = np.sum(patch * w[o].transpose(1, 2, 3, 0)) + b[o]
    return out


def check_conv_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 3, 5, 5, 2))
    w = rng.normal(size=(2, 2, 3, 3, 3))
    b = rng.normal(size=(2,))
    k = ConvKernel3D(Tensor(w), Tensor(b), stride=(1, 2, 2), spatial_pad=(1, 1))
    got = conv3d(Tensor(x), k).data
    ref = _loop_conv(x, w, b, (1, 2, 2), 1)
    assert np.abs(got - ref).max() <= 1e-10


def check_conv_2d_equivalence():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 4, 6, 6, 3)).astype(np.float32)
    w = rng.normal(size=(2, 3, 1, 3, 3)).astype(np.float32)
    k = ConvKernel3D(Tensor(w), Tensor(np.zeros(2, np.float32)), spatial_pad=(1, 1))
    full = conv3d(Tensor(x), k).data
    for t in range(4):
        frame = conv3d(Tensor(x[:, t:t + 1]), k).data
        assert np.array_equal(full[:, t:t + 1], frame)


def check_conv_causality():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 6, 4, 4, 2)).astype(np.float32)
    w = rng.normal(size=(2, 2, 3, 3, 3)).astype(np.float32)
    k = ConvKernel3D(Tensor(w), Tensor(np.zeros(2, np.float32)), spatial_pad=(1, 1))
    base = conv3d(Tensor(x), k).data
    cut = x.copy()
    cut[:, 3:] = 0
    out = conv3d(Tensor(cut), k).data
    assert np.array_equal(out[:, :3], base[:, :3])


def check_group_norm_statistics():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 6, 6, 8)).astype(np.float32)
    y = group_norm(Tensor(x), 4, Tensor(np.ones(8, np.float32)),
                   Tensor(np.zeros(8, np.float32))).data
    yg = y.reshape(2, 3, 6, 6, 4, 2)
    mean = yg.mean(axis=(2, 3, 5))
    var = yg.var(axis=(2, 3, 5))
    assert np.abs(mean).max() <= 1e-5
    assert np.abs(var - 1).max() <= 1e-3


def check_gradients():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(1, 3, 4, 4, 2)))
    w = Tensor(rng.normal(size=(4, 2, 3, 3, 3)) * 0.3)
    b = Tensor(np.zeros(4))
    gain = Tensor(np.ones(4))
    shift = Tensor(np.zeros(4))

    def f(x, w, b, gain, shift):
        k = ConvKernel3D(w, b, spatial_pad=(1, 1))
        return ad.mean_all(ad.silu(group_norm(conv3d(x, k), 2, gain, shift)))

    report = grad_check(f, [x, w, b, gain, shift], tolerance=1e-4)
    assert report.passed, report.max_rel_err


def check_inflation_identity():
    cfg = _tiny_cfg()
    icfg = image_config_of(cfg)
    _, _, istore = build_model(icfg, 5)
    vstore = inflate_2d_to_3d(istore, icfg, cfg)
    rng = np.random.default_rng(6)
    for _ in range(4):
        x = rng.normal(size=(1, 1, 16, 16, 3)).astype(np.float32) * 0.5
        eps = rng.standard_normal((1, 1, 4, 4, 2)).astype(np.float32)
        with ad.no_grad():
            pi = encode(istore, icfg, x, eps=eps)
            pv = encode(vstore, cfg, x, eps=eps)
            ri = decode(istore, icfg, pi.sample).data
            rv = decode(vstore, cfg, pv.sample).data
        assert np.abs(pi.mean.data - pv.mean.data).max() <= 1e-5
        assert np.abs(ri - rv).max() <= 1e-4


def check_shape_algebra():
    cfg = _tiny_cfg()
    _, _, store = build_model(cfg, 7)
    for T in (0, 2, 4, 8):
        x = np.zeros((1, T + 1, 8, 8, 3), np.float32)
        with ad.no_grad():
            post = encode(store, cfg, x)
            y = decode(store, cfg, post.mean)
        assert post.mean.shape[1] == 1 + T // cfg.rho_t
        assert y.shape == x.shape


def check_encoder_causality():
    cfg = _tiny_cfg()
    _, _, store = build_model(cfg, 8)
    stride, _ = temporal_receptive_field(cfg)
    rng = np.random.default_rng(9)
    x = rng.normal(size=(1, 7, 8, 8, 3)).astype(np.float32)
    with ad.no_grad():
        base = encode(store, cfg, x).mean.data
    cut = x.copy()
    cut[:, stride + 1:] += 1.0
    with ad.no_grad():
        out = encode(store, cfg, cut).mean.data
    assert np.array_equal(out[:, :2], base[:, :2])


def check_psi_contracts():
    video = np.random.default_rng(10).normal(size=(1, 9, 4, 4, 3)).astype(np.float32)
    for kind in ("slice", "average", "random"):
        out = map_psi(PsiSpec(kind, 4, rng_seed=1), video)
        assert out.shape[1] == 3
        assert np.array_equal(out[:, 0], video[:, 0])
    out = map_psi(PsiSpec("slice", 4), video)
    assert np.array_equal(out, video[:, ::4])
    for seed in range(20):
        out = map_psi(PsiSpec("random", 4, rng_seed=seed), video)
        # frames must come from their windows
        for j, lo, hi in ((1, 1, 4), (2, 5, 8)):
            found = any(np.array_equal(out[:, j], video[:, t]) for t in range(lo, hi + 1))
            assert found


def check_closed_form_losses():
    shape = (1, 2, 2, 2, 2)
    zeros = Tensor(np.zeros(shape, np.float32))
    ones = Tensor(np.ones(shape, np.float32))
    p0 = LatentPosterior(mean=zeros, log_var=Tensor(np.zeros(shape, np.float32)),
                         sample=zeros, eps=np.zeros(shape, np.float32))
    assert abs(kl_loss(p0).item()) <= 1e-7
    p1 = LatentPosterior(mean=ones, log_var=Tensor(np.zeros(shape, np.float32)),
                         sample=ones, eps=np.zeros(shape, np.float32))
    assert abs(kl_loss(p1).item() - 0.5) <= 1e-7

    cfg = _tiny_cfg()
    _, dstore = build_discriminator(cfg, 11)
    rng = np.random.default_rng(12)
    real = rng.normal(size=(1, 1, 16, 16, 3)).astype(np.float32)
    fake = rng.normal(size=(1, 1, 16, 16, 3)).astype(np.float32)
    gen, d = adversarial_losses(dstore, cfg, real, fake)
    assert abs(d.item() - 2.0) <= 1e-6 and abs(gen.item()) <= 1e-7


def check_tiling_algebra():
    cfg = _tiny_cfg()
    icfg = image_config_of(cfg)
    _, _, istore = build_model(icfg, 13)
    store = inflate_2d_to_3d(istore, icfg, cfg)
    video = gen_synthetic(SyntheticVideoSpec(kind="drifting-gradient", frames=9, height=16,
                                             width=16, seed=1))[None]
    plan = plan_tiles(9, f=1, rho_t=cfg.rho_t)
    z = tiled_encode(store, cfg, video, plan)
    with ad.no_grad():
        ref = encode(store, cfg, video).mean.data
    assert z.shape == ref.shape
    y = tiled_decode(store, cfg, z, plan)
    assert y.shape == video.shape
    single = plan_tiles(9, f=8, rho_t=cfg.rho_t)
    assert np.array_equal(tiled_encode(store, cfg, video, single), ref)


def check_formats():
    cfg = _tiny_cfg()
    _, _, store = build_model(cfg, 14)
    with tempfile.TemporaryDirectory() as tmp:
        ck = os.path.join(tmp, "m.ckpt")
        save_checkpoint(store, cfg, ck)
        loaded, cfg2 = load_checkpoint(ck)
        assert cfg2 == cfg
        assert all(np.array_equal(t.data, loaded[n].data) for n, t in store.items())
        rv = os.path.join(tmp, "v.rawv")
        video = np.random.default_rng(15).normal(size=(3, 8, 8, 3)).astype(np.float32)
        save_raw_video(video, rv)
        assert np.array_equal(load_raw_video(rv), video)


def check_metrics():
    a = np.zeros((16, 16, 3))
    assert psnr(a, a) == float("inf")
    assert abs(psnr(np.zeros(10), np.full(10, 0.1), peak=1.0) - 20.0) <= 1e-9
    assert abs(ssim(a[..., 0], a[..., 0].copy()) - 1.0) <= 1e-12


def check_hybrid_reduction():
    from dataclasses import replace

    cfg = ModelConfig()
    hybrid = count_params(build_model(cfg, 0)[2])
    full3d = count_params(build_model(replace(cfg, conv_mix=ALL_3D), 0)[2])
    assert 0.60 <= hybrid / full3d <= 0.80


CHECKS = [
    ("conv3d-loop-oracle", check_conv_oracle),
    ("conv3d-2d-equivalence", check_conv_2d_equivalence),
    ("conv3d-causality", check_conv_causality),
    ("group-norm-statistics", check_group_norm_statistics),
    ("gradient-check", check_gradients),
    ("inflation-identity", check_inflation_identity),
    ("shape-algebra", check_shape_algebra),
    ("encoder-causality", check_encoder_causality),
    ("psi-contracts", check_psi_contracts),
    ("closed-form-losses", check_closed_form_losses),
    ("tiling-algebra", check_tiling_algebra),
    ("file-formats", check_formats),
    ("metrics-closed-forms", check_metrics),
    ("hybrid-parameter-reduction", check_hybrid_reduction),
]


def run_selftest(emit=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
            emit(f"{name}: pass")
        except Exception as e:  # report and continue
            ok = False
            emit(f"{name}: FAIL ({e})")
    return ok
