import numpy as np
import pytest

from vidvae import autodiff as ad
from vidvae.autodiff import Tensor
from vidvae.config import ModelConfig, image_config_of
from vidvae.errors import ShapeError
from vidvae.inflate import inflate_2d_to_3d
from vidvae.model import build_model, decode, encode
from vidvae.ops import grad_check
from vidvae.regularize import PsiSpec, reg_loss_decoder, reg_loss_encoder

from reference import conv3d_loop


@pytest.fixture(scope="module")
def micro():
    """Micro config small enough for loop-oracle and finite-difference sweeps."""
    vcfg = ModelConfig(latent_channels=2, base_channels=4, channel_multipliers=(1,),
                       spatial_down_levels=1, temporal_down_levels=1, resblocks_per_level=1,
                       norm_groups=4, discriminator_layers=1).validate()
    icfg = image_config_of(vcfg)
    _, _, image_store = build_model(icfg, seed=21)
    image_store.freeze()
    video_store = inflate_2d_to_3d(image_store, icfg, vcfg)
    return vcfg, icfg, video_store, image_store


def test_single_image_collapses_to_image_vae_mse_encoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 1, 8, 8, 3)).astype(np.float32) * 0.5
    loss = reg_loss_encoder(image_store, icfg, video_store, vcfg, x, PsiSpec("first", vcfg.rho_t))
    with ad.no_grad():
        z = encode(image_store, icfg, x).mean
        rec = decode(image_store, icfg, z).data
    direct = float(np.mean((rec - x) ** 2))
    assert abs(loss.item() - direct) <= 1e-6


def test_single_image_collapses_to_image_vae_mse_decoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 1, 8, 8, 3)).astype(np.float32) * 0.5
    eps = rng.standard_normal((1, 1, 4, 4, 2)).astype(np.float32)
    loss = reg_loss_decoder(image_store, icfg, video_store, vcfg, x, PsiSpec("first", vcfg.rho_t), eps=eps)
    with ad.no_grad():
        sample = encode(image_store, icfg, x, eps=eps).sample
        rec = decode(image_store, icfg, sample).data
    direct = float(np.mean((rec - x) ** 2))
    assert abs(loss.item() - direct) <= 1e-6


def _loop_forward_encoder(store, cfg, x):
    """Numpy/loop-oracle re-implementation of the micro encoder (posterior mean)."""
    def conv(name, h, stride=(1, 1, 1), pad=(1, 1)):
        return conv3d_loop(h, store[name + ".weight"].data, store[name + ".bias"].data,
                           stride=stride, spatial_pad=pad)

    def gn(name, h, groups):
        B, T, H, W, C = h.shape
        hg = h.reshape(B, T, H, W, groups, C // groups)
        m = hg.mean(axis=(2, 3, 5), keepdims=True)
        v = hg.var(axis=(2, 3, 5), keepdims=True)
        hn = ((hg - m) / np.sqrt(v + 1e-6)).reshape(B, T, H, W, C)
        return hn * store[name + ".gain"].data + store[name + ".shift"].data

    def silu(h):
        return h / (1.0 + np.exp(-h))

    def res(name, h):
        y = conv(name + ".conv_a", silu(gn(name + ".norm1", h, cfg.norm_groups)))
        y = conv(name + ".conv_b", silu(gn(name + ".norm2", y, cfg.norm_groups)))
        return h + y

    st = 2 if cfg.temporal_down_levels >= 1 else 1
    h = conv("encoder.conv_in", x)
    h = res("encoder.level0.res0", h)
    h = conv("encoder.level0.down.conv", h, stride=(st, 2, 2))
    h = res("encoder.mid.res0", h)
    h = res("encoder.mid.res1", h)
    h = conv("encoder.conv_out", silu(gn("encoder.norm_out", h, cfg.norm_groups)))
    return h[..., :cfg.latent_channels]


def test_pipeline_oracle_decoder_route(micro):
    # fixed video and seeds: the packaged loss equals a step-by-step
    # recomputation built from the loop-conv oracle plus direct numpy
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 5, 8, 8, 3)).astype(np.float32) * 0.5
    psi = PsiSpec("slice", vcfg.rho_t)
    loss = reg_loss_decoder(image_store, icfg, video_store, vcfg, x, psi,
                            eps=np.zeros((1, 3, 4, 4, 2), np.float32))

    z = _loop_forward_encoder(video_store, vcfg, x.astype(np.float64))
    with ad.no_grad():
        rec = decode(image_store, icfg, z.astype(np.float32)).data
    target = x[:, ::vcfg.rho_t]
    direct = float(np.mean((rec - target) ** 2))
    assert abs(loss.item() - direct) <= 1e-5


def test_pipeline_oracle_encoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 5, 8, 8, 3)).astype(np.float32) * 0.5
    psi = PsiSpec("average", vcfg.rho_t)
    loss = reg_loss_encoder(image_store, icfg, video_store, vcfg, x, psi)

    mapped = np.stack([x[:, 0], x[:, 1:3].mean(axis=1), x[:, 3:5].mean(axis=1)], axis=1)
    z = _loop_forward_encoder(image_store, icfg, mapped.astype(np.float64))
    with ad.no_grad():
        rec = decode(video_store, vcfg, z.astype(np.float32)).data
    direct = float(np.mean((rec - x) ** 2))
    assert abs(loss.item() - direct) <= 1e-5


def test_frozen_image_parameters_get_no_gradient(micro):
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 3, 8, 8, 3)).astype(np.float32)
    video_store.zero_grad()
    loss = reg_loss_decoder(image_store, icfg, video_store, vcfg, x,
                            PsiSpec("slice", vcfg.rho_t),
                            eps=np.zeros((1, 2, 4, 4, 2), np.float32))
    loss.backward()
    assert all(t.grad is None for _, t in image_store.items())
    assert any(t.grad is not None and np.any(t.grad)
               for n, t in video_store.items() if n.startswith("encoder."))


def test_gradients_flow_only_into_video_decoder_for_encoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(6)
    x = rng.normal(size=(1, 3, 8, 8, 3)).astype(np.float32)
    video_store.zero_grad()
    reg_loss_encoder(image_store, icfg, video_store, vcfg, x, PsiSpec("slice", vcfg.rho_t)).backward()
    enc_grads = [t.grad for n, t in video_store.items() if n.startswith("encoder.")]
    dec_grads = [t.grad for n, t in video_store.items() if n.startswith("decoder.")]
    assert all(g is None for g in enc_grads)
    assert any(g is not None and np.any(g) for g in dec_grads)


def test_first_frame_rejected_for_multiframe_encoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    x = np.zeros((1, 5, 8, 8, 3), dtype=np.float32)
    with pytest.raises(ShapeError):
        reg_loss_encoder(image_store, icfg, video_store, vcfg, x, PsiSpec("first", vcfg.rho_t))


def test_first_frame_decoder_route_degenerates_to_frame0(micro):
    vcfg, icfg, video_store, image_store = micro
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 5, 8, 8, 3)).astype(np.float32) * 0.5
    eps = np.zeros((1, 3, 4, 4, 2), np.float32)
    loss = reg_loss_decoder(image_store, icfg, video_store, vcfg, x, PsiSpec("first", vcfg.rho_t), eps=eps)
    with ad.no_grad():
        sample = encode(video_store, vcfg, x, eps=eps).sample
        rec = decode(image_store, icfg, sample).data
    direct = float(np.mean((rec[:, :1] - x[:, :1]) ** 2))
    assert abs(loss.item() - direct) <= 1e-6


def test_losses_nonnegative_and_zero_iff_equal():
    a = Tensor(np.array([1.0, 2.0], dtype=np.float32))
    assert ad.mse(a, Tensor(a.data.copy())).item() == 0.0
    assert ad.mse(a, Tensor(np.array([1.0, 2.5], dtype=np.float32))).item() > 0.0


@pytest.mark.slow
def test_finite_difference_decoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    v64 = video_store.astype(np.float64)
    i64 = image_store.astype(np.float64).freeze()
    rng = np.random.default_rng(8)
    x = rng.normal(size=(1, 3, 8, 8, 3)) * 0.5
    eps = rng.standard_normal((1, 2, 4, 4, 2))
    psi = PsiSpec("slice", vcfg.rho_t)

    names = [n for n, _ in v64.subset("encoder.")]
    inputs = [v64[n] for n in names]

    def closure(*_):
        return reg_loss_decoder(i64, icfg, v64, vcfg, x, psi, eps=eps)

    report = grad_check(closure, inputs, tolerance=1e-4, sample=12, seed=0)
    assert report.passed, report.max_rel_err


@pytest.mark.slow
def test_finite_difference_encoder_route(micro):
    vcfg, icfg, video_store, image_store = micro
    v64 = video_store.astype(np.float64)
    i64 = image_store.astype(np.float64).freeze()
    rng = np.random.default_rng(9)
    x = rng.normal(size=(1, 3, 8, 8, 3)) * 0.5
    psi = PsiSpec("average", vcfg.rho_t)

    names = [n for n, _ in v64.subset("decoder.")]
    inputs = [v64[n] for n in names]

    def closure(*_):
        return reg_loss_encoder(i64, icfg, v64, vcfg, x, psi)

    report = grad_check(closure, inputs, tolerance=1e-4, sample=12, seed=1)
    assert report.passed, report.max_rel_err
