import numpy as np
import pytest
from dataclasses import replace

from vidvae import autodiff as ad
from vidvae.config import ALL_3D
from vidvae.errors import InflationError
from vidvae.inflate import inflate_2d_to_3d, inflate_weight
from vidvae.model import build_model, decode, encode
from vidvae.params import ParamStore


def test_direct_placement():
    w2d = np.ones((1, 1, 1, 3, 3), dtype=np.float32)
    out = inflate_weight(w2d, (1, 1, 3, 3, 3))
    assert np.array_equal(out[0, 0, 2], np.ones((3, 3)))
    assert np.array_equal(out[0, 0, :2], np.zeros((2, 3, 3)))


def test_grouped_replication():
    w2d = np.arange(18, dtype=np.float32).reshape(2, 1, 1, 3, 3)
    out = inflate_weight(w2d, (4, 1, 3, 3, 3))
    for g in range(2):
        assert np.array_equal(out[g * 2:(g + 1) * 2, :, 2], w2d[:, :, 0])
    assert np.array_equal(out[:, :, :2], np.zeros((4, 1, 2, 3, 3)))


def test_incompatible_kernel_rejected():
    with pytest.raises(InflationError):
        inflate_weight(np.ones((2, 1, 1, 3, 3), dtype=np.float32), (3, 1, 3, 3, 3))


@pytest.fixture(scope="module")
def inflated(tiny_cfg, tiny_image_cfg):
    _, _, image_store = build_model(tiny_image_cfg, seed=11)
    video_store = inflate_2d_to_3d(image_store, tiny_image_cfg, tiny_cfg)
    return image_store, video_store


class TestInflationIdentity:
    def test_posterior_identity_over_suite(self, inflated, tiny_cfg, tiny_image_cfg):
        image_store, video_store = inflated
        rng = np.random.default_rng(0)
        for i in range(16):
            x = rng.normal(size=(1, 1, 16, 16, 3)).astype(np.float32) * 0.6
            with ad.no_grad():
                pi = encode(image_store, tiny_image_cfg, x)
                pv = encode(video_store, tiny_cfg, x)
            assert np.abs(pi.mean.data - pv.mean.data).max() <= 1e-5
            assert np.abs(pi.log_var.data - pv.log_var.data).max() <= 1e-5

    def test_roundtrip_identity(self, inflated, tiny_cfg, tiny_image_cfg):
        image_store, video_store = inflated
        rng = np.random.default_rng(1)
        for i in range(8):
            x = rng.normal(size=(1, 1, 16, 16, 3)).astype(np.float32) * 0.6
            eps = rng.standard_normal((1, 1, 4, 4, 2)).astype(np.float32)
            with ad.no_grad():
                ri = decode(image_store, tiny_image_cfg, encode(image_store, tiny_image_cfg, x, eps=eps).sample)
                rv = decode(video_store, tiny_cfg, encode(video_store, tiny_cfg, x, eps=eps).sample)
            assert np.abs(ri.data - rv.data).max() <= 1e-4

    def test_zero_latent_decodes_to_replicated_2d_image(self, inflated, tiny_cfg, tiny_image_cfg):
        image_store, video_store = inflated
        z1 = np.zeros((1, 1, 4, 4, 2), dtype=np.float32)
        z3 = np.zeros((1, 3, 4, 4, 2), dtype=np.float32)
        with ad.no_grad():
            img = decode(image_store, tiny_image_cfg, z1).data
            vid = decode(video_store, tiny_cfg, z3).data
        assert vid.shape[1] == 1 + 2 * tiny_cfg.rho_t
        for t in range(vid.shape[1]):
            assert np.abs(vid[:, t] - img[:, 0]).max() <= 1e-4

    def test_anchor_frames_match_per_frame_2d_encode(self, inflated, tiny_cfg, tiny_image_cfg):
        # before training, latent frame j of a video equals the 2D encode of frame j*rho_t
        image_store, video_store = inflated
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 7, 16, 16, 3)).astype(np.float32) * 0.6
        with ad.no_grad():
            zv = encode(video_store, tiny_cfg, x).mean.data
            zi = encode(image_store, tiny_image_cfg, x[:, ::tiny_cfg.rho_t]).mean.data
        assert np.abs(zv - zi).max() <= 1e-5

    def test_biases_and_norms_copied_verbatim(self, inflated):
        image_store, video_store = inflated
        for name, t in image_store.items():
            if name.endswith((".gain", ".shift")):
                assert np.array_equal(t.data, video_store[name].data)

    def test_all_3d_inflation_also_identity(self, tiny_cfg, tiny_image_cfg):
        cfg3d = replace(tiny_cfg, conv_mix=ALL_3D)
        _, _, image_store = build_model(tiny_image_cfg, seed=4)
        video_store = inflate_2d_to_3d(image_store, tiny_image_cfg, cfg3d)
        x = np.random.default_rng(5).normal(size=(1, 1, 16, 16, 3)).astype(np.float32)
        with ad.no_grad():
            pi = encode(image_store, tiny_image_cfg, x)
            pv = encode(video_store, cfg3d, x)
        assert np.abs(pi.mean.data - pv.mean.data).max() <= 1e-5


def test_topology_mismatch_lists_names(tiny_cfg, tiny_image_cfg):
    _, _, image_store = build_model(tiny_image_cfg, seed=0)
    broken = ParamStore()
    skipped = None
    for name, t in image_store.items():
        if skipped is None and name.endswith("conv_in.weight"):
            skipped = name
            continue
        broken.create(name, t.data.copy())
    with pytest.raises(InflationError, match="conv_in.weight"):
        inflate_2d_to_3d(broken, tiny_image_cfg, tiny_cfg)


def test_zero_taps_receive_gradients(tiny_cfg, tiny_image_cfg):
    # inflated zero taps are trainable: one backward pass gives them nonzero grads
    from vidvae.autodiff import Tensor

    _, _, image_store = build_model(tiny_image_cfg, seed=6)
    video_store = inflate_2d_to_3d(image_store, tiny_image_cfg, tiny_cfg)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 5, 8, 8, 3)).astype(np.float32)
    eps = rng.standard_normal((1, 3, 2, 2, 2)).astype(np.float32)
    post = encode(video_store, tiny_cfg, x, eps=eps)
    rec = decode(video_store, tiny_cfg, post.sample)
    ad.l1(rec, Tensor(x)).backward()
    name = "encoder.level0.res0.conv_a.weight"
    w = video_store[name]
    kt = w.data.shape[2]
    assert kt == 3
    assert np.array_equal(w.data[:, :, :kt - 1], np.zeros_like(w.data[:, :, :kt - 1]))
    assert np.abs(w.grad[:, :, :kt - 1]).max() > 0
