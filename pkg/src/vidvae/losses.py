"""Full training objective: reconstruction + KL + hinge adversarial terms plus
the two latent alignment losses, with per-term breakdown."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .errors import NumericError
from .model import LatentPosterior, decode, discriminate, encode
from .params import ParamStore
from .regularize import PsiSpec, map_psi, reg_loss_encoder


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0        # image-decoder alignment
    lambda2: float = 0.0        # image-encoder alignment
    kl_weight: float = 1e-6
    adv_weight: float = 0.1
    adv_start_step: int = 200

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.kl_weight, self.adv_weight) < 0:
            raise ValueError("loss weights must be >= 0")

    def adv_active(self, step: int) -> bool:
        return self.adv_weight > 0 and step >= self.adv_start_step


def kl_loss(posterior: LatentPosterior) -> Tensor:
    """Mean over all latent positions of -0.5 * (1 + log_var - mu^2 - exp(log_var))."""
    mu, lv = posterior.mean, posterior.log_var
    inner = ad.add(ad.sub(ad.add(1.0, lv), ad.square(mu)), ad.mul(ad.exp(lv), -1.0))
    return ad.mean_all(ad.mul(inner, -0.5))


def adversarial_losses(disc_params: ParamStore, disc_cfg: ModelConfig,
                       real, fake) -> tuple[Tensor, Tensor]:
    """Hinge GAN pair.

    disc_loss = mean(relu(1 - logits_real)) + mean(relu(1 + logits_fake)),
    gen_loss  = -mean(logits_fake).

    The generator side runs the discriminator through a detached parameter view
    so generator gradients flow only through ``fake``; the discriminator side
    detaches both inputs so its gradients reach only disc_params.
    """
    fake_t = fake if isinstance(fake, Tensor) else Tensor(np.asarray(fake, dtype=np.float32))
    real_t = real if isinstance(real, Tensor) else Tensor(np.asarray(real, dtype=np.float32))

    gen_logits = discriminate(disc_params.detached_view(), disc_cfg, fake_t)
    gen_loss = ad.mul(ad.mean_all(gen_logits), -1.0)

    logits_real = discriminate(disc_params, disc_cfg, real_t.detach())
    logits_fake = discriminate(disc_params, disc_cfg, fake_t.detach())
    disc_loss = ad.add(ad.mean_all(ad.relu(ad.sub(1.0, logits_real))),
                       ad.mean_all(ad.relu(ad.add(1.0, logits_fake))))
    return gen_loss, disc_loss


def _check_term(name: str, value: Tensor) -> Tensor:
    if not np.isfinite(value.data):
        raise NumericError(f"non-finite loss term {name!r}")
    return value


def total_loss(video_params: ParamStore, video_cfg: ModelConfig,
               image_params: ParamStore, image_cfg: ModelConfig,
               disc_params: ParamStore | None, batch: np.ndarray,
               weights: LossWeights, psi: PsiSpec, step: int,
               eps: np.ndarray | None = None):
    """Weighted objective over one pixel batch.

    total = rec + kl_weight*kl + adv_weight*gen*[step >= adv_start]
          + lambda1*reg_dec + lambda2*reg_en   (terms summed in this order)

    Reconstruction is pixel L1. The posterior (and its sample) is shared
    between the reconstruction and the decoder-alignment term. Returns
    (total, breakdown dict of raw per-term floats, reconstruction tensor).
    """
    batch = np.asarray(batch, dtype=np.float32)
    x = Tensor(batch)
    posterior = encode(video_params, video_cfg, batch, eps=eps)
    recon = decode(video_params, video_cfg, posterior.sample)

    rec = _check_term("rec", ad.l1(recon, x))
    kl = _check_term("kl", kl_loss(posterior))
    total = ad.add(rec, ad.mul(kl, weights.kl_weight))
    breakdown = {"rec": rec.item(), "kl": kl.item(), "gen": 0.0, "reg_dec": 0.0, "reg_en": 0.0}

    if weights.adv_active(step):
        if disc_params is None:
            raise NumericError("adversarial term active but no discriminator parameters given")
        gen_logits = discriminate(disc_params.detached_view(), video_cfg, recon)
        gen = _check_term("gen", ad.mul(ad.mean_all(gen_logits), -1.0))
        total = ad.add(total, ad.mul(gen, weights.adv_weight))
        breakdown["gen"] = gen.item()

    if weights.lambda1 > 0:
        target = map_psi(psi, batch)
        dec_i = decode(image_params, image_cfg, posterior.sample)
        if psi.kind == "first":
            dec_i = ad.narrow(dec_i, 1, 0, 1)
        reg_dec = _check_term("reg_dec", ad.mse(dec_i, Tensor(target)))
        total = ad.add(total, ad.mul(reg_dec, weights.lambda1))
        breakdown["reg_dec"] = reg_dec.item()

    if weights.lambda2 > 0:
        reg_en = _check_term("reg_en", reg_loss_encoder(
            image_params, image_cfg, video_params, video_cfg, batch, psi))
        total = ad.add(total, ad.mul(reg_en, weights.lambda2))
        breakdown["reg_en"] = reg_en.item()

    breakdown["total"] = total.item()
    return total, breakdown, recon
