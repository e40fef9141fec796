"""Mel-to-latent patch codec and a small linear VAE trained by ELBO.

The deterministic codec stands in for a pretrained audio VAE: it cuts the
mel plane into non-overlapping r x r patches and projects each one onto C
frozen orthonormal rows.  Encoding compresses by r^2/C; decoding applies
the transpose, which is exact on the projection's row space.

The LinearVae is the honest-but-tiny stochastic sibling used to exercise
the ELBO: linear encoder to (mean, logvar), reparameterized sample, linear
decoder, squared-error reconstruction plus the closed-form Gaussian KL
    0.5 * sum(mean^2 + var - log var - 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from audiodiff.autodiff import Tensor, grad
from audiodiff.diffusion import LatentTensor
from audiodiff.dsp import (DEFAULT_FRAME, DEFAULT_HOP, DEFAULT_SAMPLE_RATE,
                           MelSpectrogram)
from audiodiff.errors import ContractError, ParameterError
from audiodiff.optim import make_optimizer


@dataclass(frozen=True)
class CodecConfig:
    """Latent channel count, patch reduction factor, projection seed."""

    channels: int = 8
    reduction: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.channels < 1 or self.reduction < 1:
            raise ParameterError("channels and reduction must be >= 1")
        if self.channels > self.reduction ** 2:
            raise ParameterError(
                "channels may not exceed reduction^2 (patch size)")


@lru_cache(maxsize=8)
def _projection(cfg: CodecConfig) -> np.ndarray:
    """Frozen (channels, reduction^2) matrix with orthonormal rows."""
    d = cfg.reduction ** 2
    rng = np.random.default_rng(cfg.seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    proj = np.ascontiguousarray(q[:, :cfg.channels].T)
    proj.setflags(write=False)
    return proj


def _mel_array(m):
    if isinstance(m, MelSpectrogram):
        return m.data
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError("mel input must be rank-2")
    return arr


def patch_encode(m, cfg: CodecConfig) -> LatentTensor:
    """Project r x r mel patches onto the frozen rows; output is
    (channels, T/r, F/r).  Both mel dimensions must divide by r."""
    data = _mel_array(m)
    r = cfg.reduction
    t, f = data.shape
    if t % r or f % r:
        raise ParameterError(
            f"mel shape {data.shape} not divisible by reduction {r}")
    patches = data.reshape(t // r, r, f // r, r).transpose(0, 2, 1, 3) \
        .reshape(t // r, f // r, r * r)
    latent = patches @ _projection(cfg).T
    return LatentTensor(latent.transpose(2, 0, 1))


def patch_decode_linear(z, cfg: CodecConfig) -> np.ndarray:
    """Adjoint of patch_encode (no flooring); exact on the row space."""
    data = z.data if isinstance(z, LatentTensor) else \
        np.asarray(z, dtype=np.float64)
    if data.ndim != 3:
        raise ContractError("latent input must be rank-3")
    if data.shape[0] != cfg.channels:
        raise ContractError("latent channel count disagrees with the codec")
    r = cfg.reduction
    _, gh, gw = data.shape
    patches = data.transpose(1, 2, 0) @ _projection(cfg)
    return patches.reshape(gh, gw, r, r).transpose(0, 2, 1, 3) \
        .reshape(gh * r, gw * r)


def patch_decode(z, cfg: CodecConfig,
                 sample_rate: int = DEFAULT_SAMPLE_RATE,
                 frame: int = DEFAULT_FRAME,
                 hop: int = DEFAULT_HOP) -> MelSpectrogram:
    """Decode to a mel spectrogram; negative energies floored at 0."""
    mel = np.clip(patch_decode_linear(z, cfg), 0.0, None)
    return MelSpectrogram(mel, sample_rate=sample_rate, frame=frame, hop=hop)


# -------------------------------------------------------------- linear VAE

class LinearVae:
    """Linear Gaussian encoder/decoder over flattened patches."""

    def __init__(self, input_dim: int, latent_dim: int, seed: int = 0):
        if input_dim < 1 or latent_dim < 1:
            raise ParameterError("dimensions must be >= 1")
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(input_dim)
        self.params = {
            "enc_w": Tensor(rng.standard_normal(
                (input_dim, latent_dim)) * scale),
            "enc_b": Tensor(np.zeros((1, latent_dim))),
            "enc_w_lv": Tensor(rng.standard_normal(
                (input_dim, latent_dim)) * scale),
            "enc_b_lv": Tensor(np.zeros((1, latent_dim))),
            "dec_w": Tensor(rng.standard_normal(
                (latent_dim, input_dim)) / np.sqrt(latent_dim)),
            "dec_b": Tensor(np.zeros((1, input_dim))),
        }

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())


def vae_elbo(v: LinearVae, x, eps_sample, beta_kl: float = 1.0) -> Tensor:
    """Negative ELBO (to minimize) for one input vector.

    reconstruction ||decode(z) - x||^2 with z = mean + exp(logvar/2)*eps,
    plus beta_kl times the closed-form KL to the unit normal.  The KL term
    is nonnegative by construction.
    """
    if beta_kl < 0.0:
        raise ParameterError("beta_kl must be >= 0")
    x_arr = np.asarray(x, dtype=np.float64).reshape(1, -1)
    eps_arr = np.asarray(eps_sample, dtype=np.float64).reshape(1, -1)
    if x_arr.shape[1] != v.input_dim or eps_arr.shape[1] != v.latent_dim:
        raise ContractError("input or noise dimension disagrees with model")
    p = v.params
    x_t = Tensor(x_arr)
    mean = x_t @ p["enc_w"] + p["enc_b"]
    logvar = x_t @ p["enc_w_lv"] + p["enc_b_lv"]
    z = mean + (logvar * 0.5).exp() * Tensor(eps_arr)
    recon = z @ p["dec_w"] + p["dec_b"]
    rec_err = (recon - x_t).sqnorm()
    kl = (mean.sqnorm() + logvar.exp().sum() - logvar.sum()
          - float(v.latent_dim)) * 0.5
    return rec_err + kl * beta_kl


def train_vae(v: LinearVae, inputs, epochs: int = 50,
              learning_rate: float = 0.01, beta_kl: float = 1.0,
              method: str = "adam", seed: int = 0) -> list[float]:
    """Minimize the mean ELBO over input vectors; returns per-epoch means."""
    data = [np.asarray(x, dtype=np.float64).reshape(-1) for x in inputs]
    if not data:
        raise ParameterError("inputs must be non-empty")
    rng = np.random.default_rng(seed)
    optimizer = make_optimizer(method, learning_rate)
    params = v.parameters()
    losses = []
    for _ in range(epochs):
        total = None
        for x in data:
            eps = rng.standard_normal(v.latent_dim)
            term = vae_elbo(v, x, eps, beta_kl)
            total = term if total is None else total + term
        loss = total * (1.0 / len(data))
        optimizer.step(params, grad(loss, params))
        losses.append(loss.item())
    return losses
