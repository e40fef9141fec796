import numpy as np
import pytest

from audiodiff.autodiff import Tensor, finite_diff_check
from audiodiff.codec import (CodecConfig, LinearVae, patch_decode,
                             patch_decode_linear, patch_encode, train_vae,
                             vae_elbo)
from audiodiff.diffusion import LatentTensor
from audiodiff.errors import ContractError, ParameterError


def test_codec_config_validation():
    CodecConfig(channels=16, reduction=4)
    with pytest.raises(ParameterError):
        CodecConfig(channels=17, reduction=4)
    with pytest.raises(ParameterError):
        CodecConfig(channels=0)


def test_patch_encode_shapes():
    cfg = CodecConfig(channels=8, reduction=4)
    rng = np.random.default_rng(0)
    mel = np.abs(rng.standard_normal((12, 8)))
    z = patch_encode(mel, cfg)
    assert isinstance(z, LatentTensor)
    assert z.shape == (8, 3, 2)
    with pytest.raises(ParameterError):
        patch_encode(np.abs(rng.standard_normal((10, 8))), cfg)
    with pytest.raises(ContractError):
        patch_encode(rng.standard_normal(16), cfg)


def test_full_rank_codec_is_exact_inverse():
    # channels == reduction^2 makes the projection a complete orthonormal
    # basis, so decode(encode(m)) == m
    cfg = CodecConfig(channels=16, reduction=4, seed=1)
    rng = np.random.default_rng(1)
    mel = np.abs(rng.standard_normal((8, 8)))
    back = patch_decode_linear(patch_encode(mel, cfg), cfg)
    assert np.allclose(back, mel, atol=1e-12)


def test_reduced_codec_is_projection():
    # with fewer channels the decode is the adjoint: encode(decode(z)) == z
    # and decode-encode is idempotent on the mel plane
    cfg = CodecConfig(channels=5, reduction=4, seed=2)
    rng = np.random.default_rng(2)
    z = rng.standard_normal((5, 3, 2))
    round1 = patch_encode(patch_decode_linear(z, cfg), cfg)
    assert np.allclose(round1.data, z, atol=1e-12)

    mel = np.abs(rng.standard_normal((12, 8)))
    once = patch_decode_linear(patch_encode(mel, cfg), cfg)
    twice = patch_decode_linear(patch_encode(once, cfg), cfg)
    assert np.allclose(once, twice, atol=1e-12)


def test_patch_decode_floors_and_carries_metadata():
    cfg = CodecConfig(channels=4, reduction=2, seed=0)
    rng = np.random.default_rng(3)
    z = rng.standard_normal((4, 2, 2)) * 5.0
    m = patch_decode(z, cfg, sample_rate=8000, frame=512, hop=128)
    assert np.all(m.data >= 0.0)
    assert (m.sample_rate, m.frame, m.hop) == (8000, 512, 128)
    with pytest.raises(ContractError):
        patch_decode_linear(np.zeros((3, 2, 2)), cfg)


def test_projection_frozen_by_seed():
    rng = np.random.default_rng(4)
    mel = np.abs(rng.standard_normal((8, 8)))
    a = patch_encode(mel, CodecConfig(channels=6, reduction=4, seed=7))
    b = patch_encode(mel, CodecConfig(channels=6, reduction=4, seed=7))
    c = patch_encode(mel, CodecConfig(channels=6, reduction=4, seed=8))
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_vae_elbo_matches_hand_computation():
    v = LinearVae(input_dim=3, latent_dim=2, seed=5)
    rng = np.random.default_rng(5)
    x = rng.standard_normal(3)
    eps = rng.standard_normal(2)

    p = {k: t.data for k, t in v.params.items()}
    mean = x @ p["enc_w"] + p["enc_b"]
    logvar = x @ p["enc_w_lv"] + p["enc_b_lv"]
    z = mean + np.exp(0.5 * logvar) * eps
    recon = z @ p["dec_w"] + p["dec_b"]
    kl = 0.5 * np.sum(mean ** 2 + np.exp(logvar) - logvar - 1.0)
    expect = np.sum((recon - x) ** 2) + kl

    got = vae_elbo(v, x, eps, beta_kl=1.0).item()
    assert got == pytest.approx(expect, rel=1e-12)

    # beta_kl splits the objective linearly and the KL part is nonnegative
    recon_only = vae_elbo(v, x, eps, beta_kl=0.0).item()
    assert got - recon_only == pytest.approx(kl, rel=1e-12)
    assert kl >= 0.0
    half = vae_elbo(v, x, eps, beta_kl=0.5).item()
    assert half == pytest.approx(recon_only + 0.5 * kl, rel=1e-12)

    with pytest.raises(ParameterError):
        vae_elbo(v, x, eps, beta_kl=-1.0)
    with pytest.raises(ContractError):
        vae_elbo(v, x[:2], eps)


def test_vae_elbo_gradients_check_out():
    v = LinearVae(input_dim=6, latent_dim=3, seed=6)
    rng = np.random.default_rng(6)
    x = rng.standard_normal(6)
    eps = rng.standard_normal(3)
    names = sorted(v.params)

    def f(ps):
        for k, p in zip(names, ps):
            v.params[k] = p
        return vae_elbo(v, x, eps, beta_kl=1.0)

    err = finite_diff_check(f, [v.params[k] for k in names], n_coords=60,
                            rng=np.random.default_rng(0))
    assert err < 1e-6


def test_train_vae_reduces_objective():
    rng = np.random.default_rng(7)
    # low-rank data: 8-dim inputs on a 2-dim subspace plus small noise
    basis = rng.standard_normal((2, 8))
    inputs = rng.standard_normal((64, 2)) @ basis \
        + 0.01 * rng.standard_normal((64, 8))
    v = LinearVae(input_dim=8, latent_dim=2, seed=8)
    losses = train_vae(v, inputs, epochs=30, learning_rate=0.02, seed=1)
    assert len(losses) == 30
    assert losses[-1] < losses[0] * 0.8
    assert np.all(np.isfinite(losses))
