"""Forward corruption, reverse ancestral sampling, classifier-free guidance.

The forward process corrupts a clean latent z0 in one shot,

    z_n = sqrt(alpha_bar_n) * z0 + sqrt(1 - alpha_bar_n) * eps,

and the reverse process walks back with the posterior mean

    mu_n = (z_n - (1 - alpha_n)/sqrt(1 - alpha_bar_n) * eps_hat) / sqrt(alpha_n)

plus posterior-variance noise.  Guidance mixes conditional and unconditional
noise estimates as w*cond + (1-w)*uncond.

When fewer inference steps than schedule steps are requested, the sampler
runs the same ancestral update on an evenly strided sub-schedule whose
effective alpha/beta/posterior variance are recomputed from the selected
alpha_bar values (with alpha_bar = 1 before the first selected step, so the
last reverse step stays deterministic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from audiodiff import kernels
from audiodiff.errors import ContractError, ParameterError
from audiodiff.autodiff import Tensor
from audiodiff.schedule import NoiseSchedule, check_step, schedule_hash

LATENT_DUMP_MAGIC = "#audiodiff-latents v1"


class LatentTensor:
    """A (channels, height, width) float64 latent value."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ContractError("latents are rank-3 (channels, height, width)")
        if not np.all(np.isfinite(arr)):
            raise ContractError("latent values must be finite")
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"LatentTensor(shape={self.data.shape})"


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance scale w and the training-time conditioning drop rate."""

    w: float = 1.0
    cond_drop_prob: float = 0.10

    def __post_init__(self):
        if not np.isfinite(self.w) or self.w < 0.0:
            raise ParameterError("guidance scale must be finite and >= 0")
        if not 0.0 <= self.cond_drop_prob <= 1.0:
            raise ParameterError("cond_drop_prob must lie in [0, 1]")


def _latent_array(value, name):
    if isinstance(value, LatentTensor):
        return value.data
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if arr.ndim != 3:
        raise ContractError(f"{name} must be rank-3")
    return arr


def forward_sample(s: NoiseSchedule, z0, n: int, eps) -> LatentTensor:
    """One-shot corruption of z0 to step n using the provided unit noise."""
    check_step(s, n)
    z0_arr = _latent_array(z0, "z0")
    eps_arr = _latent_array(eps, "eps")
    if z0_arr.shape != eps_arr.shape:
        raise ContractError("z0 and eps shapes disagree")
    ab = s.alpha_bar[n - 1]
    out = np.empty_like(z0_arr)
    kernels.axpby(np.sqrt(ab), z0_arr.reshape(-1), np.sqrt(1.0 - ab),
                  eps_arr.reshape(-1), out.reshape(-1))
    return LatentTensor(out)


def cfg_combine(eps_cond, eps_uncond, w: float):
    """Guided estimate w*cond + (1-w)*uncond; w=1 and w=0 pass through
    bit-exactly."""
    cond = np.ascontiguousarray(eps_cond, dtype=np.float64)
    uncond = np.ascontiguousarray(eps_uncond, dtype=np.float64)
    if cond.shape != uncond.shape:
        raise ContractError("guidance branches have different shapes")
    if not np.isfinite(w):
        raise ParameterError("guidance scale must be finite")
    if w == 1.0:
        return cond.copy()
    if w == 0.0:
        return uncond.copy()
    out = np.empty_like(cond)
    kernels.guided_combine(w, cond.reshape(-1), uncond.reshape(-1),
                           out.reshape(-1))
    return out


def training_loss(s: NoiseSchedule, denoiser, batch) -> Tensor:
    """Weighted noise-matching loss, differentiable through the denoiser.

    `batch` is a sequence of (z0, tau, n, eps) tuples; the caller draws n
    uniformly from 1..N and eps from a unit normal, one pair per element.
    Each term is gamma_n * ||eps - eps_hat(z_n, n, tau)||^2; the loss is
    their mean.  Denoisers that expose estimate_traced participate in the
    gradient; plain estimates enter as constants.
    """
    items = list(batch)
    if not items:
        raise ParameterError("training batch must be non-empty")
    total = None
    for z0, tau, n, eps in items:
        z_n = forward_sample(s, z0, n, eps)
        eps_arr = _latent_array(eps, "eps")
        if hasattr(denoiser, "estimate_traced"):
            eps_hat = denoiser.estimate_traced(z_n.data, n, tau)
        else:
            eps_hat = Tensor(denoiser.estimate(z_n.data, n, tau))
        term = (eps_hat - Tensor(eps_arr)).sqnorm() * float(s.gamma[n - 1])
        total = term if total is None else total + term
    return total * (1.0 / len(items))


def _guided_batch(denoiser, z_batch, n, tau, w):
    if w == 1.0:
        return denoiser.estimate_batch(z_batch, n, tau)
    if w == 0.0:
        return denoiser.estimate_batch(z_batch, n, None)
    cond = denoiser.estimate_batch(z_batch, n, tau)
    uncond = denoiser.estimate_batch(z_batch, n, None)
    out = np.empty_like(cond)
    kernels.guided_combine(w, cond.reshape(-1), uncond.reshape(-1),
                           out.reshape(-1))
    return out


def reverse_step(s: NoiseSchedule, denoiser, z_n, n: int, tau,
                 g: GuidanceConfig, noise) -> LatentTensor:
    """One ancestral step z_n -> z_{n-1} on the full schedule.

    `noise` must be unit-normal and shaped like z_n; at n=1 the posterior
    variance is zero, so the noise is ignored and the step is deterministic.
    """
    check_step(s, n)
    z_arr = _latent_array(z_n, "z_n")
    noise_arr = _latent_array(noise, "noise")
    if z_arr.shape != noise_arr.shape:
        raise ContractError("noise shape must match z_n")
    eps_hat = _guided_batch(denoiser, z_arr[None], n, tau, g.w)[0]
    alpha = s.alpha[n - 1]
    ab = s.alpha_bar[n - 1]
    out = np.empty_like(z_arr)
    kernels.ancestral_update(
        z_arr.reshape(-1), np.ascontiguousarray(eps_hat).reshape(-1),
        1.0 / np.sqrt(alpha), (1.0 - alpha) / np.sqrt(1.0 - ab),
        np.sqrt(s.posterior_var[n - 1]), noise_arr.reshape(-1),
        out.reshape(-1))
    return LatentTensor(out)


@dataclass(frozen=True)
class _SubSchedule:
    """Evenly strided view of a schedule for coarse ancestral sampling."""

    orig_index: np.ndarray     # selected original steps, ascending
    alpha_eff: np.ndarray      # alpha_bar ratios between selected steps
    alpha_bar: np.ndarray      # alpha_bar at the selected steps
    posterior_var: np.ndarray


def _sub_schedule(s: NoiseSchedule, steps: int) -> _SubSchedule:
    if not 1 <= steps <= s.n_steps:
        raise ParameterError("steps must lie in 1..n_steps")
    if steps == s.n_steps:
        return _SubSchedule(
            orig_index=np.arange(1, s.n_steps + 1),
            alpha_eff=s.alpha.copy(), alpha_bar=s.alpha_bar.copy(),
            posterior_var=s.posterior_var.copy())
    # Even integer stride ending exactly at N, e.g. N=100, steps=10 ->
    # 10, 20, .., 100.  Floor division keeps the indices distinct whenever
    # steps <= N.
    idx = (np.arange(1, steps + 1) * s.n_steps) // steps
    ab = s.alpha_bar[idx - 1]
    ab_prev = np.concatenate(([1.0], ab[:-1]))
    alpha_eff = ab / ab_prev
    beta_eff = 1.0 - alpha_eff
    posterior_var = (1.0 - ab_prev) / (1.0 - ab) * beta_eff
    return _SubSchedule(orig_index=idx, alpha_eff=alpha_eff, alpha_bar=ab,
                        posterior_var=posterior_var)


def sample_chains(s: NoiseSchedule, denoiser, tau, g: GuidanceConfig,
                  steps: int, n_chains: int, seed: int) -> np.ndarray:
    """Ancestral sampling of n_chains latents; returns (n_chains, C, H, W).

    Chains start from a unit normal and share the denoiser and conditioning;
    all randomness comes from the seed.
    """
    if n_chains < 1:
        raise ParameterError("n_chains must be >= 1")
    sub = _sub_schedule(s, steps)
    shape = tuple(denoiser.latent_shape)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_chains, *shape))
    for k in range(len(sub.orig_index) - 1, -1, -1):
        n = int(sub.orig_index[k])
        eps_hat = _guided_batch(denoiser, z, n, tau, g.w)
        alpha = sub.alpha_eff[k]
        ab = sub.alpha_bar[k]
        if k > 0:
            noise = rng.standard_normal(z.shape)
        else:
            noise = np.zeros_like(z)
        out = np.empty_like(z)
        kernels.ancestral_update(
            z.reshape(-1), np.ascontiguousarray(eps_hat).reshape(-1),
            1.0 / np.sqrt(alpha), (1.0 - alpha) / np.sqrt(1.0 - ab),
            np.sqrt(sub.posterior_var[k]), noise.reshape(-1),
            out.reshape(-1))
        z = out
    return z


def sample(s: NoiseSchedule, denoiser, tau, g: GuidanceConfig, steps: int,
           seed: int) -> LatentTensor:
    """Single-chain convenience wrapper around sample_chains."""
    return LatentTensor(sample_chains(s, denoiser, tau, g, steps, 1, seed)[0])


# ------------------------------------------------------------ latent dumps

def save_latents(path, latents, seed: int, s: NoiseSchedule) -> None:
    """Write latents as a small text header plus raw little-endian f64."""
    arr = np.ascontiguousarray(latents, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ContractError("expected (count, C, H, W) or (C, H, W)")
    header = "\n".join([
        LATENT_DUMP_MAGIC,
        "shape=" + ",".join(str(d) for d in arr.shape[1:]),
        f"count={arr.shape[0]}",
        f"seed={seed}",
        f"schedule={schedule_hash(s)}",
        "dtype=f64le",
    ]) + "\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(arr.astype("<f8").tobytes())


def load_latents(path):
    """Read a latent dump; returns (array (count, C, H, W), header dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    split = blob.find(b"\n\n")
    if split < 0:
        raise ContractError("latent dump has no header terminator")
    lines = blob[:split].decode("utf-8").splitlines()
    if not lines or lines[0] != LATENT_DUMP_MAGIC:
        raise ContractError("not a latent dump")
    meta = dict(line.split("=", 1) for line in lines[1:])
    shape = tuple(int(d) for d in meta["shape"].split(","))
    count = int(meta["count"])
    data = np.frombuffer(blob[split + 2:], dtype="<f8")
    if data.size != count * int(np.prod(shape)):
        raise ContractError("latent dump payload size disagrees with header")
    return data.reshape(count, *shape).astype(np.float64), meta
