"""Noise estimators: a closed-form Gaussian oracle and a tiny trainable
conditional network, plus the training loop and checkpoint format.

The oracle replaces a learned backbone wherever the data distribution is an
isotropic Gaussian N(mu*, sigma^2 I).  With z_n = a*z0 + b*eps for
a = sqrt(alpha_bar_n), b = sqrt(1 - alpha_bar_n), the pair (eps, z_n) is
jointly Gaussian and conditioning gives the exact posterior mean

    E[eps | z_n] = b * (z_n - a*mu*) / (a^2 sigma^2 + b^2),

which is the statistically optimal noise estimate.  Sampling with it lets
every downstream claim be checked against closed-form truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from audiodiff import kernels
from audiodiff.autodiff import Tensor, grad
from audiodiff.errors import (ContractError, ParameterError,
                              TrainingDivergedError)
from audiodiff.diffusion import GuidanceConfig, training_loss
from audiodiff.optim import make_optimizer
from audiodiff.schedule import NoiseSchedule, check_step

CHECKPOINT_MAGIC = "#audiodiff-checkpoint v1"


class NoiseEstimator:
    """Interface: a pure noise estimate eps_hat(z_n, n, tau).

    `tau` is a ConditioningSequence or None; None and a null sequence both
    mean "unconditional".  Estimates are shaped like the input latent.
    `latent_shape` tells samplers what to draw.
    """

    latent_shape: tuple[int, int, int]

    def estimate(self, z, n, tau):
        raise NotImplementedError

    def estimate_batch(self, z_batch, n, tau):
        return np.stack([self.estimate(z_batch[i], n, tau)
                         for i in range(z_batch.shape[0])])


def _is_null(tau) -> bool:
    return tau is None or getattr(tau, "is_null", False)


class AnalyticGaussianDenoiser(NoiseEstimator):
    """Exact conditional-mean noise estimate for N(mu*, sigma^2 I) data."""

    def __init__(self, s: NoiseSchedule, mu_star, sigma2: float):
        arr = np.ascontiguousarray(mu_star, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1, 1)
        if arr.ndim != 3:
            raise ContractError("mu_star must be a vector or (C, H, W)")
        if not sigma2 > 0.0 or not np.isfinite(sigma2):
            raise ParameterError("sigma2 must be positive and finite")
        self.schedule = s
        self.mu_star = arr
        self.mu_flat = np.ascontiguousarray(arr.reshape(-1))
        self.sigma2 = float(sigma2)
        self.latent_shape = arr.shape

    def _coefficients(self, n):
        check_step(self.schedule, n)
        ab = self.schedule.alpha_bar[n - 1]
        denom = ab * self.sigma2 + (1.0 - ab)
        return np.sqrt(1.0 - ab) / denom, np.sqrt(ab)

    def estimate(self, z, n, tau=None):
        return self.estimate_batch(
            np.asarray(z, dtype=np.float64)[None], n, tau)[0]

    def estimate_batch(self, z_batch, n, tau=None):
        c_scale, c_mu = self._coefficients(n)
        z2d = np.ascontiguousarray(
            np.asarray(z_batch, dtype=np.float64).reshape(
                z_batch.shape[0], -1))
        out = np.empty_like(z2d)
        kernels.gaussian_eps(z2d, self.mu_flat, c_scale, c_mu, out)
        return out.reshape(z_batch.shape)


def time_embedding(n: int, dim: int) -> np.ndarray:
    """Sinusoidal step embedding, shape (1, dim); dim must be even."""
    if dim < 2 or dim % 2 != 0:
        raise ParameterError("time embedding dim must be even and >= 2")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = float(n) * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)]).reshape(1, dim)


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture of the tiny conditional denoiser."""

    latent_shape: tuple[int, int, int] = (4, 1, 1)
    d_text: int = 16
    hidden_width: int = 64
    n_hidden: int = 2
    time_dim: int = 16
    attn_dim: int = 16
    init_seed: int = 0

    def __post_init__(self):
        if len(self.latent_shape) != 3 or min(self.latent_shape) < 1:
            raise ParameterError("latent_shape must be (C, H, W), all >= 1")
        for name in ("d_text", "hidden_width", "n_hidden", "attn_dim"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.time_dim < 2 or self.time_dim % 2 != 0:
            raise ParameterError("time_dim must be even and >= 2")


class TinyCondDenoiser(NoiseEstimator):
    """A few dense layers with one cross-attention read of the caption.

    Latents are flattened to H*W tokens of size C.  Tokens are projected to
    the hidden width, shifted by a projected sinusoidal step embedding, read
    the conditioning rows through single-head dot-product attention, pass
    through relu hidden layers, and project back to token space.  The output
    projection starts at zero, so a freshly initialized model estimates zero
    noise.

    Unconditional inputs (tau None or null) attend to a learned null row;
    the tau payload of a null sequence is never touched, so the null path is
    independent of whatever the caller passes there.
    """

    def __init__(self, config: DenoiserConfig):
        self.config = config
        self.latent_shape = tuple(config.latent_shape)
        c = config.latent_shape[0]
        h = config.hidden_width
        rng = np.random.default_rng(config.init_seed)

        def dense(rows, cols):
            return rng.standard_normal((rows, cols)) / math.sqrt(rows)

        params = {
            "w_in": dense(c, h), "b_in": np.zeros((1, h)),
            "w_time": dense(config.time_dim, h), "b_time": np.zeros((1, h)),
            "w_q": dense(h, config.attn_dim),
            "w_k": dense(config.d_text, config.attn_dim),
            "w_v": dense(config.d_text, h),
            "null_row": rng.standard_normal((1, config.d_text)),
        }
        for i in range(config.n_hidden):
            params[f"w_h{i}"] = dense(h, h)
            params[f"b_h{i}"] = np.zeros((1, h))
        params["w_out"] = np.zeros((h, c))
        params["b_out"] = np.zeros((1, c))
        self.params = {name: Tensor(value) for name, value in params.items()}

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_names(self) -> list[str]:
        return list(self.params.keys())

    def _tau_rows(self, tau):
        if _is_null(tau):
            return None  # traced path substitutes the learned null row
        return np.ascontiguousarray(tau.tau, dtype=np.float64)

    # --------------------------------------------------- numpy fast path

    def _forward_rows(self, tokens, n, tau):
        """Pure-numpy forward over a stack of tokens (rows, C)."""
        p = {name: t.data for name, t in self.params.items()}
        cfg = self.config
        rows = self._tau_rows(tau)
        if rows is None:
            rows = p["null_row"]
        t_emb = time_embedding(n, cfg.time_dim)
        hid = tokens @ p["w_in"] + p["b_in"] + (t_emb @ p["w_time"]
                                                + p["b_time"])
        hid = np.maximum(hid, 0.0)
        q = hid @ p["w_q"]
        k = rows @ p["w_k"]
        v = rows @ p["w_v"]
        logits = (q @ k.T) / math.sqrt(cfg.attn_dim)
        logits -= logits.max(axis=-1, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=-1, keepdims=True)
        hid = hid + weights @ v
        for i in range(cfg.n_hidden):
            hid = np.maximum(hid @ p[f"w_h{i}"] + p[f"b_h{i}"], 0.0)
        return hid @ p["w_out"] + p["b_out"]

    def estimate(self, z, n, tau=None):
        return self.estimate_batch(
            np.asarray(z, dtype=np.float64)[None], n, tau)[0]

    def estimate_batch(self, z_batch, n, tau=None):
        check = np.asarray(z_batch, dtype=np.float64)
        b, c = check.shape[0], check.shape[1]
        if check.shape[1:] != self.latent_shape:
            raise ContractError("latent shape disagrees with the model")
        tokens = check.reshape(b, c, -1).transpose(0, 2, 1).reshape(-1, c)
        out = self._forward_rows(tokens, n, tau)
        return np.ascontiguousarray(
            out.reshape(b, -1, c).transpose(0, 2, 1).reshape(check.shape))

    def attention_map(self, z, n, tau=None) -> np.ndarray:
        """Attention weights (tokens x conditioning rows); rows sum to 1."""
        p = {name: t.data for name, t in self.params.items()}
        cfg = self.config
        arr = np.asarray(z, dtype=np.float64)
        c = arr.shape[0]
        tokens = arr.reshape(c, -1).T
        rows = self._tau_rows(tau)
        if rows is None:
            rows = p["null_row"]
        t_emb = time_embedding(n, cfg.time_dim)
        hid = tokens @ p["w_in"] + p["b_in"] + (t_emb @ p["w_time"]
                                                + p["b_time"])
        hid = np.maximum(hid, 0.0)
        logits = (hid @ p["w_q"]) @ (rows @ p["w_k"]).T \
            / math.sqrt(cfg.attn_dim)
        logits -= logits.max(axis=-1, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=-1, keepdims=True)
        return weights

    # --------------------------------------------------------- traced path

    def estimate_traced(self, z, n, tau=None) -> Tensor:
        """Forward pass on the autodiff tape; mirrors _forward_rows."""
        p = self.params
        cfg = self.config
        arr = np.asarray(z, dtype=np.float64)
        if arr.shape != self.latent_shape:
            raise ContractError("latent shape disagrees with the model")
        c = arr.shape[0]
        tokens = Tensor(np.ascontiguousarray(arr.reshape(c, -1).T))
        rows = self._tau_rows(tau)
        rows_t = p["null_row"] if rows is None else Tensor(rows)
        t_emb = Tensor(time_embedding(n, cfg.time_dim))
        hid = tokens @ p["w_in"] + p["b_in"] + (t_emb @ p["w_time"]
                                                + p["b_time"])
        hid = hid.relu()
        q = hid @ p["w_q"]
        k = rows_t @ p["w_k"]
        v = rows_t @ p["w_v"]
        weights = ((q @ k.T) * (1.0 / math.sqrt(cfg.attn_dim))).softmax()
        hid = hid + weights @ v
        for i in range(cfg.n_hidden):
            hid = (hid @ p[f"w_h{i}"] + p[f"b_h{i}"]).relu()
        out = hid @ p["w_out"] + p["b_out"]
        return out.T.reshape(self.latent_shape)


# ------------------------------------------------------------- training

@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    method: str = "sgd"   # sgd | adam
    momentum: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be >= 1")


@dataclass
class TrainingTrace:
    """Per-epoch losses plus conditioning-dropout bookkeeping."""

    epoch_losses: list[float] = field(default_factory=list)
    n_samples_seen: int = 0
    n_dropped: int = 0
    eval_loss: float = float("nan")
    eval_seed: int = 0

    @property
    def drop_fraction(self) -> float:
        if self.n_samples_seen == 0:
            return 0.0
        return self.n_dropped / self.n_samples_seen

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,loss\n")
            for i, loss in enumerate(self.epoch_losses, start=1):
                fh.write(f"{i},{loss:.12g}\n")
            fh.write(f"# samples_seen={self.n_samples_seen} "
                     f"dropped={self.n_dropped} "
                     f"drop_fraction={self.drop_fraction:.6f}\n")
            fh.write(f"# eval_loss={self.eval_loss:.12g} "
                     f"eval_seed={self.eval_seed}\n")


def evaluate_loss(denoiser, dataset, s: NoiseSchedule, seed: int) -> float:
    """Deterministic held-out-style loss: fixed (n, eps) draws, no dropout.

    Used after training and again on resume to prove the checkpoint restored
    the exact model.
    """
    rng = np.random.default_rng(seed)
    batch = []
    for z0, tau in dataset:
        n = int(rng.integers(1, s.n_steps + 1))
        z0_arr = np.asarray(z0, dtype=np.float64)
        eps = rng.standard_normal(z0_arr.shape)
        batch.append((z0_arr, tau, n, eps))
    return training_loss(s, denoiser, batch).item()


def train(denoiser: TinyCondDenoiser, dataset, s: NoiseSchedule,
          g: GuidanceConfig, opt: OptimizerConfig,
          eval_size: int = 64) -> TrainingTrace:
    """Minibatch training of the noise-matching loss with conditioning
    dropout.

    `dataset` is a sequence of (z0, tau) pairs.  Per sample, a step n is
    drawn uniformly from 1..N, eps from a unit normal, and the conditioning
    is replaced by the null path with probability g.cond_drop_prob.  The
    trace records per-epoch mean loss and the observed drop fraction.
    """
    items = [(np.asarray(z0, dtype=np.float64), tau) for z0, tau in dataset]
    if not items:
        raise ParameterError("dataset must be non-empty")
    if not all(np.isfinite(z0).all() for z0, _ in items):
        raise ParameterError("dataset contains non-finite latents")
    rng = np.random.default_rng(opt.seed)
    optimizer = make_optimizer(opt.method, opt.learning_rate, opt.momentum)
    params = denoiser.parameters()
    trace = TrainingTrace(eval_seed=opt.seed + 0x5EED)

    for _ in range(opt.epochs):
        order = rng.permutation(len(items))
        epoch_loss = 0.0
        for start in range(0, len(order), opt.batch_size):
            chunk = order[start:start + opt.batch_size]
            batch = []
            for j in chunk:
                z0, tau = items[j]
                n = int(rng.integers(1, s.n_steps + 1))
                eps = rng.standard_normal(z0.shape)
                if rng.random() < g.cond_drop_prob:
                    tau = None
                    trace.n_dropped += 1
                batch.append((z0, tau, n, eps))
            trace.n_samples_seen += len(batch)
            # Inputs were validated above, so a non-finite value inside the
            # loss graph means the optimization itself blew up.
            try:
                loss = training_loss(s, denoiser, batch)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"loss became {value} after "
                        f"{trace.n_samples_seen} samples")
                optimizer.step(params, grad(loss, params))
            except ContractError as exc:
                raise TrainingDivergedError(
                    f"numerical overflow after "
                    f"{trace.n_samples_seen} samples") from exc
            if not all(np.isfinite(p.data).all() for p in params):
                raise TrainingDivergedError(
                    f"parameters overflowed after "
                    f"{trace.n_samples_seen} samples")
            epoch_loss += value * len(batch)
        trace.epoch_losses.append(epoch_loss / len(items))

    trace.eval_loss = evaluate_loss(denoiser, items[:eval_size], s,
                                    trace.eval_seed)
    return trace


# ----------------------------------------------------------- checkpoints

def save_checkpoint(path, denoiser: TinyCondDenoiser,
                    extra: dict | None = None) -> None:
    """Versioned flat binary: text header with a shape manifest, then the
    parameter payload in manifest order."""
    cfg = denoiser.config
    lines = [
        CHECKPOINT_MAGIC,
        "latent_shape=" + ",".join(str(d) for d in cfg.latent_shape),
        f"d_text={cfg.d_text}",
        f"hidden_width={cfg.hidden_width}",
        f"n_hidden={cfg.n_hidden}",
        f"time_dim={cfg.time_dim}",
        f"attn_dim={cfg.attn_dim}",
        f"init_seed={cfg.init_seed}",
    ]
    for key, value in sorted((extra or {}).items()):
        lines.append(f"x_{key}={value}")
    payload = []
    for name in denoiser.parameter_names():
        data = denoiser.params[name].data
        shape = ",".join(str(d) for d in data.shape)
        lines.append(f"param={name} shape={shape}")
        payload.append(np.ascontiguousarray(data, dtype="<f8"))
    header = "\n".join(lines) + "\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        for block in payload:
            fh.write(block.tobytes())


def load_checkpoint(path):
    """Rebuild the denoiser from a checkpoint; returns (model, extra)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    split = blob.find(b"\n\n")
    if split < 0:
        raise ContractError("checkpoint has no header terminator")
    lines = blob[:split].decode("utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ContractError("not a checkpoint file")
    fields = {}
    manifest = []
    for line in lines[1:]:
        if line.startswith("param="):
            name_part, shape_part = line.split(" shape=")
            shape = tuple(int(d) for d in shape_part.split(","))
            manifest.append((name_part[len("param="):], shape))
        else:
            key, value = line.split("=", 1)
            fields[key] = value
    config = DenoiserConfig(
        latent_shape=tuple(int(d)
                           for d in fields["latent_shape"].split(",")),
        d_text=int(fields["d_text"]),
        hidden_width=int(fields["hidden_width"]),
        n_hidden=int(fields["n_hidden"]),
        time_dim=int(fields["time_dim"]),
        attn_dim=int(fields["attn_dim"]),
        init_seed=int(fields["init_seed"]))
    model = TinyCondDenoiser(config)
    if [name for name, _ in manifest] != model.parameter_names():
        raise ContractError("checkpoint manifest disagrees with the model")
    data = np.frombuffer(blob[split + 2:], dtype="<f8")
    if not np.all(np.isfinite(data)):
        raise ContractError("checkpoint payload contains non-finite values")
    total = sum(int(np.prod(shape)) for _, shape in manifest)
    if data.size != total:
        raise ContractError("checkpoint payload size disagrees with manifest")
    offset = 0
    for name, shape in manifest:
        size = int(np.prod(shape))
        if model.params[name].data.shape != shape:
            raise ContractError(f"shape mismatch for parameter {name}")
        model.params[name].data = data[offset:offset + size] \
            .reshape(shape).astype(np.float64)
        offset += size
    extra = {key[2:]: value for key, value in fields.items()
             if key.startswith("x_")}
    return model, extra
