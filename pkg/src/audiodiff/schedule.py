"""Diffusion noise schedule and the quantities derived from it.

Step indices are 1-based in all public operations (n = 1..N); the arrays on
NoiseSchedule are 0-based, so entry k describes step n = k+1.  The reverse
posterior variance uses the convention alpha_bar(0) = 1, which makes the
final reverse step (n = 1) deterministic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from audiodiff.errors import ParameterError

GAMMA_MODES = ("snr", "min_snr", "uniform")


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step noise levels and derived vectors, all length n_steps.

    beta          forward noise rate per step
    alpha         1 - beta
    alpha_bar     cumulative product of alpha
    posterior_var reverse posterior variance (entry 0 is exactly 0)
    snr           alpha_bar / (1 - alpha_bar), strictly decreasing
    gamma         per-step loss weight under gamma_mode
    """

    n_steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray
    snr: np.ndarray
    gamma: np.ndarray
    beta_start: float
    beta_end: float
    gamma_mode: str = "snr"
    snr_clamp: float | None = None


def build_linear_schedule(n_steps: int, beta_start: float = 1e-4,
                          beta_end: float = 0.02, gamma_mode: str = "snr",
                          snr_clamp: float | None = None) -> NoiseSchedule:
    """Linear beta ramp from beta_start to beta_end over n_steps steps.

    The defaults (N=1000, beta in [1e-4, 0.02]) drive alpha_bar(N) to ~4e-5
    so a standard-normal start of the reverse chain is consistent with the
    forward process.
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError("need 0 < beta_start <= beta_end < 1")
    if n_steps > 1 and beta_start == beta_end:
        # A flat ramp would break the strictly-increasing beta invariant.
        raise ParameterError("beta_start == beta_end needs n_steps == 1")
    if gamma_mode not in GAMMA_MODES:
        raise ParameterError(f"gamma_mode must be one of {GAMMA_MODES}")
    if gamma_mode == "min_snr":
        if snr_clamp is None or not snr_clamp > 0.0:
            raise ParameterError("min_snr mode needs a positive snr_clamp")

    beta = np.linspace(beta_start, beta_end, n_steps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate(([1.0], alpha_bar[:-1]))
    posterior_var = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta
    snr = alpha_bar / (1.0 - alpha_bar)

    if gamma_mode == "snr":
        gamma = snr.copy()
    elif gamma_mode == "min_snr":
        gamma = np.minimum(snr, snr_clamp) / snr
    else:
        gamma = np.ones(n_steps)

    for name, vec in (("beta", beta), ("alpha_bar", alpha_bar)):
        if not np.all((vec > 0.0) & (vec < 1.0)):
            raise ParameterError(f"{name} left (0, 1); check the beta range")

    return NoiseSchedule(
        n_steps=n_steps, beta=beta, alpha=alpha, alpha_bar=alpha_bar,
        posterior_var=posterior_var, snr=snr, gamma=gamma,
        beta_start=float(beta_start), beta_end=float(beta_end),
        gamma_mode=gamma_mode,
        snr_clamp=None if snr_clamp is None else float(snr_clamp))


def check_step(s: NoiseSchedule, n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= s.n_steps:
        raise IndexError(f"step {n!r} outside 1..{s.n_steps}")


def snr_weight(s: NoiseSchedule, n: int, clamp: float | None = None) -> float:
    """Loss weight gamma_n for step n.

    Without a clamp this is the raw signal-to-noise ratio
    alpha_bar/(1 - alpha_bar).  With a clamp c it is min(SNR, c)/SNR, which
    tends to the uniform weight 1 as c grows (clamp=inf gives exactly 1).
    """
    check_step(s, n)
    value = float(s.snr[n - 1])
    if clamp is None:
        return value
    if not clamp > 0.0:
        raise ParameterError("clamp must be positive")
    return min(value, clamp) / value


# ----------------------------------------------------------- serialization

def schedule_to_config(s: NoiseSchedule) -> str:
    """Key-value text that rebuilds the schedule exactly."""
    lines = [
        f"n_steps={s.n_steps}",
        f"beta_start={s.beta_start!r}",
        f"beta_end={s.beta_end!r}",
        f"gamma_mode={s.gamma_mode}",
        f"snr_clamp={'none' if s.snr_clamp is None else repr(s.snr_clamp)}",
    ]
    return "\n".join(lines) + "\n"


def schedule_from_config(text: str) -> NoiseSchedule:
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"bad schedule config line: {raw!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        clamp_text = fields.get("snr_clamp", "none")
        return build_linear_schedule(
            n_steps=int(fields["n_steps"]),
            beta_start=float(fields["beta_start"]),
            beta_end=float(fields["beta_end"]),
            gamma_mode=fields.get("gamma_mode", "snr"),
            snr_clamp=None if clamp_text == "none" else float(clamp_text))
    except KeyError as missing:
        raise ParameterError(f"schedule config missing {missing}") from None


def save_schedule(path, s: NoiseSchedule) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(schedule_to_config(s))


def load_schedule(path) -> NoiseSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        return schedule_from_config(fh.read())


def schedule_hash(s: NoiseSchedule) -> str:
    """Short stable digest of the schedule config, stamped into artifacts."""
    digest = hashlib.sha256(schedule_to_config(s).encode("utf-8"))
    return digest.hexdigest()[:12]
