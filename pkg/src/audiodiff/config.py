"""Run configuration: plain key=value text, typed defaults, stable hashing.

Config files are line-oriented `key = value` pairs with `#` comments.
Unknown keys are rejected (they are almost always typos).  The config hash
is a short digest of the canonical text and is stamped into every artifact
a run writes, so mismatched resumes fail loudly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from audiodiff.errors import ParameterError


@dataclass
class RunConfig:
    # schedule
    n_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    gamma_mode: str = "uniform"   # snr | min_snr | uniform
    snr_clamp: float | None = None
    # guidance
    guidance: float = 3.0
    cond_drop_prob: float = 0.10
    # sampling
    steps: int = 100
    n_samples: int = 200
    sample_seed: int = 0
    denoiser: str = "checkpoint"  # analytic | checkpoint
    checkpoint: str = "checkpoint.bin"
    steps_sweep: str = ""         # e.g. "10,50,200" for one row per setting
    guidance_sweep: str = ""
    # analytic oracle
    oracle_mean: str = "1,-1,2,0"
    oracle_var: float = 0.25
    # dataset
    dataset: str = "two-cluster"
    n_pairs: int = 2000
    latent_dim: int = 4
    cluster_offset: float = 1.5
    cluster_sigma: float = 1.0
    data_seed: int = 0
    vocab_seed: int = 0
    # model
    d_text: int = 16
    hidden_width: int = 64
    n_hidden: int = 2
    time_dim: int = 16
    attn_dim: int = 16
    init_seed: int = 0
    # training
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 0.004
    optimizer: str = "adam"
    momentum: float = 0.0
    train_seed: int = 0

    def oracle_mean_vector(self):
        return [float(v) for v in self.oracle_mean.split(",") if v.strip()]

    def sweep_values(self, text: str, cast):
        return [cast(v) for v in text.split(",") if v.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, text: str):
    kind = _FIELD_TYPES[name]
    if name == "snr_clamp":
        return None if text.lower() in ("none", "") else float(text)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno} is not key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParameterError(f"unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, value))
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            value = "none"
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    digest = hashlib.sha256(config_to_text(cfg).encode("utf-8"))
    return digest.hexdigest()[:12]


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))
