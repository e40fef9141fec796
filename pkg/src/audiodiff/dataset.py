"""Toy conditional datasets pairing latents with captions.

The two-cluster dataset is the standard smoke corpus: caption "low" draws
latents from N(-mu, sigma^2 I) and caption "high" from N(+mu, sigma^2 I),
with mu = offset * ones(d)/sqrt(d) so ||mu|| equals `offset`.  Cluster
membership of a generated latent is judged by the nearer center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from audiodiff.conditioning import ConditioningSequence, ToyVocabulary
from audiodiff.errors import ParameterError

LOW_CAPTION = "low"
HIGH_CAPTION = "high"


@dataclass(eq=False)
class ToyDataset:
    """Paired (latent, conditioning) plus the generator's ground truth."""

    items: list[tuple[np.ndarray, ConditioningSequence]]
    captions: list[str]
    centers: dict[str, np.ndarray]
    sigma: float
    vocab: ToyVocabulary

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def make_two_cluster_dataset(n_pairs: int, latent_dim: int = 4,
                             offset: float = 1.5, sigma: float = 1.0,
                             seed: int = 0, d_text: int = 16,
                             vocab_seed: int = 0) -> ToyDataset:
    """Balanced two-caption corpus of (d, 1, 1) latents."""
    if n_pairs < 2:
        raise ParameterError("need at least two pairs")
    if latent_dim < 1 or sigma <= 0.0:
        raise ParameterError("latent_dim must be >= 1 and sigma > 0")
    vocab = ToyVocabulary([LOW_CAPTION, HIGH_CAPTION], d_text=d_text,
                          seed=vocab_seed)
    center = offset * np.ones(latent_dim) / np.sqrt(latent_dim)
    centers = {LOW_CAPTION: -center, HIGH_CAPTION: center}
    encoded = {cap: vocab.encode(cap) for cap in centers}
    rng = np.random.default_rng(seed)
    items = []
    captions = []
    for i in range(n_pairs):
        caption = LOW_CAPTION if i % 2 == 0 else HIGH_CAPTION
        z0 = centers[caption] + sigma * rng.standard_normal(latent_dim)
        items.append((z0.reshape(latent_dim, 1, 1), encoded[caption]))
        captions.append(caption)
    return ToyDataset(items=items, captions=captions, centers=centers,
                      sigma=sigma, vocab=vocab)


def cluster_accuracy(samples: np.ndarray, target_center: np.ndarray,
                     other_center: np.ndarray) -> float:
    """Fraction of latents nearer the target center than the other one."""
    flat = np.asarray(samples, dtype=np.float64) \
        .reshape(samples.shape[0], -1)
    d_target = np.linalg.norm(flat - target_center.reshape(1, -1), axis=1)
    d_other = np.linalg.norm(flat - other_center.reshape(1, -1), axis=1)
    return float(np.mean(d_target < d_other))
