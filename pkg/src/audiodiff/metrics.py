"""Objective evaluation: Frechet distance between embedding Gaussians and a
per-pair label divergence, with seeded toy embedders standing in for
pretrained feature extractors.

The Frechet distance between N(mu_a, S_a) and N(mu_b, S_b) is

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2),

computed through symmetric eigendecompositions with negative eigenvalues
clamped to zero.  Covariances are the unbiased sample estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from audiodiff.dsp import (DEFAULT_FRAME, DEFAULT_HOP, DEFAULT_MEL_BINS,
                           Waveform, mel_spectrogram)
from audiodiff.errors import ContractError, ParameterError

PROB_FLOOR = 1e-8


@dataclass(eq=False)
class GaussianStats:
    """Mean, symmetrized covariance, and the sample count behind them."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (self.mean.size, self.mean.size):
            raise ContractError("covariance shape disagrees with the mean")
        self.cov = (cov + cov.T) / 2.0

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_gaussian(embeddings) -> GaussianStats:
    """Sample mean and unbiased covariance of row vectors (needs >= 2)."""
    x = np.asarray(list(embeddings), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2:
        raise ParameterError("need at least two embedding vectors")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianStats(mean=mean, cov=cov, count=x.shape[0])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Frechet distance between two fitted Gaussians (>= 0, symmetric)."""
    if a.dim != b.dim:
        raise ContractError("embedding dimensions disagree")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    values = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov)
                  - 2.0 * np.sum(np.sqrt(values)))
    return max(value, 0.0)


def label_kl(reference, generated, classifier,
             floor: float = PROB_FLOOR) -> float:
    """Mean KL(ref || gen) between label distributions of paired clips.

    Probabilities are floored at `floor` and renormalized before the log
    ratio, so zero-probability labels stay finite.
    """
    ref = list(reference)
    gen = list(generated)
    if len(ref) != len(gen):
        raise ParameterError("reference and generated lists must pair up")
    if not ref:
        raise ParameterError("need at least one pair")
    total = 0.0
    for r, g in zip(ref, gen):
        p = _floored(classifier.probabilities(r), floor)
        q = _floored(classifier.probabilities(g), floor)
        total += float(np.sum(p * np.log(p / q)))
    return total / len(ref)


def _floored(probs, floor):
    p = np.clip(np.asarray(probs, dtype=np.float64), floor, None)
    return p / p.sum()


# ---------------------------------------------------------- toy front ends

class MelStatsEmbedder:
    """Per-mel-bin mean log energy; plays the spectrum-statistics role."""

    def __init__(self, n_mels: int = DEFAULT_MEL_BINS,
                 frame: int = DEFAULT_FRAME, hop: int = DEFAULT_HOP,
                 floor: float = 1e-10):
        self.n_mels = n_mels
        self.frame = frame
        self.hop = hop
        self.floor = floor

    @property
    def dim(self) -> int:
        return self.n_mels

    def embed(self, w: Waveform) -> np.ndarray:
        mel = mel_spectrogram(w, self.n_mels, self.frame, self.hop).data
        return np.log(mel + self.floor).mean(axis=0)


class RandomProjectionEmbedder:
    """Seeded random projection of mel power frames, averaged over time."""

    def __init__(self, dim: int = 32, n_mels: int = DEFAULT_MEL_BINS,
                 frame: int = DEFAULT_FRAME, hop: int = DEFAULT_HOP,
                 seed: int = 0):
        if dim < 1:
            raise ParameterError("dim must be >= 1")
        self.dim = dim
        self.n_mels = n_mels
        self.frame = frame
        self.hop = hop
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((dim, n_mels)) / np.sqrt(n_mels)
        self.projection.setflags(write=False)

    def embed(self, w: Waveform) -> np.ndarray:
        mel = mel_spectrogram(w, self.n_mels, self.frame, self.hop).data
        return (mel @ self.projection.T).mean(axis=0)


class RandomLinearClassifier:
    """Seeded linear map on mel statistics plus softmax over labels;
    plays the pretrained-tagger role."""

    def __init__(self, n_labels: int = 10, n_mels: int = DEFAULT_MEL_BINS,
                 frame: int = DEFAULT_FRAME, hop: int = DEFAULT_HOP,
                 seed: int = 0):
        if n_labels < 2:
            raise ParameterError("need at least two labels")
        self.n_labels = n_labels
        self._embedder = MelStatsEmbedder(n_mels, frame, hop)
        rng = np.random.default_rng(seed)
        self.weights = rng.standard_normal((n_labels, n_mels)) \
            / np.sqrt(n_mels)
        self.weights.setflags(write=False)

    def probabilities(self, w: Waveform) -> np.ndarray:
        logits = self.weights @ self._embedder.embed(w)
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum()


def default_embedders(n_mels: int = DEFAULT_MEL_BINS,
                      frame: int = DEFAULT_FRAME, hop: int = DEFAULT_HOP,
                      seed: int = 0):
    """The two stock embedders, named for reports."""
    return [
        ("mel-stats", MelStatsEmbedder(n_mels, frame, hop)),
        ("rand-proj-32", RandomProjectionEmbedder(32, n_mels, frame, hop,
                                                  seed=seed)),
    ]


# -------------------------------------------------------------- the suite

@dataclass(eq=False)
class MetricReport:
    """Rows of (metric, embedder, value); serializes to a small CSV."""

    rows: list

    def value(self, metric: str, embedder: str = "-") -> float:
        for m, e, v in self.rows:
            if m == metric and e == embedder:
                return v
        raise KeyError((metric, embedder))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("metric,embedder,value\n")
            for metric, embedder, value in self.rows:
                fh.write(f"{metric},{embedder},{value:.12g}\n")


def evaluate_suite(reference, generated, embedders=None,
                   classifier=None) -> MetricReport:
    """Frechet distance per embedder plus the mean label KL over pairs.

    `reference` and `generated` are equal-length lists of Waveforms (the KL
    pairs them positionally).  Defaults cover the stock embedders and the
    10-label toy classifier.
    """
    ref = list(reference)
    gen = list(generated)
    if not ref or not gen:
        raise ParameterError("reference and generated sets must be non-empty")
    if embedders is None:
        embedders = default_embedders()
    if classifier is None:
        classifier = RandomLinearClassifier()
    rows = []
    for name, embedder in embedders:
        stats_ref = fit_gaussian([embedder.embed(w) for w in ref])
        stats_gen = fit_gaussian([embedder.embed(w) for w in gen])
        rows.append(("frechet", name, frechet_distance(stats_ref, stats_gen)))
    rows.append(("label_kl", "-", label_kl(ref, gen, classifier)))
    return MetricReport(rows=rows)
