"""Pressure-level-weighted pair mixing for dataset augmentation.

Two clips are combined with the relative weight

    p = 1 / (1 + 10^((G1 - G2) / 20)),

where G is each clip's global level in dB; the louder clip therefore gets
the smaller weight.  The weighted sum is renormalized by
sqrt(p^2 + (1-p)^2), which keeps the RMS of uncorrelated unit-RMS inputs at
about 1.  Mixed values are never re-clipped here; clamping happens only at
WAV write time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from audiodiff.conditioning import concat_captions
from audiodiff.dsp import Waveform, pressure_level_db
from audiodiff.errors import ParameterError


@dataclass(eq=False)
class MixedPair:
    """One augmented clip: mixed audio, joined caption, weight, sources."""

    audio: Waveform
    caption: str
    p: float
    source_ids: tuple[int, int]


def relative_weight(g1: float, g2: float) -> float:
    """Mixing weight of the first clip given the two levels in dB."""
    if not (math.isfinite(g1) and math.isfinite(g2)):
        raise ParameterError("levels must be finite")
    return 1.0 / (1.0 + 10.0 ** ((g1 - g2) / 20.0))


def mix_pair(x1: Waveform, x2: Waveform) -> tuple[Waveform, float]:
    """Level-weighted, RMS-renormalized mix of two clips.

    Levels are measured on the original clips, then the shorter clip is
    zero-padded at the tail.  Returns the mixed waveform and the weight p
    of the first clip.  Silent inputs raise SilentSignalError.
    """
    if x1.sample_rate != x2.sample_rate:
        raise ParameterError("sample rates must match")
    p = relative_weight(pressure_level_db(x1), pressure_level_db(x2))
    length = max(x1.samples.size, x2.samples.size)
    a = np.zeros(length)
    b = np.zeros(length)
    a[:x1.samples.size] = x1.samples
    b[:x2.samples.size] = x2.samples
    mixed = (p * a + (1.0 - p) * b) / math.sqrt(p * p + (1.0 - p) ** 2)
    return Waveform(mixed, x1.sample_rate), p


def augment_manifest(entries, count: int, seed: int) -> list[MixedPair]:
    """Mix `count` distinct unordered pairs drawn uniformly from `entries`.

    `entries` is a sequence of (Waveform, caption).  Pairs never repeat and
    never mix a clip with itself; captions are joined with a single space.
    """
    items = list(entries)
    if len(items) < 2:
        raise ParameterError("need at least two entries to mix")
    n_pairs = len(items) * (len(items) - 1) // 2
    if not 1 <= count <= n_pairs:
        raise ParameterError(
            f"count must lie in 1..{n_pairs} for {len(items)} entries")
    rng = np.random.default_rng(seed)
    chosen = set()
    out = []
    while len(out) < count:
        i, j = rng.choice(len(items), size=2, replace=False)
        key = (min(i, j), max(i, j))
        if key in chosen:
            continue
        chosen.add(key)
        i, j = int(i), int(j)
        audio, p = mix_pair(items[i][0], items[j][0])
        caption = concat_captions(items[i][1], items[j][1])
        out.append(MixedPair(audio=audio, caption=caption, p=p,
                             source_ids=(i, j)))
    return out


# ------------------------------------------------------------- manifests

def read_manifest(path) -> list[tuple[str, str]]:
    """Tab-separated rows: wav-path, caption (extra fields are kept out)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ParameterError(
                    f"manifest line {lineno} needs wav-path<TAB>caption")
            rows.append((parts[0], parts[1]))
    return rows


def write_manifest(path, rows) -> None:
    """Rows are (wav-path, caption) or (wav-path, caption, extra)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(part) for part in row) + "\n")


def augmented_manifest_row(wav_path: str, pair: MixedPair) -> tuple:
    """Manifest row for a mixed clip, carrying its weight and sources."""
    extra = f"p={pair.p:.6f} src={pair.source_ids[0]},{pair.source_ids[1]}"
    return (wav_path, pair.caption, extra)
