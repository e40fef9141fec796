"""Waveform DSP: synthesis, STFT, mel filterbank, pressure levels,
Griffin-Lim phase reconstruction, and 16-bit PCM WAV I/O.

Everything assumes mono float64 audio at 16 kHz by default.  Sample values
may exceed [-1, 1] inside the pipeline (mixing preserves overshoot); they
are clamped only when written to WAV, and the writer reports how many
samples it had to clamp.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from audiodiff.errors import ContractError, ParameterError, SilentSignalError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_FRAME = 1024
DEFAULT_HOP = 256
DEFAULT_MEL_BINS = 64


@dataclass(eq=False)
class Waveform:
    """Mono float64 samples plus their rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ContractError("waveforms are mono (rank-1)")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ContractError("waveform values must be finite")
        if self.sample_rate < 1:
            raise ParameterError("sample_rate must be positive")
        self.samples = arr

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(eq=False)
class MelSpectrogram:
    """Nonnegative mel energies, shape (frames, mel bins)."""

    data: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    frame: int = DEFAULT_FRAME
    hop: int = DEFAULT_HOP

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ContractError("mel spectrogram is (frames, bins)")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ContractError("mel energies must be finite and >= 0")
        self.data = arr

    @property
    def n_mels(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------- synthesis

def sine(freq: float, duration: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
         amplitude: float = 0.5, phase: float = 0.0) -> Waveform:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return Waveform(amplitude * np.sin(2.0 * np.pi * freq * t + phase),
                    sample_rate)


def white_noise(duration: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
                amplitude: float = 0.1, seed: int = 0) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    return Waveform(amplitude * rng.standard_normal(n), sample_rate)


# --------------------------------------------------------------------- STFT

def hann_window(frame: int) -> np.ndarray:
    """Periodic Hann window (the overlap-add friendly variant)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame) / frame)


def _check_stft_args(n_samples, frame, hop):
    if frame < 2 or (frame & (frame - 1)) != 0:
        raise ParameterError("frame length must be a power of two")
    if not 0 < hop <= frame:
        raise ParameterError("hop must lie in 1..frame")
    if n_samples < frame:
        raise ParameterError("signal shorter than one frame")


def _frame_signal(samples, frame, hop):
    n_frames = 1 + (samples.size - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    return samples[idx]


def _stft_complex(samples, frame, hop):
    frames = _frame_signal(samples, frame, hop) * hann_window(frame)
    return np.fft.rfft(frames, axis=1)


def stft_magnitude(w: Waveform, frame: int = DEFAULT_FRAME,
                   hop: int = DEFAULT_HOP) -> np.ndarray:
    """Magnitudes of the Hann-windowed one-sided STFT, (frames, frame/2+1)."""
    _check_stft_args(w.samples.size, frame, hop)
    return np.abs(_stft_complex(w.samples, frame, hop))


def _istft(spec, frame, hop):
    """Weighted overlap-add inverse with the same Hann window."""
    window = hann_window(frame)
    frames = np.fft.irfft(spec, n=frame, axis=1) * window
    n_frames = frames.shape[0]
    length = (n_frames - 1) * hop + frame
    signal = np.zeros(length)
    weight = np.zeros(length)
    for m in range(n_frames):
        signal[m * hop:m * hop + frame] += frames[m]
        weight[m * hop:m * hop + frame] += window * window
    return signal / np.maximum(weight, 1e-12)


# ------------------------------------------------------------ mel filterbank

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, frame: int,
                   sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filters over the one-sided bins, each row normalized
    to sum to 1 so a flat power spectrum maps to a flat mel profile."""
    if n_mels < 1:
        raise ParameterError("n_mels must be >= 1")
    n_bins = frame // 2 + 1
    if n_mels > n_bins:
        raise ParameterError("more mel bins than spectrogram bins")
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(sample_rate / 2.0),
                                   n_mels + 2))
    bin_freqs = np.arange(n_bins) * sample_rate / frame
    bank = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        low, center, high = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - low) / max(center - low, 1e-12)
        falling = (high - bin_freqs) / max(high - center, 1e-12)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
        total = bank[i].sum()
        if total <= 0.0:
            raise ParameterError(
                "mel filter {} covers no spectrogram bin; use fewer mel "
                "bins or a longer frame".format(i))
        bank[i] /= total
    return bank


def mel_spectrogram(w: Waveform, n_mels: int = DEFAULT_MEL_BINS,
                    frame: int = DEFAULT_FRAME,
                    hop: int = DEFAULT_HOP) -> MelSpectrogram:
    """Mel-weighted power spectrogram (linear in signal power)."""
    power = stft_magnitude(w, frame, hop) ** 2
    bank = mel_filterbank(n_mels, frame, w.sample_rate)
    return MelSpectrogram(power @ bank.T, sample_rate=w.sample_rate,
                          frame=frame, hop=hop)


# ------------------------------------------------------------------- levels

def pressure_level_db(w: Waveform) -> float:
    """Global level 20*log10(RMS) re full scale 1.0.

    Raises SilentSignalError for empty or all-zero input, where the level
    is undefined.
    """
    if w.samples.size == 0 or not np.any(w.samples):
        raise SilentSignalError("pressure level undefined for silence")
    rms = np.sqrt(np.mean(w.samples * w.samples))
    return float(20.0 * np.log10(rms))


# -------------------------------------------------------------- Griffin-Lim

def mel_to_magnitude(m: MelSpectrogram) -> np.ndarray:
    """Least-squares inversion of the mel weighting back to magnitudes."""
    bank = mel_filterbank(m.n_mels, m.frame, m.sample_rate)
    power = np.clip(m.data @ np.linalg.pinv(bank).T, 0.0, None)
    return np.sqrt(power)


def griffin_lim(m, iters: int = 60, seed: int = 0, frame: int | None = None,
                hop: int | None = None, return_trace: bool = False):
    """Iterative phase reconstruction from a magnitude target.

    `m` is a MelSpectrogram (inverted to linear magnitudes first) or a raw
    (frames, frame/2+1) magnitude matrix.  Each iteration projects the
    current phase estimate through istft/stft; the recorded inconsistency
    ||M*e^{i phi} - STFT(ISTFT(M*e^{i phi}))||_F / ||M||_F is non-increasing.
    With return_trace=True the per-iteration errors come back too.
    """
    if iters < 1:
        raise ParameterError("iters must be >= 1")
    if isinstance(m, MelSpectrogram):
        magnitude = mel_to_magnitude(m)
        frame = m.frame if frame is None else frame
        hop = m.hop if hop is None else hop
        sample_rate = m.sample_rate
    else:
        magnitude = np.asarray(m, dtype=np.float64)
        if magnitude.ndim != 2:
            raise ContractError("magnitude target must be rank-2")
        if frame is None:
            frame = 2 * (magnitude.shape[1] - 1)
        if hop is None:
            hop = frame // 4
        sample_rate = DEFAULT_SAMPLE_RATE
    if magnitude.shape[1] != frame // 2 + 1:
        raise ContractError("magnitude width disagrees with frame length")

    norm = np.linalg.norm(magnitude)
    if norm == 0.0:
        length = (magnitude.shape[0] - 1) * hop + frame
        silent = Waveform(np.zeros(length), sample_rate)
        return (silent, [0.0] * iters) if return_trace else silent

    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=magnitude.shape)
    errors = []
    signal = None
    for _ in range(iters):
        target = magnitude * np.exp(1j * phase)
        signal = _istft(target, frame, hop)
        spec = _stft_complex(signal, frame, hop)
        errors.append(float(np.linalg.norm(target - spec) / norm))
        phase = np.angle(spec)
    out = Waveform(signal, sample_rate)
    return (out, errors) if return_trace else out


def spectral_convergence(magnitude: np.ndarray, w: Waveform, frame: int,
                         hop: int) -> float:
    """Relative Frobenius error between |STFT(w)| and a magnitude target."""
    mag = np.abs(_stft_complex(w.samples, frame, hop))
    return float(np.linalg.norm(mag - magnitude) / np.linalg.norm(magnitude))


# ------------------------------------------------------------------ WAV I/O

def write_wav(path, w: Waveform) -> int:
    """Write mono 16-bit PCM; returns the number of clamped samples."""
    clipped = int(np.count_nonzero(np.abs(w.samples) > 1.0))
    scaled = np.clip(np.rint(w.samples * 32767.0), -32768, 32767)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(scaled.astype("<i2").tobytes())
    return clipped


def read_wav(path) -> Waveform:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise ParameterError("expected mono 16-bit PCM")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return Waveform(samples, rate)
