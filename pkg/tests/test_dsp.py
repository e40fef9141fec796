import numpy as np
import pytest

from audiodiff.dsp import (MelSpectrogram, Waveform, griffin_lim,
                           hann_window, mel_filterbank, mel_spectrogram,
                           mel_to_magnitude, pressure_level_db, read_wav,
                           sine, spectral_convergence, stft_magnitude,
                           white_noise, write_wav)
from audiodiff.errors import (ContractError, ParameterError,
                              SilentSignalError)


def test_waveform_contracts():
    with pytest.raises(ContractError):
        Waveform(np.zeros((2, 100)))
    with pytest.raises(ContractError):
        Waveform(np.array([0.0, np.nan]))
    w = Waveform(np.zeros(1600), sample_rate=16000)
    assert w.duration == pytest.approx(0.1)


def test_hann_window_is_periodic():
    # periodic (DFT-even) Hann: w[k] = 0.5 - 0.5 cos(2 pi k / N)
    n = 16
    w = hann_window(n)
    k = np.arange(n)
    assert np.allclose(w, 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n),
                       atol=1e-15)
    assert w[0] == 0.0
    # periodic windows are not symmetric: w[1] != w[-1]
    assert w[1] != w[-1]


def test_stft_parseval_per_frame():
    # windowed-frame energy equals the one-sided weighted bin energy / N
    frame, hop = 256, 64
    w = white_noise(0.25, amplitude=0.3, seed=5)
    mag = stft_magnitude(w, frame=frame, hop=hop)
    window = hann_window(frame)
    tol = 1e-6
    for t in range(mag.shape[0]):
        seg = w.samples[t * hop:t * hop + frame] * window
        time_energy = np.sum(seg ** 2)
        m = mag[t]
        freq_energy = (m[0] ** 2 + 2.0 * np.sum(m[1:-1] ** 2)
                       + m[-1] ** 2) / frame
        assert abs(time_energy - freq_energy) <= tol * time_energy


def test_sine_concentrates_in_its_bin():
    # a bin-centered sine leaks only into the Hann main lobe: the peak bin
    # holds 2/3 of the energy and peak +- 1 holds all of it
    sr, frame = 16000, 1024
    k = 32
    w = sine(k * sr / frame, 0.5, sample_rate=sr)
    mag = stft_magnitude(w, frame=frame, hop=256)
    power = (mag ** 2).sum(axis=0)
    peak = int(np.argmax(power))
    assert peak == k
    total = power.sum()
    assert power[peak] / total > 0.6
    assert power[peak - 1:peak + 2].sum() / total > 0.999


def test_stft_argument_validation():
    w = white_noise(0.1)
    with pytest.raises(ParameterError):
        stft_magnitude(w, frame=1000, hop=256)  # not a power of two
    with pytest.raises(ParameterError):
        stft_magnitude(w, frame=256, hop=0)
    with pytest.raises(ParameterError):
        stft_magnitude(w, frame=256, hop=512)
    with pytest.raises(ParameterError):
        stft_magnitude(Waveform(np.zeros(100)), frame=256, hop=64)


def test_mel_filterbank_rows():
    bank = mel_filterbank(64, 1024)
    assert bank.shape == (64, 513)
    assert np.allclose(bank.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(bank >= 0.0)
    # too many mel bins for the resolution leaves an empty filter
    with pytest.raises(ParameterError):
        mel_filterbank(128, 256)


def test_mel_spectrogram_white_noise_is_flat():
    w = white_noise(2.0, amplitude=0.2, seed=3)
    m = mel_spectrogram(w, n_mels=64)
    mean_band = m.data.mean(axis=0)
    cv = mean_band.std() / mean_band.mean()
    assert cv < 0.5
    assert np.all(m.data >= 0.0)
    assert m.data.shape[1] == 64


def test_mel_round_trip_through_pinv():
    bank = mel_filterbank(64, 1024)
    # dense spectra reconstruct well, sparse ones within a loose bound
    for w, bound in ((white_noise(1.0, seed=0), 0.05),
                     (sine(440.0, 1.0), 0.3)):
        m = mel_spectrogram(w, n_mels=64)
        mag = mel_to_magnitude(m)
        assert np.all(mag >= 0.0)
        back = (mag ** 2) @ bank.T
        rel = np.linalg.norm(back - m.data) / np.linalg.norm(m.data)
        assert rel < bound


def test_pressure_level_scaling_law():
    w = white_noise(0.5, amplitude=0.1, seed=1)
    base = pressure_level_db(w)
    doubled = pressure_level_db(Waveform(2.0 * w.samples))
    tol = 1e-12
    assert abs(doubled - base - 20.0 * np.log10(2.0)) < tol
    # closed form on a constant signal: rms = c, level = 20 log10 c
    const = Waveform(np.full(1000, 0.25))
    assert abs(pressure_level_db(const) - 20.0 * np.log10(0.25)) < tol


def test_pressure_level_rejects_silence():
    with pytest.raises(SilentSignalError):
        pressure_level_db(Waveform(np.zeros(100)))
    with pytest.raises(SilentSignalError):
        pressure_level_db(Waveform(np.zeros(0)))


def test_griffin_lim_error_is_monotone():
    x = (sine(220.0, 1.0).samples + 0.5 * sine(440.0, 1.0).samples
         + 0.25 * sine(880.0, 1.0).samples)
    w = Waveform(0.8 * x / np.max(np.abs(x)))
    mag = stft_magnitude(w)
    rec, trace = griffin_lim(mag, iters=60, seed=0, frame=1024, hop=256,
                             return_trace=True)
    assert len(trace) == 60
    assert np.all(np.diff(trace) <= 1e-10)
    assert trace[-1] < 0.15
    assert trace[-1] < trace[0] / 4.0
    # the returned waveform carries one final phase update, so it can only
    # improve on the last recorded error
    sc = spectral_convergence(mag, rec, 1024, 256)
    assert sc <= trace[-1] + 1e-9


def test_griffin_lim_accepts_mel_and_zero_input():
    w = white_noise(0.3, seed=2)
    m = mel_spectrogram(w, n_mels=64)
    rec = griffin_lim(m, iters=3, seed=0)
    assert isinstance(rec, Waveform)
    assert rec.sample_rate == m.sample_rate

    silent = griffin_lim(np.zeros((10, 513)), iters=5, seed=0, frame=1024,
                         hop=256)
    assert np.array_equal(silent.samples, np.zeros_like(silent.samples))

    with pytest.raises(ParameterError):
        griffin_lim(m, iters=0)


def test_griffin_lim_is_deterministic():
    w = white_noise(0.3, seed=4)
    mag = stft_magnitude(w, frame=512, hop=128)
    a = griffin_lim(mag, iters=4, seed=9, frame=512, hop=128)
    b = griffin_lim(mag, iters=4, seed=9, frame=512, hop=128)
    c = griffin_lim(mag, iters=4, seed=10, frame=512, hop=128)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_wav_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    samples = rng.uniform(-0.9, 0.9, 4000)
    w = Waveform(samples, sample_rate=8000)
    path = tmp_path / "x.wav"
    clipped = write_wav(path, w)
    assert clipped == 0
    back = read_wav(path)
    assert back.sample_rate == 8000
    assert back.samples.shape == samples.shape
    assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32767.0

    # clipping is counted, not raised
    loud = Waveform(np.array([0.5, 1.5, -2.0, 0.0]))
    assert write_wav(tmp_path / "loud.wav", loud) == 2


def test_mel_spectrogram_metadata():
    w = white_noise(0.5, seed=7)
    m = mel_spectrogram(w, n_mels=32, frame=512, hop=128)
    assert isinstance(m, MelSpectrogram)
    assert m.frame == 512
    assert m.hop == 128
    assert m.sample_rate == 16000
    with pytest.raises(ContractError):
        MelSpectrogram(np.full((4, 8), -1.0))
