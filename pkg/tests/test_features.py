import numpy as np
import pytest
from scipy.fftpack import idct as scipy_idct

from mewehv.corpus import AudioClip
from mewehv.features import (FeatureError, MfccConfig, dct_matrix, frame_signal,
                             hz_to_mel, mel_filterbank, mel_to_hz, mfcc,
                             log_mel_from_mfcc)

from conftest import silence_clip, sine_clip


EIGHT_S = silence_clip(8.0)


def test_frame_count_eight_seconds():
    frames = frame_signal(EIGHT_S, MfccConfig())
    assert frames.shape == (641, 400)


def test_frame_count_small_input():
    clip = AudioClip(np.ones(200, dtype=np.int16))
    frames = frame_signal(clip, MfccConfig())
    assert frames.shape[0] == 2


def test_frame_count_law_random_lengths():
    rng = np.random.default_rng(0)
    cfg = MfccConfig()
    for n in rng.integers(1, 50000, size=100):
        clip = AudioClip(rng.integers(-1000, 1000, size=int(n)).astype(np.int16))
        frames = frame_signal(clip, cfg)
        assert frames.shape[0] == 1 + int(n) // cfg.hop_samples


def test_constant_input_gives_identical_frames():
    clip = AudioClip(np.full(5000, 123, dtype=np.int16))
    frames = frame_signal(clip, MfccConfig())
    assert np.allclose(frames, frames[0])


def test_mel_filterbank_every_filter_has_support():
    weights = mel_filterbank(MfccConfig())
    assert weights.shape == (128, 257)
    assert np.all(weights >= 0)
    assert np.all(weights.max(axis=1) > 0)


def test_mel_filterbank_centers_monotone_and_in_range():
    # centers recomputed independently from the mel-spacing formula
    cfg = MfccConfig()
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    centers_hz = mel_to_hz(mels[1:-1])
    assert np.all(np.diff(centers_hz) > 0)
    assert centers_hz[0] < 100.0
    assert centers_hz[-1] < 8000.0


def test_mel_filterbank_adjacent_filters_overlap():
    weights = mel_filterbank(MfccConfig(n_mfcc=40, n_mels=40))
    for j in range(39):
        both = (weights[j] > 0) & (weights[j + 1] > 0)
        assert both.any()


def test_mel_filterbank_zero_support_error():
    with pytest.raises(FeatureError):
        # thousands of filters over 33 bins cannot all keep support
        mel_filterbank(MfccConfig(n_mfcc=4000, n_mels=4000, win_samples=64,
                                  fft_size=64))


def test_mfcc_shape_eight_seconds():
    out = mfcc(sine_clip(440.0, 8.0, 0.5))
    assert out.values.shape == (128, 641)
    assert out.frame_times.shape == (641,)
    assert np.all(np.isfinite(out.values))


def test_mfcc_zero_clip_constant_columns():
    out = mfcc(silence_clip(2.0))
    assert np.allclose(out.values, out.values[:, :1])
    # DCT of the constant log-floor vector: only coefficient 0 is nonzero
    assert np.allclose(out.values[1:], 0.0, atol=1e-9)


def test_dct_matrix_is_orthonormal():
    d = dct_matrix(128)
    assert np.allclose(d @ d.T, np.eye(128), atol=1e-12)


def test_inverse_dct_recovers_log_mel():
    # oracle: scipy's orthonormal inverse DCT applied to our coefficients
    cfg = MfccConfig()
    clip = sine_clip(1000.0, 8.0, 0.4)
    out = mfcc(clip, cfg)
    recovered = log_mel_from_mfcc(out, cfg)
    oracle = scipy_idct(out.values, type=2, axis=0, norm="ortho")
    assert np.allclose(recovered, oracle, atol=1e-10)

    # and the recovered matrix equals the log-mel computed directly
    from mewehv.features import mel_filterbank as bank
    frames = frame_signal(clip, cfg)
    window = np.hanning(cfg.win_samples + 1)[:-1]
    power = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)) ** 2
    logmel = np.log(np.maximum(bank(cfg) @ power.T, cfg.log_floor))
    rel = np.abs(recovered - logmel) / np.maximum(np.abs(logmel), 1e-12)
    assert rel.max() < 1e-6


def test_gain_invariance_above_floor():
    # exact x4 gain in the integer domain; broadband signal keeps every
    # mel band above the log floor
    cfg = MfccConfig()
    rng = np.random.default_rng(7)
    base = rng.integers(-8000, 8000, size=32000).astype(np.int16)
    a = mfcc(AudioClip(base), cfg).values
    b = mfcc(AudioClip((base * 4).astype(np.int16)), cfg).values
    # gain shifts only the coefficient-0 direction; 1..n-1 stay put
    assert np.abs(a[1:] - b[1:]).max() < 1e-5
    assert np.abs(a[0] - b[0]).max() > 1.0


def test_mfcc_determinism():
    clip = sine_clip(523.25, 3.0, 0.7)
    a = mfcc(clip).values
    b = mfcc(clip).values
    assert np.array_equal(a, b)


def test_mfcc_debug_dump_round_trips(tmp_path):
    from mewehv.encoder import read_embedding_file
    from mewehv.features import write_mfcc
    out = mfcc(sine_clip(700.0, 2.0, 0.6))
    path = tmp_path / "dump.mwev"
    write_mfcc(path, out, "clip-7")
    back = read_embedding_file(path)
    assert back.clip_id == "clip-7"
    assert np.allclose(back.values, out.values, atol=1e-4)  # f32 storage


def test_config_validation():
    with pytest.raises(FeatureError):
        MfccConfig(n_mfcc=64, n_mels=32)
    with pytest.raises(FeatureError):
        MfccConfig(win_samples=1024, fft_size=512)
    with pytest.raises(FeatureError):
        MfccConfig(fmax=9000.0)
