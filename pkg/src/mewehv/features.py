"""MFCC extraction: centered framing, Hann window, power spectrum, mel
filterbank, log, orthonormal DCT-II.

The filterbank integrates each triangular filter over the frequency cell
of every FFT bin (rather than point-sampling at bin centers), so narrow
low-frequency triangles keep support even when they fall between bins.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .corpus import SAMPLE_RATE

_HZ_PER_MEL_REF = 700.0
_MEL_SCALE = 2595.0


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class MfccConfig:
    n_mfcc: int = 128
    n_mels: int = 128
    win_samples: int = 400
    hop_samples: int = 200
    fft_size: int = 512
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mfcc > self.n_mels:
            raise FeatureError("n_mfcc (%d) must not exceed n_mels (%d)"
                               % (self.n_mfcc, self.n_mels))
        if self.win_samples > self.fft_size:
            raise FeatureError("win_samples (%d) must not exceed fft_size (%d)"
                               % (self.win_samples, self.fft_size))
        if self.fmax > SAMPLE_RATE / 2:
            raise FeatureError("fmax (%g) above Nyquist" % self.fmax)
        if not 0 <= self.fmin < self.fmax:
            raise FeatureError("need 0 <= fmin < fmax")
        if self.hop_samples <= 0 or self.win_samples <= 0:
            raise FeatureError("window and hop must be positive")


@dataclass
class MfccMatrix:
    values: np.ndarray          # [n_mfcc, T]
    frame_times: np.ndarray     # seconds per column

    @property
    def n_frames(self):
        return self.values.shape[1]


def hz_to_mel(f):
    return _MEL_SCALE * np.log10(1.0 + np.asarray(f, dtype=np.float64) / _HZ_PER_MEL_REF)


def mel_to_hz(m):
    return _HZ_PER_MEL_REF * (10.0 ** (np.asarray(m, dtype=np.float64) / _MEL_SCALE) - 1.0)


def _reflect_indices(n, pad):
    """Indices implementing reflect padding (edge samples not repeated)."""
    idx = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def frame_signal(audio, config):
    """Centered frames at hop intervals, reflect-padded by win/2 on each
    side; returns [T, win] with T = 1 + floor(N / hop).  Samples are
    scaled to [-1, 1] floats."""
    x = audio.samples.astype(np.float64) / 32768.0
    n = len(x)
    win, hop = config.win_samples, config.hop_samples
    pad = win // 2
    padded = x[_reflect_indices(n, pad)]
    t = 1 + n // hop
    starts = np.arange(t) * hop
    frames = padded[starts[:, None] + np.arange(win)[None, :]]
    return frames


@lru_cache(maxsize=8)
def _mel_filterbank_cached(n_mels, fft_size, fmin, fmax):
    if n_mels > fft_size // 2:
        raise FeatureError("n_mels=%d too large for fft_size=%d: filters would "
                           "lose distinct support" % (n_mels, fft_size))
    n_bins = fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * SAMPLE_RATE / fft_size
    cell = SAMPLE_RATE / fft_size
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    lo = bin_hz - cell / 2
    hi = bin_hz + cell / 2
    weights = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        left, center, right = hz_points[j], hz_points[j + 1], hz_points[j + 2]
        weights[j] = (_ramp_integral(lo, hi, left, center, 0.0, 1.0)
                      + _ramp_integral(lo, hi, center, right, 1.0, 0.0)) / cell
    if np.any(weights.max(axis=1) <= 0):
        bad = int(np.argmin(weights.max(axis=1)))
        raise FeatureError("mel filter %d has zero support; reduce n_mels or "
                           "increase fft_size" % bad)
    return weights


def _ramp_integral(lo, hi, f0, f1, v0, v1):
    """Integral over [lo, hi] of the line through (f0, v0)-(f1, v1),
    clipped to the segment's span."""
    a = np.maximum(lo, f0)
    b = np.minimum(hi, f1)
    length = np.maximum(b - a, 0.0)
    if f1 == f0:
        return np.zeros_like(lo)
    slope = (v1 - v0) / (f1 - f0)
    mid = (a + b) / 2 - f0
    return (v0 + slope * mid) * length


def mel_filterbank(config):
    """[n_mels, fft_size/2 + 1] triangular filters with centers equally
    spaced on the mel scale between fmin and fmax."""
    return _mel_filterbank_cached(config.n_mels, config.fft_size,
                                  config.fmin, config.fmax)


def dct_matrix(n):
    """Orthonormal DCT-II basis, [n, n]."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


def mfcc(audio, config=MfccConfig()):
    """frame -> Hann -> |FFT|^2 -> mel -> log -> DCT-II, first n_mfcc rows.

    An 8 s clip under the default config yields [128, 641].
    """
    frames = frame_signal(audio, config)
    window = np.hanning(config.win_samples + 1)[:-1]    # periodic Hann
    spectrum = np.fft.rfft(frames * window, n=config.fft_size, axis=1)
    power = np.abs(spectrum) ** 2
    mel = mel_filterbank(config) @ power.T
    logmel = np.log(np.maximum(mel, config.log_floor))
    coeffs = dct_matrix(config.n_mels) @ logmel
    times = np.arange(frames.shape[0]) * config.hop_samples / SAMPLE_RATE
    return MfccMatrix(values=coeffs[:config.n_mfcc], frame_times=times)


def log_mel_from_mfcc(matrix, config=MfccConfig()):
    """Inverse of the DCT stage; exact when n_mfcc == n_mels."""
    if matrix.values.shape[0] != config.n_mels:
        raise FeatureError("need all %d coefficients to invert, got %d"
                           % (config.n_mels, matrix.values.shape[0]))
    return dct_matrix(config.n_mels).T @ matrix.values


def write_mfcc(path, matrix, clip_id):
    """Debug dump in the shared binary matrix format."""
    from . import matfile
    matfile.write_matrix_file(path, clip_id, matrix.values)
