"""Wave-encoder feature sources: a deterministic toy encoder for
self-contained runs, and a reader for precomputed embedding files
exported from real pretrained encoders.

Neither backend exposes trainable parameters; embedding sequences are
plain inputs to the model.
"""

import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import matfile
from .matfile import (BadMagicError, DimensionMismatchError, MatrixFileError,
                      TruncatedPayloadError)

__all__ = [
    "EmbeddingSequence", "ToyEncoderConfig", "toy_encode",
    "write_embedding_file", "read_embedding_file",
    "ToyBackend", "PrecomputedBackend", "make_backend",
    "MatrixFileError", "BadMagicError", "TruncatedPayloadError",
    "DimensionMismatchError", "MissingEmbeddingError",
]


class MissingEmbeddingError(KeyError):
    pass


@dataclass
class EmbeddingSequence:
    values: np.ndarray          # [frames, width]
    clip_id: str = ""
    layer: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("embedding sequence must be [frames >= 1, width]")

    @property
    def frames(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class ToyEncoderConfig:
    seed: int = 7
    win_samples: int = 400
    hop_samples: int = 320
    width: int = 1024

    def __post_init__(self):
        if not self.win_samples >= self.hop_samples > 0:
            raise ValueError("need win_samples >= hop_samples > 0")
        if self.width < 1:
            raise ValueError("width must be positive")


@lru_cache(maxsize=8)
def _projection(seed, win, width):
    scale = 1.0 / np.sqrt(win)
    p = np.random.default_rng(seed).uniform(-scale, scale, size=(win, width))
    p.flags.writeable = False
    return p


def toy_encode(audio, config=ToyEncoderConfig()):
    """Fixed seeded random projection of waveform windows, then tanh.

    frames = floor((N - win) / hop) + 1; deterministic for a given
    (seed, win, width).  Waveform is scaled to [-1, 1] before projection.
    """
    n = len(audio.samples)
    win, hop = config.win_samples, config.hop_samples
    if n < win:
        raise ValueError("audio has %d samples, shorter than one %d-sample window"
                         % (n, win))
    x = audio.samples.astype(np.float64) / 32768.0
    t = (n - win) // hop + 1
    starts = np.arange(t) * hop
    frames = x[starts[:, None] + np.arange(win)[None, :]]
    return EmbeddingSequence(np.tanh(frames @ _projection(config.seed, win, config.width)))


def write_embedding_file(seq, clip_id, path, layer=None):
    version = 2 if layer is not None else 1
    matfile.write_matrix_file(path, clip_id, seq.values, version=version, layer=layer)


def read_embedding_file(path):
    name, values, layer = matfile.read_matrix_file(path)
    return EmbeddingSequence(values, clip_id=name, layer=layer or "")


class ToyBackend:
    def __init__(self, config=ToyEncoderConfig()):
        self.config = config
        self.width = config.width

    def encode(self, audio, clip_id=""):
        seq = toy_encode(audio, self.config)
        seq.clip_id = clip_id
        return seq


class PrecomputedBackend:
    """Reads <clip_id>.mwev files from a directory, with a thread-safe
    read cache."""

    def __init__(self, directory, width):
        self.directory = directory
        self.width = width
        self._cache = {}
        self._lock = threading.Lock()

    def path_for(self, clip_id):
        import os
        return os.path.join(str(self.directory), clip_id + ".mwev")

    def encode(self, audio, clip_id):
        with self._lock:
            seq = self._cache.get(clip_id)
        if seq is not None:
            return seq
        path = self.path_for(clip_id)
        try:
            seq = read_embedding_file(path)
        except FileNotFoundError:
            raise MissingEmbeddingError(
                "no precomputed embedding for clip %r (looked for %s)"
                % (clip_id, path)) from None
        if seq.clip_id != clip_id:
            raise MatrixFileError("embedding file %s is for clip %r, expected %r"
                                  % (path, seq.clip_id, clip_id))
        if seq.width != self.width:
            raise DimensionMismatchError(
                "embedding width %d does not match configured width %d"
                % (seq.width, self.width))
        with self._lock:
            self._cache[clip_id] = seq
        return seq


def make_backend(source, toy_config=None, directory=None, width=1024):
    if source == "toy":
        return ToyBackend(toy_config or ToyEncoderConfig(width=width))
    if source == "precomputed":
        if directory is None:
            raise ValueError("precomputed backend needs a directory")
        return PrecomputedBackend(directory, width)
    raise ValueError("unknown encoder source %r" % source)
