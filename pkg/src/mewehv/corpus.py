"""Corpus construction: silence-based segmentation, clip-length
normalization, speaker-disjoint splits, statistics, WAV and manifest I/O.

All audio is mono 16 kHz signed 16-bit PCM; anything else is rejected.
"""

import csv
import io
import wave
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000
FULL_SCALE = 32768.0
GENDERS = ("male", "female")

MANIFEST_HEADER = ["clip_id", "path", "speaker_id", "video_id", "gender",
                   "label", "duration_s"]


class CorpusError(ValueError):
    pass


class WavFormatError(CorpusError):
    pass


@dataclass
class AudioClip:
    """Mono 16 kHz PCM samples."""
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.dtype != np.int16:
            raise CorpusError("samples must be int16, got %s" % self.samples.dtype)
        if self.sample_rate != SAMPLE_RATE:
            raise CorpusError("sample rate must be %d, got %d"
                              % (SAMPLE_RATE, self.sample_rate))
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise CorpusError("samples must be a non-empty 1-D array")

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate

    @classmethod
    def from_float(cls, x, sample_rate=SAMPLE_RATE):
        """Quantize a float waveform in [-1, 1] to 16-bit PCM."""
        x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
        return cls(np.round(x * 32767.0).astype(np.int16), sample_rate)


@dataclass
class ClipRecord:
    clip_id: str
    path: str
    speaker_id: str
    video_id: str
    gender: str
    label: str
    duration_s: float

    def __post_init__(self):
        if not self.clip_id or not self.speaker_id or not self.video_id:
            raise CorpusError("clip_id, speaker_id and video_id must be non-empty")
        if self.gender not in GENDERS:
            raise CorpusError("gender must be one of %r, got %r" % (GENDERS, self.gender))


@dataclass
class SegmentationConfig:
    threshold_db: float = -40.0
    window_ms: int = 10
    min_silence_ms: int = 200
    min_clip_s: float = 3.5
    max_clip_s: float = 12.0

    def __post_init__(self):
        if self.threshold_db >= 0:
            raise CorpusError("threshold_db must be negative (dBFS)")
        if self.window_ms <= 0:
            raise CorpusError("window_ms must be positive")
        if not self.min_clip_s < self.max_clip_s:
            raise CorpusError("min_clip_s must be below max_clip_s")


@dataclass
class SplitSpec:
    fractions: tuple = (0.7, 0.15, 0.15)
    disjoint_key: str = "speaker_id"
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(not 0.0 < f < 1.0 for f in fr):
            raise CorpusError("fractions must be three values in (0, 1)")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise CorpusError("fractions must sum to 1, got %r" % (fr,))
        self.fractions = fr


@dataclass
class CorpusStats:
    n_speakers: int
    n_clips: int
    n_videos: int
    total_minutes: float
    avg_clips_per_speaker: float
    avg_videos_per_speaker: float
    avg_clip_length_s: float
    clips_per_label: dict = field(default_factory=dict)
    speakers_per_label: dict = field(default_factory=dict)
    speakers_per_gender: dict = field(default_factory=dict)


def detect_silences(audio, config):
    """Maximal runs of measurement windows whose RMS level is below the
    threshold and whose total length reaches min_silence_ms.

    Levels are RMS over non-overlapping windows, in dBFS re 32768.
    Returns sorted, non-overlapping (start_sample, end_sample) intervals.
    """
    win = config.window_ms * SAMPLE_RATE // 1000
    n_windows = len(audio.samples) // win
    if n_windows == 0:
        return []
    x = audio.samples[:n_windows * win].astype(np.float64).reshape(n_windows, win)
    rms = np.sqrt(np.mean(x * x, axis=1))
    with np.errstate(divide="ignore"):
        level_db = 20.0 * np.log10(rms / FULL_SCALE)
    below = level_db < config.threshold_db

    min_run = -(-config.min_silence_ms // config.window_ms)  # ceil
    intervals = []
    start = None
    for i, b in enumerate(below):
        if b and start is None:
            start = i
        elif not b and start is not None:
            if i - start >= min_run:
                intervals.append((start * win, i * win))
            start = None
    if start is not None and n_windows - start >= min_run:
        intervals.append((start * win, n_windows * win))
    return intervals


def segment_clips(audio, silences, config):
    """Contiguous regions between consecutive silences (or clip bounds),
    kept only when their duration lies within [min_clip_s, max_clip_s]."""
    edges = [0]
    for s, e in silences:
        edges.append(s)
        edges.append(e)
    edges.append(len(audio.samples))

    clips = []
    for a, b in zip(edges[0::2], edges[1::2]):
        dur = (b - a) / SAMPLE_RATE
        if config.min_clip_s <= dur <= config.max_clip_s:
            clips.append(AudioClip(audio.samples[a:b].copy(), audio.sample_rate))
    return clips


def normalize_clip_length(audio, target_s=8.0):
    """Trim to the first target_s seconds, or tile the clip end-to-end
    until the target length is reached."""
    target = int(round(target_s * SAMPLE_RATE))
    n = len(audio.samples)
    if n >= target:
        out = audio.samples[:target].copy()
    else:
        reps = -(-target // n)
        out = np.tile(audio.samples, reps)[:target]
    return AudioClip(out, audio.sample_rate)


def split_by_key(manifest, spec):
    """Partition records into (train, validation, test) with pairwise
    disjoint key sets.

    The lexicographically sorted key list is shuffled by a seeded
    permutation and cut at the cumulative-fraction boundaries; record
    order within each split follows the input manifest.
    """
    if not manifest:
        raise CorpusError("empty manifest")
    for r in manifest:
        if not getattr(r, spec.disjoint_key, None):
            raise CorpusError("record %r lacks %s" % (r.clip_id, spec.disjoint_key))
    keys = sorted({getattr(r, spec.disjoint_key) for r in manifest})
    if len(keys) < 3:
        raise CorpusError("need at least 3 distinct %s values, got %d"
                          % (spec.disjoint_key, len(keys)))

    rng = np.random.default_rng(spec.seed)
    shuffled = [keys[i] for i in rng.permutation(len(keys))]
    n = len(keys)
    f_train, f_val, _ = spec.fractions
    cut1 = int(np.floor(n * f_train + 1e-9))
    cut2 = int(np.floor(n * (f_train + f_val) + 1e-9))
    groups = (set(shuffled[:cut1]), set(shuffled[cut1:cut2]), set(shuffled[cut2:]))

    splits = ([], [], [])
    for r in manifest:
        k = getattr(r, spec.disjoint_key)
        for out, grp in zip(splits, groups):
            if k in grp:
                out.append(r)
                break
    return splits


def compute_stats(manifest):
    if not manifest:
        raise CorpusError("empty manifest")
    speakers = {r.speaker_id for r in manifest}
    videos = {r.video_id for r in manifest}
    total_s = sum(r.duration_s for r in manifest)

    clips_per_label = {}
    label_speakers = {}
    gender_speakers = {}
    for r in manifest:
        clips_per_label[r.label] = clips_per_label.get(r.label, 0) + 1
        label_speakers.setdefault(r.label, set()).add(r.speaker_id)
        gender_speakers.setdefault(r.gender, set()).add(r.speaker_id)

    return CorpusStats(
        n_speakers=len(speakers),
        n_clips=len(manifest),
        n_videos=len(videos),
        total_minutes=total_s / 60.0,
        avg_clips_per_speaker=len(manifest) / len(speakers),
        avg_videos_per_speaker=len(videos) / len(speakers),
        avg_clip_length_s=total_s / len(manifest),
        clips_per_label=dict(sorted(clips_per_label.items())),
        speakers_per_label={k: len(v) for k, v in sorted(label_speakers.items())},
        speakers_per_gender={k: len(v) for k, v in sorted(gender_speakers.items())},
    )


# -- WAV I/O ------------------------------------------------------------

def read_wav(path):
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            if channels != 1:
                raise WavFormatError("%s: expected mono, got %d channels" % (path, channels))
            if width != 2:
                raise WavFormatError("%s: expected 16-bit PCM, got %d-byte samples"
                                     % (path, width))
            if rate != SAMPLE_RATE:
                raise WavFormatError("%s: expected %d Hz, got %d Hz (no resampling)"
                                     % (path, SAMPLE_RATE, rate))
            frames = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise WavFormatError("%s: not a PCM RIFF/WAVE file (%s)" % (path, exc)) from exc
    return AudioClip(np.frombuffer(frames, dtype="<i2").copy())


def write_wav(path, clip):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(clip.samples.astype("<i2").tobytes())


# -- manifest I/O ---------------------------------------------------------

def write_manifest(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_manifest_fh(fh, records)


def _write_manifest_fh(fh, records):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for r in records:
        writer.writerow([r.clip_id, r.path, r.speaker_id, r.video_id,
                         r.gender, r.label, repr(r.duration_s)])


def manifest_to_bytes(records):
    buf = io.StringIO()
    _write_manifest_fh(buf, records)
    return buf.getvalue().encode("utf-8")


def read_manifest(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError("%s: empty manifest file" % path) from None
        if header != MANIFEST_HEADER:
            raise CorpusError("%s: bad manifest header %r" % (path, header))
        records = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise CorpusError("%s: row has %d fields, expected %d"
                                  % (path, len(row), len(MANIFEST_HEADER)))
            records.append(ClipRecord(row[0], row[1], row[2], row[3], row[4],
                                      row[5], float(row[6])))
    return records
