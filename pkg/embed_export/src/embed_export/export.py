"""Batch export of per-clip embedding sequences.

Consumes the manifest contract (CSV with header
clip_id,path,speaker_id,video_id,gender,label,duration_s), runs the
frozen encoder on the 8-second normalized waveform of each clip, and
writes one MWEV file per clip, atomically (temp + rename).  Existing
files with a valid header are skipped, so reruns are idempotent.
Per-clip failures are recorded and the batch continues.
"""

import csv
import os
import wave
from dataclasses import dataclass, field

import numpy as np

from . import format as mwev
from .encoders import load_encoder

SAMPLE_RATE = 16000
TARGET_SAMPLES = 8 * SAMPLE_RATE

MANIFEST_HEADER = ["clip_id", "path", "speaker_id", "video_id", "gender",
                   "label", "duration_s"]


class ExportError(ValueError):
    pass


@dataclass
class ExportJob:
    manifest: str
    encoder_name: str
    out_dir: str
    device: str = "cpu"
    pretrained: bool = True

    def __post_init__(self):
        from .encoders import ENCODERS
        if self.encoder_name not in ENCODERS:
            raise ExportError("encoder must be one of %s"
                              % ", ".join(sorted(ENCODERS)))


@dataclass
class ExportSummary:
    exported: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)   # (clip_id, reason)

    @property
    def total(self):
        return self.exported + self.skipped + len(self.failures)


def read_manifest(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ExportError("%s: bad manifest header %r" % (path, header))
        return [dict(zip(MANIFEST_HEADER, row)) for row in reader if row]


def read_waveform(path):
    """Mono 16 kHz 16-bit PCM -> float waveform in [-1, 1]."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2 \
                or w.getframerate() != SAMPLE_RATE:
            raise ExportError("%s: need mono 16-bit %d Hz PCM" % (path, SAMPLE_RATE))
        frames = w.readframes(w.getnframes())
    samples = np.frombuffer(frames, dtype="<i2")
    if len(samples) == 0:
        raise ExportError("%s: empty audio" % path)
    return samples.astype(np.float32) / 32768.0


def normalize_length(x, target=TARGET_SAMPLES):
    """First 8 seconds, or the clip tiled end-to-end up to 8 seconds."""
    if len(x) >= target:
        return x[:target]
    reps = -(-target // len(x))
    return np.tile(x, reps)[:target]


def output_path(job, clip_id):
    return os.path.join(job.out_dir, clip_id + ".mwev")


def export_clip(job, record, encoder):
    """Export one clip; returns "exported" or "skipped"."""
    clip_id = record["clip_id"]
    out = output_path(job, clip_id)
    if os.path.exists(out):
        _version, frames, width, header_id, _layer = mwev.read_header(out)
        if header_id != clip_id or frames < 1 or width != encoder.width:
            raise ExportError("%s exists with inconsistent header" % out)
        return "skipped"
    waveform = normalize_length(read_waveform(record["path"]))
    values = encoder.encode(waveform)
    tmp = out + ".tmp"
    mwev.write_embedding(tmp, clip_id, values, encoder.layer)
    os.replace(tmp, out)
    return "exported"


def export_manifest(job, encoder=None):
    records = read_manifest(job.manifest)
    os.makedirs(job.out_dir, exist_ok=True)
    if encoder is None:
        encoder = load_encoder(job.encoder_name, pretrained=job.pretrained,
                               device=job.device)
    summary = ExportSummary()
    for record in records:
        try:
            outcome = export_clip(job, record, encoder)
        except Exception as exc:
            summary.failures.append((record["clip_id"], str(exc)))
            continue
        if outcome == "skipped":
            summary.skipped += 1
        else:
            summary.exported += 1
    if summary.total != len(records):
        raise ExportError("summary does not reconcile with manifest length")
    return summary
