"""Experiment harness: config-driven training and evaluation over
manifest-listed clips, the synthetic fusion dataset, and run reports.

Training streams batches (clips are read and featurized per batch, with a
bounded feature cache), tracks the best validation accuracy, and writes a
deterministic report plus a parameter checkpoint.  Wall-clock timing goes
to a separate run_meta file so reports from identical runs are
byte-identical.
"""

import json
import os
import time
from dataclasses import dataclass, fields, asdict

import numpy as np

from . import corpus, features
from .corpus import AudioClip, ClipRecord, SAMPLE_RATE
from .encoder import ToyEncoderConfig, make_backend
from .features import MfccConfig
from .model import ModelProfile, build, total_loss
from .neuralcore import Adam, backward, checkpoint

TASKS = ("speaker", "language", "accent")


class HarnessError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "speaker"
    dataset_name: str = ""
    train_manifest: str = ""
    val_manifest: str = ""
    test_manifest: str = ""
    model_kind: str = "mewehv"
    n_classes: int = 0                  # 0 = infer from the training manifest
    encoder_source: str = "toy"
    encoder_width: int = 1024
    encoder_seed: int = 7
    encoder_win: int = 400
    encoder_hop: int = 320
    embeddings_dir: str = ""
    mfcc_coeffs: int = 128
    mfcc_win: int = 400
    mfcc_hop: int = 200
    mfcc_fft: int = 512
    hidden: int = 128
    dropout: float = 0.2
    center_weight: float = 0.01
    loss_mode: str = "joint"
    learning_rate: float = 1e-3
    grad_clip: float = 5.0
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    dtype: str = "float64"
    feature_cache: int = 1024
    speaker_disjoint: str = "auto"      # auto | require | off
    workers: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise HarnessError("task must be one of %r" % (TASKS,))
        if self.dtype not in ("float64", "float32"):
            raise HarnessError("dtype must be float64 or float32")
        if self.workers != 1:
            raise HarnessError("only single-worker execution is supported")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def mfcc_config(self):
        return MfccConfig(n_mfcc=self.mfcc_coeffs, n_mels=self.mfcc_coeffs,
                          win_samples=self.mfcc_win, hop_samples=self.mfcc_hop,
                          fft_size=self.mfcc_fft)

    def profile(self):
        return ModelProfile(channels=self.mfcc_coeffs, hidden=self.hidden,
                            dropout=self.dropout)

    def to_dict(self):
        return asdict(self)


def parse_config_text(text):
    """`key = value` lines; blank lines and # comments ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HarnessError("line %d: expected key = value, got %r" % (lineno, raw))
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_sources(file_values=None, overrides=None):
    """Build a config from file values, then CLI overrides (CLI wins)."""
    merged = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in merged.items():
        if key not in known:
            raise HarnessError("unknown config key %r" % key)
        default = getattr(ExperimentConfig, key)
        if isinstance(default, bool):
            kwargs[key] = str(value).lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            kwargs[key] = int(value)
        elif isinstance(default, float):
            kwargs[key] = float(value)
        else:
            kwargs[key] = str(value)
    return ExperimentConfig(**kwargs)


def load_config(path, overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_sources(parse_config_text(fh.read()), overrides)


# -- feature pipeline -----------------------------------------------------

class FeaturePipeline:
    """Per-clip MFCC and wave-encoder features with a bounded LRU cache,
    so peak memory stays independent of dataset size."""

    def __init__(self, config):
        self.config = config
        self.mfcc_config = config.mfcc_config()
        if config.encoder_source == "toy":
            toy = ToyEncoderConfig(seed=config.encoder_seed,
                                   win_samples=config.encoder_win,
                                   hop_samples=config.encoder_hop,
                                   width=config.encoder_width)
            self.backend = make_backend("toy", toy_config=toy)
        else:
            self.backend = make_backend("precomputed",
                                        directory=config.embeddings_dir,
                                        width=config.encoder_width)
        self._cache = {}
        self._order = []

    def _load_clip(self, record):
        clip = corpus.read_wav(record.path)
        return corpus.normalize_clip_length(clip, 8.0)

    def features(self, record, need_mfcc, need_emb):
        cached = self._cache.get(record.clip_id)
        if cached is None:
            clip = self._load_clip(record)
            mf = features.mfcc(clip, self.mfcc_config).values if need_mfcc else None
            em = (np.asarray(self.backend.encode(clip, record.clip_id).values,
                             dtype=np.float64)
                  if need_emb else None)
            cached = (mf, em)
            if self.config.feature_cache > 0:
                self._cache[record.clip_id] = cached
                self._order.append(record.clip_id)
                if len(self._order) > self.config.feature_cache:
                    evict = self._order.pop(0)
                    self._cache.pop(evict, None)
        return cached

    def batch(self, records, need_mfcc, need_emb):
        mfs, ems = [], []
        for r in records:
            mf, em = self.features(r, need_mfcc, need_emb)
            if need_mfcc:
                mfs.append(mf)
            if need_emb:
                ems.append(em)
        mf = np.stack(mfs).astype(self.config.np_dtype) if need_mfcc else None
        em = np.stack(ems).astype(self.config.np_dtype) if need_emb else None
        return mf, em


# -- metrics ----------------------------------------------------------------

def confusion_matrix(true_idx, pred_idx, n_classes):
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true_idx, pred_idx):
        conf[t, p] += 1
    return conf


def accuracy_from_confusion(conf):
    conf = np.asarray(conf)
    return float(np.trace(conf) / conf.sum())


def split_metrics(conf, labels):
    conf = np.asarray(conf)
    per_class = {}
    for i, lab in enumerate(labels):
        support = conf[i].sum()
        per_class[lab] = float(conf[i, i] / support) if support else 0.0
    return {
        "accuracy": accuracy_from_confusion(conf),
        "per_class_accuracy": per_class,
        "confusion": conf.tolist(),
    }


@dataclass
class MetricsReport:
    model_kind: str
    task: str
    dataset_name: str
    labels: list
    seed: int
    worker_count: int
    parameter_report: dict
    train_loss_curve: list
    val_accuracy_curve: list
    best_epoch: int
    splits: dict                        # split name -> split_metrics dict
    config: dict
    wall_clock_s: float = 0.0

    def canonical_dict(self):
        d = asdict(self)
        d.pop("wall_clock_s")
        return d

    def to_json(self):
        return json.dumps(self.canonical_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(wall_clock_s=0.0, **d)


# -- train / evaluate -------------------------------------------------------

def _label_index(records):
    return sorted({r.label for r in records})


def _check_leakage(config, named_sets):
    named_sets = [(name, recs) for name, recs in named_sets if recs]
    for i in range(len(named_sets)):
        for j in range(i + 1, len(named_sets)):
            (na, a), (nb, b) = named_sets[i], named_sets[j]
            shared = {r.clip_id for r in a} & {r.clip_id for r in b}
            if shared:
                raise HarnessError("clip leakage between %s and %s: %r"
                                   % (na, nb, sorted(shared)[:5]))
    want_disjoint = (config.speaker_disjoint == "require"
                     or (config.speaker_disjoint == "auto"
                         and config.task in ("language", "accent")))
    if want_disjoint:
        for i in range(len(named_sets)):
            for j in range(i + 1, len(named_sets)):
                (na, a), (nb, b) = named_sets[i], named_sets[j]
                shared = {r.speaker_id for r in a} & {r.speaker_id for r in b}
                if shared:
                    raise HarnessError("speaker contamination between %s and %s: %r"
                                       % (na, nb, sorted(shared)[:5]))


def evaluate_records(model, records, pipeline, labels, batch_size):
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    for r in records:
        if r.label not in label_to_idx:
            raise HarnessError("label %r absent from the training label set" % r.label)
    model.eval()
    need_mfcc = model.has_mfcc_branch
    need_emb = model.has_wave_branch
    true_idx, pred_idx = [], []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        mf, em = pipeline.batch(chunk, need_mfcc, need_emb)
        logp, _ = model.forward(mf, em)
        pred_idx.extend(int(i) for i in logp.data.argmax(axis=1))
        true_idx.extend(label_to_idx[r.label] for r in chunk)
    conf = confusion_matrix(true_idx, pred_idx, len(labels))
    return split_metrics(conf, labels)


def train(config, out_dir=None, pipeline=None):
    """Train per the config; returns the metrics report.  When out_dir is
    given, writes checkpoint.mwev, checkpoint.meta, report.json and
    run_meta.txt.  A prebuilt FeaturePipeline may be passed to share its
    feature cache across runs over the same clips and feature settings."""
    t_start = time.perf_counter()
    train_records = corpus.read_manifest(config.train_manifest)
    val_records = corpus.read_manifest(config.val_manifest) if config.val_manifest else []
    test_records = corpus.read_manifest(config.test_manifest) if config.test_manifest else []
    if not train_records:
        raise HarnessError("empty training manifest")

    labels = _label_index(train_records)
    if config.n_classes and config.n_classes != len(labels):
        raise HarnessError("config says %d classes but training manifest has %d"
                           % (config.n_classes, len(labels)))
    n_classes = len(labels)
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    for name, recs in (("validation", val_records), ("test", test_records)):
        missing = {r.label for r in recs} - set(labels)
        if missing:
            raise HarnessError("%s manifest has labels unseen in training: %r"
                               % (name, sorted(missing)))
    _check_leakage(config, [("train", train_records), ("validation", val_records),
                            ("test", test_records)])

    if pipeline is None:
        pipeline = FeaturePipeline(config)
    model, param_report = build(config.model_kind, n_classes,
                                width=config.encoder_width,
                                profile=config.profile(),
                                seed=config.seed, dtype=config.np_dtype)
    optimizer = Adam(model.trainable_parameters(), lr=config.learning_rate,
                     clip_norm=config.grad_clip)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x5EED)))

    need_mfcc = model.has_mfcc_branch
    need_emb = model.has_wave_branch
    train_labels_idx = np.array([label_to_idx[r.label] for r in train_records])

    def snapshot():
        return [(name, arr.copy()) for name, arr in model.state_arrays()]

    best_state = snapshot()
    best_acc = -1.0
    best_epoch = 0
    loss_curve, acc_curve = [], []

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = shuffle_rng.permutation(len(train_records))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            chunk = [train_records[i] for i in idx]
            mf, em = pipeline.batch(chunk, need_mfcc, need_emb)
            loss, _, _ = total_loss(model, (mf, em, train_labels_idx[idx]),
                                    config.center_weight, config.loss_mode)
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
            epoch_losses.append(loss.item())
        loss_curve.append(float(np.mean(epoch_losses)))
        if val_records:
            metrics = evaluate_records(model, val_records, pipeline, labels,
                                       config.batch_size)
            acc_curve.append(metrics["accuracy"])
            if metrics["accuracy"] > best_acc:
                best_acc = metrics["accuracy"]
                best_epoch = epoch
                best_state = snapshot()
        else:
            best_state = snapshot()
            best_epoch = epoch

    model.load_state_arrays(best_state)

    splits = {}
    if val_records:
        splits["validation"] = evaluate_records(model, val_records, pipeline,
                                                labels, config.batch_size)
    if test_records:
        splits["test"] = evaluate_records(model, test_records, pipeline,
                                          labels, config.batch_size)
    if not splits:
        splits["train"] = evaluate_records(model, train_records, pipeline,
                                           labels, config.batch_size)

    report = MetricsReport(
        model_kind=config.model_kind,
        task=config.task,
        dataset_name=config.dataset_name,
        labels=labels,
        seed=config.seed,
        worker_count=config.workers,
        parameter_report=param_report,
        train_loss_curve=loss_curve,
        val_accuracy_curve=acc_curve,
        best_epoch=best_epoch,
        splits=splits,
        config=config.to_dict(),
        wall_clock_s=time.perf_counter() - t_start,
    )

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(os.path.join(out_dir, "checkpoint.mwev"), model, config,
                        labels, best_epoch)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        with open(os.path.join(out_dir, "run_meta.txt"), "w", encoding="utf-8") as fh:
            fh.write("wall_clock_s = %.3f\nworkers = %d\n"
                     % (report.wall_clock_s, config.workers))
    return report


# -- checkpoints -------------------------------------------------------------

_SIDECAR_KEYS = ("model_kind", "encoder_source", "encoder_width", "encoder_seed",
                 "encoder_win", "encoder_hop", "embeddings_dir", "mfcc_coeffs",
                 "mfcc_win", "mfcc_hop", "mfcc_fft", "hidden", "dropout",
                 "center_weight", "loss_mode", "seed", "dtype", "task",
                 "dataset_name", "feature_cache")


def save_checkpoint(path, model, config, labels, best_epoch):
    checkpoint.save_arrays(path, model.state_arrays())
    lines = ["%s = %s" % (k, getattr(config, k)) for k in _SIDECAR_KEYS]
    lines.append("labels = %s" % ",".join(labels))
    lines.append("n_classes = %d" % len(labels))
    lines.append("best_epoch = %d" % best_epoch)
    with open(path + ".meta", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path, overrides=None):
    """Rebuild the model and config recorded in the sidecar; returns
    (model, config, labels)."""
    with open(path + ".meta", "r", encoding="utf-8") as fh:
        meta = parse_config_text(fh.read())
    labels = meta.pop("labels").split(",")
    n_classes = int(meta.pop("n_classes"))
    meta.pop("best_epoch", None)
    config = config_from_sources(meta, overrides)
    model, _ = build(config.model_kind, n_classes, width=config.encoder_width,
                     profile=config.profile(), seed=config.seed,
                     dtype=config.np_dtype)
    model.load_state_arrays(checkpoint.load_arrays(path))
    return model, config, labels


def evaluate(ckpt_path, manifest_path, overrides=None):
    t_start = time.perf_counter()
    model, config, labels = load_checkpoint(ckpt_path, overrides)
    records = corpus.read_manifest(manifest_path)
    pipeline = FeaturePipeline(config)
    metrics = evaluate_records(model, records, pipeline, labels, config.batch_size)
    report = MetricsReport(
        model_kind=config.model_kind, task=config.task,
        dataset_name=config.dataset_name, labels=labels, seed=config.seed,
        worker_count=config.workers, parameter_report=model.parameter_report(),
        train_loss_curve=[], val_accuracy_curve=[], best_epoch=0,
        splits={"eval": metrics}, config=config.to_dict(),
        wall_clock_s=time.perf_counter() - t_start)
    return report


# -- synthetic fusion dataset -------------------------------------------------

FUSION_ANCHOR_HZ = 600.0
FUSION_ANCHOR_AMP = 0.15
FUSION_CARRIERS = (250.0, 1500.0, 2100.0, 6500.0, 7200.0)
FUSION_CARRIER_AMP = 0.08
FUSION_NOISE_AMP = 1e-3
FUSION_TONE_AMP = 1e-3
FUSION_TONE_BASE_HZ = 2800.0
FUSION_TONE_STEP_HZ = 400.0
FUSION_MAX_CLASSES = 7


def synthesize_fusion_clip(rng, tone_class, polarity, duration_s=8.0):
    """One synthetic clip carrying the two class cues.

    tone_class > 0 plants a faint narrowband tone whose frequency encodes
    the class (the spectral cue); polarity flips the sign of the whole
    waveform (a phase pattern that magnitude spectra erase exactly).  A
    fixed-phase anchor tone makes the polarity observable in raw
    waveforms, and random-phase carriers plus a low noise floor provide
    within-class variability.
    """
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    x = FUSION_ANCHOR_AMP * np.sin(2 * np.pi * FUSION_ANCHOR_HZ * t)
    for f in FUSION_CARRIERS:
        x += FUSION_CARRIER_AMP * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x += FUSION_NOISE_AMP * rng.standard_normal(n)
    if tone_class > 0:
        freq = FUSION_TONE_BASE_HZ + FUSION_TONE_STEP_HZ * (tone_class - 1)
        x += FUSION_TONE_AMP * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    clip = AudioClip.from_float(x)
    if polarity:
        clip = AudioClip(-clip.samples)
    return clip


def make_toy_fusion_dataset(seed, n_per_class, n_classes=2, out_dir="toyset"):
    """Synthesize a labelled fusion corpus and write train/validation
    manifests.

    Each class is the pair (tone_class + polarity * (C // 2 or 1)) mod C,
    so the spectral cue alone and the polarity cue alone are both
    uninformative about the label.  Validation gets n_per_class // 4
    clips per class.  Returns (train_manifest_path, val_manifest_path).
    """
    if n_per_class < 32:
        raise HarnessError("need n_per_class >= 32, got %d" % n_per_class)
    if not 2 <= n_classes <= FUSION_MAX_CLASSES:
        raise HarnessError("n_classes must be in [2, %d]" % FUSION_MAX_CLASSES)

    clips_dir = os.path.join(out_dir, "clips")
    os.makedirs(clips_dir, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x70F5)))
    stride = max(1, n_classes // 2)

    manifests = {}
    counts = {"train": n_per_class, "validation": max(1, n_per_class // 4)}
    serial = 0
    for split, per_class in counts.items():
        records = []
        for label in range(n_classes):
            for _ in range(per_class):
                polarity = int(rng.integers(0, 2))
                tone_class = (label - polarity * stride) % n_classes
                clip = synthesize_fusion_clip(rng, int(tone_class), polarity)
                clip_id = "toy%d_%s_%05d" % (seed, split, serial)
                path = os.path.join(clips_dir, clip_id + ".wav")
                corpus.write_wav(path, clip)
                records.append(ClipRecord(
                    clip_id=clip_id, path=path, speaker_id="spk_" + clip_id,
                    video_id="vid_" + clip_id,
                    gender="male" if serial % 2 == 0 else "female",
                    label=str(label), duration_s=clip.duration_s))
                serial += 1
        manifest_path = os.path.join(out_dir, split + ".csv")
        corpus.write_manifest(manifest_path, records)
        manifests[split] = manifest_path
    return manifests["train"], manifests["validation"]


def fusion_experiment_config(model_kind, train_manifest, val_manifest, seed,
                             epochs=20):
    """Desk-scale preset used by the fusion-gain experiment: same wiring
    as the full model, reduced feature resolution and hidden sizes."""
    return ExperimentConfig(
        task="speaker", dataset_name="toy-fusion",
        train_manifest=str(train_manifest), val_manifest=str(val_manifest),
        model_kind=model_kind, encoder_source="toy", encoder_width=64,
        encoder_seed=11, encoder_win=2000, encoder_hop=2000,
        mfcc_coeffs=32, mfcc_win=400, mfcc_hop=2000, mfcc_fft=512,
        hidden=64, dropout=0.2, center_weight=0.01, loss_mode="joint",
        learning_rate=3e-3, grad_clip=5.0, epochs=epochs, batch_size=32,
        seed=seed, speaker_disjoint="off")


# -- run summaries --------------------------------------------------------------

def collect_reports(directory):
    reports = []
    for root, _dirs, files in os.walk(directory):
        for name in sorted(files):
            if name == "report.json":
                with open(os.path.join(root, name), "r", encoding="utf-8") as fh:
                    reports.append(MetricsReport.from_json(fh.read()))
    return reports


def _headline_accuracy(report):
    for split in ("test", "validation", "eval", "train"):
        if split in report.splits:
            return report.splits[split]["accuracy"]
    raise HarnessError("report has no splits")


def summarize_runs(reports):
    """Rows = model kinds, columns = dataset/task; best per column flagged
    (ties at 4 decimal places all flagged)."""
    if not reports:
        raise HarnessError("no reports to summarize")
    columns = sorted({(r.dataset_name, r.task) for r in reports})
    kinds = sorted({r.model_kind for r in reports})
    cells = {}
    for r in reports:
        key = (r.model_kind, (r.dataset_name, r.task))
        cells[key] = _headline_accuracy(r)

    col_names = ["%s/%s" % c for c in columns]
    best = {}
    ties = {}
    for c, cname in zip(columns, col_names):
        vals = {k: round(cells[(k, c)], 4) for k in kinds if (k, c) in cells}
        if not vals:
            continue
        top = max(vals.values())
        winners = sorted(k for k, v in vals.items() if v == top)
        best[cname] = winners
        ties[cname] = len(winners) > 1

    table = {
        "columns": col_names,
        "rows": [{
            "model_kind": k,
            "params": next((r.parameter_report["trainable_total"]
                            for r in reports if r.model_kind == k), None),
            "cells": {cname: cells.get((k, c))
                      for c, cname in zip(columns, col_names)},
        } for k in kinds],
        "best": best,
        "ties": {c: t for c, t in ties.items() if t},
    }
    return table


def summary_to_json(table):
    return json.dumps(table, sort_keys=True, indent=2) + "\n"


def summary_from_json(text):
    return json.loads(text)


def render_summary(table):
    lines = []
    header = ["model", "params"] + table["columns"]
    widths = [max(len(h), 12) for h in header]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in table["rows"]:
        cells = [row["model_kind"], str(row["params"])]
        for c in table["columns"]:
            v = row["cells"].get(c)
            mark = "*" if v is not None and row["model_kind"] in table["best"].get(c, []) else " "
            cells.append("-" if v is None else "%.4f%s" % (v, mark))
        lines.append("  ".join(s.ljust(w) for s, w in zip(cells, widths)))
    if table["ties"]:
        lines.append("ties: " + ", ".join(sorted(table["ties"])))
    lines.append("* best per column")
    return "\n".join(lines) + "\n"
