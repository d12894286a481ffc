"""Corpus CLI: segment, split, stats.

Input files for `segment` follow the <speaker>_<video>_<gender>_<accent>.wav
naming convention; produced clips are named
<speaker>_<video>_<gender>_<accent>_<index>.wav and listed in a manifest.
"""

import argparse
import os
import sys

import numpy as np

from . import corpus
from .corpus import ClipRecord, SegmentationConfig, SplitSpec


def _parse_source_name(path):
    stem = os.path.splitext(os.path.basename(path))[0]
    parts = stem.split("_")
    if len(parts) != 4:
        raise corpus.CorpusError(
            "%s: expected <speaker>_<video>_<gender>_<accent>.wav naming" % path)
    speaker, video, gender, accent = parts
    if gender not in corpus.GENDERS:
        raise corpus.CorpusError("%s: gender field must be male or female" % path)
    return speaker, video, gender, accent


def cmd_segment(args):
    config = SegmentationConfig(threshold_db=args.threshold_db,
                                window_ms=args.window_ms,
                                min_silence_ms=args.min_silence_ms,
                                min_clip_s=args.min_clip_s,
                                max_clip_s=args.max_clip_s)
    os.makedirs(args.out, exist_ok=True)
    records = []
    names = sorted(n for n in os.listdir(args.in_dir) if n.lower().endswith(".wav"))
    if not names:
        print("no .wav files in %s" % args.in_dir, file=sys.stderr)
        return 1
    for name in names:
        src = os.path.join(args.in_dir, name)
        speaker, video, gender, accent = _parse_source_name(src)
        audio = corpus.read_wav(src)
        silences = corpus.detect_silences(audio, config)
        clips = corpus.segment_clips(audio, silences, config)
        for i, clip in enumerate(clips):
            clip_id = "%s_%s_%s_%s_%d" % (speaker, video, gender, accent, i)
            out_path = os.path.join(args.out, clip_id + ".wav")
            corpus.write_wav(out_path, clip)
            records.append(ClipRecord(clip_id=clip_id, path=out_path,
                                      speaker_id=speaker, video_id=video,
                                      gender=gender, label=accent,
                                      duration_s=clip.duration_s))
        print("%s: %d silences, %d clips kept" % (name, len(silences), len(clips)))
    manifest = os.path.join(args.out, "manifest.csv")
    corpus.write_manifest(manifest, records)
    print("wrote %s (%d clips)" % (manifest, len(records)))
    return 0


def _cap_per_class(records, cap, seed):
    """Seeded uniform down-sampling to at most `cap` clips per label."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xCA9)))
    by_label = {}
    for r in records:
        by_label.setdefault(r.label, []).append(r)
    kept_ids = set()
    for label in sorted(by_label):
        group = by_label[label]
        if len(group) <= cap:
            kept_ids.update(r.clip_id for r in group)
        else:
            chosen = rng.choice(len(group), size=cap, replace=False)
            kept_ids.update(group[i].clip_id for i in chosen)
    return [r for r in records if r.clip_id in kept_ids]


def cmd_split(args):
    fractions = tuple(float(x) for x in args.fractions.split(","))
    spec = SplitSpec(fractions=fractions, disjoint_key=args.key, seed=args.seed)
    records = corpus.read_manifest(args.manifest)
    splits = corpus.split_by_key(records, spec)
    stem = os.path.splitext(args.manifest)[0]
    for name, recs in zip(("train", "validation", "test"), splits):
        if args.cap_per_class:
            recs = _cap_per_class(recs, args.cap_per_class, args.seed)
        out = "%s.%s.csv" % (stem, name)
        corpus.write_manifest(out, recs)
        keys = {getattr(r, args.key) for r in recs}
        print("%s: %d clips, %d %s values -> %s"
              % (name, len(recs), len(keys), args.key, out))
    return 0


def cmd_stats(args):
    records = corpus.read_manifest(args.manifest)
    stats = corpus.compute_stats(records)
    print("speakers:            %d" % stats.n_speakers)
    print("clips:               %d" % stats.n_clips)
    print("videos:              %d" % stats.n_videos)
    print("total minutes:       %.2f" % stats.total_minutes)
    print("avg clips/speaker:   %.2f" % stats.avg_clips_per_speaker)
    print("avg videos/speaker:  %.2f" % stats.avg_videos_per_speaker)
    print("avg clip length (s): %.2f" % stats.avg_clip_length_s)
    for label, n in stats.clips_per_label.items():
        print("label %-12s %6d clips, %d speakers"
              % (label, n, stats.speakers_per_label[label]))
    for gender, n in stats.speakers_per_gender.items():
        print("gender %-11s %6d speakers" % (gender, n))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="corpus",
                                     description="audio corpus construction tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p_seg = sub.add_parser("segment", help="split recordings at silences")
    p_seg.add_argument("--in", dest="in_dir", required=True)
    p_seg.add_argument("--out", required=True)
    p_seg.add_argument("--threshold-db", type=float, default=-40.0)
    p_seg.add_argument("--min-silence-ms", type=int, default=200)
    p_seg.add_argument("--window-ms", type=int, default=10)
    p_seg.add_argument("--min-clip-s", type=float, default=3.5)
    p_seg.add_argument("--max-clip-s", type=float, default=12.0)
    p_seg.set_defaults(func=cmd_segment)

    p_split = sub.add_parser("split", help="speaker-disjoint manifest split")
    p_split.add_argument("--manifest", required=True)
    p_split.add_argument("--fractions", default="0.7,0.15,0.15")
    p_split.add_argument("--key", default="speaker_id")
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--cap-per-class", type=int, default=0,
                         help="seeded uniform cap on clips per label, per split")
    p_split.set_defaults(func=cmd_split)

    p_stats = sub.add_parser("stats", help="manifest statistics")
    p_stats.add_argument("--manifest", required=True)
    p_stats.set_defaults(func=cmd_stats)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
