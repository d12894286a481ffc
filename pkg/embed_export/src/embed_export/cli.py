"""mewehv-export: dump frozen-encoder embeddings for every manifest clip."""

import argparse
import sys

from .encoders import ENCODERS
from .export import ExportJob, export_manifest


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mewehv-export",
        description="export per-clip embedding sequences in the MWEV format")
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--encoder", required=True, choices=sorted(ENCODERS))
    parser.add_argument("--out", required=True)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--random-init", action="store_true",
                        help="random weights instead of the published "
                             "checkpoint (offline smoke runs)")
    args = parser.parse_args(argv)

    job = ExportJob(manifest=args.manifest, encoder_name=args.encoder,
                    out_dir=args.out, device=args.device,
                    pretrained=not args.random_init)
    summary = export_manifest(job)
    print("exported %d, skipped %d, failed %d"
          % (summary.exported, summary.skipped, len(summary.failures)))
    for clip_id, reason in summary.failures:
        print("  %s: %s" % (clip_id, reason), file=sys.stderr)
    return 1 if summary.failures else 0


if __name__ == "__main__":
    sys.exit(main())
