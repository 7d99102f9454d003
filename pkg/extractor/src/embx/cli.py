"""CLI: extract slice embeddings from a directory of volumes into an EMBV file."""
from __future__ import annotations

import argparse
import sys

from .extract import export_dataset, read_labels_csv
from .models import MODEL_NAMES, MissingWeightsError, load_backbone


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="embx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="extract embeddings and write an EMBV dataset")
    p.add_argument("--model", required=True, choices=list(MODEL_NAMES))
    p.add_argument("--in", dest="volume_dir", required=True,
                   help="directory of <volume_id>.npy arrays, (z,h,w) or (protocol,z,h,w)")
    p.add_argument("--labels", required=True,
                   help="CSV: volume_id,modality,region,organ,spacing_mm")
    p.add_argument("--weights", default=None, help="local weights (state_dict) for the model")
    p.add_argument("--out", required=True, help="output EMBV path")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        backbone = load_backbone(args.model, args.weights)
        labels = read_labels_csv(args.labels)
        n_volumes, n_bytes = export_dataset(args.volume_dir, labels, backbone, args.out)
        print(f"wrote {args.out} ({n_volumes} volumes, {n_bytes} bytes) "
              f"with sidecar {args.out}.meta.txt")
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (MissingWeightsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
