"""Converter command line: matconvert convert --dataset cwru --in DIR --out DIR."""

import argparse
import sys

from .convert import ArchiveMap, ConvertError, convert_archive, load_builtin_map


def build_parser():
    parser = argparse.ArgumentParser(
        prog="matconvert",
        description="Convert MATLAB vibration archives to manifest + raw float32")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("convert", help="convert one archive directory")
    p.add_argument("--dataset", required=True, choices=["cwru", "pu"])
    p.add_argument("--in", dest="in_dir", required=True, help="archive directory")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory")
    p.add_argument("--map", dest="map_path",
                   help="override the built-in archive map (JSON)")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        archive_map = (ArchiveMap.from_json(args.map_path) if args.map_path
                       else load_builtin_map(args.dataset))
        manifest_path, report = convert_archive(args.in_dir, archive_map, args.out_dir)
    except ConvertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, raw, samples in report.converted:
        print(f"converted {name} -> {raw} ({samples} samples)")
    for name in report.skipped:
        print(f"warning: {name} not in archive map, skipped", file=sys.stderr)
    for name, message in report.errors:
        print(f"error reading {name}: {message}", file=sys.stderr)
    print(f"manifest: {manifest_path}")
    return 0 if not report.errors else 1


if __name__ == "__main__":
    sys.exit(main())
