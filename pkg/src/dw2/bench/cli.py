"""``dw2-bench``: replay an image through a wall and report FPS and bytes as CSV."""
from __future__ import annotations

import argparse
import logging
import sys

from ..wall_config import ConfigError, Mode, grid_config, load_config
from .replay import CSV_FIELDS, parse_sweep, sweep


def _quality(text: str):
    return "raw" if text == "raw" else int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dw2-bench", description=__doc__)
    p.add_argument("--config", help="wall description; default is a 2x2 wall of 320x240 displays")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="override the config's mode")
    p.add_argument("--image", default="synthetic", help="synthetic | photo | path to a pre-rendered image")
    p.add_argument("--tile-size", type=int, default=128)
    p.add_argument("--quality", type=_quality, default=75, help="JPEG quality 1-100 or raw")
    p.add_argument("--peers", type=int, default=1, help="client peers (threads)")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--sweep", action="append", default=[], metavar="AXIS=V1,V2",
                   help="sweep axis (tile_size, quality, peers, mode, columns, rows, frames_in_flight); repeatable")
    p.add_argument("--external", action="store_true",
                   help="use the service already running at the config's coordinator instead of a local wall")
    p.add_argument("--link-mbps", type=float, default=None, help="cap every node's outgoing bandwidth")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--log-level", default="WARNING")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    try:
        config = load_config(args.config) if args.config else grid_config(2, 2, 320, 240)
        if args.mode:
            config = config.replace(mode=args.mode)
        axes = parse_sweep(args.sweep)
    except (OSError, ConfigError, ValueError) as exc:
        print(f"dw2-bench: {exc}", file=sys.stderr)
        return 2

    def progress(rec):
        print(
            f"{rec.mode:10s} tile={rec.tile_size:<4d} q={rec.quality:<4s} clients={rec.clients} "
            f"displays={rec.displays} fps={rec.fps:7.2f} bytes/frame={rec.payload_bytes_per_frame:10.0f}",
            file=sys.stderr,
        )

    records = sweep(
        args.image,
        config,
        axes or {"tile_size": [args.tile_size]},
        tile_size=args.tile_size,
        quality=args.quality,
        peers=args.peers,
        frames=args.frames,
        repeats=args.repeats,
        local=not args.external,
        link_mbps=args.link_mbps,
        out=args.out,
        progress=progress,
    )
    if args.out is None:
        import csv

        writer = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())
    return 0


if __name__ == "__main__":
    sys.exit(main())
