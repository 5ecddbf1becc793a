"""Frames per second vs tile size in both modes, hard-to-compress image.

    python scripts/tile_size_sweep.py --out results/tile_size.csv
"""
import argparse

import numpy as np

from dw2.bench.replay import sweep
from dw2.wall_config import grid_config


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--tiles", default="32,64,128,256")
    p.add_argument("--quality", type=int, default=75)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--display", default="320x240", help="per-display size of the 2x2 loopback wall")
    p.add_argument("--out", default="tile_size.csv")
    args = p.parse_args()

    w, h = map(int, args.display.split("x"))
    records = sweep(
        "synthetic",
        grid_config(2, 2, w, h, frames_in_flight=2),
        {"tile_size": [int(t) for t in args.tiles.split(",")], "mode": ["direct", "dispatcher"]},
        quality=args.quality,
        frames=args.frames,
        repeats=args.repeats,
        out=args.out,
    )
    by = {}
    for r in records:
        by.setdefault((r.mode, r.tile_size), []).append(r.fps)
    print(f"{'mode':<11}{'tile':>6}{'median fps':>12}")
    for (mode, tile), fps in sorted(by.items()):
        print(f"{mode:<11}{tile:>6}{np.median(fps):>12.1f}")


if __name__ == "__main__":
    main()
