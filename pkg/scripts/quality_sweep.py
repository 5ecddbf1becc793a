"""Payload size and frame rate vs JPEG quality on a natural-looking image.

    python scripts/quality_sweep.py --image photo --out results/quality.csv
"""
import argparse

from dw2.bench.replay import sweep
from dw2.wall_config import Mode, grid_config


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--image", default="photo", help="photo | synthetic | path to a rendered frame")
    p.add_argument("--qualities", default="100,75,50,25")
    p.add_argument("--tile-size", type=int, default=128)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--mode", default="direct", choices=[m.value for m in Mode])
    p.add_argument("--out", default="quality.csv")
    args = p.parse_args()

    qualities = [q if q == "raw" else int(q) for q in args.qualities.split(",")]
    records = sweep(
        args.image,
        grid_config(2, 2, 320, 240, frames_in_flight=2, mode=args.mode),
        {"quality": qualities},
        tile_size=args.tile_size,
        frames=args.frames,
        out=args.out,
    )
    print(f"{'quality':>8}{'bytes/frame':>14}{'fps':>8}")
    for r in records:
        print(f"{r.quality:>8}{r.payload_bytes_per_frame:>14.0f}{r.fps:>8.1f}")


if __name__ == "__main__":
    main()
