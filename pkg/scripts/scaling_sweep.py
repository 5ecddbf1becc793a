"""Aggregate frame rate vs number of clients in both modes.

Every node's outgoing bandwidth is capped (``--link-mbps``) so that the
per-node network limit, not the shared CPU of one machine, is the bottleneck,
as on a real cluster.  Pass ``--link-mbps 0`` for an unshaped run.

    python scripts/scaling_sweep.py --out results/scaling.csv
"""
import argparse

import numpy as np

from dw2.bench.replay import sweep
from dw2.wall_config import grid_config


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--clients", default="1,2,4")
    p.add_argument("--columns", type=int, default=2)
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--tile-size", type=int, default=64)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--link-mbps", type=float, default=20.0)
    p.add_argument("--out", default="scaling.csv")
    args = p.parse_args()

    records = sweep(
        "synthetic",
        grid_config(args.columns, args.rows, 320, 240, frames_in_flight=2),
        {"peers": [int(c) for c in args.clients.split(",")], "mode": ["direct", "dispatcher"]},
        tile_size=args.tile_size,
        frames=args.frames,
        repeats=args.repeats,
        link_mbps=args.link_mbps or None,
        out=args.out,
    )
    by = {}
    for r in records:
        by.setdefault((r.mode, r.clients), []).append(r.fps)
    print(f"{'mode':<11}{'clients':>8}{'median fps':>12}")
    for (mode, clients), fps in sorted(by.items()):
        print(f"{mode:<11}{clients:>8}{np.median(fps):>12.1f}")


if __name__ == "__main__":
    main()
