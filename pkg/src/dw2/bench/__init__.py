from .images import constant_image, generate_photographic, generate_synthetic, load_image
from .replay import BenchRecord, parse_sweep, run_replay, sweep, tile_grid, write_csv

__all__ = [
    "BenchRecord",
    "constant_image",
    "generate_photographic",
    "generate_synthetic",
    "load_image",
    "parse_sweep",
    "run_replay",
    "sweep",
    "tile_grid",
    "write_csv",
]
