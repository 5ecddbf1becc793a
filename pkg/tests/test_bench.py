import csv
import json
import socket
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dw2.bench import cli as bench_cli
from dw2.bench.images import generate_photographic, generate_synthetic, load_image
from dw2.bench.replay import CSV_FIELDS, parse_sweep, run_replay, tile_grid
from dw2.service.cli import parse_roles
from dw2.wall_config import Mode, grid_config


@settings(max_examples=100)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 128))
def test_tile_grid_partitions_the_image(w, h, t):
    rects = tile_grid(w, h, t)
    cover = np.zeros((h, w), np.int32)
    for r in rects:
        assert 1 <= r.width <= t and 1 <= r.height <= t
        cover[r.y : r.y1, r.x : r.x1] += 1
    assert (cover == 1).all()


def test_images_are_deterministic():
    assert generate_synthetic(100, 80, 16, seed=4) == generate_synthetic(100, 80, 16, seed=4)
    assert generate_synthetic(100, 80, 16, seed=4) != generate_synthetic(100, 80, 16, seed=5)
    assert generate_photographic(90, 70, seed=1) == generate_photographic(90, 70, seed=1)


def test_load_image_rescales_unless_strict(tmp_path):
    from PIL import Image

    path = tmp_path / "frame.png"
    Image.fromarray(np.zeros((10, 20, 3), np.uint8)).save(path)
    assert load_image(str(path)).width == 20
    assert (load_image(str(path), (40, 30)).width, load_image(str(path), (40, 30)).height) == (40, 30)
    with pytest.raises(ValueError):
        load_image(str(path), (40, 30), strict=True)


def test_parse_sweep():
    axes = parse_sweep(["tile_size=32,64", "mode=direct,dispatcher;quality=raw,50", "clients=1,2"])
    assert axes == {
        "tile_size": [32, 64],
        "mode": ["direct", "dispatcher"],
        "quality": ["raw", 50],
        "peers": [1, 2],
    }
    with pytest.raises(ValueError):
        parse_sweep(["color=red"])
    with pytest.raises(ValueError):
        parse_sweep(["tile_size="])


@pytest.mark.parametrize("tile, spanning", [(40, False), (100, True)])
def test_payload_accounting(tile, spanning):
    # 2x2 of 160x120: 40 divides the display size, 100 does not
    cfg = grid_config(2, 2, 160, 120, mode=Mode.DISPATCHER, frames_in_flight=2)
    rec = run_replay("synthetic", cfg, tile, 60, peers=2, frames=3)
    client = sum(c["payload_bytes_compressed"] for c in rec.extra["client_stats"])
    dispatcher = rec.extra["stats"]["dispatcher"]["payload_bytes_received"]
    displays = sum(d["payload_bytes_received"] for d in rec.extra["stats"]["displays"])
    assert client == dispatcher
    if spanning:
        assert displays > client
    else:
        assert displays == client
    assert rec.payload_bytes_per_frame * rec.frames == displays
    assert rec.clients == 2 and rec.displays == 4 and rec.mode == "dispatcher"


def test_direct_mode_accounting():
    cfg = grid_config(2, 1, 160, 120, frames_in_flight=1)
    rec = run_replay("synthetic", cfg, 100, 60, peers=1, frames=2)
    sent = sum(c["payload_bytes_sent"] for c in rec.extra["client_stats"])
    displays = sum(d["payload_bytes_received"] for d in rec.extra["stats"]["displays"])
    assert sent == displays
    assert rec.head_node_bytes_per_frame < 1024


def test_bench_cli_writes_csv(tmp_path, capsys):
    out = tmp_path / "report.csv"
    code = bench_cli.main(
        ["--image", "synthetic", "--tile-size", "64", "--quality", "raw", "--frames", "2",
         "--sweep", "mode=direct,dispatcher", "--out", str(out)]
    )
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == CSV_FIELDS
    assert [r["mode"] for r in rows] == ["direct", "dispatcher"]
    assert all(float(r["fps"]) > 0 for r in rows)


def test_bench_cli_rejects_bad_sweep(capsys):
    assert bench_cli.main(["--sweep", "nonsense=1"]) == 2


def test_parse_roles():
    assert parse_roles("coordinator,display:1", 4) == [("coordinator", None), ("display", 1)]
    assert parse_roles("display:*", 2) == [("display", 0), ("display", 1)]
    for bad in ("display:9", "gpu", "coordinator:1"):
        with pytest.raises(ValueError):
            parse_roles(bad, 4)


def _free_ports(n):
    socks = [socket.socket() for _ in range(n)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


@pytest.mark.parametrize("mode", ["direct", "dispatcher"])
def test_service_and_bench_processes(tmp_path, mode):
    ports = _free_ports(6)
    doc = {
        "columns": 2,
        "rows": 2,
        "display_width": 64,
        "display_height": 48,
        "frames_in_flight": 2,
        "mode": mode,
        "coordinator": {"host": "127.0.0.1", "port": ports[0]},
        "dispatcher": {"host": "127.0.0.1", "port": ports[1]},
        "displays": [
            {"row": i // 2, "col": i % 2, "host": "127.0.0.1", "port": ports[2 + i]} for i in range(4)
        ],
    }
    config = tmp_path / "wall.json"
    config.write_text(json.dumps(doc))
    frames_dir = tmp_path / "frames"
    service = subprocess.Popen(
        [sys.executable, "-m", "dw2.service.cli", "--config", str(config), "--local-wall",
         "--sink", f"png:{frames_dir}", "--log-level", "WARNING"],
    )
    try:
        bench = subprocess.run(
            [sys.executable, "-m", "dw2.bench.cli", "--config", str(config), "--external",
             "--tile-size", "32", "--quality", "raw", "--frames", "3", "--out", str(tmp_path / "r.csv")],
            capture_output=True, text=True, timeout=60,
        )
        assert bench.returncode == 0, bench.stderr
        assert service.wait(timeout=30) == 0
    finally:
        if service.poll() is None:
            service.kill()
    assert len(list(frames_dir.glob("*.png"))) == 12
