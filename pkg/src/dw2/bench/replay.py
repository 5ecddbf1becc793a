"""Replay a fixed image as one or more rendering clients and measure the wall."""
from __future__ import annotations

import csv
import itertools
import logging
import math
import threading
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable

import numpy as np

from ..client import connect, query_info
from ..codec import PixelBuffer
from ..service.local import LocalWall, loopback_config
from ..wall_config import Mode, Rect, WallConfig, virtual_size
from .images import generate_photographic, generate_synthetic, load_image

log = logging.getLogger(__name__)


@dataclass
class BenchRecord:
    mode: str
    tile_size: int
    quality: str
    clients: int
    displays: int
    frames: int
    fps: float
    p5_frame_ms: float
    p95_frame_ms: float
    payload_bytes_per_frame: float
    head_node_bytes_per_frame: float
    extra: dict = field(default_factory=dict, repr=False, compare=False)

    def row(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}


CSV_FIELDS = [f.name for f in fields(BenchRecord) if f.name != "extra"]

ImageSource = PixelBuffer | str | Callable[[int, int, int], PixelBuffer]


def tile_grid(width: int, height: int, tile_size: int) -> list[Rect]:
    """Row-major tile_size x tile_size tiles covering width x height (edge tiles clipped)."""
    return [
        Rect(x, y, min(tile_size, width - x), min(tile_size, height - y))
        for y in range(0, height, tile_size)
        for x in range(0, width, tile_size)
    ]


def resolve_image(source: ImageSource, width: int, height: int, tile_size: int, strict: bool = False) -> PixelBuffer:
    if isinstance(source, PixelBuffer):
        if (source.width, source.height) != (width, height):
            if strict:
                raise ValueError(f"image is {source.width}x{source.height}, wall is {width}x{height}")
            from PIL import Image

            log.warning("rescaling image to %dx%d", width, height)
            im = Image.fromarray(np.ascontiguousarray(source.pixels), "RGBA").resize((width, height))
            return PixelBuffer(np.array(im))
        return source
    if callable(source):
        return source(width, height, tile_size)
    if source == "synthetic":
        return generate_synthetic(width, height, tile_size)
    if source == "photo":
        return generate_photographic(width, height)
    return load_image(source, (width, height), strict)


def _percentile_ms(values: list[float], q: float) -> float:
    return float(np.percentile(values, q) * 1000.0) if values else math.nan


def _peer_loop(info, rank, peers, tiles, image, quality, frames, errors, timeout, link_mbps):
    try:
        session = connect(info, rank, peers, quality=quality, link_mbps=link_mbps)
        try:
            crops = [(r, image.crop(r.x, r.y, r.width, r.height)) for r in tiles]
            for _ in range(frames):
                fid = session.begin_frame(timeout=timeout)
                for r, px in crops:
                    session.send_rgba(fid, px, (r.x, r.y))
        finally:
            session.disconnect(wait=True, timeout=timeout)
        return session
    except BaseException as exc:
        errors.append(exc)
        raise


def run_replay(
    image: ImageSource,
    config: WallConfig,
    tile_size: int,
    quality: int | str = 75,
    peers: int = 1,
    frames: int = 10,
    *,
    local: bool = True,
    sink=None,
    decomp_threads: int | None = None,
    strict: bool = False,
    timeout: float = 60.0,
    link_mbps: float | None = None,
) -> BenchRecord:
    """Stream ``frames`` frames of ``image`` split into tile_size^2 tiles dealt
    round-robin to ``peers`` client threads.

    With ``local=True`` a fresh loopback wall with the geometry and mode of
    ``config`` is started for the run, and FPS and byte counts come from the
    service side.  Otherwise the service at ``config.coordinator`` is used and
    the numbers are measured by the clients.  ``link_mbps`` caps every
    node's outgoing bandwidth (clients always; service roles only when local).
    """
    wall = None
    if local:
        cfg, listeners = loopback_config(
            config.columns,
            config.rows,
            config.display_width,
            config.display_height,
            bezel_x=config.bezel_x,
            bezel_y=config.bezel_y,
            mode=config.mode,
            frames_in_flight=config.frames_in_flight,
        )
        wall = LocalWall(
            cfg, listeners=listeners, sink=sink, decomp_threads=decomp_threads, link_mbps=link_mbps
        ).start()
        host, port = cfg.coordinator.host, cfg.coordinator.port
    else:
        host, port = config.coordinator.host, config.coordinator.port
    try:
        info = query_info(host, port)
        width, height = info.virtual_width, info.virtual_height
        pixels = resolve_image(image, width, height, tile_size, strict)
        tiles = tile_grid(width, height, tile_size)
        errors: list[BaseException] = []
        sessions: list = [None] * peers

        def run(rank):
            sessions[rank] = _peer_loop(
                info, rank, peers, tiles[rank::peers], pixels, quality, frames, errors, timeout, link_mbps
            )

        threads = [threading.Thread(target=run, args=(r,), name=f"peer{r}", daemon=True) for r in range(peers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        if wall is not None and not wall.wait(timeout):
            raise TimeoutError("wall did not shut down after the run")
    finally:
        if wall is not None and any(r.running for r in wall.roles):
            wall.stop()

    quality_label = str(quality)
    if wall is not None:
        stats = wall.stats()
        coord = stats["coordinator"]
        start, done = coord["session_start"], coord["completion_times"]
        times = np.diff([start, *done]).tolist()
        elapsed = done[-1] - start if done else math.nan
        payload = sum(d["payload_bytes_received"] for d in stats["displays"])
        head = coord["link_bytes"] + (stats["dispatcher"]["link_bytes"] if stats["dispatcher"] else 0)
        extra = {"stats": stats, "client_stats": [s.stats() for s in sessions]}
    else:
        tt = sessions[0].token_times
        fif = info.frames_in_flight
        marks = [tt[0]] + [tt[f + fif] for f in range(frames) if f + fif in tt]
        times = np.diff(marks).tolist()
        elapsed = marks[-1] - marks[0] if len(marks) > 1 else math.nan
        payload = sum(s.counters["payload_bytes_sent"] for s in sessions)
        head = math.nan
        extra = {"client_stats": [s.stats() for s in sessions]}
    return BenchRecord(
        mode=info.mode.value,
        tile_size=tile_size,
        quality=quality_label,
        clients=peers,
        displays=config.num_displays,
        frames=frames,
        fps=frames / elapsed if elapsed and elapsed > 0 else math.nan,
        p5_frame_ms=_percentile_ms(times, 5),
        p95_frame_ms=_percentile_ms(times, 95),
        payload_bytes_per_frame=payload / frames,
        head_node_bytes_per_frame=head / frames,
        extra=extra,
    )


SWEEP_AXES = ("tile_size", "quality", "peers", "mode", "columns", "rows", "frames_in_flight")


def parse_sweep(specs: Iterable[str]) -> dict[str, list]:
    """``["tile_size=32,64", "mode=direct,dispatcher"]`` (or ``;``-joined) -> axes dict."""
    axes: dict[str, list] = {}
    for spec in specs:
        for part in filter(None, (p.strip() for p in spec.split(";"))):
            name, _, values = part.partition("=")
            name = name.strip().replace("-", "_")
            if name == "clients":
                name = "peers"
            if name not in SWEEP_AXES:
                raise ValueError(f"unknown sweep axis {name!r}; choose from {', '.join(SWEEP_AXES)}")
            items = [v.strip() for v in values.split(",") if v.strip()]
            if not items:
                raise ValueError(f"sweep axis {name!r} has no values")
            if name in ("mode",):
                axes[name] = [Mode(v).value for v in items]
            elif name == "quality":
                axes[name] = [v if v == "raw" else int(v) for v in items]
            else:
                axes[name] = [int(v) for v in items]
    return axes


def sweep(
    image: ImageSource,
    config: WallConfig,
    axes: dict[str, list],
    *,
    tile_size: int = 128,
    quality: int | str = 75,
    peers: int = 1,
    frames: int = 10,
    repeats: int = 1,
    local: bool = True,
    link_mbps: float | None = None,
    out: str | None = None,
    progress: Callable[[BenchRecord], None] | None = None,
) -> list[BenchRecord]:
    """Cartesian product over ``axes``; one record per run (``repeats`` per point)."""
    names = list(axes)
    records = []
    for values in itertools.product(*(axes[n] for n in names)):
        point = dict(zip(names, values))
        cfg = config
        geometry = {k: point[k] for k in ("mode", "columns", "rows", "frames_in_flight") if k in point}
        if geometry:
            if not local and geometry:
                raise ValueError("mode/geometry axes need a local wall")
            cfg = _reshape(config, **geometry)
        for _ in range(repeats):
            rec = run_replay(
                image,
                cfg,
                point.get("tile_size", tile_size),
                point.get("quality", quality),
                point.get("peers", peers),
                frames,
                local=local,
                link_mbps=link_mbps,
            )
            records.append(rec)
            if progress is not None:
                progress(rec)
    if out is not None:
        write_csv(records, out)
    return records


def _reshape(config: WallConfig, **changes) -> WallConfig:
    columns = changes.get("columns", config.columns)
    rows = changes.get("rows", config.rows)
    cfg, listeners = loopback_config(
        columns,
        rows,
        config.display_width,
        config.display_height,
        bezel_x=config.bezel_x,
        bezel_y=config.bezel_y,
        mode=changes.get("mode", config.mode),
        frames_in_flight=changes.get("frames_in_flight", config.frames_in_flight),
    )
    # only the geometry is used; run_replay binds its own ports
    for s in (listeners["coordinator"], listeners["dispatcher"], *listeners["displays"]):
        s.close()
    return cfg


def write_csv(records: Iterable[BenchRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.row())


def median_fps(records: list[BenchRecord]) -> float:
    return float(np.median([r.fps for r in records]))
