"""Wall description and geometry.

The wall is a uniform grid of identical displays separated by bezels.  Bezel
pixels are part of the virtual framebuffer (so imagery stays continuous across
the gaps) but no display owns them, so routing simply drops them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for invalid wall descriptions; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class Mode(str, Enum):
    DISPATCHER = "dispatcher"
    DIRECT = "direct"


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    @property
    def x1(self) -> int:
        return self.x + self.width

    @property
    def y1(self) -> int:
        return self.y + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    def intersect(self, other: Rect) -> Rect | None:
        x0 = max(self.x, other.x)
        y0 = max(self.y, other.y)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def contains(self, px: int, py: int) -> bool:
        return self.x <= px < self.x1 and self.y <= py < self.y1


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int


@dataclass(frozen=True)
class DisplaySpec:
    display_id: int
    grid_row: int
    grid_col: int
    host: str
    port: int

    @property
    def endpoint(self) -> Endpoint:
        return Endpoint(self.host, self.port)


@dataclass(frozen=True)
class WallConfig:
    columns: int
    rows: int
    display_width: int
    display_height: int
    displays: tuple[DisplaySpec, ...]
    coordinator: Endpoint
    bezel_x: int = 0
    bezel_y: int = 0
    frames_in_flight: int = 1
    mode: Mode = Mode.DIRECT
    dispatcher: Endpoint | None = None

    def __post_init__(self):
        for key in ("columns", "rows", "display_width", "display_height", "frames_in_flight"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be >= 1")
        for key in ("bezel_x", "bezel_y"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be >= 0")
        if len(self.displays) != self.rows * self.columns:
            raise ConfigError(
                "displays", f"expected {self.rows * self.columns} entries, got {len(self.displays)}"
            )
        seen = set()
        for i, d in enumerate(self.displays):
            if not (0 <= d.grid_row < self.rows and 0 <= d.grid_col < self.columns):
                raise ConfigError(f"displays[{i}]", f"cell ({d.grid_row},{d.grid_col}) outside grid")
            cell = (d.grid_row, d.grid_col)
            if cell in seen:
                raise ConfigError(f"displays[{i}]", f"duplicate grid cell {cell}")
            seen.add(cell)
            if d.display_id != d.grid_row * self.columns + d.grid_col:
                raise ConfigError(f"displays[{i}]", "displays must be in row-major order")
            if d.endpoint == self.coordinator:
                raise ConfigError(f"displays[{i}]", "port collides with coordinator")
        if self.dispatcher is not None and self.dispatcher == self.coordinator:
            raise ConfigError("dispatcher", "port collides with coordinator")

    @property
    def num_displays(self) -> int:
        return self.rows * self.columns

    @property
    def dispatcher_endpoint(self) -> Endpoint:
        """Dispatcher data endpoint; defaults to the port after the coordinator's."""
        if self.dispatcher is not None:
            return self.dispatcher
        return Endpoint(self.coordinator.host, self.coordinator.port + 1)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "rows": self.rows,
            "columns": self.columns,
            "display_width": self.display_width,
            "display_height": self.display_height,
            "bezel_x": self.bezel_x,
            "bezel_y": self.bezel_y,
            "mode": self.mode.value,
            "frames_in_flight": self.frames_in_flight,
            "displays": [
                {"row": d.grid_row, "col": d.grid_col, "host": d.host, "port": d.port}
                for d in self.displays
            ],
            "coordinator": {"host": self.coordinator.host, "port": self.coordinator.port},
        }
        if self.dispatcher is not None:
            doc["dispatcher"] = {"host": self.dispatcher.host, "port": self.dispatcher.port}
        return doc

    def replace(self, **changes) -> WallConfig:
        doc = self.to_dict()
        doc.update(changes)
        return config_from_dict(doc)


_REQUIRED = ("rows", "columns", "display_width", "display_height", "displays", "coordinator")
_OPTIONAL_INT = {"bezel_x": 0, "bezel_y": 0, "frames_in_flight": 1}
_KNOWN = set(_REQUIRED) | set(_OPTIONAL_INT) | {"mode", "dispatcher", "comment"}


def _int(doc: dict, key: str, where: str | None = None) -> int:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where or key, f"expected an integer, got {value!r}")
    return value


def _endpoint(doc: Any, key: str) -> Endpoint:
    if not isinstance(doc, dict):
        raise ConfigError(key, "expected an object with host and port")
    for sub in ("host", "port"):
        if sub not in doc:
            raise ConfigError(f"{key}.{sub}", "missing field")
    port = _int(doc, "port", f"{key}.port")
    if not 0 <= port < 65536:
        raise ConfigError(f"{key}.port", "out of range")
    return Endpoint(str(doc["host"]), port)


def config_from_dict(doc: dict[str, Any]) -> WallConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(key, "missing field")
    unknown = set(doc) - _KNOWN
    if unknown:
        # per-display sizes and the like are not supported: the grid is uniform
        raise ConfigError(sorted(unknown)[0], "unknown field (only uniform grids are supported)")

    rows = _int(doc, "rows")
    columns = _int(doc, "columns")
    opts = {k: _int(doc, k) if k in doc else v for k, v in _OPTIONAL_INT.items()}
    try:
        mode = Mode(doc.get("mode", "direct"))
    except ValueError:
        raise ConfigError("mode", f"expected 'dispatcher' or 'direct', got {doc['mode']!r}") from None

    raw_displays = doc["displays"]
    if not isinstance(raw_displays, list):
        raise ConfigError("displays", "expected an array")
    specs = []
    for i, d in enumerate(raw_displays):
        where = f"displays[{i}]"
        if not isinstance(d, dict):
            raise ConfigError(where, "expected an object")
        for sub in ("row", "col", "host", "port"):
            if sub not in d:
                raise ConfigError(f"{where}.{sub}", "missing field")
        extra = set(d) - {"row", "col", "host", "port"}
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}", "unknown field (only uniform grids are supported)")
        row = _int(d, "row", f"{where}.row")
        col = _int(d, "col", f"{where}.col")
        port = _int(d, "port", f"{where}.port")
        specs.append((row, col, str(d["host"]), port))

    # duplicate check before sorting so the error names the offending entry
    seen: dict[tuple[int, int], int] = {}
    for i, (row, col, _, _) in enumerate(specs):
        if (row, col) in seen:
            raise ConfigError(f"displays[{i}]", f"duplicate grid cell ({row},{col})")
        seen[(row, col)] = i
    specs.sort(key=lambda s: (s[0], s[1]))
    displays = tuple(
        DisplaySpec(row * columns + col, row, col, host, port) for row, col, host, port in specs
    )

    return WallConfig(
        columns=columns,
        rows=rows,
        display_width=_int(doc, "display_width"),
        display_height=_int(doc, "display_height"),
        displays=displays,
        coordinator=_endpoint(doc["coordinator"], "coordinator"),
        mode=mode,
        dispatcher=_endpoint(doc["dispatcher"], "dispatcher") if "dispatcher" in doc else None,
        **opts,
    )


def parse_config(text: str) -> WallConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    return config_from_dict(doc)


def load_config(path: str | Path) -> WallConfig:
    return parse_config(Path(path).read_text())


def grid_config(
    columns: int,
    rows: int,
    display_width: int,
    display_height: int,
    *,
    bezel_x: int = 0,
    bezel_y: int = 0,
    host: str = "127.0.0.1",
    base_port: int = 7000,
    mode: Mode | str = Mode.DIRECT,
    frames_in_flight: int = 1,
    ports: list[int] | None = None,
    dispatcher_port: int | None = None,
) -> WallConfig:
    """Build a single-host wall: coordinator on ``base_port``, dispatcher next, displays after.

    ``ports`` overrides the display ports (one per display, row-major).
    """
    n = columns * rows
    if ports is None:
        ports = [base_port + 2 + i for i in range(n)]
    displays = tuple(
        DisplaySpec(i, i // columns, i % columns, host, ports[i]) for i in range(n)
    )
    return WallConfig(
        columns=columns,
        rows=rows,
        display_width=display_width,
        display_height=display_height,
        displays=displays,
        coordinator=Endpoint(host, base_port),
        bezel_x=bezel_x,
        bezel_y=bezel_y,
        frames_in_flight=frames_in_flight,
        mode=Mode(mode),
        dispatcher=Endpoint(host, dispatcher_port if dispatcher_port is not None else base_port + 1),
    )


def virtual_size(config: WallConfig) -> tuple[int, int]:
    width = config.columns * config.display_width + (config.columns - 1) * config.bezel_x
    height = config.rows * config.display_height + (config.rows - 1) * config.bezel_y
    return width, height


def virtual_rect(config: WallConfig) -> Rect:
    return Rect(0, 0, *virtual_size(config))


def display_region(config: WallConfig, display_id: int) -> Rect:
    if not 0 <= display_id < config.num_displays:
        raise IndexError(f"display_id {display_id} out of range [0, {config.num_displays})")
    row, col = divmod(display_id, config.columns)
    return Rect(
        col * (config.display_width + config.bezel_x),
        row * (config.display_height + config.bezel_y),
        config.display_width,
        config.display_height,
    )


def _span(start: int, length: int, pitch: int, count: int) -> range:
    # grid cells whose [k*pitch, k*pitch + size) may intersect [start, start+length)
    first = start // pitch
    last = min((start + length - 1) // pitch, count - 1)
    return range(first, last + 1)


def route_rect(config: WallConfig, tile: Rect) -> list[tuple[int, Rect]]:
    """Displays overlapped by ``tile`` with the overlap in virtual coordinates, row-major."""
    vw, vh = virtual_size(config)
    if tile.width < 1 or tile.height < 1:
        raise ValueError(f"empty tile {tile}")
    if tile.x < 0 or tile.y < 0 or tile.x1 > vw or tile.y1 > vh:
        raise ValueError(f"tile {tile} exceeds the virtual framebuffer {vw}x{vh}")
    out = []
    for row in _span(tile.y, tile.height, config.display_height + config.bezel_y, config.rows):
        for col in _span(tile.x, tile.width, config.display_width + config.bezel_x, config.columns):
            display_id = row * config.columns + col
            overlap = display_region(config, display_id).intersect(tile)
            if overlap is not None:
                out.append((display_id, overlap))
    return out
