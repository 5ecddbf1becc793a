"""``dw2-service``: run wall roles from a JSON wall description."""
from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading

from ..socket_group import make_shaper
from ..wall_config import ConfigError, Mode, load_config
from .coordinator import Coordinator
from .dispatcher import Dispatcher
from .display import Display
from .local import LocalWall
from .sinks import make_sink

log = logging.getLogger("dw2.service")


def parse_roles(spec: str, num_displays: int) -> list[tuple[str, int | None]]:
    """``coordinator,dispatcher,display:0,display:3`` (``display:*`` for all)."""
    roles: list[tuple[str, int | None]] = []
    for item in filter(None, (s.strip() for s in spec.split(","))):
        name, _, arg = item.partition(":")
        if name in ("coordinator", "dispatcher") and not arg:
            roles.append((name, None))
        elif name == "display" and arg == "*":
            roles.extend(("display", i) for i in range(num_displays))
        elif name == "display" and arg.isdigit() and int(arg) < num_displays:
            roles.append(("display", int(arg)))
        else:
            raise ValueError(f"bad role {item!r}")
    return roles


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dw2-service", description=__doc__)
    p.add_argument("--config", required=True, help="wall description (JSON)")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="override the config's mode")
    p.add_argument("--sink", default="null", help="null | png:<dir> | window (default: null)")
    p.add_argument("--decomp-threads", type=int, default=None, help="decompression workers per display")
    p.add_argument("--log-level", default="INFO")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--local-wall", action="store_true", help="run every role in this process")
    where.add_argument("--role", help="roles to run here, e.g. coordinator,dispatcher or display:0,display:1")
    p.add_argument("--repeat", action="store_true", help="start a new session after each one ends")
    p.add_argument("--link-mbps", type=float, default=None, help="cap each role's outgoing bandwidth")
    return p


def _run_roles(config, roles, args) -> int:
    objs = []
    for name, arg in roles:
        shaper = make_shaper(args.link_mbps)
        if name == "coordinator":
            objs.append(Coordinator(config, shaper=shaper))
        elif name == "dispatcher":
            if config.mode != Mode.DISPATCHER:
                log.warning("dispatcher role requested but the wall runs in direct mode; skipping")
                continue
            objs.append(Dispatcher(config, shaper=shaper))
        else:
            objs.append(Display(config, arg, make_sink(args.sink), args.decomp_threads, shaper=shaper))
    for o in objs:
        o.start()
    for o in objs:
        o.join()
    return 1 if any(getattr(o, "error", None) for o in objs) else 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = load_config(args.config)
        if args.mode:
            config = config.replace(mode=args.mode)
    except (OSError, ConfigError) as exc:
        print(f"dw2-service: {exc}", file=sys.stderr)
        return 2

    stopping = threading.Event()
    current: list = []

    def on_signal(*_):
        stopping.set()
        for wall in current:
            wall.stop()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)

    while True:
        if args.local_wall:
            wall = LocalWall(
                config, sink=make_sink(args.sink), decomp_threads=args.decomp_threads, link_mbps=args.link_mbps
            )
            current[:] = [wall]
            wall.start()
            log.info("local wall up: coordinator %s:%d, %s mode", config.coordinator.host,
                     config.coordinator.port, config.mode.value)
            while not wall.wait(0.5):
                pass
            status = 1 if wall.coordinator.error else 0
        else:
            try:
                roles = parse_roles(args.role, config.num_displays)
            except ValueError as exc:
                print(f"dw2-service: {exc}", file=sys.stderr)
                return 2
            status = _run_roles(config, roles, args)
        if not args.repeat or stopping.is_set():
            return status


if __name__ == "__main__":
    sys.exit(main())
