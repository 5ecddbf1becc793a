"""Timestamped mailbox: a locking producer/consumer queue filterable by frame id."""
from __future__ import annotations

import threading
import time
from collections import deque
from typing import Any, Callable

# frame id under which non-tile (control) messages are posted
CONTROL_FRAME = -1


class MailboxClosed(Exception):
    """End of stream: the mailbox is closed and holds nothing the caller can take."""


class TimestampedMailbox:
    """Unbounded FIFO of ``(frame_id, item)`` pairs.

    Consumers either take the oldest item (``pop_any``) or the oldest item of
    a given frame (``pop_for_frame``); filtered pops leave other frames' items
    queued in their original order.
    """

    def __init__(self):
        self._items: deque[tuple[int, Any]] = deque()
        self._cond = threading.Condition()
        self._closed = False

    def __len__(self):
        with self._cond:
            return len(self._items)

    @property
    def closed(self) -> bool:
        return self._closed

    def post(self, frame_id: int, item: Any) -> None:
        with self._cond:
            if self._closed:
                raise MailboxClosed("post to a closed mailbox")
            self._items.append((frame_id, item))
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def wake(self) -> None:
        """Make blocked ``pop_where`` callers re-evaluate their predicates."""
        with self._cond:
            self._cond.notify_all()

    def pop_any(self, timeout: float | None = None) -> tuple[int, Any]:
        return self.pop_where(lambda _f: True, timeout)

    def pop_for_frame(self, frame_id: int, timeout: float | None = None) -> Any:
        return self.pop_where(lambda f: f == frame_id, timeout)[1]

    def pop_where(self, accept: Callable[[int], bool], timeout: float | None = None) -> tuple[int, Any]:
        """Remove and return the oldest item whose frame id satisfies ``accept``.

        Blocks until one is available.  Raises MailboxClosed once the mailbox is
        closed and no acceptable item remains, TimeoutError when ``timeout``
        expires first.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                for i, (f, item) in enumerate(self._items):
                    if accept(f):
                        del self._items[i]
                        return f, item
                if self._closed:
                    raise MailboxClosed("mailbox closed")
                if deadline is None:
                    self._cond.wait()
                else:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise TimeoutError("mailbox pop timed out")
                    self._cond.wait(remaining)

    def drain(self) -> list[tuple[int, Any]]:
        with self._cond:
            out = list(self._items)
            self._items.clear()
            return out
