import random
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, initialize, invariant, rule

from dw2.mailbox import CONTROL_FRAME, MailboxClosed, TimestampedMailbox
from oracles import MailboxModel


def test_filtered_pop_keeps_other_frames_in_order():
    box = TimestampedMailbox()
    for f, item in [(1, "a"), (2, "b"), (1, "c"), (3, "d"), (2, "e")]:
        box.post(f, item)
    assert box.pop_for_frame(2) == "b"
    assert box.pop_for_frame(2) == "e"
    assert box.drain() == [(1, "a"), (1, "c"), (3, "d")]


def test_pop_where_predicate():
    box = TimestampedMailbox()
    box.post(5, "future")
    box.post(CONTROL_FRAME, "ctl")
    box.post(2, "now")
    assert box.pop_where(lambda f: f <= 2) == (CONTROL_FRAME, "ctl")
    assert box.pop_where(lambda f: f <= 2) == (2, "now")
    with pytest.raises(TimeoutError):
        box.pop_where(lambda f: f <= 2, timeout=0.05)
    assert len(box) == 1


def test_blocking_pop_wakes_on_post():
    box = TimestampedMailbox()
    out = []
    t = threading.Thread(target=lambda: out.append(box.pop_for_frame(4)))
    t.start()
    time.sleep(0.05)
    box.post(3, "no")
    time.sleep(0.05)
    assert not out
    box.post(4, "yes")
    t.join(2)
    assert out == ["yes"]


def test_close_releases_every_waiter():
    box = TimestampedMailbox()
    errors = []

    def wait():
        try:
            box.pop_for_frame(1)
        except MailboxClosed:
            errors.append(1)

    threads = [threading.Thread(target=wait) for _ in range(6)]
    for t in threads:
        t.start()
    time.sleep(0.05)
    box.close()
    for t in threads:
        t.join(2)
    assert not any(t.is_alive() for t in threads)
    assert len(errors) == 6
    with pytest.raises(MailboxClosed):
        box.post(0, "late")


def test_items_left_after_close_are_still_delivered():
    box = TimestampedMailbox()
    box.post(0, "x")
    box.close()
    assert box.pop_any() == (0, "x")
    with pytest.raises(MailboxClosed):
        box.pop_any()


def test_wake_reevaluates_predicate():
    box = TimestampedMailbox()
    box.post(1, "next")
    current = [0]
    got = []
    t = threading.Thread(target=lambda: got.append(box.pop_where(lambda f: f <= current[0])))
    t.start()
    time.sleep(0.05)
    assert not got
    current[0] = 1
    box.wake()
    t.join(2)
    assert got == [(1, "next")]


class MailboxMachine(RuleBasedStateMachine):
    @initialize()
    def setup(self):
        self.box = TimestampedMailbox()
        self.model = MailboxModel()
        self.counter = 0

    @rule(frame=st.integers(-1, 4))
    def post(self, frame):
        self.counter += 1
        self.box.post(frame, self.counter)
        self.model.post(frame, self.counter)

    @rule(frame=st.integers(-1, 4))
    def pop_for_frame(self, frame):
        expected = self.model.pop_where(lambda f: f == frame)
        if expected is None:
            with pytest.raises(TimeoutError):
                self.box.pop_for_frame(frame, timeout=0)
        else:
            assert self.box.pop_for_frame(frame, timeout=0) == expected[1]

    @rule(bound=st.integers(-1, 4))
    def pop_upto(self, bound):
        expected = self.model.pop_where(lambda f: f <= bound)
        if expected is None:
            with pytest.raises(TimeoutError):
                self.box.pop_where(lambda f: f <= bound, timeout=0)
        else:
            assert self.box.pop_where(lambda f: f <= bound, timeout=0) == expected

    @invariant()
    def same_contents(self):
        assert len(self.box) == len(self.model.items)


TestMailboxModel = MailboxMachine.TestCase
TestMailboxModel.settings = settings(max_examples=200, stateful_step_count=40)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers()), max_size=40))
def test_per_frame_fifo(posts):
    box = TimestampedMailbox()
    for f, item in posts:
        box.post(f, item)
    for frame in range(4):
        expected = [item for f, item in posts if f == frame]
        got = []
        while True:
            try:
                got.append(box.pop_for_frame(frame, timeout=0))
            except TimeoutError:
                break
        assert got == expected


def stress(producers=4, consumers=6, per_producer=2500, frames=5, seed=0):
    """Producers post (frame, (producer, seq)); consumers pop with per-frame,
    predicate and unfiltered pops.  Returns what every consumer saw."""
    box = TimestampedMailbox()
    seen = [[] for _ in range(consumers)]

    def produce(p):
        rng = random.Random(seed * 1000 + p)
        for seq in range(per_producer):
            box.post(rng.randrange(frames), (p, seq))

    def consume(c):
        rng = random.Random(seed * 1000 + 100 + c)
        while True:
            kind = rng.randrange(3)
            try:
                if kind == 0:
                    f = rng.randrange(frames)
                    seen[c].append((f, box.pop_for_frame(f, timeout=0.01)))
                elif kind == 1:
                    lim = rng.randrange(frames)
                    seen[c].append(box.pop_where(lambda f: f <= lim, timeout=0.01))
                else:
                    seen[c].append(box.pop_any(timeout=0.01))
            except TimeoutError:
                continue
            except MailboxClosed:
                # a filtered pop only says its own frames are exhausted
                if kind == 2:
                    return

    prod = [threading.Thread(target=produce, args=(p,)) for p in range(producers)]
    cons = [threading.Thread(target=consume, args=(c,)) for c in range(consumers)]
    for t in prod + cons:
        t.start()
    for t in prod:
        t.join()
    box.close()
    for t in cons:
        t.join(30)
    hung = sum(t.is_alive() for t in cons)
    return seen, hung


def check_stress(seen, hung, producers, per_producer):
    assert hung == 0
    flat = [entry for s in seen for entry in s]
    items = [item for _, item in flat]
    assert len(items) == len(set(items)) == producers * per_producer
    # a consumer's view of one producer's items within one frame preserves send order
    for s in seen:
        last = {}
        for f, (p, seq) in s:
            assert seq > last.get((f, p), -1)
            last[(f, p)] = seq


def test_stress_exactly_once_and_fifo():
    seen, hung = stress(producers=4, consumers=6, per_producer=2500)
    check_stress(seen, hung, 4, 2500)
