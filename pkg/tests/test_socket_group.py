import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from dw2.mailbox import MailboxClosed
from dw2.protocol import AckStatus, NextFrameToken, Role
from dw2.socket_group import GroupClosed, HandshakeError, accept_group, connect_group, listen
from harness import TOKEN, check_socket_group_stress, form_groups, socket_group_stress, stamped_tile


def drain(box, n, timeout=5.0):
    out = []
    deadline = time.monotonic() + timeout
    while len(out) < n:
        _, rcv = box.pop_any(timeout=max(0.01, deadline - time.monotonic()))
        if rcv.message is not None:
            out.append(rcv)
    return out


def test_single_peer_group():
    server, (client,) = form_groups(1)
    assert server.ready and client.ready
    assert set(server.members) == {0}
    client.send_to(0, NextFrameToken(1))
    (rcv,) = drain(server.incoming, 1)
    assert rcv.member == 0 and rcv.message == NextFrameToken(1)
    client.close()
    server.close()


def test_connect_to_many_endpoints():
    token = 42
    listeners = [listen("127.0.0.1", 0) for _ in range(4)]
    with ThreadPoolExecutor(4) as pool:
        futures = [pool.submit(accept_group, ls, token, 1, timeout=5) for ls in listeners]
        client = connect_group([("127.0.0.1", ls.getsockname()[1]) for ls in listeners], token, 0, 1)
        servers = [f.result() for f in futures]
    for i in range(4):
        client.send_to(i, NextFrameToken(i))
    for i, srv in enumerate(servers):
        (rcv,) = drain(srv.incoming, 1)
        assert rcv.message == NextFrameToken(i)
    client.close()
    for srv in servers:
        srv.close()
    for ls in listeners:
        ls.close()


def test_fifo_over_one_connection():
    server, (client,) = form_groups(1)
    for seq in range(100):
        client.send_to(0, stamped_tile(0, seq, 1))
    got = drain(server.incoming, 100)
    assert [r.message.header.y for r in got] == list(range(100))
    client.close()
    server.close()


def test_broadcast_and_no_cross_talk():
    server, clients = form_groups(3)
    server.broadcast(NextFrameToken(7))
    for rank in range(3):
        server.send_to(rank, NextFrameToken(100 + rank))
    for rank, c in enumerate(clients):
        got = [r.message for r in drain(c.incoming, 2)]
        assert got == [NextFrameToken(7), NextFrameToken(100 + rank)]
        with pytest.raises(TimeoutError):
            c.incoming.pop_any(timeout=0.05)
    for c in clients:
        c.close()
    server.close()


def test_wrong_token_is_rejected():
    lsock = listen("127.0.0.1", 0)
    port = lsock.getsockname()[1]
    stop = threading.Event()
    with ThreadPoolExecutor(1) as pool:
        fut = pool.submit(accept_group, lsock, TOKEN, 1, timeout=5, stop=stop)
        with pytest.raises(HandshakeError) as info:
            connect_group([("127.0.0.1", port)], TOKEN + 1, 0, 1, timeout=2)
        assert info.value.status == AckStatus.BAD_TOKEN
        stop.set()
        with pytest.raises(GroupClosed):
            fut.result()
    lsock.close()


def test_duplicate_rank_and_count_mismatch():
    lsock = listen("127.0.0.1", 0)
    port = lsock.getsockname()[1]
    with ThreadPoolExecutor(1) as pool:
        fut = pool.submit(accept_group, lsock, TOKEN, 2, timeout=5)
        first = connect_group([("127.0.0.1", port)], TOKEN, 0, 2)
        with pytest.raises(HandshakeError) as dup:
            connect_group([("127.0.0.1", port)], TOKEN, 0, 2)
        assert dup.value.status == AckStatus.DUPLICATE_RANK
        with pytest.raises(HandshakeError) as mismatch:
            connect_group([("127.0.0.1", port)], TOKEN, 1, 3)
        assert mismatch.value.status == AckStatus.PEER_COUNT_MISMATCH
        second = connect_group([("127.0.0.1", port)], TOKEN, 1, 2)
        server = fut.result()
    assert set(server.members) == {0, 1}
    for g in (first, second, server):
        g.close()
    lsock.close()


def test_role_restriction():
    lsock = listen("127.0.0.1", 0)
    port = lsock.getsockname()[1]
    with ThreadPoolExecutor(1) as pool:
        fut = pool.submit(accept_group, lsock, TOKEN, 1, timeout=5, role=Role.DISPATCHER)
        with pytest.raises(HandshakeError):
            connect_group([("127.0.0.1", port)], TOKEN, 0, 1, role=Role.CLIENT)
        ok = connect_group([("127.0.0.1", port)], TOKEN, 0, 1, role=Role.DISPATCHER)
        server = fut.result()
    ok.close()
    server.close()
    lsock.close()


def test_teardown_closes_mailbox_and_workers():
    server, clients = form_groups(2)
    waiter_done = threading.Event()

    def wait_forever():
        try:
            while True:
                server.incoming.pop_for_frame(99)
        except MailboxClosed:
            waiter_done.set()

    threading.Thread(target=wait_forever, daemon=True).start()
    for c in clients:
        c.close()
    assert waiter_done.wait(5)
    server.close()
    conns = [c for g in (server, *clients) for c in g.members.values()]
    deadline = time.monotonic() + 5
    while any(c.alive for c in conns) and time.monotonic() < deadline:
        time.sleep(0.01)
    assert not any(c.alive for c in conns)
    assert server.incoming.closed and all(c.incoming.closed for c in clients)


def test_send_after_peer_vanished_fails():
    server, (client,) = form_groups(1)
    server.close()
    deadline = time.monotonic() + 5
    with pytest.raises(Exception):
        while time.monotonic() < deadline:
            client.send_to(0, stamped_tile(0, 0, 1))
            time.sleep(0.01)
    client.close()


def test_stress_small():
    report = socket_group_stress(peers=2, consumers=2, per_peer=500)
    assert check_socket_group_stress(report) == []
