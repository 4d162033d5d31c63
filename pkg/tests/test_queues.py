import itertools
from fractions import Fraction

import pytest

from csmadelay.queues import JobStatus, LedgerError, LinkTypeQueues, update_Q, update_Y, update_Z


def test_update_Q_examples():
    assert update_Q(5, 1, 1, 1, 2) == 4
    assert update_Q(0, 0, 0, 0, 1) == 0
    assert update_Q(1, 1, 1, 0, 3) == 0


def test_update_Y_examples():
    assert update_Y(5, 2, 1, 1) == 4
    assert update_Y(0, 0, 0, 1) == 0
    assert update_Y(1, 3, Fraction(1, 2), 2) == 1


def test_update_Z_examples():
    assert update_Z(2, 3, 1, 0, 1, Fraction(1, 2)) == Fraction(3, 2)
    assert update_Z(2, 0, 0, 0, 1, Fraction(1, 2)) == 1
    assert update_Z(0, 0, 0, 0, 1, Fraction(1, 2)) == 0


def ids():
    return itertools.count()


def test_admit_records():
    q = LinkTypeQueues(0, 0, 3)
    jobs = q.admit(2, 4, ids())
    assert [j.packets_remaining for j in jobs] == [3, 3]
    assert all(j.status is JobStatus.WAITING for j in jobs)
    assert q.pending_packets == 6
    assert q.admit(0, 5, ids()) == []
    assert len(q.ledger) == 2


def test_admit_fifo_guard():
    q = LinkTypeQueues(0, 0, 1)
    gen = ids()
    q.admit(1, 7, gen)
    with pytest.raises(LedgerError):
        q.admit(1, 5, gen)


def test_serve_packet():
    q = LinkTypeQueues(0, 0, 2)
    q.admit(1, 0, ids())
    assert q.serve_packet(1) is None
    assert q.in_service.packets_remaining == 1
    done = q.serve_packet(2)
    assert done.status is JobStatus.DELIVERED and done.depart_slot == 2 and done.delay == 2
    assert q.in_service is None and not q.has_pending


def test_serve_empty_raises():
    with pytest.raises(LedgerError):
        LinkTypeQueues(0, 0, 1).serve_packet(0)


def test_drop_oldest_waiting():
    q = LinkTypeQueues(0, 0, 1)
    gen = ids()
    for t in range(3):
        q.admit(1, t, gen)
    dropped, packets = q.drop(2, 5)
    assert [j.admit_slot for j in dropped] == [0, 1] and packets == 2
    assert all(j.status is JobStatus.DROPPED and j.depart_slot == 5 for j in dropped)


def test_drop_budget_truncated():
    q = LinkTypeQueues(0, 0, 2)
    q.admit(1, 0, ids())
    dropped, packets = q.drop(5, 3)
    assert len(dropped) == 1 and packets == 2 and q.pending_packets == 0


def test_drop_spares_in_service_unless_last():
    q = LinkTypeQueues(0, 0, 3)
    q.admit(2, 0, ids())
    q.serve_packet(1)
    dropped, packets = q.drop(1, 2)
    assert len(dropped) == 1 and dropped[0].status is JobStatus.DROPPED and packets == 3
    assert q.in_service is not None  # head survived
    dropped, packets = q.drop(1, 3)
    assert dropped[0].packets_remaining == 2 and packets == 2
    assert not q.has_pending
