"""Real and virtual queues for one (link, job type) pair.

``Q`` counts packets, ``Y`` is the rate-control token queue and ``Z`` the
epsilon-persistence queue. The packet queue is mirrored by a FIFO ledger
of job records so that per-job delays can be audited.
"""

from __future__ import annotations

from collections import deque
from enum import Enum


class LedgerError(RuntimeError):
    pass


def update_Q(Q, mu, d, r, s):
    return max(Q - mu - d * s, 0) + r * s


def update_Y(Y, r, eta, s):
    return max(Y - r * s, 0) + eta * s


def update_Z(Z, Q_before, mu, d, s, eps):
    if Q_before > 0:
        return max(Z + eps - mu - d * s, 0)
    return max(Z - d * s - 1, 0)


class JobStatus(str, Enum):
    WAITING = "waiting"
    IN_SERVICE = "in_service"
    DELIVERED = "delivered"
    DROPPED = "dropped"


class JobRecord:
    __slots__ = ("job_id", "link", "type_id", "admit_slot", "packets_remaining", "status", "depart_slot")

    def __init__(self, job_id, link, type_id, admit_slot, size):
        self.job_id = job_id
        self.link = link
        self.type_id = type_id
        self.admit_slot = admit_slot
        self.packets_remaining = size
        self.status = JobStatus.WAITING
        self.depart_slot = None

    @property
    def delay(self):
        if self.depart_slot is None:
            return None
        return self.depart_slot - self.admit_slot

    def __repr__(self):
        return (f"JobRecord(id={self.job_id}, link={self.link}, type={self.type_id}, "
                f"admit={self.admit_slot}, left={self.packets_remaining}, {self.status.value}, "
                f"depart={self.depart_slot})")


class LinkTypeQueues:
    """Queues plus job ledger for one (link, type).

    The ledger only holds pending jobs (waiting or in service); finished
    jobs are handed back to the caller. The in-service job, if any, is
    always the ledger head because service is FIFO.
    """

    __slots__ = ("link", "type_id", "size", "Q", "Y", "Z", "ledger", "pending_packets")

    def __init__(self, link: int, type_id: int, size: int):
        self.link = link
        self.type_id = type_id
        self.size = size
        self.Q = 0
        self.Y = 0.0
        self.Z = 0.0
        self.ledger: deque[JobRecord] = deque()
        self.pending_packets = 0

    @property
    def in_service(self) -> JobRecord | None:
        if self.ledger and self.ledger[0].status is JobStatus.IN_SERVICE:
            return self.ledger[0]
        return None

    @property
    def has_pending(self) -> bool:
        return bool(self.ledger)

    def admit(self, count: int, slot: int, next_id) -> list[JobRecord]:
        """Append ``count`` fresh jobs; ``next_id`` yields job ids."""
        jobs = []
        for _ in range(count):
            job = JobRecord(next(next_id), self.link, self.type_id, slot, self.size)
            if self.ledger and self.ledger[-1].admit_slot > slot:
                raise LedgerError("admission out of FIFO order")
            self.ledger.append(job)
            jobs.append(job)
        self.pending_packets += count * self.size
        return jobs

    def serve_packet(self, slot: int) -> JobRecord | None:
        """Transmit one packet of the head job; return it if it completed."""
        if not self.ledger:
            raise LedgerError(f"link {self.link} type {self.type_id}: no job to serve at slot {slot}")
        job = self.ledger[0]
        job.status = JobStatus.IN_SERVICE
        job.packets_remaining -= 1
        self.pending_packets -= 1
        if job.packets_remaining == 0:
            job.status = JobStatus.DELIVERED
            job.depart_slot = slot
            self.ledger.popleft()
            return job
        return None

    def drop(self, d: int, slot: int) -> tuple[list[JobRecord], int]:
        """Drop up to ``d`` oldest waiting jobs.

        The in-service job is spared unless it is the only job left and
        budget remains. Returns the dropped jobs and their packet total.
        """
        if d <= 0 or not self.ledger:
            return [], 0
        head = self.ledger[0] if self.ledger[0].status is JobStatus.IN_SERVICE else None
        if head is not None:
            self.ledger.popleft()
        dropped = []
        while d > 0 and self.ledger:
            dropped.append(self.ledger.popleft())
            d -= 1
        if head is not None:
            if d > 0 and not self.ledger:
                dropped.append(head)
            else:
                self.ledger.appendleft(head)
        packets = 0
        for job in dropped:
            packets += job.packets_remaining
            job.status = JobStatus.DROPPED
            job.depart_slot = slot
        self.pending_packets -= packets
        return dropped, packets
