"""Slot-accurate simulation of the controller.

Each slot runs, in order: arrival sampling, rate control, CSMA link
scheduling with job-type selection and one packet of service per active
link, dropping, and the queue updates. All decisions read the
start-of-slot queue values.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .csma import control_phase, link_weight, scheduling_phase, select_job_type
from .dropper import drop_decision
from .model import SimConfig, derive_bounds
from .queues import JobRecord, JobStatus, LinkTypeQueues, update_Q, update_Y, update_Z
from .rate_control import admit, compute_eta

log = logging.getLogger(__name__)

ARRIVAL_BLOCK = 4096


class InvariantError(RuntimeError):
    """Internal consistency failure; indicates a bug, not bad input."""


@dataclass
class TraceRecord:
    """One slot. Per-pair tuples are indexed ``link * type_count + m``."""

    slot: int
    control: bool
    A: tuple
    r: tuple
    eta: tuple
    d: tuple
    mu: tuple
    Q: tuple
    Y: tuple
    Z: tuple
    Q_next: tuple
    Y_next: tuple
    Z_next: tuple
    z: tuple
    x: tuple
    w: tuple
    events: list = field(default_factory=list)  # (kind, JobRecord)


@dataclass
class PairStats:
    link: int
    type_id: int
    arrived: int = 0
    admitted: int = 0
    delivered: int = 0
    dropped: int = 0
    drop_decisions: int = 0
    eta_sum: float = 0.0
    max_delay: int = 0
    max_Q: int = 0
    max_Y: float = 0.0
    max_Z: float = 0.0


@dataclass
class MetricsSummary:
    horizon: int
    pairs: list
    net_utility: float
    decision_net_utility: float
    delivered_net_utility: float
    idle_active_slots: int
    delay_violations: list
    bound_violations: int
    bound_violation_examples: list
    collision_violations: int

    def pending(self) -> int:
        return sum(p.admitted - p.delivered - p.dropped for p in self.pairs)

    def to_dict(self) -> dict:
        h = self.horizon
        return {
            "horizon": h,
            "net_utility": self.net_utility,
            "decision_net_utility": self.decision_net_utility,
            "delivered_net_utility": self.delivered_net_utility,
            "idle_active_slots": self.idle_active_slots,
            "collision_violations": self.collision_violations,
            "bound_violations": self.bound_violations,
            "bound_violation_examples": self.bound_violation_examples,
            "delay_violation_count": len(self.delay_violations),
            "delay_violations": [_job_dict(j) for j in self.delay_violations[:100]],
            "pairs": [
                {
                    "link": p.link,
                    "type": p.type_id,
                    "arrived_jobs": p.arrived,
                    "admitted_jobs": p.admitted,
                    "delivered_jobs": p.delivered,
                    "dropped_jobs": p.dropped,
                    "pending_jobs": p.admitted - p.delivered - p.dropped,
                    "mean_admitted_rate": p.admitted / h if h else 0.0,
                    "mean_drop_rate": p.dropped / h if h else 0.0,
                    "mean_drop_decision": p.drop_decisions / h if h else 0.0,
                    "mean_eta": p.eta_sum / h if h else 0.0,
                    "max_delay": p.max_delay,
                    "max_Q": p.max_Q,
                    "max_Y": p.max_Y,
                    "max_Z": p.max_Z,
                }
                for p in self.pairs
            ],
        }


def _job_dict(job: JobRecord) -> dict:
    return {
        "job_id": job.job_id,
        "link": job.link,
        "type": job.type_id,
        "admit_slot": job.admit_slot,
        "depart_slot": job.depart_slot,
        "outcome": job.status.value,
    }


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for arrivals, contention and activation coins."""
    ss = np.random.SeedSequence(seed)
    names = ("arrivals", "control", "activation")
    return {name: np.random.default_rng(child) for name, child in zip(names, ss.spawn(len(names)))}


class Simulator:
    """Stateful runner for one configuration.

    Parameters
    ----------
    cfg : SimConfig
    check : bool
        Assert collision-freedom, packet conservation, FIFO and super-slot
        cleanliness every slot, and count queue-bound breaches.
    trace : bool
        Build a :class:`TraceRecord` per slot (needed for CSV output and
        drift checks; costs time and memory).
    on_job : callable, optional
        Called with every finished :class:`JobRecord`.
    """

    def __init__(self, cfg: SimConfig, *, check: bool = True, trace: bool = False, on_job=None):
        self.cfg = cfg
        self.check = check
        self.trace = trace
        self.on_job = on_job
        self.slot = 0
        self.n = cfg.link_count
        self.M = cfg.type_count
        self.queues = [LinkTypeQueues(i, job.type_id, job.size) for i, _, job in cfg.pairs()]
        self.x = (0,) * self.n
        self.streams = rng_streams(cfg.rng_seed)
        self._job_ids = itertools.count()

        self._V = float(cfg.V)
        self._beta = float(cfg.beta)
        self._jobs = [job for _, _, job in cfg.pairs()]
        self._sizes = [job.size for job in self._jobs]
        bounds = list(derive_bounds(cfg).values())
        # per-pair constants: size, arrival_max, drop_max, eps, Q_max, Y_max, Z_max
        self._const = [
            (job.size, job.arrival_max, job.drop_max, float(job.epsilon),
             float(b.Q_max), float(b.Y_max), float(b.Z_max))
            for job, b in zip(self._jobs, bounds)
        ]
        self._conflict_masks = [sum(1 << j for j in cs) for cs in cfg.graph.conflict_sets]
        self._arrival_gen = self._draw_arrivals()

        P = len(self.queues)
        self._arrived = [0] * P
        self._admitted = [0] * P
        self._drop_decisions = [0] * P
        self._eta_sum = [0.0] * P
        self._max_Q = [0] * P
        self._max_Y = [0.0] * P
        self._max_Z = [0.0] * P
        self._delivered = [0] * P
        self._dropped = [0] * P
        self._max_delay = [0] * P
        self.idle_active_slots = 0
        self.delay_violations: list[JobRecord] = []
        self.bound_violations = 0
        self.bound_violation_examples: list[dict] = []
        self.collision_violations = 0

    # -- arrivals ---------------------------------------------------------

    def _draw_arrivals(self):
        rng = self.streams["arrivals"]
        amax = np.array([job.arrival_max for job in self._jobs])
        law = self.cfg.arrival_law
        while True:
            if law.name == "uniform":
                block = rng.integers(0, amax + 1, size=(ARRIVAL_BLOCK, len(amax)))
            else:
                block = (rng.random((ARRIVAL_BLOCK, len(amax))) < law.prob) * amax
            yield from block.tolist()

    # -- one slot ---------------------------------------------------------

    def _finish(self, job: JobRecord, k: int):
        delay = job.depart_slot - job.admit_slot
        if job.status is JobStatus.DELIVERED:
            self._delivered[k] += 1
        else:
            self._dropped[k] += 1
        if delay > self._max_delay[k]:
            self._max_delay[k] = delay
        if delay > self._jobs[k].deadline:
            self.delay_violations.append(job)
        if self.check and delay < 1:
            raise InvariantError(f"job {job.job_id} departed in its admission slot")
        if self.on_job is not None:
            self.on_job(job)

    def _weights(self, Q0, Z0):
        M = self.M
        return [link_weight([Q0[i * M + m] + Z0[i * M + m] for m in range(M)]) for i in range(self.n)]

    def step(self) -> TraceRecord | None:
        """Advance one slot; returns its record when tracing."""
        cfg = self.cfg
        t = self.slot
        M = self.M
        queues = self.queues
        V = self._V
        beta = self._beta
        utility = cfg.utility
        P = len(queues)
        A = next(self._arrival_gen)

        Q0 = [q.Q for q in queues]
        Y0 = [q.Y for q in queues]
        Z0 = [q.Z for q in queues]

        # rate control and drop decisions use start-of-slot values
        eta = [0.0] * P
        r = [0] * P
        d = [0] * P
        for k, c in enumerate(self._const):
            eta[k] = compute_eta(Y0[k], V, c[0], c[1], utility)
            r[k] = admit(Y0[k], Q0[k], A[k])
            d[k] = drop_decision(Q0[k], Z0[k], V, beta, c[2])

        # link scheduling: contention only at super-slot starts
        control = t % cfg.T == 0
        z = None
        w = None
        if control:
            if self.check and any(q.in_service is not None for q in queues):
                raise InvariantError(f"unfinished job at super-slot start {t}")
            w = self._weights(Q0, Z0)
            z = control_phase(cfg.graph, cfg.W, self.streams["control"]).z
            self.x = scheduling_phase(cfg.graph, z, self.x, w, self.streams["activation"], check=False)
        x = self.x
        if self.check:
            mask = 0
            for i, xi in enumerate(x):
                if xi:
                    mask |= 1 << i
            masks = self._conflict_masks
            for i, xi in enumerate(x):
                if xi and mask & masks[i]:
                    self.collision_violations += 1
                    raise InvariantError(f"collision at slot {t}: x={x}")

        events = [] if self.trace else None
        mu = [0] * P
        super_start = t - t % cfg.T
        for i, xi in enumerate(x):
            if not xi:
                continue
            base = i * M
            if M == 1:
                q = queues[base]
                m = 0 if q.ledger else None
                if m is not None and q.ledger[0].status is not JobStatus.IN_SERVICE:
                    m = select_job_type((Q0[base] + Z0[base],), (True,), (q.size,), t, super_start, cfg.T)
            else:
                in_service = None
                for mm in range(M):
                    if queues[base + mm].in_service is not None:
                        in_service = mm
                        break
                m = select_job_type(
                    [Q0[base + mm] + Z0[base + mm] for mm in range(M)],
                    [queues[base + mm].has_pending for mm in range(M)],
                    self._sizes[base:base + M], t, super_start, cfg.T, in_service,
                )
            if m is None:
                self.idle_active_slots += 1
                continue
            k = base + m
            mu[k] = 1
            done = queues[k].serve_packet(t)
            if done is not None:
                self._finish(done, k)
                if events is not None:
                    events.append(("deliver", done))

        # dropping, then queue updates and admissions
        check = self.check
        for k, q in enumerate(queues):
            s, _, _, eps, qm, ym, zm = self._const[k]
            dk = d[k]
            rk = r[k]
            if dk:
                dropped, _ = q.drop(dk, t)
                for job in dropped:
                    self._finish(job, k)
                    if events is not None:
                        events.append(("drop", job))
            q0 = Q0[k]
            q.Q = Qn = update_Q(q0, mu[k], dk, rk, s)
            q.Y = Yn = update_Y(Y0[k], rk, eta[k], s)
            q.Z = Zn = update_Z(Z0[k], q0, mu[k], dk, s, eps)
            if rk:
                admitted = q.admit(rk, t, self._job_ids)
                if events is not None:
                    events.extend(("admit", job) for job in admitted)
            self._arrived[k] += A[k]
            self._admitted[k] += rk
            self._drop_decisions[k] += dk
            self._eta_sum[k] += eta[k]
            if Qn > self._max_Q[k]:
                self._max_Q[k] = Qn
            if Yn > self._max_Y[k]:
                self._max_Y[k] = Yn
            if Zn > self._max_Z[k]:
                self._max_Z[k] = Zn
            if check:
                if Qn != q.pending_packets:
                    raise InvariantError(
                        f"slot {t} pair {k}: Q={Qn} but ledger holds {q.pending_packets} packets")
                if Qn > qm or Yn > ym or Zn > zm:
                    self._record_bound_violation(t + 1, q, qm, ym, zm)

        self.slot = t + 1
        if not self.trace:
            return None
        if w is None:
            w = self._weights(Q0, Z0)
        return TraceRecord(
            slot=t, control=control, A=tuple(A), r=tuple(r), eta=tuple(eta), d=tuple(d), mu=tuple(mu),
            Q=tuple(Q0), Y=tuple(Y0), Z=tuple(Z0),
            Q_next=tuple(q.Q for q in queues), Y_next=tuple(q.Y for q in queues),
            Z_next=tuple(q.Z for q in queues),
            z=tuple(z) if z is not None else (0,) * self.n, x=tuple(x), w=tuple(w), events=events,
        )

    def _record_bound_violation(self, slot, q, qm, ym, zm):
        self.bound_violations += 1
        if len(self.bound_violation_examples) < 20:
            self.bound_violation_examples.append(
                {"slot": slot, "link": q.link, "type": q.type_id,
                 "Q": q.Q, "Y": q.Y, "Z": q.Z, "Q_max": qm, "Y_max": ym, "Z_max": zm})

    def run(self, slots: int | None = None, sink=None) -> MetricsSummary:
        """Advance ``slots`` slots (default: the configured horizon)."""
        slots = self.cfg.horizon if slots is None else slots
        for _ in range(slots):
            rec = self.step()
            if sink is not None and rec is not None:
                sink(rec)
        return self.summary()

    def pending_jobs(self) -> list[JobRecord]:
        return [job for q in self.queues for job in q.ledger]

    def summary(self) -> MetricsSummary:
        h = self.slot
        u = self.cfg.utility
        beta = self._beta
        pairs = []
        net = dec = dlv = 0.0
        for k, q in enumerate(self.queues):
            s = q.size
            pairs.append(PairStats(
                q.link, q.type_id, self._arrived[k], self._admitted[k], self._delivered[k],
                self._dropped[k], self._drop_decisions[k], self._eta_sum[k], self._max_delay[k],
                self._max_Q[k], self._max_Y[k], self._max_Z[k]))
            if h:
                adm = u.value(self._admitted[k] / h * s)
                net += adm - beta * self._dropped[k] / h * s
                dec += adm - beta * self._drop_decisions[k] / h * s
                dlv += u.value(self._delivered[k] / h * s) - beta * self._dropped[k] / h * s
        return MetricsSummary(
            horizon=h, pairs=pairs, net_utility=net, decision_net_utility=dec,
            delivered_net_utility=dlv, idle_active_slots=self.idle_active_slots,
            delay_violations=list(self.delay_violations), bound_violations=self.bound_violations,
            bound_violation_examples=list(self.bound_violation_examples),
            collision_violations=self.collision_violations,
        )


def run(cfg: SimConfig, *, sink=None, check: bool = True, on_job=None) -> MetricsSummary:
    """Run ``cfg.horizon`` slots; ``sink`` receives every TraceRecord."""
    sim = Simulator(cfg, check=check, trace=sink is not None, on_job=on_job)
    return sim.run(sink=sink)


def audit_delays(jobs, cfg: SimConfig) -> list[JobRecord]:
    """Finished jobs whose sojourn exceeds their type's deadline.

    ``jobs`` is any iterable of :class:`JobRecord` (e.g. collected through
    ``on_job`` or the events of a trace).
    """
    deadline = {(i, job.type_id): job.deadline for i, _, job in cfg.pairs()}
    return [
        j for j in jobs
        if j.depart_slot is not None and j.depart_slot - j.admit_slot > deadline[(j.link, j.type_id)]
    ]


def jobs_from_trace(records) -> list[JobRecord]:
    """Finished jobs appearing in trace events."""
    return [job for rec in records for kind, job in rec.events if kind in ("deliver", "drop")]


def exact_replay(records, cfg: SimConfig) -> bool:
    """Re-derive Q, Y, Z from a trace's decisions in exact rational arithmetic.

    Returns True when every float in the trace matches the exact value to
    within 1e-9 (Q must match exactly). This is the periodic cross-check of
    the float hot loop.
    """
    jobs = [job for _, _, job in cfg.pairs()]
    Q = [0] * len(jobs)
    Y = [Fraction(0)] * len(jobs)
    Z = [Fraction(0)] * len(jobs)
    first = True
    for rec in records:
        if first:
            Q = list(rec.Q)
            Y = [Fraction(v) for v in rec.Y]
            Z = [Fraction(v) for v in rec.Z]
            first = False
        for k, job in enumerate(jobs):
            if Q[k] != rec.Q[k] or abs(float(Y[k]) - rec.Y[k]) > 1e-9 or abs(float(Z[k]) - rec.Z[k]) > 1e-9:
                return False
            s = job.size
            q0 = Q[k]
            Q[k] = update_Q(q0, rec.mu[k], rec.d[k], rec.r[k], s)
            Y[k] = update_Y(Y[k], rec.r[k], Fraction(rec.eta[k]), s)
            Z[k] = update_Z(Z[k], q0, rec.mu[k], rec.d[k], s, job.epsilon)
    return True
