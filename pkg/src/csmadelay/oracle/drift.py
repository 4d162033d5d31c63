"""Per-slot check of the drift-plus-penalty inequality.

Given the queues before and after a slot and the slot's decisions, the
Lyapunov drift minus the weighted net-utility penalty must not exceed
``B + sum Z*eps - Phi1 - Phi2 - Phi3 - Phi4``. The inequality is
deterministic, so it has to hold on every slot of every run.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..model import SimConfig

TOLERANCE = 1e-9


@dataclass
class DriftTerms:
    slot: int
    L_t: float
    L_t1: float
    Delta: float
    penalty: float
    Phi1: float
    Phi2: float
    Phi3: float
    Phi4: float
    B_const: float
    Z_eps_sum: float
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def drift_constant(cfg: SimConfig) -> Fraction:
    """``B = 1/2 * sum[3 (A s)^2 + 2 (1 + d s)^2 + eps^2]`` over all pairs."""
    total = Fraction(0)
    for _, _, job in cfg.pairs():
        a = job.arrival_max * job.size
        total += 3 * a * a + 2 * (1 + job.drop_max * job.size) ** 2 + job.epsilon**2
    return total / 2


def lyapunov(Q, Y, Z) -> Fraction:
    return sum((Fraction(y) ** 2 + Fraction(q) ** 2 + Fraction(z) ** 2 for q, y, z in zip(Q, Y, Z)),
               Fraction(0)) / 2


def drift_check(before, after, decisions, cfg: SimConfig, tol: float = TOLERANCE) -> DriftTerms:
    """Evaluate both sides of the inequality for one slot.

    ``before`` and ``after`` are ``(Q, Y, Z)`` triples of per-pair
    sequences; ``decisions`` is anything with per-pair ``eta, r, mu, d``
    tuples and a ``slot`` (a :class:`~csmadelay.engine.TraceRecord` works).
    Arithmetic is exact on the given float values; utility values enter
    both sides identically.
    """
    Q, Y, Z = before
    jobs = [job for _, _, job in cfg.pairs()]
    V, beta = cfg.V, cfg.beta
    u = cfg.utility
    L0 = lyapunov(*before)
    L1 = lyapunov(*after)
    penalty = phi1 = phi2 = phi3 = phi4 = zeps = Fraction(0)
    for k, job in enumerate(jobs):
        s = job.size
        q, y, z = Fraction(Q[k]), Fraction(Y[k]), Fraction(Z[k])
        eta = Fraction(decisions.eta[k])
        r, mu, d = decisions.r[k], decisions.mu[k], decisions.d[k]
        util = Fraction(u.value(float(eta * s)))
        penalty += util - beta * d * s
        phi1 += V * util - y * eta * s
        phi2 += r * s * (y - q)
        phi3 += mu * (q + z)
        phi4 += d * s * (q + z - V * beta)
        zeps += z * job.epsilon
    B = drift_constant(cfg)
    delta = L1 - L0
    lhs = delta - V * penalty
    rhs = B + zeps - phi1 - phi2 - phi3 - phi4
    return DriftTerms(
        slot=decisions.slot, L_t=float(L0), L_t1=float(L1), Delta=float(delta), penalty=float(penalty),
        Phi1=float(phi1), Phi2=float(phi2), Phi3=float(phi3), Phi4=float(phi4), B_const=float(B),
        Z_eps_sum=float(zeps), lhs=float(lhs), rhs=float(rhs), holds=lhs <= rhs + Fraction(tol),
    )


def check_record(record, cfg: SimConfig, tol: float = TOLERANCE) -> DriftTerms:
    """Drift check for a TraceRecord carrying its own before/after queues."""
    return drift_check((record.Q, record.Y, record.Z), (record.Q_next, record.Y_next, record.Z_next),
                       record, cfg, tol)


def max_weight_phi3(record, cfg: SimConfig, independent_sets) -> float:
    """Largest achievable ``sum mu*(Q+Z)`` over collision-free schedules."""
    M = cfg.type_count
    best_link = [max(record.Q[i * M + m] + record.Z[i * M + m] for m in range(M)) for i in range(cfg.link_count)]
    return max(sum(best_link[i] for i in chi) for chi in independent_sets)


def phi3_ratio(record, cfg: SimConfig, independent_sets) -> float | None:
    """Achieved over best ``Phi3`` for one slot (None when the best is 0)."""
    best = max_weight_phi3(record, cfg, independent_sets)
    if best <= 0:
        return None
    got = sum(mu * (q + z) for mu, q, z in zip(record.mu, record.Q, record.Z))
    return got / best
