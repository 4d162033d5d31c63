"""Offline utility benchmark for small instances.

The benchmark is the best stationary time-sharing policy: link ``i`` is
active for a fraction ``c_i`` of slots, where ``c`` lies in the convex
hull of independent-set indicators, and admits job rates ``f_mi`` with
``f_mi <= mean_mi`` and ``sum_m f_mi * s_m <= c_i``. Drops are zero at
the optimum because ``beta > U'(0)``.

The joint problem over hull weights and packet rates ``x = f * s`` is
smooth and is solved by SLSQP. The answer is then re-evaluated by
water-filling the found capacities and certified by weak duality against
the Lagrangian bound ``max_k lam . 1_{S_k} + sum_i phi_i(lam_i)``.
:func:`grid_optimum` is a brute-force alternative for cross-checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from ..model import ConflictGraph
from .dtmc import SizeGuardError, enumerate_independent_sets

MAX_LINKS = 6
MAX_TYPES = 2


@dataclass
class OfflineResult:
    value: float
    rates: list  # per link, per type: job rate f
    capacity: list  # per link active fraction
    gap: float  # dual bound minus value: certified upper bound on the error
    iterations: int


def water_fill(caps, c):
    """Packet rates ``x_m = min(cap_m, level)`` with ``sum x_m = min(c, sum cap)``."""
    caps = [max(float(v), 0.0) for v in caps]
    budget = min(max(c, 0.0), sum(caps))
    order = sorted(range(len(caps)), key=caps.__getitem__)
    x = [0.0] * len(caps)
    left = budget
    for pos, m in enumerate(order):
        share = left / (len(caps) - pos)
        x[m] = min(caps[m], share)
        left -= x[m]
    return x


def _link_value(utility, caps, c):
    x = water_fill(caps, c)
    value = sum(utility.value(v) for v in x)
    # marginal value of capacity: U' at the water level, 0 once every type is capped
    if c < sum(caps) - 1e-15:
        level = max(v for v, cap in zip(x, caps) if v < cap - 1e-15) if x else 0.0
        grad = utility.deriv(level)
    else:
        grad = 0.0
    return value, grad, x


def _phi(utility, caps, lam):
    """``max_{0 <= x <= cap} sum_m U(x_m) - lam * x_m``."""
    total = 0.0
    for cap in caps:
        x = cap if lam <= 0 else min(cap, max(0.0, utility.deriv_inv(lam)))
        total += utility.value(x) - lam * x
    return total


def dual_bound(utility, caps, A, lam) -> float:
    """Upper bound on the optimum for any multipliers ``lam >= 0``."""
    lam = np.maximum(np.asarray(lam, float), 0.0)
    return float((A @ lam).max() + sum(_phi(utility, c, l) for c, l in zip(caps, lam)))


def certify(utility, caps, A, c, slack: float = 1e-6) -> float:
    """Smallest dual bound over multipliers consistent with capacity ``c``.

    Unsaturated links take ``U'`` at their water level. For links whose
    capacity covers all arrivals the multiplier may be anything in
    ``[0, U'(max cap)]``; there ``phi`` is linear in it, so the best choice
    is a small linear program.
    """
    n = len(caps)
    lam = np.zeros(n)
    sat = []
    const = 0.0
    for i, (link_caps, ci) in enumerate(zip(caps, c)):
        total = sum(link_caps)
        if total - ci <= slack:
            sat.append(i)
            const += sum(utility.value(v) for v in link_caps)
        else:
            lam[i] = _link_value(utility, link_caps, ci)[1]
            const += _phi(utility, link_caps, lam[i])
    if not sat:
        return dual_bound(utility, caps, A, lam)
    # variables: lam_i for saturated links, then t >= every A_k . lam
    fixed = A @ lam
    k = len(sat)
    cost = np.concatenate([[-sum(caps[i]) for i in sat], [1.0]])
    A_ub = np.hstack([A[:, sat], -np.ones((A.shape[0], 1))])
    b_ub = -fixed
    bounds = [(0.0, utility.deriv(max(caps[i]))) for i in sat] + [(None, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"dual certificate LP failed: {res.message}")
    lam[sat] = res.x[:k]
    # re-evaluate the bound directly so the certificate does not trust the LP value
    return dual_bound(utility, caps, A, lam)


def _check_sizes(graph, job_types):
    if graph.link_count > MAX_LINKS:
        raise SizeGuardError(f"{graph.link_count} links exceeds the offline guard of {MAX_LINKS}")
    if any(len(row) > MAX_TYPES for row in job_types):
        raise SizeGuardError(f"more than {MAX_TYPES} job types per link")


def _packet_caps(job_types, arrival_means):
    """Per link, per type: maximum packet rate ``mean * s``."""
    caps = []
    for row, means in zip(job_types, arrival_means):
        caps.append([float(mean) * job.size for job, mean in zip(row, means)])
    return caps


def _evaluate(utility, caps, c):
    total = 0.0
    grads = []
    xs = []
    for i, link_caps in enumerate(caps):
        v, g, x = _link_value(utility, link_caps, c[i])
        total += v
        grads.append(g)
        xs.append(x)
    return total, np.array(grads), xs


def _result(utility, job_types, caps, c, gap, iterations):
    value, _, xs = _evaluate(utility, caps, c)
    rates = [[x / job.size for x, job in zip(xrow, row)] for xrow, row in zip(xs, job_types)]
    return OfflineResult(value, rates, [float(v) for v in c], gap, iterations)


def offline_optimum(graph: ConflictGraph, job_types, arrival_means, utility, beta=None,
                    tol: float = 1e-6) -> OfflineResult:
    """Best time-shared net utility.

    ``job_types`` is a per-link sequence of :class:`JobTypeSpec` rows and
    ``arrival_means`` the matching per-link, per-type mean arrivals per slot.
    ``beta`` is accepted for interface symmetry; with ``beta > U'(0)``
    dropping never pays, so it does not enter the value.

    Raises ``RuntimeError`` if the dual certificate exceeds ``tol``.
    """
    _check_sizes(graph, job_types)
    caps = _packet_caps(job_types, arrival_means)
    sets = enumerate_independent_sets(graph)
    n = graph.link_count
    A = np.zeros((len(sets), n))
    for k, chi in enumerate(sets):
        for i in chi:
            A[k, i] = 1.0
    K = len(sets)
    flat_caps = np.array([v for row in caps for v in row])
    owner = np.array([i for i, row in enumerate(caps) for _ in row])
    S = np.zeros((n, len(flat_caps)))
    S[owner, np.arange(len(flat_caps))] = 1.0

    def neg(v):
        x = v[K:]
        return -sum(utility.value(xi) for xi in x)

    def neg_grad(v):
        g = np.zeros_like(v)
        g[K:] = [-utility.deriv(xi) for xi in v[K:]]
        return g

    # start from the uniform mix of all independent sets with nothing admitted
    v0 = np.concatenate([np.full(K, 1.0 / K), np.zeros(len(flat_caps))])
    constraints = [
        {"type": "eq", "fun": lambda v: v[:K].sum() - 1.0, "jac": lambda v: np.r_[np.ones(K), np.zeros(len(v) - K)]},
        {"type": "ineq", "fun": lambda v: A.T @ v[:K] - S @ v[K:], "jac": lambda v: np.hstack([A.T, -S])},
    ]
    bounds = [(0.0, 1.0)] * K + [(0.0, float(c)) for c in flat_caps]
    res = minimize(neg, v0, jac=neg_grad, bounds=bounds, constraints=constraints, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 1000})
    weights = np.clip(res.x[:K], 0.0, None)
    weights /= weights.sum()
    c = weights @ A
    value = _evaluate(utility, caps, c)[0]
    gap = certify(utility, caps, A, c) - value
    if gap > tol:
        raise RuntimeError(f"offline optimum not certified: gap {gap:.3g} > {tol:g} ({res.message})")
    return _result(utility, job_types, caps, c, max(gap, 0.0), int(res.nit))


def grid_optimum(graph: ConflictGraph, job_types, arrival_means, utility, resolution: int = 40,
                 rounds: int = 6) -> float:
    """Brute-force value: grid over hull weights of maximal independent sets, refined around the best."""
    _check_sizes(graph, job_types)
    caps = _packet_caps(job_types, arrival_means)
    sets = enumerate_independent_sets(graph)
    maximal = [s for s in sets if not any(s < t for t in sets)]
    A = np.array([[1.0 if i in chi else 0.0 for i in range(graph.link_count)] for chi in maximal])
    k = len(maximal)
    if k == 1:
        return _evaluate(utility, caps, A[0])[0]
    center = np.full(k, 1.0 / k)
    radius = 1.0
    best_val = -np.inf
    for _ in range(rounds):
        axes = [np.linspace(max(0.0, center[j] - radius), min(1.0, center[j] + radius), resolution + 1)
                for j in range(k - 1)]
        for point in itertools.product(*axes):
            rest = 1.0 - sum(point)
            if rest < -1e-12:
                continue
            w = np.array(point + (max(rest, 0.0),))
            val = _evaluate(utility, caps, w @ A)[0]
            if val > best_val:
                best_val, center = val, w
        radius *= 4.0 / resolution
    return best_val
