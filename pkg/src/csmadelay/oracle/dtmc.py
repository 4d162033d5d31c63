"""Exact Markov-chain model of the link-scheduling dynamics under frozen weights.

States are collision-free activation sets. With the weights held fixed,
one super slot moves the schedule from ``chi`` to ``chi'`` with a
probability that sums, over every control schedule ``z`` covering the
symmetric difference, the contention probability of ``z`` times the
activation coin outcomes of the links in ``z``. The chain is reversible
with product-form stationary law ``pi(chi) ~ prod_{i in chi} p_i/(1-p_i)``.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..csma import activation_probability, resolve_control
from ..model import ConfigError, ConflictGraph

MAX_LINKS = 20
MAX_BACKOFF_VECTORS = 10**7


class OracleError(RuntimeError):
    pass


class SizeGuardError(OracleError, ConfigError):
    """Instance too large for exhaustive enumeration."""


def enumerate_independent_sets(graph: ConflictGraph) -> list[frozenset]:
    """All collision-free link sets, ordered by size then members."""
    n = graph.link_count
    if n > MAX_LINKS:
        raise SizeGuardError(f"{n} links exceeds the enumeration guard of {MAX_LINKS}")
    out = [frozenset()]

    def grow(current: frozenset, blocked: frozenset, start: int):
        for i in range(start, n):
            if i in blocked:
                continue
            nxt = current | {i}
            out.append(nxt)
            grow(nxt, blocked | graph.conflict_sets[i], i + 1)

    grow(frozenset(), frozenset(), 0)
    out.sort(key=lambda s: (len(s), sorted(s)))
    return out


def control_schedule_distribution(graph: ConflictGraph, W: int) -> dict[frozenset, Fraction]:
    """Exact law of the control schedule, by enumerating all backoff vectors."""
    n = graph.link_count
    total = W**n
    if total > MAX_BACKOFF_VECTORS:
        raise SizeGuardError(f"W^links = {total} exceeds the guard of {MAX_BACKOFF_VECTORS}")
    counts: dict[frozenset, int] = defaultdict(int)
    for backoffs in itertools.product(range(W), repeat=n):
        z = resolve_control(graph, backoffs)
        counts[frozenset(i for i, v in enumerate(z) if v)] += 1
    return {z: Fraction(c, total) for z, c in counts.items()}


def _neighbourhood(graph: ConflictGraph, links) -> frozenset:
    out = set()
    for i in links:
        out |= graph.conflict_sets[i]
    return frozenset(out)


def transition_probability(graph, chi: frozenset, chi2: frozenset, rho, p):
    """One entry of the transition matrix from the closed-form sum over ``z``."""
    union = chi | chi2
    if not graph.is_independent(union):
        return 0 * p[0]
    sym = chi ^ chi2
    leave = chi - chi2
    join = chi2 - chi
    keep = chi & chi2
    blocked = _neighbourhood(graph, union)
    total = 0 * p[0]
    for z, prob in rho.items():
        if not sym <= z:
            continue
        term = prob
        for i in leave:
            term *= 1 - p[i]
        for i in join:
            term *= p[i]
        for i in z & keep:
            term *= p[i]
        for i in z - union - blocked:
            term *= 1 - p[i]
        total += term
    return total


def transition_matrix(graph: ConflictGraph, states, rho, p, tol: float = 1e-12) -> np.ndarray:
    """Transition matrix over ``states``.

    Off-diagonal entries come from :func:`transition_probability`; the
    diagonal is set so each row sums to one and is cross-checked against
    the same closed form. With Fraction inputs the result is an exact
    object array.
    """
    exact = isinstance(p[0], Fraction)
    k = len(states)
    P = np.empty((k, k), dtype=object if exact else float)
    for a, chi in enumerate(states):
        row_sum = 0 * p[0]
        for b, chi2 in enumerate(states):
            if a == b:
                continue
            P[a, b] = transition_probability(graph, chi, chi2, rho, p)
            row_sum += P[a, b]
        P[a, a] = 1 - row_sum
        direct = transition_probability(graph, chi, chi, rho, p)
        if abs(P[a, a] - direct) > (0 if exact else tol):
            raise OracleError(f"row {sorted(chi)}: diagonal {P[a, a]} disagrees with closed form {direct}")
        if P[a, a] < 0:
            raise OracleError(f"row {sorted(chi)} has negative self-loop {P[a, a]}")
    return P


def transition_matrix_by_simulation_rules(graph: ConflictGraph, states, rho, p) -> np.ndarray:
    """Transition matrix by brute force over control schedules and coin outcomes.

    Independent of the closed form: for every ``z`` and every 0/1 outcome
    of the coins of links in ``z``, apply the scheduling-phase rules.
    """
    exact = isinstance(p[0], Fraction)
    index = {s: a for a, s in enumerate(states)}
    k = len(states)
    P = np.zeros((k, k), dtype=object if exact else float)
    if exact:
        P[:, :] = Fraction(0)
    for a, chi in enumerate(states):
        for z, prob in rho.items():
            zs = sorted(z)
            for coins in itertools.product((0, 1), repeat=len(zs)):
                weight = prob
                nxt = set(chi)
                for i, c in zip(zs, coins):
                    weight *= p[i] if c else 1 - p[i]
                    if graph.conflict_sets[i] & chi:
                        nxt.discard(i)
                    elif c:
                        nxt.add(i)
                    else:
                        nxt.discard(i)
                P[a, index[frozenset(nxt)]] += weight
    return P


def product_form(states, p) -> np.ndarray:
    """``pi(chi) = prod p_i/(1-p_i) / H`` over the given states."""
    exact = isinstance(p[0], Fraction)
    odds = [pi / (1 - pi) for pi in p]
    vals = []
    for chi in states:
        v = 1 if exact else 1.0
        for i in chi:
            v *= odds[i]
        vals.append(v)
    H = sum(vals)
    return np.array([v / H for v in vals], dtype=object if exact else float)


def product_form_from_weights(states, weights) -> np.ndarray:
    """Product form computed in log space: ``p/(1-p) == e^w``."""
    logs = np.array([sum(weights[i] for i in chi) for chi in states], dtype=float)
    logs -= logs.max()
    v = np.exp(logs)
    return v / v.sum()


@dataclass
class StationaryResult:
    pi: np.ndarray
    iterations: int
    converged: bool


def stationary_distribution(P: np.ndarray, tol: float = 1e-12, max_doublings: int = 200) -> StationaryResult:
    """Left fixed point of ``P`` by power iteration with repeated squaring.

    Starting from the uniform vector, step ``k`` applies ``P^(2^k)``, so
    slowly mixing chains still converge in a few dozen matrix products.
    """
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    pi = np.full(k, 1.0 / k)
    M = P.copy()
    for it in range(1, max_doublings + 1):
        nxt = pi @ M
        nxt /= nxt.sum()
        delta = np.abs(nxt - pi).sum()
        pi = nxt
        if delta < tol:
            # one plain step to confirm a fixed point of P itself
            if np.abs(pi @ P - pi).max() < tol:
                return StationaryResult(pi, it, True)
        M = M @ M
        M /= M.sum(axis=1, keepdims=True)
    raise OracleError(f"power iteration did not converge after {max_doublings} doublings")


def verify_detailed_balance(P, pi) -> float:
    """``max |pi_a P_ab - pi_b P_ba|``; exact with object arrays."""
    flow = pi[:, None] * P
    diff = flow - flow.T
    if diff.dtype == object:
        return max((abs(v) for v in diff.ravel()), default=0)
    return float(np.abs(diff).max())


def coverage_ok(graph: ConflictGraph, rho) -> bool:
    """Every link appears in some control schedule of positive probability."""
    covered = set()
    for z, prob in rho.items():
        if prob > 0:
            covered |= z
    return covered == set(range(graph.link_count))


@dataclass
class DtmcModel:
    graph: ConflictGraph
    W: int
    weights: tuple
    states: list
    rho: dict
    p: list
    P: np.ndarray
    pi: np.ndarray
    pi_product: np.ndarray
    H: float

    @classmethod
    def build(cls, graph: ConflictGraph, W: int, weights=None, probabilities=None) -> "DtmcModel":
        """Model for frozen link weights, or for explicit activation probabilities.

        Passing Fraction ``probabilities`` gives an exact model whose
        stationary vector is the product form itself.
        """
        states = enumerate_independent_sets(graph)
        rho = control_schedule_distribution(graph, W)
        if not coverage_ok(graph, rho):
            raise OracleError("some link never enters a control schedule; chain is reducible")
        exact = probabilities is not None and all(isinstance(v, Fraction) for v in probabilities)
        if probabilities is not None:
            p = list(probabilities)
        else:
            p = [activation_probability(w) for w in weights]
        P = transition_matrix(graph, states, rho if exact else {z: float(v) for z, v in rho.items()}, p)
        if exact:
            pi_product = product_form(states, p)
            pi = pi_product
        else:
            pi = stationary_distribution(P).pi
            pi_product = (product_form_from_weights(states, weights) if weights is not None
                          else product_form(states, p))
        odds = [v / (1 - v) for v in p]
        H = 0
        for chi in states:
            term = 1
            for i in chi:
                term *= odds[i]
            H += term
        return cls(graph, W, tuple(weights) if weights is not None else None, states, rho, p, P,
                   pi, pi_product, H)

    @property
    def max_deviation(self) -> float:
        return float(np.abs(np.asarray(self.pi, float) - np.asarray(self.pi_product, float)).max())

    @property
    def balance_residual(self) -> float:
        return float(verify_detailed_balance(self.P, self.pi))

    @property
    def max_row_error(self) -> float:
        return float(np.abs(np.asarray(self.P, float).sum(axis=1) - 1).max())


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def simulate_frozen_chain(graph: ConflictGraph, W: int, weights, steps: int, seed: int = 0,
                          burn_in: int = 1000, block: int = 65536) -> dict[frozenset, int]:
    """Run the scheduler's control and scheduling phases with frozen weights.

    Every step is a super slot of length one. Returns visit counts of each
    activation set after ``burn_in`` steps.
    """
    from ..csma import scheduling_phase

    rng = np.random.default_rng(seed)
    n = graph.link_count
    x = (0,) * n
    counts: dict[frozenset, int] = defaultdict(int)
    done = 0
    total = steps + burn_in
    while done < total:
        m = min(block, total - done)
        backoffs = (rng.random((m, n)) * W).astype(np.int64).tolist()
        coins = rng.random((m, n)).tolist()
        for b, u in zip(backoffs, coins):
            z = resolve_control(graph, b)
            x = scheduling_phase(graph, z, x, weights, uniforms=u, check=False)
            if done >= burn_in:
                counts[frozenset(i for i, v in enumerate(x) if v)] += 1
            done += 1
    return counts
