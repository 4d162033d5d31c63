"""Two-timescale CSMA link scheduling and per-slot job-type selection.

At the start of every super slot the links contend over ``W`` mini-slots
for a collision-free control schedule ``z``; links in ``z`` may flip their
activation state, all others keep it. Inside a super slot activations are
frozen and only the served job type is chosen slot by slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import groupby

import numpy as np

from .model import ConflictGraph


class ScheduleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControlSchedule:
    z: tuple[int, ...]
    backoffs: tuple[int, ...]


@dataclass(frozen=True)
class Schedule:
    x: tuple[int, ...]
    served_type: tuple  # type position per link, or None
    weights: tuple[float, ...]


def resolve_control(graph: ConflictGraph, backoffs) -> tuple[int, ...]:
    """Deterministic outcome of the INTENT contention for given backoffs.

    Mini-slots are processed in order. A link broadcasts at its mini-slot
    unless it already heard an INTENT from a conflicting link; it joins the
    control schedule if no conflicting link broadcast in the same
    mini-slot. Silenced links send nothing, so they cannot silence others.
    """
    n = graph.link_count
    z = [0] * n
    silenced = [False] * n
    order = sorted(range(n), key=backoffs.__getitem__)
    for _, group in groupby(order, key=backoffs.__getitem__):
        senders = [i for i in group if not silenced[i]]
        sending = set(senders)
        for i in senders:
            if not (graph.conflict_sets[i] & sending):
                z[i] = 1
        for i in senders:
            for j in graph.conflict_sets[i]:
                silenced[j] = True
    return tuple(z)


def control_phase(graph: ConflictGraph, W: int, rng: np.random.Generator) -> ControlSchedule:
    if W < 2:
        raise ScheduleError("W must be >= 2")
    # floor(U * W) is uniform on {0..W-1}; much cheaper than rng.integers here
    backoffs = tuple((rng.random(graph.link_count) * W).astype(np.int64).tolist())
    return ControlSchedule(resolve_control(graph, backoffs), backoffs)


def link_weight(queue_weights) -> float:
    """``max_m (Q + Z)`` over a link's job types; 0 with no types."""
    return max(queue_weights, default=0)


def activation_probability(w) -> float:
    """``e^w / (1 + e^w)`` without overflow."""
    if w >= 0:
        return 1.0 / (1.0 + math.exp(-w))
    e = math.exp(w)
    return e / (1.0 + e)


def scheduling_phase(graph: ConflictGraph, z, x_prev, weights, rng: np.random.Generator | None = None,
                     uniforms=None, check: bool = True) -> tuple[int, ...]:
    """New activation vector from the control schedule and last slot's state.

    Activation coins come from ``uniforms`` (one per link, indexed by link)
    or, if omitted, from ``rng.random(link_count)``.
    """
    if check and not (graph.is_independent(x_prev) and graph.is_independent(z)):
        raise ScheduleError("scheduling phase needs independent z and x_prev")
    if uniforms is None:
        uniforms = rng.random(graph.link_count)
    x = list(x_prev)
    conflict_sets = graph.conflict_sets
    for i, zi in enumerate(z):
        if not zi:
            continue
        if any(x_prev[j] for j in conflict_sets[i]):
            x[i] = 0
        else:
            x[i] = 1 if uniforms[i] < activation_probability(weights[i]) else 0
    return tuple(x)


def select_job_type(weights, pending, sizes, slot: int, super_start: int, T: int,
                    in_service=None):
    """Position of the job type to serve on an active link, or ``None``.

    An unfinished job is always continued. Otherwise, among types with a
    pending job that fits before the super slot ends, the largest
    ``Q + Z`` wins; ties go to the lowest position.
    """
    if in_service is not None:
        return in_service
    left = super_start + T - slot
    best = None
    best_w = None
    for m, w in enumerate(weights):
        if pending[m] and sizes[m] <= left and (best is None or w > best_w):
            best, best_w = m, w
    return best
