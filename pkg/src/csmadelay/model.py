"""Network model: conflict graph, job types, simulation configuration.

Also derives the analytic constants the controller depends on: the
per-(link, type) queue bounds and the persistence constant ``epsilon``
that yields a worst-case delay of ``deadline`` slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .utility import LogUtility, is_registered


class GraphError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# conflict graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConflictGraph:
    """Links ``0..n-1`` and their symmetric interference sets."""

    conflict_sets: tuple[frozenset, ...]

    def __post_init__(self):
        n = len(self.conflict_sets)
        if n < 1:
            raise GraphError("a conflict graph needs at least one link")
        for i, cs in enumerate(self.conflict_sets):
            for j in cs:
                if not (isinstance(j, int) and 0 <= j < n):
                    raise GraphError(f"link {i}: conflict index {j!r} out of range 0..{n - 1}")
                if j == i:
                    raise GraphError(f"link {i} conflicts with itself")
                if i not in self.conflict_sets[j]:
                    raise GraphError(f"asymmetric conflict: {j} in C_{i} but {i} not in C_{j}")

    @property
    def link_count(self) -> int:
        return len(self.conflict_sets)

    def __len__(self):
        return len(self.conflict_sets)

    def neighbors(self, i: int) -> frozenset:
        return self.conflict_sets[i]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, cs in enumerate(self.conflict_sets) for j in sorted(cs) if i < j]

    def is_independent(self, active) -> bool:
        """True if no two links in ``active`` conflict.

        ``active`` is either a 0/1 vector over all links or an iterable of
        link ids.
        """
        links = _as_link_set(active, self.link_count)
        return all(not (self.conflict_sets[i] & links) for i in links)

    def to_lists(self) -> list[list[int]]:
        return [sorted(cs) for cs in self.conflict_sets]


def _as_link_set(active, n) -> frozenset:
    if isinstance(active, (set, frozenset)):
        return frozenset(active)
    seq = list(active)
    if len(seq) == n and all(v in (0, 1, True, False) for v in seq):
        return frozenset(i for i, v in enumerate(seq) if v)
    return frozenset(seq)


def build_graph(conflicts: Sequence[Iterable[int]], symmetrize: bool = False) -> ConflictGraph:
    """Build a graph from per-link conflict lists (0-based link ids).

    With ``symmetrize`` every listed conflict is mirrored; otherwise an
    asymmetric listing raises :class:`GraphError`.
    """
    sets = [set() for _ in conflicts]
    n = len(sets)
    for i, cs in enumerate(conflicts):
        for j in cs:
            if not isinstance(j, int) or isinstance(j, bool) or not 0 <= j < n:
                raise GraphError(f"link {i}: conflict index {j!r} out of range 0..{n - 1}")
            if j == i:
                raise GraphError(f"link {i} conflicts with itself")
            sets[i].add(j)
            if symmetrize:
                sets[j].add(i)
    return ConflictGraph(tuple(frozenset(s) for s in sets))


def graph_from_edges(link_count: int, edges: Iterable[tuple[int, int]]) -> ConflictGraph:
    lists = [[] for _ in range(link_count)]
    for a, b in edges:
        lists[a].append(b)
    return build_graph(lists, symmetrize=True)


def path_graph(n: int) -> ConflictGraph:
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> ConflictGraph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 links")
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> ConflictGraph:
    return graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def grid_graph(rows: int, cols: int) -> ConflictGraph:
    """Links on a ``rows x cols`` lattice conflicting with their 4-neighbours."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    return graph_from_edges(rows * cols, edges)


def isolated_graph(n: int) -> ConflictGraph:
    return ConflictGraph(tuple(frozenset() for _ in range(n)))


GENERATORS = {
    "path": path_graph,
    "cycle": cycle_graph,
    "complete": complete_graph,
    "isolated": isolated_graph,
}


# --------------------------------------------------------------------------
# job types and derived constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JobTypeSpec:
    type_id: int
    size: int
    deadline: int
    arrival_max: int
    drop_max: int
    epsilon: Fraction

    def __post_init__(self):
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        if self.size < 1:
            raise ConfigError(f"job type {self.type_id}: size must be >= 1")
        if self.deadline < 1:
            raise ConfigError(f"job type {self.type_id}: deadline must be >= 1")
        if self.arrival_max < 0:
            raise ConfigError(f"job type {self.type_id}: arrival_max must be >= 0")
        if self.epsilon <= 0:
            raise ConfigError(f"job type {self.type_id}: epsilon must be positive")
        if self.drop_max < max(self.arrival_max, self.epsilon / self.size):
            raise ConfigError(
                f"job type {self.type_id}: drop_max={self.drop_max} must be >= "
                f"max(arrival_max, epsilon/size) = {float(max(self.arrival_max, self.epsilon / self.size)):.6g}"
            )


@dataclass(frozen=True)
class QueueBounds:
    Q_max: Fraction
    Y_max: Fraction
    Z_max: Fraction


def lemma_bounds(V, uprime0, arrival_max, size, beta, epsilon) -> QueueBounds:
    """Queue-length bounds for one (link, type), in exact arithmetic."""
    V, u0, beta, eps = (Fraction(v) for v in (V, uprime0, beta, epsilon))
    token = V * u0
    return QueueBounds(
        Q_max=token + 2 * arrival_max * size,
        Y_max=token + arrival_max * size,
        Z_max=V * beta / size + eps,
    )


def epsilon_fixed_point(q_max, v_beta_over_s, deadline) -> Fraction:
    """Positive solution of ``eps * D = Q_max + V*beta/s + eps``."""
    if deadline <= 1:
        raise ConfigError(f"deadline must be >= 2 to derive epsilon (got {deadline})")
    eps = (Fraction(q_max) + Fraction(v_beta_over_s)) / (deadline - 1)
    if eps <= 0:
        raise ConfigError("derived epsilon is not positive")
    return eps


def resolve_job_type(
    type_id: int,
    size: int,
    deadline: int,
    arrival_max: int,
    *,
    V,
    beta,
    utility,
    drop_max: int | None = None,
    epsilon=None,
) -> JobTypeSpec:
    """Build a job type, deriving ``epsilon`` and ``drop_max`` when omitted.

    A derived ``drop_max`` is the smallest integer meeting the queue-bound
    precondition ``drop_max >= max(arrival_max, epsilon / size)``.
    """
    if epsilon is None:
        q_max = Fraction(V) * Fraction(utility.deriv_at_zero) + 2 * arrival_max * size
        epsilon = epsilon_fixed_point(q_max, Fraction(V) * Fraction(beta) / size, deadline)
    epsilon = Fraction(epsilon)
    if drop_max is None:
        drop_max = max(arrival_max, math.ceil(epsilon / size), 1)
    return JobTypeSpec(type_id, size, deadline, arrival_max, drop_max, epsilon)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


ARRIVAL_LAWS = ("uniform", "bernoulli")


@dataclass(frozen=True)
class ArrivalLaw:
    """Per-slot job arrivals for one (link, type).

    ``uniform``: integer uniform on ``{0..arrival_max}``.
    ``bernoulli``: a batch of ``arrival_max`` jobs with probability ``prob``.
    """

    name: str = "uniform"
    prob: float = 0.5

    def __post_init__(self):
        if self.name not in ARRIVAL_LAWS:
            raise ConfigError(f"unknown arrival law {self.name!r}; known: {list(ARRIVAL_LAWS)}")
        if not 0 <= self.prob <= 1:
            raise ConfigError("arrival_law.prob must lie in [0, 1]")

    def mean(self, arrival_max: int) -> float:
        if self.name == "uniform":
            return arrival_max / 2
        return self.prob * arrival_max


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to run one simulation instance.

    ``job_types`` may be a flat sequence (shared by every link) or one
    sequence per link; it is normalised to the per-link form. Type ids
    must agree across links.
    """

    graph: ConflictGraph
    job_types: tuple
    V: Fraction
    beta: Fraction
    T: int
    W: int
    utility: object = field(default_factory=LogUtility)
    horizon: int = 0
    rng_seed: int = 0
    arrival_law: ArrivalLaw = field(default_factory=ArrivalLaw)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("V", Fraction(self.V))
        set_("beta", Fraction(self.beta))
        jt = tuple(self.job_types)
        if not jt:
            raise ConfigError("job_types is empty")
        if isinstance(jt[0], JobTypeSpec):
            jt = tuple(jt for _ in range(self.graph.link_count))
        else:
            jt = tuple(tuple(row) for row in jt)
        set_("job_types", jt)
        self._validate()

    def _validate(self):
        n = self.graph.link_count
        if len(self.job_types) != n:
            raise ConfigError(f"job_types has {len(self.job_types)} rows for {n} links")
        ids = [j.type_id for j in self.job_types[0]]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate job type ids {ids}")
        for i, row in enumerate(self.job_types):
            if [j.type_id for j in row] != ids:
                raise ConfigError(f"link {i}: job type ids {[j.type_id for j in row]} differ from {ids}")
        if self.V <= 0:
            raise ConfigError("V must be positive")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not is_registered(self.utility):
            raise ConfigError(f"unregistered utility {self.utility!r}")
        if not self.beta > Fraction(self.utility.deriv_at_zero):
            raise ConfigError(f"beta={self.beta} must exceed U'(0)={self.utility.deriv_at_zero}")
        if self.T < self.max_size:
            raise ConfigError(f"T={self.T} must be >= the largest job size {self.max_size}")
        if self.W < 2:
            raise ConfigError("W must be >= 2")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")

    @property
    def link_count(self) -> int:
        return self.graph.link_count

    @property
    def type_count(self) -> int:
        return len(self.job_types[0])

    @property
    def type_ids(self) -> list[int]:
        return [j.type_id for j in self.job_types[0]]

    @property
    def max_size(self) -> int:
        return max(j.size for row in self.job_types for j in row)

    def job(self, link: int, m: int) -> JobTypeSpec:
        """Job type at position ``m`` (not type id) for ``link``."""
        return self.job_types[link][m]

    def pairs(self):
        for i, row in enumerate(self.job_types):
            for m, job in enumerate(row):
                yield i, m, job

    def replace(self, **changes) -> "SimConfig":
        from dataclasses import replace

        return replace(self, **changes)


def derive_bounds(cfg: SimConfig) -> dict[tuple[int, int], QueueBounds]:
    """Queue bounds keyed by ``(link, type position)``."""
    u0 = Fraction(cfg.utility.deriv_at_zero)
    return {
        (i, m): lemma_bounds(cfg.V, u0, job.arrival_max, job.size, cfg.beta, job.epsilon)
        for i, m, job in cfg.pairs()
    }


def derive_epsilon(cfg: SimConfig, link: int, m: int) -> Fraction:
    """Persistence constant giving worst-case delay ``deadline`` for one pair."""
    job = cfg.job(link, m)
    q_max = cfg.V * Fraction(cfg.utility.deriv_at_zero) + 2 * job.arrival_max * job.size
    return epsilon_fixed_point(q_max, cfg.V * cfg.beta / job.size, job.deadline)


def with_derived_epsilon(cfg: SimConfig, scale=1, drop_max: int | None = None) -> SimConfig:
    """Copy of ``cfg`` whose epsilons are ``scale * derive_epsilon``.

    ``drop_max`` is raised where needed to keep the queue-bound
    precondition; pass ``drop_max`` to force a value instead.
    """
    rows = []
    for i, row in enumerate(cfg.job_types):
        new = []
        for m, job in enumerate(row):
            eps = derive_epsilon(cfg, i, m) * Fraction(scale)
            dm = drop_max if drop_max is not None else max(job.drop_max, job.arrival_max, math.ceil(eps / job.size))
            new.append(JobTypeSpec(job.type_id, job.size, job.deadline, job.arrival_max, dm, eps))
        rows.append(tuple(new))
    return cfg.replace(job_types=tuple(rows))


def override_job_types(base: Sequence[JobTypeSpec], n_links: int,
                       overrides: Mapping[tuple[int, int], JobTypeSpec]) -> tuple:
    """Per-link table from a shared list plus ``{(link, type_id): spec}``."""
    pos = {j.type_id: m for m, j in enumerate(base)}
    table = [list(base) for _ in range(n_links)]
    for (link, tid), spec in overrides.items():
        if tid not in pos:
            raise ConfigError(f"override for unknown job type {tid}")
        if not 0 <= link < n_links:
            raise ConfigError(f"override for unknown link {link}")
        table[link][pos[tid]] = spec
    return tuple(tuple(r) for r in table)
