"""YAML configuration files.

Example::

    graph:
      kind: path          # path | cycle | complete | isolated | grid | explicit
      links: 4
    job_types:
      - {id: 0, size: 1, deadline: 60, arrival_max: 1}
      - {id: 1, size: 3, deadline: 90, arrival_max: 1, epsilon: auto, drop_max: auto}
    link_overrides:
      - {link: 2, type: 1, deadline: 120}
    V: 20
    beta: 2
    T: 6
    W: 4
    utility: {name: log}
    arrival_law: {name: uniform}
    horizon: 10000
    seed: 7

Rationals (``V``, ``beta``, ``epsilon``) accept integers, decimals or
``"p/q"`` strings. Unknown keys are rejected with their full path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from .model import (ArrivalLaw, ConfigError, GraphError, SimConfig, build_graph, complete_graph, cycle_graph,
                    grid_graph, isolated_graph, path_graph, resolve_job_type)
from .utility import UnknownUtilityError, make_utility

TOP_KEYS = {"graph", "job_types", "link_overrides", "V", "beta", "T", "W", "utility", "arrival_law",
            "horizon", "seed", "verify", "sweep"}
GRAPH_KEYS = {"kind", "links", "rows", "cols", "conflicts", "symmetrize"}
JOB_KEYS = {"id", "size", "deadline", "arrival_max", "drop_max", "epsilon"}
OVERRIDE_KEYS = {"link", "type", "size", "deadline", "arrival_max", "drop_max", "epsilon"}
LAW_KEYS = {"name", "prob"}
VERIFY_KEYS = {"weight_vectors", "weight_range", "transitions", "tv_tolerance", "slots", "theta"}
SWEEP_KEYS = {"V", "T", "seeds", "horizon", "workers"}


@dataclass
class VerifySettings:
    weight_vectors: int = 5
    weight_range: tuple = (0.0, 3.0)
    transitions: int = 200_000
    tv_tolerance: float = 0.02
    slots: int = 10_000
    theta: float = 0.1


@dataclass
class SweepSettings:
    V: list = field(default_factory=lambda: [10, 100, 1000])
    T: list | str = "sqrt"  # explicit list, or "sqrt" for ceil(sqrt(V)) * s_max
    seeds: int = 5
    horizon: int | None = None
    workers: int = 1


@dataclass
class LoadedConfig:
    sim: SimConfig
    verify: VerifySettings
    sweep: SweepSettings
    raw: dict


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(section).__name__}")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown key" if where else f"{key}: unknown key")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}.{key}: required key missing" if where else f"{key}: required key missing")
    return section[key]


def parse_rational(value, where: str) -> Fraction:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    try:
        if isinstance(value, float):
            return Fraction(str(value))
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: expected a number or 'p/q', got {value!r}") from None


def _int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _graph(section):
    _check_keys(section, GRAPH_KEYS, "graph")
    kind = _require(section, "kind", "graph")
    try:
        if kind in ("path", "cycle", "complete", "isolated"):
            n = _int(_require(section, "links", "graph"), "graph.links", 1)
            return {"path": path_graph, "cycle": cycle_graph, "complete": complete_graph,
                    "isolated": isolated_graph}[kind](n)
        if kind == "grid":
            return grid_graph(_int(_require(section, "rows", "graph"), "graph.rows", 1),
                              _int(_require(section, "cols", "graph"), "graph.cols", 1))
        if kind == "explicit":
            conflicts = _require(section, "conflicts", "graph")
            if not isinstance(conflicts, list):
                raise ConfigError("graph.conflicts: expected a list of lists")
            return build_graph(conflicts, symmetrize=bool(section.get("symmetrize", False)))
    except GraphError as exc:
        raise ConfigError(f"graph: {exc}") from None
    raise ConfigError(f"graph.kind: unknown graph kind {kind!r}")


def _job_fields(entry: dict, where: str, base: dict | None = None) -> dict:
    out = dict(base or {})
    for key in ("size", "deadline"):
        if key in entry:
            out[key] = _int(entry[key], f"{where}.{key}", 1)
    if "arrival_max" in entry:
        out["arrival_max"] = _int(entry["arrival_max"], f"{where}.arrival_max", 0)
    for key in ("drop_max", "epsilon"):
        if key in entry:
            v = entry[key]
            if v == "auto" or v is None:
                out[key] = None
            elif key == "drop_max":
                out[key] = _int(v, f"{where}.drop_max", 0)
            else:
                out[key] = parse_rational(v, f"{where}.epsilon")
    return out


def _resolve(fields: dict, type_id, V, beta, utility, where: str):
    for key in ("size", "deadline", "arrival_max"):
        if key not in fields:
            raise ConfigError(f"{where}.{key}: required key missing")
    try:
        return resolve_job_type(type_id, fields["size"], fields["deadline"], fields["arrival_max"], V=V,
                                beta=beta, utility=utility, drop_max=fields.get("drop_max"),
                                epsilon=fields.get("epsilon"))
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _utility(value):
    if value is None:
        value = {"name": "log"}
    if isinstance(value, str):
        value = {"name": value}
    if not isinstance(value, dict) or "name" not in value:
        raise ConfigError("utility.name: required key missing")
    params = {k: v for k, v in value.items() if k != "name"}
    try:
        return make_utility(value["name"], **params)
    except UnknownUtilityError as exc:
        raise ConfigError(f"utility.name: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"utility: bad parameter ({exc})") from None


def _settings(cls, section, allowed, where):
    if section is None:
        return cls()
    _check_keys(section, allowed, where)
    obj = cls()
    for key, value in section.items():
        if key == "weight_range":
            if not (isinstance(value, list) and len(value) == 2):
                raise ConfigError(f"{where}.weight_range: expected [low, high]")
            value = (float(value[0]), float(value[1]))
        setattr(obj, key, value)
    return obj


def config_from_dict(raw: dict) -> LoadedConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    _check_keys(raw, TOP_KEYS, "")
    graph = _graph(_require(raw, "graph", ""))
    V = parse_rational(_require(raw, "V", ""), "V")
    beta = parse_rational(_require(raw, "beta", ""), "beta")
    T = _int(_require(raw, "T", ""), "T", 1)
    W = _int(raw.get("W", 4), "W", 2)
    utility = _utility(raw.get("utility"))
    if V <= 0:
        raise ConfigError("V: must be positive")

    entries = _require(raw, "job_types", "")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("job_types: expected a non-empty list")
    base_fields = []
    for m, entry in enumerate(entries):
        where = f"job_types[{m}]"
        _check_keys(entry, JOB_KEYS, where)
        type_id = _int(entry.get("id", m), f"{where}.id", 0)
        base_fields.append((type_id, _job_fields(entry, where)))
    ids = [tid for tid, _ in base_fields]
    table = [[dict(f) for _, f in base_fields] for _ in range(graph.link_count)]
    for o, entry in enumerate(raw.get("link_overrides") or []):
        where = f"link_overrides[{o}]"
        _check_keys(entry, OVERRIDE_KEYS, where)
        link = _int(_require(entry, "link", where), f"{where}.link", 0)
        tid = _int(_require(entry, "type", where), f"{where}.type", 0)
        if link >= graph.link_count:
            raise ConfigError(f"{where}.link: no link {link} in a {graph.link_count}-link graph")
        if tid not in ids:
            raise ConfigError(f"{where}.type: unknown job type {tid}")
        m = ids.index(tid)
        table[link][m] = _job_fields(entry, where, table[link][m])
    rows = [
        tuple(_resolve(f, ids[m], V, beta, utility, f"job_types[{m}] (link {i})") for m, f in enumerate(row))
        for i, row in enumerate(table)
    ]

    law = raw.get("arrival_law") or {}
    if isinstance(law, str):
        law = {"name": law}
    _check_keys(law, LAW_KEYS, "arrival_law")
    arrival_law = ArrivalLaw(law.get("name", "uniform"), float(law.get("prob", 0.5)))

    sim = SimConfig(graph=graph, job_types=tuple(rows), V=V, beta=beta, T=T, W=W, utility=utility,
                    horizon=_int(raw.get("horizon", 10_000), "horizon", 0),
                    rng_seed=_int(raw.get("seed", 0), "seed", 0), arrival_law=arrival_law)
    verify = _settings(VerifySettings, raw.get("verify"), VERIFY_KEYS, "verify")
    sweep = _settings(SweepSettings, raw.get("sweep"), SWEEP_KEYS, "sweep")
    return LoadedConfig(sim, verify, sweep, raw)


def load_config(path) -> LoadedConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML ({exc})") from None
    return config_from_dict(raw)


def sweep_T(V, s_max: int) -> int:
    """Super-slot length ``ceil(sqrt(V)) * s_max`` (so ``T/V -> 0``)."""
    return math.ceil(math.sqrt(float(V))) * s_max
