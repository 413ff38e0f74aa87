"""Config file parsing and validation for the command-line tools.

One YAML tree describes a whole experiment: the game parameters, the
topology, the predictor tuning, the strategy assignment, and optionally a
tournament section. CLI overrides address dotted paths in the same tree, so
a recorded config plus its overrides fully reproduces a run.
"""

from __future__ import annotations

import copy
from typing import Any

import yaml

from .engine import EngineError, GameConfig
from .predictor import PredictorConfig
from .strategies import STRATEGY_REGISTRY
from .topology import TopologyError, TopologyGraph
from .tournament import CellSpec, MixEntry, TopologySpec, TournamentSpec, make_mix_entry


class ConfigError(ValueError):
    """A config file problem, with the offending field in the message."""


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            tree = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return tree


def apply_override(tree: dict, assignment: str) -> None:
    """Set one ``dotted.path=value`` override in place; value parses as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key.path=value")
    path, raw = assignment.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {assignment!r} has an empty path")
    node = tree
    for key in keys[:-1]:
        nxt = node.get(key)
        if nxt is None:
            nxt = node[key] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"override path {path!r} crosses non-mapping {key!r}")
        node = nxt
    try:
        node[keys[-1]] = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override value {raw!r} is invalid: {exc}") from exc


def _section(tree: dict, name: str) -> dict:
    sec = tree.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: must be a mapping")
    return sec


def _take(section: dict, name: str, field: str, kind, default):
    value = section.get(field, default)
    if value is None:
        return None
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.{field}: expected {kind.__name__}, got {value!r}") from None


def build_game_config(tree: dict, seed_override: int | None = None) -> GameConfig:
    game = _section(tree, "game")
    known = {
        "budget", "fine", "ttl", "packets_total", "injection_rate", "observation",
        "forced_bid_mode", "fine_mode", "churn_rate", "seed",
    }
    for key in game:
        if key not in known:
            raise ConfigError(f"game.{key}: unknown field")
    seed = seed_override if seed_override is not None else _take(game, "game", "seed", int, 0)
    try:
        return GameConfig(
            budget=_take(game, "game", "budget", int, 100),
            fine=_take(game, "game", "fine", int, 200),
            ttl=_take(game, "game", "ttl", int, 8),
            packets_total=_take(game, "game", "packets_total", int, 50),
            injection_rate=_take(game, "game", "injection_rate", int, 2),
            observation=str(game.get("observation", "global")),
            forced_bid_mode=bool(game.get("forced_bid_mode", False)),
            fine_mode=str(game.get("fine_mode", "path-split")),
            churn_rate=_take(game, "game", "churn_rate", float, 0.0),
            master_seed=seed,
        )
    except EngineError as exc:
        raise ConfigError(f"game: {exc}") from exc


def build_topology_spec(tree: dict) -> TopologySpec:
    topo = _section(tree, "topology")
    known = {"kind", "n", "radius", "cols", "gateways", "seed", "file"}
    for key in topo:
        if key not in known:
            raise ConfigError(f"topology.{key}: unknown field")
    gateways = topo.get("gateways", [0])
    if not isinstance(gateways, (list, tuple)) or not gateways:
        raise ConfigError("topology.gateways: need a non-empty list of node ids")
    return TopologySpec(
        kind=str(topo.get("kind", "geometric")),
        n=_take(topo, "topology", "n", int, 20),
        radius=_take(topo, "topology", "radius", float, 0.35),
        cols=_take(topo, "topology", "cols", int, None),
        gateways=tuple(int(g) for g in gateways),
        seed=_take(topo, "topology", "seed", int, None),
    )


def build_graph(tree: dict, run_seed: int) -> TopologyGraph:
    topo = _section(tree, "topology")
    if "file" in topo:
        with open(topo["file"], "r", encoding="utf-8") as fh:
            return TopologyGraph.from_edge_list(fh.read())
    try:
        return build_topology_spec(tree).build(run_seed)
    except TopologyError as exc:
        raise ConfigError(f"topology: {exc}") from exc


def build_predictor_config(tree: dict, game: GameConfig) -> PredictorConfig:
    pred = _section(tree, "predictor")
    known = {
        "epsilon", "min_bid_floor", "max_history", "max_age_rounds", "fallback_fraction",
        "budget_norm", "ttl_norm",
    }
    for key in pred:
        if key not in known:
            raise ConfigError(f"predictor.{key}: unknown field")
    try:
        return PredictorConfig(
            epsilon=_take(pred, "predictor", "epsilon", float, 0.15),
            min_bid_floor=_take(pred, "predictor", "min_bid_floor", int, 1),
            max_history=_take(pred, "predictor", "max_history", int, 128),
            max_age_rounds=_take(pred, "predictor", "max_age_rounds", int, 512),
            budget_norm=_take(pred, "predictor", "budget_norm", int, game.budget),
            ttl_norm=_take(pred, "predictor", "ttl_norm", int, game.ttl),
            fallback_fraction=_take(pred, "predictor", "fallback_fraction", float, 0.5),
        )
    except ValueError as exc:
        raise ConfigError(f"predictor: {exc}") from exc


def parse_node_set(spec: object) -> tuple[int, ...]:
    """Node ids from ``"0-4,7"`` style strings, ints, or int lists."""
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, (list, tuple)):
        return tuple(int(x) for x in spec)
    out: list[int] = []
    for chunk in str(spec).split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "-" in chunk:
            lo, hi = chunk.split("-", 1)
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"bad node range {chunk!r}") from None
            if hi_i < lo_i:
                raise ConfigError(f"bad node range {chunk!r}")
            out.extend(range(lo_i, hi_i + 1))
        else:
            try:
                out.append(int(chunk))
            except ValueError:
                raise ConfigError(f"bad node id {chunk!r}") from None
    return tuple(out)


def build_mix(tree: dict) -> tuple[MixEntry, ...]:
    entries = tree.get("strategies")
    if not entries:
        raise ConfigError("strategies: section is required")
    if not isinstance(entries, list):
        raise ConfigError("strategies: must be a list of assignment entries")
    mix: list[MixEntry] = []
    for i, raw in enumerate(entries):
        where = f"strategies[{i}]"
        if not isinstance(raw, dict):
            raise ConfigError(f"{where}: must be a mapping")
        name = raw.get("strategy")
        if not name:
            raise ConfigError(f"{where}.strategy: required")
        if name not in STRATEGY_REGISTRY:
            known = ", ".join(sorted(STRATEGY_REGISTRY))
            raise ConfigError(f"{where}.strategy: unknown strategy {name!r} (known: {known})")
        params = raw.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError(f"{where}.params: must be a mapping")
        nodes = raw.get("nodes")
        count = raw.get("count")
        rest = raw.get("rest", False)
        extra_keys = set(raw) - {"strategy", "params", "nodes", "count", "rest"}
        if extra_keys:
            raise ConfigError(f"{where}.{sorted(extra_keys)[0]}: unknown field")
        if sum(x is not None and x is not False for x in (nodes, count, rest)) != 1:
            raise ConfigError(f"{where}: give exactly one of nodes, count, rest")
        if nodes is not None:
            mix.append(make_mix_entry(str(name), params, nodes=parse_node_set(nodes)))
        elif count is not None:
            mix.append(make_mix_entry(str(name), params, count=int(count)))
        else:
            mix.append(make_mix_entry(str(name), params))
    return tuple(mix)


def build_cell(tree: dict, name: str, seed_override: int | None = None) -> CellSpec:
    game = build_game_config(tree, seed_override)
    return CellSpec(
        name=name,
        config=game,
        topology=build_topology_spec(tree),
        mix=build_mix(tree),
        predictor=build_predictor_config(tree, game),
    )


def build_tournament(
    tree: dict, seed_override: int | None = None
) -> tuple[TournamentSpec, dict]:
    """The tournament spec plus its extras (sweep definition, workers)."""
    section = _section(tree, "tournament")
    if not section:
        raise ConfigError("tournament: section is required for this command")
    known = {"seeds", "workers", "cells", "sweep"}
    for key in section:
        if key not in known:
            raise ConfigError(f"tournament.{key}: unknown field")
    seeds = _take(section, "tournament", "seeds", int, 5)
    workers = _take(section, "tournament", "workers", int, 1)
    master = (
        seed_override
        if seed_override is not None
        else _take(_section(tree, "game"), "game", "seed", int, 0)
    )

    cell_defs = section.get("cells") or [{"name": "base"}]
    if not isinstance(cell_defs, list):
        raise ConfigError("tournament.cells: must be a list")
    cells = []
    for i, raw in enumerate(cell_defs):
        where = f"tournament.cells[{i}]"
        if not isinstance(raw, dict):
            raise ConfigError(f"{where}: must be a mapping")
        cell_name = str(raw.get("name", f"cell{i}"))
        overrides = raw.get("overrides") or {}
        if not isinstance(overrides, dict):
            raise ConfigError(f"{where}.overrides: must be a mapping of dotted paths")
        subtree = copy.deepcopy(tree)
        for dotted, value in overrides.items():
            apply_override(subtree, f"{dotted}={yaml.safe_dump(value).strip()}")
        cells.append(build_cell(subtree, cell_name))
    spec = TournamentSpec(tuple(cells), seeds_per_cell=seeds, master_seed=master)

    sweep_def = section.get("sweep")
    extras: dict[str, Any] = {"workers": workers, "sweep": None}
    if sweep_def is not None:
        if not isinstance(sweep_def, dict):
            raise ConfigError("tournament.sweep: must be a mapping")
        axis = sweep_def.get("axis")
        values = sweep_def.get("values")
        if axis not in ("fine", "ttl", "churn"):
            raise ConfigError("tournament.sweep.axis: must be fine, ttl or churn")
        if not isinstance(values, list) or not values:
            raise ConfigError("tournament.sweep.values: need a non-empty list")
        extras["sweep"] = (str(axis), list(values))
    return spec, extras
