"""Multi-seed, multi-config batches: cells, sweeps, ranking, aggregation.

A cell fixes a game config, a topology spec and a strategy mix; it is run
over a number of seeds, each derived from the master seed and the cell and
seed indices, so any single run of a batch can be reproduced on its own.
Cells and seeds are independent and may execute in parallel; aggregation
always reduces in canonical cell order.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .engine import GameConfig, run_simulation
from .model import Money, NodeId
from .predictor import PredictorConfig
from .seeding import derive_seed
from .strategies import build_strategy
from .topology import TopologyGraph, generate


@dataclass(frozen=True)
class TopologySpec:
    """How to build a cell's graph. ``seed=None`` ties it to the run seed,
    giving every seeded run its own graph; an explicit seed pins one graph."""

    kind: str = "geometric"
    n: int = 20
    radius: float | None = 0.35
    cols: int | None = None
    gateways: tuple[int, ...] = (0,)
    seed: int | None = None

    def build(self, run_seed: int) -> TopologyGraph:
        seed = self.seed if self.seed is not None else derive_seed(run_seed, "topo")
        return generate(
            self.kind, self.n,
            seed=seed, radius=self.radius, cols=self.cols, gateways=self.gateways,
        )


@dataclass(frozen=True)
class MixEntry:
    """One slice of a strategy mix.

    Either ``nodes`` pins explicit node ids, or ``count`` takes that many
    nodes from a seed-shuffled pool (``count=None`` takes the rest).
    """

    strategy: str
    params: tuple[tuple[str, object], ...] = ()
    nodes: tuple[int, ...] | None = None
    count: int | None = None

    def params_dict(self) -> dict:
        return {k: v for k, v in self.params}


def make_mix_entry(strategy: str, params: dict | None = None,
                   nodes: tuple[int, ...] | None = None,
                   count: int | None = None) -> MixEntry:
    return MixEntry(strategy, tuple(sorted((params or {}).items())), nodes, count)


def assign_mix(mix: tuple[MixEntry, ...], n: int, run_seed: int) -> dict[NodeId, tuple[str, dict]]:
    """Resolve a mix into node -> (strategy name, params).

    Pinned nodes first; counted entries draw from the remaining nodes in a
    seed-shuffled order; at most one ``count=None`` entry absorbs the rest.
    """
    import random

    assignment: dict[NodeId, tuple[str, dict]] = {}
    for entry in mix:
        if entry.nodes is None:
            continue
        for node in entry.nodes:
            if node in assignment:
                raise ValueError(f"node {node} assigned twice in mix")
            assignment[node] = (entry.strategy, entry.params_dict())
    pool = [node for node in range(n) if node not in assignment]
    random.Random(derive_seed(run_seed, "mix")).shuffle(pool)
    rest_entries = [e for e in mix if e.nodes is None and e.count is None]
    if len(rest_entries) > 1:
        raise ValueError("at most one mix entry may take the remaining nodes")
    for entry in mix:
        if entry.nodes is None and entry.count is not None:
            if entry.count > len(pool):
                raise ValueError(f"mix wants {entry.count} more nodes than remain")
            for node in pool[: entry.count]:
                assignment[node] = (entry.strategy, entry.params_dict())
            pool = pool[entry.count:]
    for entry in rest_entries:
        for node in pool:
            assignment[node] = (entry.strategy, entry.params_dict())
        pool = []
    if pool:
        raise ValueError(f"no strategy assigned to node {min(pool)}")
    return assignment


@dataclass(frozen=True)
class CellSpec:
    name: str
    config: GameConfig
    topology: TopologySpec
    mix: tuple[MixEntry, ...]
    predictor: PredictorConfig | None = None


@dataclass(frozen=True)
class TournamentSpec:
    cells: tuple[CellSpec, ...]
    seeds_per_cell: int = 1
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")
        if not self.cells:
            raise ValueError("tournament needs at least one cell")


@dataclass
class StrategyAggregate:
    strategy: str
    node_runs: int = 0
    total_balance: Money = 0
    total_delivered: int = 0
    total_fines: Money = 0
    rank_counts: list[int] = field(default_factory=list)

    @property
    def mean_balance(self) -> float:
        return self.total_balance / max(self.node_runs, 1)

    @property
    def mean_delivered(self) -> float:
        return self.total_delivered / max(self.node_runs, 1)

    @property
    def mean_fines(self) -> float:
        return self.total_fines / max(self.node_runs, 1)


@dataclass
class RankTable:
    """Per-cell, per-strategy aggregates plus rank distributions over seeds."""

    cells: dict[str, dict[str, StrategyAggregate]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def to_csv(self) -> str:
        max_ranks = max(
            (len(agg.rank_counts) for per_cell in self.cells.values()
             for agg in per_cell.values()),
            default=0,
        )
        header = "cell,strategy,mean_balance,mean_delivered,mean_fines," + ",".join(
            f"rank_{i+1}_count" for i in range(max_ranks)
        )
        lines = [header.rstrip(",")]
        for cell_name in self.cells:
            per_cell = self.cells[cell_name]
            for strategy in sorted(per_cell):
                agg = per_cell[strategy]
                counts = agg.rank_counts + [0] * (max_ranks - len(agg.rank_counts))
                lines.append(
                    f"{cell_name},{strategy},{agg.mean_balance:.6f},"
                    f"{agg.mean_delivered:.6f},{agg.mean_fines:.6f},"
                    + ",".join(str(c) for c in counts)
                )
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = []
        for cell_name, per_cell in self.cells.items():
            lines.append(f"cell {cell_name}")
            ordered = sorted(per_cell.values(), key=lambda a: -a.mean_balance)
            for agg in ordered:
                lines.append(
                    f"  {agg.strategy:<12} balance {agg.mean_balance:>10.1f}  "
                    f"delivered {agg.mean_delivered:>6.2f}  fines {agg.mean_fines:>8.1f}  "
                    f"ranks {agg.rank_counts}"
                )
        for cell_name, err in self.errors.items():
            lines.append(f"cell {cell_name} FAILED: {err}")
        return "\n".join(lines)


def _competition_rank(ordered_values: list[float], value: float) -> int:
    """1-based competition rank: ties share the better rank."""
    return 1 + sum(1 for v in ordered_values if v > value)


def run_cell_seed(cell: CellSpec, run_seed: int) -> dict[str, tuple[int, Money, int, Money]]:
    """One (cell, seed) simulation, reduced to per-strategy sums.

    Returns strategy -> (node count, balance sum, delivered sum, fines sum).
    """
    graph = cell.topology.build(run_seed)
    resolved = assign_mix(cell.mix, graph.n, run_seed)
    assignment = {
        node: build_strategy(name, params) for node, (name, params) in resolved.items()
    }
    config = dataclasses.replace(cell.config, master_seed=run_seed)
    result = run_simulation(config, graph, assignment, cell.predictor)
    sums: dict[str, tuple[int, Money, int, Money]] = {}
    for node, name in result.strategy_names.items():
        cnt, bal, deliv, fines = sums.get(name, (0, 0, 0, 0))
        stats = result.stats[node]
        sums[name] = (
            cnt + 1,
            bal + result.balances[node],
            deliv + stats.delivered,
            fines + stats.fines_paid,
        )
    return sums


def _run_cell_seed_task(args: tuple[CellSpec, int, int, int]):
    cell, cell_index, seed_index, master_seed = args
    run_seed = derive_seed(master_seed, cell_index, seed_index)
    return run_cell_seed(cell, run_seed)


def run_tournament(spec: TournamentSpec, workers: int = 1) -> RankTable:
    """Execute every (cell, seed), aggregate, and rank.

    Per-cell failures are recorded in the table, not raised. The result is
    identical for any ``workers`` value.
    """
    tasks = [
        (cell, ci, si, spec.master_seed)
        for ci, cell in enumerate(spec.cells)
        for si in range(spec.seeds_per_cell)
    ]
    outcomes: list[dict | Exception] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell_seed_task, t) for t in tasks]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    outcomes.append(exc)
    else:
        for task in tasks:
            try:
                outcomes.append(_run_cell_seed_task(task))
            except Exception as exc:  # noqa: BLE001
                outcomes.append(exc)

    table = RankTable()
    per_task = iter(outcomes)
    for ci, cell in enumerate(spec.cells):
        per_cell: dict[str, StrategyAggregate] = {}
        n_strategies = len({e.strategy for e in cell.mix})
        for si in range(spec.seeds_per_cell):
            outcome = next(per_task)
            if isinstance(outcome, Exception):
                table.errors.setdefault(cell.name, str(outcome))
                continue
            seed_means = {
                name: bal / cnt for name, (cnt, bal, _, _) in outcome.items()
            }
            ordered = list(seed_means.values())
            for name, (cnt, bal, deliv, fines) in outcome.items():
                agg = per_cell.get(name)
                if agg is None:
                    agg = StrategyAggregate(name, rank_counts=[0] * n_strategies)
                    per_cell[name] = agg
                agg.node_runs += cnt
                agg.total_balance += bal
                agg.total_delivered += deliv
                agg.total_fines += fines
                rank = _competition_rank(ordered, seed_means[name])
                agg.rank_counts[rank - 1] += 1
        if per_cell:
            table.cells[cell.name] = per_cell
    return table


SWEEP_AXES = ("fine", "ttl", "churn")


def sweep(
    axis: str,
    values: list,
    base: CellSpec,
    seeds_per_cell: int,
    master_seed: int,
    workers: int = 1,
):
    """One RankTable per value of the swept game parameter.

    Yields ``(value, table)`` pairs as each value finishes, so callers can
    persist completed results before later values run.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
    if not values:
        raise ValueError("sweep needs at least one value")
    return _sweep_iter(axis, list(values), base, seeds_per_cell, master_seed, workers)


def _sweep_iter(axis, values, base, seeds_per_cell, master_seed, workers):
    for value in values:
        if axis == "fine":
            config = dataclasses.replace(base.config, fine=int(value))
        elif axis == "ttl":
            config = dataclasses.replace(base.config, ttl=int(value))
        else:
            config = dataclasses.replace(base.config, churn_rate=float(value))
        cell = dataclasses.replace(base, name=f"{base.name}[{axis}={value}]", config=config)
        table = run_tournament(
            TournamentSpec((cell,), seeds_per_cell, master_seed), workers=workers
        )
        yield value, table
