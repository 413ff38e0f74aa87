import random

import pytest

from bidforward.model import Money
from bidforward.observation import ObserverStore
from bidforward.predictor import BidHistory, PredictorConfig
from bidforward.strategies import StrategyContext
from bidforward.topology import TopologyGraph, view_of


def make_ctx(
    node: int,
    graph: TopologyGraph,
    *,
    k: int | None = None,
    seed: int = 0,
    forced: bool = False,
    observer: ObserverStore | None = None,
    history: BidHistory | None = None,
    budget: Money = 100,
    ttl: int = 8,
    fine_mode: str = "path-split",
) -> StrategyContext:
    """Strategy context over a real graph view, for driving strategies directly."""
    view = view_of(graph, node, k if k is not None else graph.n)
    return StrategyContext(
        node=node,
        view=view,
        rng=random.Random(seed),
        budget=budget,
        ttl=ttl,
        gateways=graph.gateways,
        forced_bid=forced,
        fine_mode=fine_mode,
        observer=observer,
        history=history,
    )


@pytest.fixture
def predictor_cfg():
    return PredictorConfig(budget_norm=100, ttl_norm=8)
