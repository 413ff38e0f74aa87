"""Deterministic simulator for auction-based packet forwarding games."""

from .engine import (
    GameConfig,
    SettlementResult,
    Simulation,
    SimulationResult,
    run_simulation,
    settle_delivery,
    settle_drop,
)
from .model import (
    BACKBONE,
    AuctionRequest,
    Bid,
    GameEvent,
    Money,
    NodeId,
    Packet,
    PathLedger,
    validate_bid,
)
from .strategies import STRATEGY_REGISTRY, Strategy, build_strategy
from .topology import TopologyGraph, churn, generate, view_of

__all__ = [
    "BACKBONE",
    "AuctionRequest",
    "Bid",
    "GameConfig",
    "GameEvent",
    "Money",
    "NodeId",
    "Packet",
    "PathLedger",
    "STRATEGY_REGISTRY",
    "SettlementResult",
    "Simulation",
    "SimulationResult",
    "Strategy",
    "TopologyGraph",
    "build_strategy",
    "churn",
    "generate",
    "run_simulation",
    "settle_delivery",
    "settle_drop",
    "validate_bid",
    "view_of",
]

__version__ = "0.1.0"
