"""Per-node observation: scoped event ingestion and profile estimates.

Each observer keeps, per subject node, an estimated profit (the sum of
payment and fine deltas it could hear), a running fairness deviation, and
custody/drop counters. Pack members can merge their retained observations
so every member ends up with the union, deduplicated by event identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .model import (
    BACKBONE,
    AuctionRequest,
    EventKind,
    GameEvent,
    Money,
    NodeId,
    parse_extra,
)
from .topology import TopologyGraph


@dataclass(frozen=True)
class ObservationScope:
    """Which events an owner can hear: everything, or within k hops."""

    mode: str  # "global" | "khop"
    owner: NodeId
    k: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("global", "khop"):
            raise ValueError(f"unknown observation mode {self.mode!r}")
        if self.mode == "khop" and self.k < 1:
            raise ValueError("khop scope needs k >= 1")

    def visible(self, location: NodeId, graph: TopologyGraph) -> bool:
        if self.mode == "global":
            return True
        if location == self.owner:
            return True
        if location == BACKBONE:
            # The backbone sits one hop past every gateway.
            dists = [graph.hop_distance(g, self.owner) for g in graph.gateways]
            known = [d for d in dists if d is not None]
            return bool(known) and min(known) + 1 <= self.k
        d = graph.hop_distance(location, self.owner)
        return d is not None and d <= self.k


def parse_scope_spec(spec: str, owner: NodeId) -> ObservationScope:
    """Build a scope from a config string, ``"global"`` or ``"khop:<k>"``."""
    if spec == "global":
        return ObservationScope("global", owner)
    if spec.startswith("khop:"):
        return ObservationScope("khop", owner, int(spec.split(":", 1)[1]))
    raise ValueError(f"unknown observation spec {spec!r}")


@dataclass
class NodeProfile:
    """One observer's running estimate of another node."""

    subject: NodeId
    estimated_profit: Money = 0
    fairness_deviation: Fraction = field(default_factory=lambda: Fraction(0))
    observed_drops: int = 0
    observed_custodies: int = 0

    @property
    def drop_rate(self) -> float:
        return self.observed_drops / max(self.observed_custodies, 1)


class ObserverStore:
    """Event-sourced profile store owned by a single node.

    ``retain_events`` keeps the raw events so pack members can merge; the
    applied-id set makes ingestion idempotent either way.
    """

    def __init__(self, owner: NodeId, retain_events: bool = False):
        self.owner = owner
        self.retain_events = retain_events
        self.profiles: dict[NodeId, NodeProfile] = {}
        self.applied: set[tuple[int, int]] = set()
        self.events: dict[tuple[int, int], GameEvent] = {}
        self.packet_paths: dict[int, list[NodeId]] = {}

    def profile(self, subject: NodeId) -> NodeProfile:
        prof = self.profiles.get(subject)
        if prof is None:
            prof = NodeProfile(subject)
            self.profiles[subject] = prof
        return prof

    def estimated_profit(self, subject: NodeId) -> Money:
        prof = self.profiles.get(subject)
        return prof.estimated_profit if prof else 0

    def known_path(self, packet_id: int) -> list[NodeId]:
        return self.packet_paths.get(packet_id, [])

    def apply(self, event: GameEvent) -> bool:
        """Fold one visible event in; returns False on a duplicate."""
        if event.event_id in self.applied:
            return False
        self.applied.add(event.event_id)
        if self.retain_events:
            self.events[event.event_id] = event
        kind = event.kind
        if kind is EventKind.PAYMENT:
            self.profile(event.node).estimated_profit += event.amount
        elif kind is EventKind.FINE_ASSESSED:
            self.profile(event.node).estimated_profit -= event.amount
        elif kind is EventKind.BID_WON:
            self.profile(event.node).observed_custodies += 1
            self.packet_paths.setdefault(event.packet_id, []).append(event.node)
        elif kind is EventKind.DROPPED:
            if event.node != BACKBONE:
                self.profile(event.node).observed_drops += 1
        elif kind is EventKind.AUCTION_ANNOUNCED:
            self._apply_announcement(event)
        return True

    def _apply_announcement(self, event: GameEvent) -> None:
        if event.node == BACKBONE:
            return
        info = parse_extra(event.extra)
        dist = info.get("dist", "")
        prev = info.get("prev", "")
        if not dist or not prev:
            return
        self._fairness_increment(event.node, event.amount, int(prev), int(dist))

    def _fairness_increment(
        self, holder: NodeId, announced: Money, incoming: Money, hop_distance: int
    ) -> None:
        if hop_distance < 2:
            return
        fair = incoming * (hop_distance - 1) // hop_distance
        increment = Fraction(abs(announced - fair), max(incoming, 1))
        self.profile(holder).fairness_deviation += increment

    def rebuild(self) -> None:
        """Recompute all aggregates from retained events."""
        retained = self.events
        self.profiles = {}
        self.applied = set()
        self.events = {}
        self.packet_paths = {}
        for event_id in sorted(retained):
            self.apply(retained[event_id])


def ingest(
    store: ObserverStore,
    event: GameEvent,
    scope: ObservationScope,
    graph: TopologyGraph,
) -> bool:
    """Apply ``event`` to ``store`` iff the scope can hear it."""
    if not scope.visible(event.location, graph):
        return False
    return store.apply(event)


def fairness_update(
    store: ObserverStore, auction: AuctionRequest, incoming_promise: Money
) -> None:
    """Fold one witnessed auction announcement into the holder's deviation.

    The fair ceiling splits the incoming promise equally over the
    hop_distance nodes still needed (holder included); the increment is the
    relative distance of the announced ceiling from that point.
    """
    if auction.holder == BACKBONE or auction.hop_distance is None:
        return
    store._fairness_increment(
        auction.holder, auction.ceiling, incoming_promise, auction.hop_distance
    )


def merge_pack(stores: list[ObserverStore]) -> None:
    """Give every pack member the union of the pack's observations.

    Events observed by several members count once; merging is idempotent
    and order-independent.
    """
    if len(stores) < 2:
        return
    union: dict[tuple[int, int], GameEvent] = {}
    for store in stores:
        if not store.retain_events:
            raise ValueError(f"store of node {store.owner} does not retain events")
        union.update(store.events)
    for store in stores:
        store.events = dict(union)
        store.rebuild()


def profiles_csv(stores: list[ObserverStore], round_no: int) -> list[str]:
    """Diagnostics rows ``round,observer,subject,profit_est,fairness_dev,drop_rate``."""
    rows = []
    for store in stores:
        for subject in sorted(store.profiles):
            prof = store.profiles[subject]
            rows.append(
                f"{round_no},{store.owner},{subject},{prof.estimated_profit},"
                f"{float(prof.fairness_deviation):.6f},{prof.drop_rate:.6f}"
            )
    return rows
