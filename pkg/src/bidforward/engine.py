"""Round-based game loop: injection, per-hop auctions, settlement, event log.

Each round the backbone injects a batch of packets and every packet is
carried to completion: while the destination is not a 1-hop neighbor of the
holder, the holder announces a sealed-bid auction among its neighbors not
yet on the path; the winning bidder takes custody at its bid amount, which
becomes the ceiling bound for the next hop. Adjacent destinations are
delivered directly with no auction. Custody transfers consume TTL; running
out, finding no bidder, or a deliberate drop ends the packet with a fine.

A run is strictly sequential and deterministic for a given config, graph,
assignment and master seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .model import (
    BACKBONE,
    AuctionRequest,
    Bid,
    EventKind,
    GameEvent,
    LedgerStatus,
    Money,
    NodeId,
    Packet,
    PathLedger,
    format_extra,
    validate_bid,
)
from .observation import ObserverStore, merge_pack, parse_scope_spec
from .predictor import BidHistory, PredictorConfig
from .seeding import derive_seed
from .strategies import Strategy, StrategyContext
from .topology import NodeView, TopologyGraph, churn, view_of

FINE_MODES = ("path-split", "dropper-only")


class EngineError(RuntimeError):
    """Configuration or contract violation detected by the engine."""


@dataclass(frozen=True)
class GameConfig:
    budget: Money = 100
    fine: Money = 200
    ttl: int = 8
    packets_total: int = 50
    injection_rate: int = 2
    observation: str = "global"  # "global" | "khop:<k>"
    forced_bid_mode: bool = False
    fine_mode: str = "path-split"
    churn_rate: float = 0.0
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise EngineError("budget must be >= 1")
        if self.fine < 0:
            raise EngineError("fine must be >= 0")
        if self.ttl < 1:
            raise EngineError("ttl must be >= 1")
        if self.packets_total < 1:
            raise EngineError("packets_total must be >= 1")
        if self.injection_rate < 1:
            raise EngineError("injection_rate must be >= 1")
        if self.fine_mode not in FINE_MODES:
            raise EngineError(f"fine_mode must be one of {FINE_MODES}")
        if not 0.0 <= self.churn_rate <= 1.0:
            raise EngineError("churn_rate must be in [0, 1]")
        try:
            parse_scope_spec(self.observation, 0)
        except ValueError as exc:
            raise EngineError(f"observation: {exc}") from exc


@dataclass(frozen=True)
class SettlementResult:
    packet_id: int
    status: LedgerStatus
    deltas: dict[NodeId, Money]
    backbone_delta: Money
    fine_shares: dict[NodeId, Money]


def run_auction(request: AuctionRequest, bids: list[Bid], chooser=None) -> Bid | None:
    """Select a winner among valid bids, or None when there are none.

    ``chooser`` is the holder strategy's selection function; without one
    (the backbone's own auctions) the cheapest bid wins, ties to the lowest
    node id.
    """
    if not bids:
        return None
    if chooser is None:
        return min(bids, key=lambda b: (b.amount, b.bidder))
    winner = chooser(request, bids)
    if winner not in bids:
        raise EngineError("winner chooser returned a bid that was not offered")
    return winner


def advance_hop(ledger: PathLedger, winner: Bid) -> PathLedger:
    """Append the winner's promise to the path."""
    return ledger.extended(winner.bidder, winner.amount)


def settle_delivery(ledger: PathLedger) -> SettlementResult:
    """Each node earns its promise minus the promise it granted onward."""
    if ledger.status is not LedgerStatus.DELIVERED or not ledger.entries:
        raise EngineError("settle_delivery needs a delivered, non-empty ledger")
    promises = ledger.promises
    deltas: dict[NodeId, Money] = {}
    for i, (node, promise) in enumerate(ledger.entries):
        nxt = promises[i + 1] if i + 1 < len(promises) else 0
        deltas[node] = promise - nxt
    total = promises[0]
    if sum(deltas.values()) != total:
        raise EngineError(f"delivery settlement broke conservation on packet {ledger.packet_id}")
    return SettlementResult(ledger.packet_id, ledger.status, deltas, -total, {})


def settle_drop(
    ledger: PathLedger, fine: Money, fine_mode: str = "path-split"
) -> SettlementResult:
    """Assess the fine over the path; the backbone collects it in full.

    Path-split: every path node pays an equal floor share and the node that
    held the packet when it dropped pays the remainder on top. Dropper-only
    charges the holder alone.
    """
    if ledger.status is not LedgerStatus.DROPPED or not ledger.entries:
        raise EngineError("settle_drop needs a dropped, non-empty ledger")
    dropper = ledger.last_node
    k = len(ledger)
    shares: dict[NodeId, Money] = {}
    if fine_mode == "path-split":
        base = fine // k
        for node in ledger.nodes:
            shares[node] = base
        shares[dropper] += fine - base * k
    elif fine_mode == "dropper-only":
        shares[dropper] = fine
    else:
        raise EngineError(f"unknown fine_mode {fine_mode!r}")
    shares = {node: s for node, s in shares.items() if s != 0}
    if sum(shares.values()) != fine:
        raise EngineError(f"fine shares broke conservation on packet {ledger.packet_id}")
    deltas = {node: -s for node, s in shares.items()}
    return SettlementResult(ledger.packet_id, ledger.status, deltas, fine, shares)


@dataclass
class NodeStats:
    delivered: int = 0
    dropped: int = 0
    fines_paid: Money = 0


@dataclass
class SimulationResult:
    config: GameConfig
    strategy_names: dict[NodeId, str]
    events: list[GameEvent]
    balances: dict[NodeId, Money]
    backbone_balance: Money
    stats: dict[NodeId, NodeStats]
    settlements: list[SettlementResult]
    rounds: int


BALANCES_CSV_HEADER = "node,strategy,balance,delivered,dropped,fines_paid"


def balances_csv(result: SimulationResult) -> str:
    lines = [BALANCES_CSV_HEADER]
    for node in sorted(result.balances):
        stats = result.stats[node]
        lines.append(
            f"{node},{result.strategy_names[node]},{result.balances[node]},"
            f"{stats.delivered},{stats.dropped},{stats.fines_paid}"
        )
    return "\n".join(lines) + "\n"


class Simulation:
    """One deterministic run. ``run()`` drives it; ``step_round()`` exposes
    round granularity for instrumentation."""

    def __init__(
        self,
        config: GameConfig,
        graph: TopologyGraph,
        assignment: dict[NodeId, Strategy],
        predictor: PredictorConfig | None = None,
    ):
        missing = [n for n in range(graph.n) if n not in assignment]
        if missing:
            raise EngineError(f"no strategy assigned to node {missing[0]}")
        extras = [n for n in assignment if not 0 <= n < graph.n]
        if extras:
            raise EngineError(f"strategy assigned to unknown node {extras[0]}")
        self.config = config
        self.graph = graph
        self.strategies = dict(assignment)
        self.predictor_cfg = predictor or PredictorConfig(
            budget_norm=config.budget, ttl_norm=config.ttl
        )
        scope = parse_scope_spec(config.observation, 0)
        self._global_scope = scope.mode == "global"
        self._view_k = graph.n if self._global_scope else scope.k
        self._scope_k = scope.k

        self._non_gateways = sorted(set(range(graph.n)) - graph.gateways)
        if not self._non_gateways:
            raise EngineError("every node is a gateway; no valid destinations exist")

        seed = config.master_seed
        self._inject_rng = random.Random(derive_seed(seed, "inject"))
        self.contexts: dict[NodeId, StrategyContext] = {}
        for node in range(graph.n):
            strat = self.strategies[node]
            observer = (
                ObserverStore(node, retain_events=strat.pack is not None)
                if strat.uses_observation
                else None
            )
            history = BidHistory(self.predictor_cfg) if strat.uses_bid_history else None
            self.contexts[node] = StrategyContext(
                node=node,
                view=None,  # type: ignore[arg-type]  # set by _rebuild_views
                rng=random.Random(derive_seed(seed, "node", node)),
                budget=config.budget,
                ttl=config.ttl,
                gateways=graph.gateways,
                forced_bid=config.forced_bid_mode,
                fine_mode=config.fine_mode,
                pack=strat.pack,
                observer=observer,
                history=history,
            )
        self._subscribers = sorted(
            n for n, s in self.strategies.items()
            if s.uses_observation or s.uses_bid_history
        )
        self._packs: dict[str, list[NodeId]] = {}
        for node in sorted(self.contexts):
            pack = self.contexts[node].pack
            if pack is not None:
                self._packs.setdefault(pack, []).append(node)
        self._rebuild_views()

        self.events: list[GameEvent] = []
        self.balances: dict[NodeId, Money] = {n: 0 for n in range(graph.n)}
        self.backbone_balance: Money = 0
        self.stats: dict[NodeId, NodeStats] = {n: NodeStats() for n in range(graph.n)}
        self.settlements: list[SettlementResult] = []
        self.round = 0
        self._injected = 0
        self._seq = 0

    # -- topology plumbing ------------------------------------------------

    def _rebuild_views(self) -> None:
        if self._global_scope:
            shared = view_of(self.graph, 0, self._view_k)
            for ctx in self.contexts.values():
                ctx.view = shared
        else:
            for node, ctx in self.contexts.items():
                ctx.view = view_of(self.graph, node, self._view_k)

    def _backbone_distance(self, node: NodeId) -> int | None:
        """Hops from the backbone (one past its gateways) to ``node``."""
        best = None
        for g in self.graph.gateways:
            d = self.graph.hop_distance(g, node)
            if d is not None and (best is None or d < best):
                best = d
        return None if best is None else best + 1

    def _hears(self, observer: NodeId, location: NodeId) -> bool:
        if self._global_scope:
            return True
        if location == observer:
            return True
        if location == BACKBONE:
            d = self._backbone_distance(observer)
        else:
            d = self.graph.hop_distance(location, observer)
        return d is not None and d <= self._scope_k

    # -- event plumbing ----------------------------------------------------

    def _emit(
        self,
        kind: EventKind,
        packet_id: int,
        node: NodeId,
        amount: Money,
        location: NodeId,
        extra: str = "",
    ) -> None:
        event = GameEvent(self.round, self._seq, kind, packet_id, node, amount, location, extra)
        self._seq += 1
        self.events.append(event)
        for sub in self._subscribers:
            if self._hears(sub, location):
                self.strategies[sub].on_event(event, self.contexts[sub])

    # -- the game loop -----------------------------------------------------

    def step_round(self) -> bool:
        """Inject and resolve one round's batch; False when the run is over."""
        if self._injected >= self.config.packets_total:
            return False
        self._seq = 0
        for ctx in self.contexts.values():
            ctx.round = self.round
        for _ in range(self.config.injection_rate):
            if self._injected >= self.config.packets_total:
                break
            dest = self._non_gateways[self._inject_rng.randrange(len(self._non_gateways))]
            packet = Packet(
                self._injected, dest, self.config.budget, self.config.fine, self.config.ttl
            )
            self._injected += 1
            self._process_packet(packet)
        for pack in sorted(self._packs):
            merge_pack([self.contexts[n].observer for n in self._packs[pack]])  # type: ignore[misc]
        if self.config.churn_rate > 0:
            self.graph = churn(
                self.graph,
                self.config.churn_rate,
                derive_seed(self.config.master_seed, "churn", self.round),
            )
            self._rebuild_views()
        self.round += 1
        return True

    def run(self) -> SimulationResult:
        while self.step_round():
            pass
        return SimulationResult(
            config=self.config,
            strategy_names={n: s.name for n, s in self.strategies.items()},
            events=self.events,
            balances=self.balances,
            backbone_balance=self.backbone_balance,
            stats=self.stats,
            settlements=self.settlements,
            rounds=self.round,
        )

    def _process_packet(self, packet: Packet) -> None:
        ledger = PathLedger(packet.packet_id)
        holder = BACKBONE
        promise_in = packet.budget
        ttl_remaining = packet.ttl
        prev_advertised: int | None = None

        while True:
            if holder != BACKBONE and packet.destination in self.graph.neighbors(holder):
                self._deliver(packet, ledger, holder)
                return
            if ttl_remaining < 1:
                self._drop(packet, ledger, "ttl")
                return
            if holder != BACKBONE:
                strat = self.strategies[holder]
                if strat.on_hold(packet, ledger, self.contexts[holder]):
                    self._drop(packet, ledger, "deliberate")
                    return
            request = self._announce(packet, holder, promise_in, ttl_remaining, prev_advertised)
            bids = self._collect_bids(request, ledger)
            chooser = None
            if holder != BACKBONE:
                holder_strategy = self.strategies[holder]
                holder_ctx = self.contexts[holder]
                chooser = lambda req, bs: holder_strategy.choose_winner(req, bs, holder_ctx)
            winner = run_auction(request, bids, chooser)
            if winner is None:
                self._drop(packet, ledger, "no-winner" if ledger.entries else "cancelled")
                return
            ledger = advance_hop(ledger, winner)
            ttl_remaining -= 1
            self._emit(
                EventKind.BID_WON, packet.packet_id, winner.bidder, winner.amount, holder
            )
            promise_in = winner.amount
            prev_advertised = request.hop_distance
            holder = winner.bidder

    def _announce(
        self,
        packet: Packet,
        holder: NodeId,
        promise_in: Money,
        ttl_remaining: int,
        prev_advertised: int | None,
    ) -> AuctionRequest:
        if holder == BACKBONE:
            ceiling = packet.budget
            advertised = self._backbone_distance(packet.destination)
        else:
            ctx = self.contexts[holder]
            raw = self.strategies[holder].announce_ceiling(
                packet, promise_in, prev_advertised, ctx
            )
            ceiling = min(promise_in, max(0, int(raw)))
            advertised = ctx.view.distance(holder, packet.destination)
        request = AuctionRequest(
            packet_id=packet.packet_id,
            destination=packet.destination,
            ceiling=ceiling,
            fine=packet.fine,
            ttl_remaining=ttl_remaining,
            holder=holder,
            hop_distance=advertised,
        )
        self._emit(
            EventKind.AUCTION_ANNOUNCED,
            packet.packet_id,
            holder,
            ceiling,
            holder,
            format_extra(dest=packet.destination, dist=advertised, prev=promise_in),
        )
        return request

    def _collect_bids(self, request: AuctionRequest, ledger: PathLedger) -> list[Bid]:
        holder = request.holder
        neighbors = self.graph.gateways if holder == BACKBONE else self.graph.neighbors(holder)
        path_nodes = set(ledger.nodes)
        bids: list[Bid] = []
        for node in sorted(neighbors):
            if node in path_nodes:
                continue
            amount = self.strategies[node].on_auction(request, self.contexts[node])
            if amount is None:
                if self.config.forced_bid_mode:
                    raise EngineError(
                        f"node {node} ({self.strategies[node].name}) abstained "
                        "under forced-bid mode"
                    )
                continue
            bid = Bid(node, int(amount))
            if validate_bid(request, bid, path_nodes, neighbors) is not None:
                continue  # strategies we ship never hit this; drop bad bids
            bids.append(bid)
            self._emit(EventKind.BID_PLACED, request.packet_id, node, bid.amount, node)
        return bids

    def _deliver(self, packet: Packet, ledger: PathLedger, holder: NodeId) -> None:
        ledger = ledger.closed(LedgerStatus.DELIVERED)
        result = settle_delivery(ledger)
        self.settlements.append(result)
        self._emit(
            EventKind.DELIVERED,
            packet.packet_id,
            holder,
            ledger.promises[0],
            holder,
            format_extra(dest=packet.destination),
        )
        for node, _ in ledger.entries:
            delta = result.deltas[node]
            if delta != 0:
                self._emit(EventKind.PAYMENT, packet.packet_id, node, delta, node)
            self.balances[node] += delta
            self.stats[node].delivered += 1
        self.backbone_balance += result.backbone_delta

    def _drop(self, packet: Packet, ledger: PathLedger, reason: str) -> None:
        ledger = ledger.closed(LedgerStatus.DROPPED)
        if not ledger.entries:
            # Nobody ever took custody: cancelled, no fine.
            self.settlements.append(
                SettlementResult(packet.packet_id, LedgerStatus.DROPPED, {}, 0, {})
            )
            self._emit(
                EventKind.DROPPED, packet.packet_id, BACKBONE, 0, BACKBONE,
                format_extra(reason="cancelled"),
            )
            return
        result = settle_drop(ledger, packet.fine, self.config.fine_mode)
        self.settlements.append(result)
        dropper = ledger.last_node
        self._emit(
            EventKind.DROPPED, packet.packet_id, dropper, packet.fine, dropper,
            format_extra(reason=reason),
        )
        self.stats[dropper].dropped += 1
        for node in ledger.nodes:
            share = result.fine_shares.get(node, 0)
            if share:
                self._emit(EventKind.FINE_ASSESSED, packet.packet_id, node, share, node)
                self.balances[node] -= share
                self.stats[node].fines_paid += share
        self.backbone_balance += result.backbone_delta


def run_simulation(
    config: GameConfig,
    graph: TopologyGraph,
    assignment: dict[NodeId, Strategy],
    predictor: PredictorConfig | None = None,
) -> SimulationResult:
    """Build and run one simulation to completion."""
    return Simulation(config, graph, assignment, predictor).run()
