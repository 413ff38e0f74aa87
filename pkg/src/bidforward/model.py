"""Shared domain vocabulary: money, node identities, packets, auctions, ledgers, events.

All currency is integer points. Payments, bids, budgets and fines are
non-negative; only running node balances may go negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

Money = int
NodeId = int

#: Virtual wired-infrastructure node. Injects packets, pays delivery
#: promises, collects fines. Never bids, never forwards.
BACKBONE: NodeId = -1


class ModelError(ValueError):
    """Raised when a domain value violates its invariants."""


@dataclass(frozen=True)
class Packet:
    """One forwarding task handed to the ad-hoc network by the backbone."""

    packet_id: int
    destination: NodeId
    budget: Money
    fine: Money
    ttl: int

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ModelError(f"packet {self.packet_id}: budget must be >= 1")
        if self.fine < 0:
            raise ModelError(f"packet {self.packet_id}: fine must be >= 0")
        if self.ttl < 1:
            raise ModelError(f"packet {self.packet_id}: ttl must be >= 1")
        if self.destination < 0:
            raise ModelError(f"packet {self.packet_id}: destination must be a real node")


@dataclass(frozen=True)
class AuctionRequest:
    """One hop's sealed-bid auction announcement.

    ``hop_distance`` is the holder's shortest-hop distance to the
    destination as the holder advertises it; ``None`` when the holder
    cannot see a route in its own view.
    """

    packet_id: int
    destination: NodeId
    ceiling: Money
    fine: Money
    ttl_remaining: int
    holder: NodeId
    hop_distance: int | None

    def __post_init__(self) -> None:
        if self.ceiling < 0:
            raise ModelError(f"auction for packet {self.packet_id}: ceiling must be >= 0")
        if self.ttl_remaining < 1:
            raise ModelError(f"auction for packet {self.packet_id}: ttl_remaining must be >= 1")


@dataclass(frozen=True)
class Bid:
    bidder: NodeId
    amount: Money

    def __post_init__(self) -> None:
        if self.bidder < 0:
            raise ModelError("the backbone never bids")
        if self.amount < 0:
            raise ModelError(f"bid by {self.bidder}: amount must be >= 0")


class LedgerStatus(str, Enum):
    IN_FLIGHT = "in-flight"
    DELIVERED = "delivered"
    DROPPED = "dropped"


@dataclass(frozen=True)
class PathLedger:
    """Chain of (node, promised amount) pairs a packet accumulated so far.

    Promises are non-increasing along the path and no node appears twice;
    settlement is defined over this chain.
    """

    packet_id: int
    entries: tuple[tuple[NodeId, Money], ...] = ()
    status: LedgerStatus = LedgerStatus.IN_FLIGHT

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return tuple(node for node, _ in self.entries)

    @property
    def promises(self) -> tuple[Money, ...]:
        return tuple(promise for _, promise in self.entries)

    @property
    def last_node(self) -> NodeId | None:
        return self.entries[-1][0] if self.entries else None

    @property
    def last_promise(self) -> Money | None:
        return self.entries[-1][1] if self.entries else None

    def extended(self, node: NodeId, promise: Money) -> "PathLedger":
        """Return a new ledger with ``(node, promise)`` appended."""
        if self.status is not LedgerStatus.IN_FLIGHT:
            raise ModelError(f"ledger for packet {self.packet_id} is closed")
        if node in self.nodes:
            raise ModelError(f"node {node} already on path of packet {self.packet_id}")
        if promise < 0:
            raise ModelError("promise must be >= 0")
        if self.entries and promise > self.entries[-1][1]:
            raise ModelError(
                f"promise {promise} exceeds incoming promise {self.entries[-1][1]}"
            )
        return PathLedger(self.packet_id, self.entries + ((node, promise),), self.status)

    def closed(self, status: LedgerStatus) -> "PathLedger":
        return PathLedger(self.packet_id, self.entries, status)


class EventKind(str, Enum):
    AUCTION_ANNOUNCED = "auction-announced"
    BID_PLACED = "bid-placed"
    BID_WON = "bid-won"
    DELIVERED = "delivered"
    DROPPED = "dropped"
    FINE_ASSESSED = "fine-assessed"
    PAYMENT = "payment"


@dataclass(frozen=True)
class GameEvent:
    """One observable game occurrence.

    ``location`` is the node where the event physically happened; it scopes
    which observers can hear it. ``(round, seq)`` totally orders the log.
    """

    round: int
    seq: int
    kind: EventKind
    packet_id: int
    node: NodeId
    amount: Money
    location: NodeId
    extra: str = ""

    @property
    def event_id(self) -> tuple[int, int]:
        return (self.round, self.seq)

    def to_line(self) -> str:
        return (
            f"{self.round},{self.kind.value},{self.packet_id},"
            f"{self.node},{self.amount},{self.extra}"
        )


#: Header for the line-delimited event log.
EVENT_LOG_HEADER = "round,kind,packet_id,node,amount,extra"


def events_to_log(events: Iterable[GameEvent]) -> str:
    """Render events as the line-delimited log format, header included."""
    lines = [EVENT_LOG_HEADER]
    lines.extend(e.to_line() for e in events)
    return "\n".join(lines) + "\n"


def parse_extra(extra: str) -> dict[str, str]:
    """Decode the semicolon-joined ``key=value`` pairs of an event's extra field."""
    out: dict[str, str] = {}
    if not extra:
        return out
    for pair in extra.split(";"):
        if "=" in pair:
            key, value = pair.split("=", 1)
            out[key] = value
    return out


def format_extra(**fields: object) -> str:
    return ";".join(f"{k}={v}" for k, v in fields.items() if v is not None)


# validate_bid rejection reasons
REJECT_OVER_CEILING = "over-ceiling"
REJECT_ON_PATH = "on-path"
REJECT_NOT_NEIGHBOR = "not-neighbor"


def validate_bid(
    request: AuctionRequest,
    bid: Bid,
    path_nodes: Iterable[NodeId],
    holder_neighbors: Iterable[NodeId],
) -> str | None:
    """Check a bid against an open auction.

    Returns ``None`` when accepted, otherwise one of the rejection reason
    constants. ``holder_neighbors`` are the 1-hop neighbors of the current
    holder (the gateway set when the backbone holds the packet).
    """
    if bid.amount > request.ceiling:
        return REJECT_OVER_CEILING
    if bid.bidder in path_nodes:
        return REJECT_ON_PATH
    if bid.bidder not in holder_neighbors:
        return REJECT_NOT_NEIGHBOR
    return None
