"""Historical bid prediction and binary-search bid probing.

The predictor keeps a bounded history of observed bids arranged by the two
attributes an auction exposes (the hop count and the maximum allowed bid),
finds past bids within a normalized Euclidean distance epsilon of the
current query, and undercuts the smallest of them by one point, never going
below a configured floor. The floor keeps the output useful even when
observed bids have collapsed to zero.

The prober discovers a fixed rival bid under lowest-bid-wins by bisecting:
start at the center of [lo, hi]; after a win the unknown rival lies above,
so lo rises to the last bid; after a loss hi falls to it.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .model import Money


@dataclass(frozen=True)
class PredictorConfig:
    """Tuning knobs for the bid history and its queries.

    ``budget_norm`` and ``ttl_norm`` are the run's budget and TTL; both query
    axes are divided by them so epsilon is scale-free across configurations.
    """

    epsilon: float = 0.15
    min_bid_floor: Money = 1
    max_history: int = 128
    max_age_rounds: int = 512
    budget_norm: Money = 100
    ttl_norm: int = 8
    fallback_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.min_bid_floor < 1:
            raise ValueError("min_bid_floor must be >= 1")
        if self.max_history < 1:
            raise ValueError("max_history must be >= 1")
        if self.max_age_rounds < 0:
            raise ValueError("max_age_rounds must be >= 0")
        if self.budget_norm < 1 or self.ttl_norm < 1:
            raise ValueError("normalization constants must be >= 1")
        if not 0.0 <= self.fallback_fraction <= 1.0:
            raise ValueError("fallback_fraction must be in [0, 1]")


@dataclass(frozen=True)
class BidHistoryPoint:
    max_allowed: Money
    hop_count: int
    observed_bid: Money
    round: int

    def __post_init__(self) -> None:
        if self.observed_bid > self.max_allowed:
            raise ValueError("observed bid exceeds its auction ceiling")
        if self.observed_bid < 0 or self.max_allowed < 0:
            raise ValueError("bids and ceilings are non-negative")


class BidHistory:
    """Bounded, age-limited store of observed bids."""

    def __init__(self, cfg: PredictorConfig):
        self.cfg = cfg
        self._points: deque[BidHistoryPoint] = deque(maxlen=cfg.max_history)

    def __len__(self) -> int:
        return len(self._points)

    def record(self, point: BidHistoryPoint) -> None:
        """Append a point; evict beyond-capacity and over-age points."""
        self._points.append(point)
        cutoff = point.round - self.cfg.max_age_rounds
        while self._points and self._points[0].round < cutoff:
            self._points.popleft()

    def points(self, now_round: int | None = None) -> list[BidHistoryPoint]:
        """Live points, age-filtered relative to ``now_round`` when given."""
        if now_round is None:
            return list(self._points)
        cutoff = now_round - self.cfg.max_age_rounds
        return [p for p in self._points if p.round >= cutoff]

    def to_csv(self) -> str:
        lines = ["round,max_allowed,hop_count,observed_bid"]
        lines.extend(
            f"{p.round},{p.max_allowed},{p.hop_count},{p.observed_bid}"
            for p in self._points
        )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, cfg: PredictorConfig) -> "BidHistory":
        history = cls(cfg)
        rows = [line for line in text.splitlines() if line.strip()]
        for line in rows[1:]:
            rnd, max_allowed, hop_count, bid = (int(tok) for tok in line.split(","))
            history.record(BidHistoryPoint(max_allowed, hop_count, bid, rnd))
        return history


def neighborhood(
    history: BidHistory,
    max_allowed: Money,
    hop_count: int,
    now_round: int | None = None,
) -> list[BidHistoryPoint]:
    """History points within epsilon of the query in normalized space."""
    cfg = history.cfg
    qa = max_allowed / cfg.budget_norm
    qh = hop_count / cfg.ttl_norm
    out = []
    for p in history.points(now_round):
        da = p.max_allowed / cfg.budget_norm - qa
        dh = p.hop_count / cfg.ttl_norm - qh
        if math.hypot(da, dh) <= cfg.epsilon:
            out.append(p)
    return out


def predict_bid(
    history: BidHistory,
    max_allowed: Money,
    hop_count: int,
    now_round: int | None = None,
) -> Money:
    """Smallest-undercut bid for the queried auction scenario.

    One below the minimum bid seen in the epsilon-neighborhood, clamped to
    [min_bid_floor, max_allowed]; with no neighbors, a fallback fraction of
    the ceiling, clamped the same way.
    """
    if max_allowed < 1:
        raise ValueError("query max_allowed must be >= 1")
    cfg = history.cfg
    nearby = neighborhood(history, max_allowed, hop_count, now_round)
    if nearby:
        raw = min(p.observed_bid for p in nearby) - 1
    else:
        raw = int(max_allowed * cfg.fallback_fraction)
    return min(max_allowed, max(cfg.min_bid_floor, raw))


@dataclass(frozen=True)
class ProberState:
    """Bisection interval; ``last_bid`` is the bid currently in play."""

    lo: Money
    hi: Money
    last_bid: Money

    def __post_init__(self) -> None:
        if not self.lo <= self.last_bid <= self.hi:
            raise ValueError("prober bid escaped its interval")

    @property
    def width(self) -> Money:
        return self.hi - self.lo


def prober_start(lo: Money, hi: Money) -> ProberState:
    """Initial state: bid the center of the allowed range."""
    if lo > hi:
        raise ValueError("prober range is empty")
    return ProberState(lo, hi, (lo + hi) // 2)


def prober_next(state: ProberState, won: bool) -> ProberState:
    """Fold one auction outcome into the interval and pick the next bid.

    Winning means the rival bid lies above ours (lowest bid wins), so the
    floor rises; losing drops the ceiling.
    """
    lo, hi = (state.last_bid, state.hi) if won else (state.lo, state.last_bid)
    return ProberState(lo, hi, (lo + hi) // 2)
