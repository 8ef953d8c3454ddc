"""Shared market-data types, units, and validity rules.

Prices are signed integers in units of 1e-4 USD (one cent = 100 units) so
that all magnitude and opportunity-cost arithmetic stays exact; conversion
to decimal USD happens only when rendering reports.  Timestamps are integer
nanoseconds since session midnight on a single observer clock.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum

PRICE_SCALE = 10_000          # price units per USD
CENT = 100                    # one cent in price units
DAY_NS = 86_400_000_000_000   # 24h session bound
SESSION_OPEN_NS = 34_200_000_000_000   # 09:30:00
SESSION_CLOSE_NS = 57_600_000_000_000  # 16:00:00

SIP_SOURCE = "SIP"
_SOURCE_RE = re.compile(r"^(SIP|D:[A-Z]{1,8})$")
_EXCH_RE = re.compile(r"^[A-Z]{1,8}$")


class Side(Enum):
    BID = "BID"
    OFFER = "OFFER"


def is_sip(source: str) -> bool:
    return source == SIP_SOURCE


def exchange_of(source: str) -> str | None:
    """Exchange id of a direct-feed source tag, or None for the SIP."""
    return source[2:] if source.startswith("D:") else None


def direct_source(exchange: str) -> str:
    if not _EXCH_RE.match(exchange):
        raise ValueError(f"bad exchange id {exchange!r}")
    return f"D:{exchange}"


def valid_source(source: str) -> bool:
    return bool(_SOURCE_RE.match(source))


def price_str(units: int) -> str:
    """Render an integer price as a fixed 4-decimal USD string."""
    sign = "-" if units < 0 else ""
    units = abs(units)
    return f"{sign}{units // PRICE_SCALE}.{units % PRICE_SCALE:04d}"


def parse_price(text: str) -> int:
    """Parse a decimal USD string into integer 1e-4 USD units.

    Inverse of price_str for every representable value; accepts up to four
    fractional digits.
    """
    text = text.strip()
    neg = text.startswith("-")
    if neg:
        text = text[1:]
    whole, _, frac = text.partition(".")
    if not whole.isdigit() or (frac and not frac.isdigit()):
        raise ValueError(f"bad price literal {text!r}")
    if len(frac) > 4:
        raise ValueError(f"price {text!r} has sub-1e-4 precision")
    units = int(whole) * PRICE_SCALE + int(frac.ljust(4, "0") or 0)
    return -units if neg else units


def usd_str(units: int, thousands: bool = True) -> str:
    """Render integer 1e-4 USD units as a 2-decimal USD amount (exact)."""
    cents = (Decimal(units) / PRICE_SCALE).quantize(Decimal("0.01"), ROUND_HALF_EVEN)
    return f"{cents:,.2f}" if thousands else f"{cents:.2f}"


@dataclass(frozen=True, slots=True)
class Quote:
    """Top-of-book quote; a zero price with zero size marks an absent side.

    Locked and crossed quotes (bid >= offer) are legal inputs: they occur in
    replayed consolidated data and must flow through the pipeline untouched.
    """

    bid: int
    bid_size: int
    offer: int
    offer_size: int

    @property
    def has_bid(self) -> bool:
        return self.bid > 0

    @property
    def has_offer(self) -> bool:
        return self.offer > 0


@dataclass(frozen=True, slots=True)
class TradeMsg:
    price: int
    volume: int
    ts: int
    symbol: str
    venue: str | None = None    # executing exchange when known; not on the tape


@dataclass(frozen=True, slots=True)
class FeedEvent:
    """One timestamped quote or trade message from a named feed."""

    ts: int
    symbol: str
    source: str                 # "SIP" or "D:<EXCH>"
    payload: Quote | TradeMsg

    @property
    def is_quote(self) -> bool:
        return isinstance(self.payload, Quote)

    @property
    def is_trade(self) -> bool:
        return isinstance(self.payload, TradeMsg)


CATEGORIES = ("DOW", "SPEXDOW", "REXSP", "ETF", "OTHER")


@dataclass(frozen=True, slots=True)
class SymbolMeta:
    ticker: str
    market_cap: int | None      # USD; None when not provided
    sector: str
    category: str               # one of CATEGORIES


def validate_event(event: FeedEvent) -> str | None:
    """Return the first violated invariant as text, or None when well formed.

    Violations are ordinary return values, never exceptions: replayed feeds
    contain oddities (locked/crossed quotes) that are valid inputs, and the
    caller decides what to do with genuinely bad records.
    """
    if event.ts < 0:
        return "ts must be non-negative"
    if event.ts >= DAY_NS:
        return "ts beyond 24h session"
    if not event.symbol:
        return "symbol must be non-empty"
    if not valid_source(event.source):
        return f"unrecognized source tag {event.source!r}"
    p = event.payload
    if isinstance(p, Quote):
        if p.bid < 0 or p.offer < 0:
            return "price must be non-negative"
        if p.bid_size < 0 or p.offer_size < 0:
            return "size must be non-negative"
        if p.bid == 0 and p.bid_size != 0:
            return "absent bid must have zero size"
        if p.offer == 0 and p.offer_size != 0:
            return "absent offer must have zero size"
        return None
    if isinstance(p, TradeMsg):
        if p.volume <= 0:
            return "volume must be positive"
        if p.price <= 0:
            return "price must be positive"
        if not is_sip(event.source):
            return "trades must arrive on the SIP tape"
        return None
    return f"unknown payload type {type(p).__name__}"
