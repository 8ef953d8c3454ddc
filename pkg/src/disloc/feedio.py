"""Feed-event file IO: line grammar, ordered merge, and symbol metadata.

Record grammar (one event per line, UTF-8, LF):

    Q,<ts_ns>,<symbol>,<source>,<bid_1e-4usd>,<bid_shares>,<offer_1e-4usd>,<offer_shares>
    T,<ts_ns>,<symbol>,SIP,<price_1e-4usd>,<shares>

with <source> either ``SIP`` or ``D:<EXCH>`` (EXCH in [A-Z]{1,8}) and an
absent quote side encoded as ``0,0``.  An optional first line of the form
``#v1 date=<iso-date> symbols=<n>`` carries the file header.
"""

from __future__ import annotations

import csv
import heapq
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .model import (
    CATEGORIES,
    FeedEvent,
    Quote,
    SIP_SOURCE,
    SymbolMeta,
    TradeMsg,
    is_sip,
    valid_source,
)

_HEADER_RE = re.compile(r"^#v(\d+) date=(\S+) symbols=(\d+)$")
KNOWN_VERSIONS = (1,)


class FeedFormatError(ValueError):
    """A feed or metadata file violates its documented format."""

    def __init__(self, msg: str, file: str | None = None, line: int | None = None):
        self.file = file
        self.line = line
        where = ""
        if file is not None:
            where = f" [{file}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(msg + where)


class ParseError(FeedFormatError):
    """A record field failed to parse; carries field name and byte offset."""

    def __init__(self, field: str, offset: int, reason: str, **ctx):
        self.field = field
        self.offset = offset
        super().__init__(f"{field}: {reason} (byte {offset})", **ctx)


class StreamOrderError(FeedFormatError):
    """An input file is not sorted by timestamp."""


@dataclass(frozen=True)
class EventFileHeader:
    version: int = 1
    date: str | None = None
    symbol_count: int | None = None

    def line(self) -> str:
        return f"#v{self.version} date={self.date or 'unknown'} symbols={self.symbol_count or 0}"


def _int_field(fields: list[str], idx: int, name: str, **ctx) -> int:
    raw = fields[idx]
    offset = sum(len(f) + 1 for f in fields[:idx])
    try:
        value = int(raw)
    except ValueError:
        raise ParseError(name, offset, "not an integer", **ctx) from None
    if value < 0:
        raise ParseError(name, offset, "must be non-negative", **ctx)
    return value


def parse_event(record: str, **ctx) -> FeedEvent:
    """Decode one record line; lossless inverse of write_event."""
    fields = record.rstrip("\n").split(",")
    kind = fields[0]
    if kind == "Q":
        if len(fields) != 8:
            raise ParseError("record", 0, f"quote needs 8 fields, got {len(fields)}", **ctx)
        ts = _int_field(fields, 1, "ts", **ctx)
        symbol = fields[2]
        source = fields[3]
        if not symbol or any(c.isspace() for c in symbol):
            raise ParseError("symbol", len(fields[0]) + len(fields[1]) + 2, "empty or has whitespace", **ctx)
        if not valid_source(source):
            offset = sum(len(f) + 1 for f in fields[:3])
            raise ParseError("source", offset, f"unknown source tag {source!r}", **ctx)
        quote = Quote(
            bid=_int_field(fields, 4, "bid", **ctx),
            bid_size=_int_field(fields, 5, "bid_shares", **ctx),
            offer=_int_field(fields, 6, "offer", **ctx),
            offer_size=_int_field(fields, 7, "offer_shares", **ctx),
        )
        return FeedEvent(ts=ts, symbol=symbol, source=source, payload=quote)
    if kind == "T":
        if len(fields) != 6:
            raise ParseError("record", 0, f"trade needs 6 fields, got {len(fields)}", **ctx)
        ts = _int_field(fields, 1, "ts", **ctx)
        symbol = fields[2]
        source = fields[3]
        if not symbol or any(c.isspace() for c in symbol):
            raise ParseError("symbol", len(fields[0]) + len(fields[1]) + 2, "empty or has whitespace", **ctx)
        if source != SIP_SOURCE:
            offset = sum(len(f) + 1 for f in fields[:3])
            raise ParseError("source", offset, f"trades must carry SIP, got {source!r}", **ctx)
        price = _int_field(fields, 4, "price", **ctx)
        volume = _int_field(fields, 5, "shares", **ctx)
        trade = TradeMsg(price=price, volume=volume, ts=ts, symbol=symbol)
        return FeedEvent(ts=ts, symbol=symbol, source=source, payload=trade)
    raise ParseError("record", 0, f"unknown record type {kind!r}", **ctx)


def write_event(event: FeedEvent) -> str:
    p = event.payload
    if isinstance(p, Quote):
        return (f"Q,{event.ts},{event.symbol},{event.source},"
                f"{p.bid},{p.bid_size},{p.offer},{p.offer_size}")
    return f"T,{event.ts},{event.symbol},SIP,{p.price},{p.volume}"


def parse_header(line: str) -> EventFileHeader:
    m = _HEADER_RE.match(line.rstrip("\n"))
    if not m:
        raise FeedFormatError(f"bad header line {line!r}")
    version = int(m.group(1))
    if version not in KNOWN_VERSIONS:
        raise FeedFormatError(f"unrecognized format version {version}")
    date = m.group(2)
    return EventFileHeader(
        version=version,
        date=None if date == "unknown" else date,
        symbol_count=int(m.group(3)),
    )


def read_header(path: str | Path) -> EventFileHeader:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("#"):
        return parse_header(first)
    return EventFileHeader()


def iter_events(path: str | Path, check_sorted: bool = True) -> Iterator[FeedEvent]:
    """Stream events from one file, enforcing per-file ts order."""
    name = str(path)
    last_ts = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if line.startswith("#"):
                if lineno == 1:
                    parse_header(line)  # validates version
                    continue
                raise FeedFormatError("header allowed only on line 1", file=name, line=lineno)
            event = parse_event(line, file=name, line=lineno)
            if check_sorted and event.ts < last_ts:
                raise StreamOrderError(
                    f"ts inversion: {event.ts} after {last_ts}", file=name, line=lineno,
                )
            last_ts = event.ts
            yield event


def write_events(
    path: str | Path,
    events: Iterable[FeedEvent],
    date: str | None = None,
) -> int:
    """Write a header plus one record per line; returns the event count."""
    events = list(events)
    symbols = {e.symbol for e in events}
    header = EventFileHeader(version=1, date=date, symbol_count=len(symbols))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header.line() + "\n")
        for e in events:
            fh.write(write_event(e) + "\n")
    return len(events)


def merge_key(event: FeedEvent) -> tuple:
    """Tie-break at equal ts: SIP before DIRECT, then exchange id."""
    if is_sip(event.source):
        return (event.ts, 0, "")
    return (event.ts, 1, event.source[2:])


def merged_stream(sources) -> Iterator[FeedEvent]:
    """Merge per-file sorted event streams into one global stream.

    ``sources`` is a sequence of file paths or event iterables.  Output is
    non-decreasing in ts with ties broken by (SIP first, exchange id, source
    order); memory stays independent of total event count.
    """
    iters: list[Iterator[FeedEvent]] = []
    for src in sources:
        if isinstance(src, (str, Path)):
            iters.append(iter_events(src))
        else:
            iters.append(iter(src))

    heap: list[tuple] = []
    for file_idx, it in enumerate(iters):
        first = next(it, None)
        if first is not None:
            heap.append((*merge_key(first), file_idx, 0, first))
    heapq.heapify(heap)
    seqs = [1] * len(iters)
    while heap:
        *_, file_idx, _seq, event = heapq.heappop(heap)
        yield event
        nxt = next(iters[file_idx], None)
        if nxt is not None:
            heapq.heappush(heap, (*merge_key(nxt), file_idx, seqs[file_idx], nxt))
            seqs[file_idx] += 1


def load_symbol_meta(path: str | Path) -> dict[str, SymbolMeta]:
    """Load the ticker,market_cap,sector,category CSV into a map."""
    name = str(path)
    out: dict[str, SymbolMeta] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["ticker", "market_cap", "sector", "category"]:
            raise FeedFormatError("expected header ticker,market_cap,sector,category", file=name, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FeedFormatError(f"expected 4 columns, got {len(row)}", file=name, line=lineno)
            ticker, cap_raw, sector, category = (c.strip() for c in row)
            if ticker in out:
                raise FeedFormatError(f"duplicate ticker {ticker!r}", file=name, line=lineno)
            if category not in CATEGORIES:
                raise FeedFormatError(f"unknown category tag {category!r}", file=name, line=lineno)
            cap: int | None = None
            if cap_raw:
                try:
                    cap = int(cap_raw)
                except ValueError:
                    raise FeedFormatError(f"market_cap not an integer: {cap_raw!r}",
                                          file=name, line=lineno) from None
                if cap <= 0:
                    raise FeedFormatError("market_cap must be positive", file=name, line=lineno)
            out[ticker] = SymbolMeta(ticker=ticker, market_cap=cap, sector=sector, category=category)
    return out


def write_symbol_meta(path: str | Path, metas: Sequence[SymbolMeta]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", "market_cap", "sector", "category"])
        for m in metas:
            writer.writerow([m.ticker, m.market_cap if m.market_cap is not None else "", m.sector, m.category])
