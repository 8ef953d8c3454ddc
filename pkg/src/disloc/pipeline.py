"""Reference streaming engine: merged events in, segments and ROC records out.

This is the plain-objects implementation of the detection and accounting
semantics; the vectorized engine in fast.py must produce identical output
and is cross-checked against this one in the test suite.

Events sharing a timestamp are handled as one group: all quote updates are
applied first (in merged-stream order), then the group's trades are
classified against the resulting state.  A trade at ts T therefore sees
every quote with ts <= T, including same-instant updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .bbo import EMPTY_BBO, ConsolidatedBBO, ExchangeBook, apply_sip_quote
from .detector import DislocationDetector, DislocationSegment
from .model import FeedEvent, Quote, TradeMsg, is_sip
from .roc import RocRecord, classify_trade


class _SymbolState:
    __slots__ = ("book", "sip", "dbbo", "detector")

    def __init__(self, symbol: str) -> None:
        self.book = ExchangeBook()
        self.sip: ConsolidatedBBO = EMPTY_BBO
        self.dbbo: ConsolidatedBBO = EMPTY_BBO
        self.detector = DislocationDetector(symbol)


@dataclass
class PipelineResult:
    segments: list[DislocationSegment] = field(default_factory=list)
    roc_records: list[RocRecord] = field(default_factory=list)
    events: int = 0
    last_ts: int = 0


def _ts_groups(events: Iterable[FeedEvent]) -> Iterator[list[FeedEvent]]:
    group: list[FeedEvent] = []
    for event in events:
        if group and event.ts != group[0].ts:
            yield group
            group = []
        group.append(event)
    if group:
        yield group


def run_reference(events: Iterable[FeedEvent], session_end: int | None = None) -> PipelineResult:
    """Run detection and trade classification over a merged event stream.

    session_end closes still-open segments (flagged truncated); it defaults
    to the timestamp of the last event seen.
    """
    states: dict[str, _SymbolState] = {}
    result = PipelineResult()

    for group in _ts_groups(events):
        ts = group[0].ts
        trades: list[tuple[_SymbolState, TradeMsg]] = []
        touched: dict[str, _SymbolState] = {}
        for event in group:
            state = states.get(event.symbol)
            if state is None:
                state = states[event.symbol] = _SymbolState(event.symbol)
            result.events += 1
            payload = event.payload
            if isinstance(payload, TradeMsg):
                trades.append((state, payload))
                continue
            assert isinstance(payload, Quote)
            if is_sip(event.source):
                state.sip = apply_sip_quote(payload, ts)
            else:
                state.dbbo = state.book.apply_direct_quote(event.source[2:], payload, ts)
            touched[event.symbol] = state
        # Same-instant updates are atomic: the detector sees one state per
        # distinct timestamp, after all of that instant's quotes applied.
        for state in touched.values():
            result.segments.extend(state.detector.step(ts, state.sip, state.dbbo))
        for state, trade in trades:
            result.roc_records.append(
                classify_trade(trade, state.sip, state.dbbo, state.detector.any_open))
        result.last_ts = ts

    end = result.last_ts if session_end is None else max(session_end, result.last_ts)
    for state in states.values():
        result.segments.extend(state.detector.finalize(end))
    result.segments.sort(key=DislocationSegment.sort_key)
    result.roc_records.sort(key=RocRecord.sort_key)
    return result
