"""Quote-dislocation detection and realized opportunity cost toolkit.

Detects intervals where the consolidated SIP quote and a synthetic
direct-feed BBO disagree, prices the trades that execute during them, and
ships a deterministic feed-topology simulator whose analytic ground truth
verifies the whole pipeline.
"""

from .bbo import ConsolidatedBBO, ExchangeBook, apply_sip_quote
from .detector import (
    DislocationDetector,
    DislocationSegment,
    Ordering,
    SegmentSummary,
    condition,
    read_segments,
    summarize,
    write_segments,
)
from .model import (
    CENT,
    DAY_NS,
    FeedEvent,
    PRICE_SCALE,
    Quote,
    SESSION_CLOSE_NS,
    SESSION_OPEN_NS,
    Side,
    SymbolMeta,
    TradeMsg,
    parse_price,
    price_str,
    usd_str,
    validate_event,
)
from .feedio import (
    FeedFormatError,
    ParseError,
    StreamOrderError,
    iter_events,
    load_symbol_meta,
    merged_stream,
    parse_event,
    write_event,
    write_events,
)
from .pipeline import PipelineResult, run_reference
from .roc import (
    MatchedSide,
    PurseReport,
    PurseRow,
    RocRecord,
    aggregate_purse,
    classify_trade,
)
from .sim import SimConfig, SymbolProcess, Topology, replay_figure2, simulate

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
