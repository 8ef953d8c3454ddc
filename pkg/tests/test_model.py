import numpy as np
import pytest

from disloc.model import (
    DAY_NS,
    FeedEvent,
    Quote,
    TradeMsg,
    parse_price,
    price_str,
    usd_str,
    validate_event,
)
from disloc.pipeline import run_reference


def quote_event(ts=34_200_000_000_000, symbol="AAPL", source="SIP",
                bid=100_000, bid_size=300, offer=100_100, offer_size=200):
    return FeedEvent(ts=ts, symbol=symbol, source=source,
                     payload=Quote(bid, bid_size, offer, offer_size))


def test_well_formed_quote_ok():
    assert validate_event(quote_event()) is None


def test_zero_volume_trade_rejected():
    ev = FeedEvent(ts=1, symbol="AAPL", source="SIP",
                   payload=TradeMsg(price=100_000, volume=0, ts=1, symbol="AAPL"))
    assert validate_event(ev) == "volume must be positive"


def test_crossed_quote_is_legal_and_flows_through_pipeline():
    # Crossed markets occur in replayed consolidated data; nothing may
    # reject them.  Run one through the full reference pipeline.
    crossed = quote_event(bid=100_100, offer=100_000)
    assert validate_event(crossed) is None
    direct = quote_event(ts=crossed.ts, source="D:NYSE", bid=100_100, offer=100_000)
    trade = FeedEvent(ts=crossed.ts + 1_000, symbol="AAPL", source="SIP",
                      payload=TradeMsg(price=100_100, volume=100,
                                       ts=crossed.ts + 1_000, symbol="AAPL"))
    result = run_reference([crossed, direct, trade])
    assert result.events == 3
    assert result.segments == []           # feeds agree, crossed or not
    assert len(result.roc_records) == 1


def test_trade_on_direct_source_rejected():
    ev = FeedEvent(ts=1, symbol="AAPL", source="D:NYSE",
                   payload=TradeMsg(price=100_000, volume=10, ts=1, symbol="AAPL"))
    assert validate_event(ev) == "trades must arrive on the SIP tape"


def test_absent_side_must_have_zero_size():
    assert validate_event(quote_event(bid=0, bid_size=100)) == "absent bid must have zero size"
    assert validate_event(quote_event(bid=0, bid_size=0)) is None


def test_ts_bounds():
    assert validate_event(quote_event(ts=DAY_NS)) == "ts beyond 24h session"
    assert validate_event(quote_event(ts=-1)) == "ts must be non-negative"


def test_price_round_trip_examples():
    assert price_str(100_100) == "10.0100"
    assert parse_price("10.0100") == 100_100
    assert parse_price("10.01") == 100_100
    assert parse_price("10") == 100_000


def test_price_round_trip_randomized():
    rng = np.random.default_rng(7)
    for units in rng.integers(0, 5_000_000_000, size=2_000):
        assert parse_price(price_str(int(units))) == int(units)


def test_price_parse_rejects_sub_unit_precision():
    with pytest.raises(ValueError):
        parse_price("10.00001")


def test_timestamp_arithmetic_headroom():
    # A full 24h session stays far below 64-bit range.
    assert DAY_NS < 2**63
    assert 545 * 1_000 == 545_000  # 545 us in ns


def test_usd_rendering_exact():
    assert usd_str(20_519_167_396_600) == "2,051,916,739.66"
    assert usd_str(10_000) == "1.00"
    assert usd_str(150) == "0.02"  # round half even at the cent boundary
