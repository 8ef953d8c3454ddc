"""Brute-force oracles and random-stream generators for the test suite.

Every oracle here recomputes its answer the slow, obvious way (full rescans
and materialized timelines) so the streaming/vectorized implementations are
checked against genuinely independent code.
"""

from __future__ import annotations

import numpy as np

from disloc.model import FeedEvent, Quote, TradeMsg


def rescan_dbbo(quotes: dict[str, Quote]) -> tuple[int, int, int, int]:
    """Best bid/offer over a book snapshot by exhaustive scan."""
    bids = [(q.bid, q.bid_size) for q in quotes.values() if q.bid > 0]
    offers = [(q.offer, q.offer_size) for q in quotes.values() if q.offer > 0]
    bb = max((b for b, _ in bids), default=0)
    bo = min((o for o, _ in offers), default=0)
    bsz = sum(s for b, s in bids if b == bb)
    osz = sum(s for o, s in offers if o == bo)
    return bb, (bsz if bb else 0), bo, (osz if bo else 0)


def side_sign(p_sip: int, p_direct: int) -> int:
    """0 when no dislocation on the side, else sign of sip minus direct."""
    if p_sip <= 0 or p_direct <= 0 or p_sip == p_direct:
        return 0
    return 1 if p_sip > p_direct else -1


def scan_segments(timeline, session_end):
    """Maximal constant-sign runs over a materialized (ts, sip, dbbo) timeline.

    timeline: list of (ts, sip_bid, sip_offer, dbbo_bid, dbbo_offer) holding
    the state after every event, in processing order.  Returns tuples
    (side, sign, start, end, min_mag, max_mag, truncated) with side 0=bid,
    1=offer.
    """
    out = []
    for side in (0, 1):
        sign = 0
        start = mn = mx = 0
        for ts, sb, so, db, do in timeline:
            p1, p2 = (sb, db) if side == 0 else (so, do)
            s = side_sign(p1, p2)
            mag = abs(p1 - p2)
            if s == sign:
                if s != 0:
                    mn = min(mn, mag)
                    mx = max(mx, mag)
                continue
            if sign != 0:
                out.append((side, sign, start, ts, mn, mx, False))
            sign, start, mn, mx = s, ts, mag, mag
        if sign != 0:
            out.append((side, sign, start, session_end, mn, mx, True))
    return sorted(out)


def replay_timeline(events):
    """Materialize the (sip, dbbo) state per distinct ts for one symbol.

    events must already be in processing order; same-instant updates are
    atomic, so one row per distinct timestamp (the post-group state).
    Trades are skipped (they do not move quotes).
    """
    book: dict[str, Quote] = {}
    sip = (0, 0)
    timeline = []
    last_ts = None
    for ev in events:
        if not isinstance(ev.payload, TradeMsg):
            if ev.source == "SIP":
                sip = (ev.payload.bid, ev.payload.offer)
            else:
                book[ev.source[2:]] = ev.payload
        if ev.ts != last_ts:
            bb, _, bo, _ = rescan_dbbo(book)
            timeline.append((ev.ts, sip[0], sip[1], bb, bo))
            last_ts = ev.ts
        else:
            bb, _, bo, _ = rescan_dbbo(book)
            timeline[-1] = (ev.ts, sip[0], sip[1], bb, bo)
    return timeline


def rescan_trade_state(events, trade_ts):
    """Quote state prevailing for a trade at trade_ts by full rescan.

    Applies every quote event with ts <= trade_ts (in stream order) and
    returns (sip_bid, sip_offer, dbbo_bid, dbbo_offer, bid_sign, offer_sign)
    where the signs describe any dislocation open at that instant.
    """
    timeline = replay_timeline([e for e in events if e.ts <= trade_ts])
    if not timeline:
        return (0, 0, 0, 0, 0, 0)
    ts, sb, so, db, do = timeline[-1]
    return (sb, so, db, do, side_sign(sb, db), side_sign(so, do))


def _classify_against(state, trade: TradeMsg) -> tuple:
    sb, so, db, do, bsign, osign = state
    differing = bsign != 0 or osign != 0
    at_bid = sb > 0 and trade.price == sb
    at_offer = so > 0 and trade.price == so
    if not differing or at_bid == at_offer:
        return differing, False, 0
    if at_bid:
        if db <= 0:
            return differing, False, 0
        return differing, True, (db - sb) * trade.volume
    if do <= 0:
        return differing, False, 0
    return differing, True, (so - do) * trade.volume


def oracle_classify(events, trade: TradeMsg) -> tuple:
    """Trade classification via literal full rescan of prevailing quotes.

    O(stream length) per call; returns (is_differing, included, roc_signed).
    """
    own = [e for e in events if e.symbol == trade.symbol]
    return _classify_against(rescan_trade_state(own, trade.ts), trade)


def oracle_classify_all(events) -> list:
    """Classify every trade in one ordered sweep over materialized state.

    Equivalent to a full rescan per trade (the state at a trade's ts is the
    state after all of its symbol's quotes with ts <= it) but linear
    overall.  Returns (trade, is_differing, included, roc_signed) in stream
    order.
    """
    books: dict[str, dict[str, Quote]] = {}
    sips: dict[str, tuple[int, int]] = {}
    out = []
    i, n = 0, len(events)
    while i < n:
        j = i
        ts = events[i].ts
        while j < n and events[j].ts == ts:
            j += 1
        group = events[i:j]
        for ev in group:
            if isinstance(ev.payload, TradeMsg):
                continue
            if ev.source == "SIP":
                sips[ev.symbol] = (ev.payload.bid, ev.payload.offer)
            else:
                books.setdefault(ev.symbol, {})[ev.source[2:]] = ev.payload
        states: dict[str, tuple] = {}
        for ev in group:
            if not isinstance(ev.payload, TradeMsg):
                continue
            state = states.get(ev.symbol)
            if state is None:
                bb, _, bo, _ = rescan_dbbo(books.get(ev.symbol, {}))
                sb, so = sips.get(ev.symbol, (0, 0))
                state = (sb, so, bb, bo, side_sign(sb, bb), side_sign(so, bo))
                states[ev.symbol] = state
            out.append((ev.payload, *_classify_against(state, ev.payload)))
        i = j
    return out


def random_quote(rng: np.random.Generator, mid: int, allow_absent=True) -> Quote:
    spread = int(rng.integers(1, 5)) * 100
    bid = mid - spread // 2
    offer = bid + spread
    if allow_absent and rng.random() < 0.03:
        bid = 0
    if allow_absent and rng.random() < 0.03:
        offer = 0
    return Quote(
        bid=max(bid, 0),
        bid_size=int(rng.integers(1, 10)) * 100 if bid > 0 else 0,
        offer=max(offer, 0),
        offer_size=int(rng.integers(1, 10)) * 100 if offer > 0 else 0,
    )


def random_stream(rng: np.random.Generator, n: int, symbols=("AAA",),
                  exchanges=("NYSE", "NASD", "ARCA"), trade_frac=0.15,
                  tie_frac=0.1, start_ts=34_200_000_000_000):
    """Random but well-formed merged event stream for one or more symbols.

    Quote prices follow a coarse random walk per symbol; a fraction of
    events reuse the previous timestamp to exercise tie handling.  Output is
    in merged-stream order (ts, SIP-first, exchange id).
    """
    mids = {s: 100_000 + int(rng.integers(-50, 50)) * 100 for s in symbols}
    ts = start_ts
    events: list[FeedEvent] = []
    for _ in range(n):
        if rng.random() > tie_frac:
            ts += int(rng.integers(1, 2_000_000))
        symbol = str(symbols[int(rng.integers(0, len(symbols)))])
        mids[symbol] += int(rng.integers(-1, 2)) * 100
        mids[symbol] = max(mids[symbol], 2_000)
        mid = mids[symbol]
        if rng.random() < trade_frac:
            # Prices near the walk so a fair share land exactly on a quote.
            price = mid + int(rng.integers(-2, 3)) * 50
            if price <= 0:
                price = 50
            trade = TradeMsg(price=price, volume=int(rng.integers(1, 10)) * 100,
                             ts=ts, symbol=symbol)
            events.append(FeedEvent(ts=ts, symbol=symbol, source="SIP", payload=trade))
        elif rng.random() < 0.45:
            events.append(FeedEvent(ts=ts, symbol=symbol, source="SIP",
                                    payload=random_quote(rng, mid)))
        else:
            exch = str(exchanges[int(rng.integers(0, len(exchanges)))])
            events.append(FeedEvent(ts=ts, symbol=symbol, source=f"D:{exch}",
                                    payload=random_quote(rng, mid)))
    events.sort(key=lambda e: (e.ts, 0 if e.source == "SIP" else 1,
                               e.source[2:] if e.source.startswith("D:") else ""))
    return events


def segment_tuples(segments):
    """Comparable tuples (symbol, side, ordering, start, end, mn, mx, trunc)."""
    return sorted(
        (s.symbol, s.side.value, s.ordering.value, s.start_ts, s.end_ts,
         s.min_magnitude, s.max_magnitude, s.truncated)
        for s in segments
    )
