"""Deterministic discrete-event simulator of an NMS-style feed topology.

Exchanges publish top-of-book updates; each update travels one leg to the
observer (direct feed) and two legs via the SIP (exchange -> SIP, fixed
processing delay, SIP -> observer).  The SIP consolidates per-exchange tops
into an NBBO and dispatches it only when the consolidated prices change.
Trades execute at an exchange against the NBBO view locally known there and
are reported over the same SIP path.  Everything runs on integer nanosecond
clocks with an explicit seeded PRNG, so identical configs produce
byte-identical output files.

The simulator also derives, from the scheduled arrival times alone, the
exact observer-time dislocation segments (the ground truth the detection
pipeline is verified against).
"""

from __future__ import annotations

import configparser
import hashlib
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .detector import DislocationSegment, Ordering, write_segments
from .model import (
    CENT,
    FeedEvent,
    Quote,
    SESSION_OPEN_NS,
    SIP_SOURCE,
    Side,
    TradeMsg,
    direct_source,
)
from .feedio import merge_key, write_events

_NO_OFFER = 1 << 62


class SimConfigError(ValueError):
    """A simulator configuration is inconsistent or incomplete."""


@dataclass(frozen=True)
class Topology:
    """Locations, links, and the SIP placement of the simulated market."""

    exchanges: dict[str, str]          # exchange id -> location
    sip_location: str
    sip_processing_ns: int
    links: dict[tuple[str, str], int]  # (from, to) -> one-way ns
    observer_location: str

    def latency(self, src: str, dst: str) -> int:
        lat = self.links.get((src, dst))
        if lat is None:
            lat = self.links.get((dst, src))
        if lat is None:
            if src == dst:
                return 0
            raise SimConfigError(f"no link between {src} and {dst}")
        return lat

    def validate(self) -> None:
        if self.sip_processing_ns < 0:
            raise SimConfigError("sip_processing_ns must be >= 0")
        for lat in self.links.values():
            if lat < 0:
                raise SimConfigError("link latencies must be >= 0")
        if not self.exchanges:
            raise SimConfigError("need at least one exchange")
        for exch, loc in self.exchanges.items():
            self.latency(loc, self.sip_location)
            self.latency(loc, self.observer_location)
            self.latency(self.sip_location, loc)
        self.latency(self.sip_location, self.observer_location)


@dataclass(frozen=True)
class SymbolProcess:
    """Stochastic quote/trade driver for one symbol.

    Each exchange carries an independent Poisson stream of top-of-book
    updates at quote_rate events/s; every update steps a shared mid price by
    one tick with probability step_prob and requotes around it with a spread
    drawn from spread_ticks.  Trades arrive at trade_rate events/s at a
    uniformly chosen exchange and print at the NBBO side locally known
    there.
    """

    symbol: str
    initial_price: int                 # 1e-4 USD, multiple of tick
    tick: int = CENT
    quote_rate: float = 20.0           # per exchange, events/s
    step_prob: float = 0.5
    spread_ticks: tuple[int, ...] = (1, 2, 3)
    quote_sizes: tuple[int, ...] = (100, 200, 300, 500)
    trade_rate: float = 5.0            # per symbol, events/s
    trade_sizes: tuple[int, ...] = (100, 200, 500)

    def validate(self) -> None:
        if self.initial_price <= 0 or self.tick <= 0:
            raise SimConfigError("prices and tick must be positive")
        if self.quote_rate <= 0 or self.trade_rate < 0:
            raise SimConfigError("rates must be positive")
        if not (0.0 <= self.step_prob <= 1.0):
            raise SimConfigError("step_prob must be in [0, 1]")
        if not self.spread_ticks or min(self.spread_ticks) < 1:
            raise SimConfigError("spread must be at least one tick")
        if not self.quote_sizes or min(self.quote_sizes) <= 0:
            raise SimConfigError("quote sizes must be positive")
        if not self.trade_sizes or min(self.trade_sizes) <= 0:
            raise SimConfigError("trade sizes must be positive")


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    symbols: tuple[SymbolProcess, ...]
    session_start_ns: int = SESSION_OPEN_NS
    session_length_ns: int = 1_000_000_000
    seed: int = 0
    date: str = "2016-01-04"

    def validate(self) -> None:
        self.topology.validate()
        if not self.symbols:
            raise SimConfigError("need at least one symbol")
        if len({s.symbol for s in self.symbols}) != len(self.symbols):
            raise SimConfigError("duplicate symbol in config")
        for s in self.symbols:
            s.validate()
        if self.session_length_ns <= 0 or self.session_start_ns < 0:
            raise SimConfigError("bad session window")


def symbol_rng(seed: int, symbol: str) -> np.random.Generator:
    """Per-symbol child generator, independent of symbol-set composition.

    The stream is keyed on (seed, sha256(symbol)), so a symbol's output is
    identical whether it is simulated alone or alongside others.
    """
    digest = hashlib.sha256(symbol.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 8], "big") for i in range(0, 32, 8)]
    ss = np.random.SeedSequence([seed & (2**63 - 1), *words])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SimResult:
    config: SimConfig
    direct_events: dict[str, list[FeedEvent]]   # exchange id -> sorted events
    sip_events: list[FeedEvent]
    ground_truth: list[DislocationSegment]
    session_end_ns: int
    book_changes: int = 0
    sip_dispatches: int = 0
    trades: int = 0
    trades_skipped: int = 0

    def all_files_events(self) -> list[list[FeedEvent]]:
        files = [self.sip_events]
        files.extend(self.direct_events[e] for e in sorted(self.direct_events))
        return files

    def merged_events(self) -> list[FeedEvent]:
        events = [e for f in self.all_files_events() for e in f]
        events.sort(key=merge_key)
        return events

    def write(self, outdir: str | Path) -> dict[str, str]:
        """Write feed files, ground-truth CSV, and a run manifest."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {"sip": str(outdir / "sip.csv")}
        write_events(paths["sip"], self.sip_events, date=self.config.date)
        for exch in sorted(self.direct_events):
            p = str(outdir / f"direct_{exch}.csv")
            paths[f"direct_{exch}"] = p
            write_events(p, self.direct_events[exch], date=self.config.date)
        paths["ground_truth"] = str(outdir / "ground_truth.csv")
        write_segments(paths["ground_truth"], self.ground_truth)
        manifest = {
            "date": self.config.date,
            "seed": self.config.seed,
            "session_start_ns": self.config.session_start_ns,
            "session_end_ns": self.session_end_ns,
            "exchanges": sorted(self.direct_events),
            "symbols": [s.symbol for s in self.config.symbols],
            "events": {
                "sip": len(self.sip_events),
                **{f"direct_{e}": len(v) for e, v in sorted(self.direct_events.items())},
            },
            "book_changes": self.book_changes,
            "sip_dispatches": self.sip_dispatches,
            "trades": self.trades,
            "trades_skipped": self.trades_skipped,
        }
        paths["manifest"] = str(outdir / "manifest.json")
        with open(paths["manifest"], "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


# Heap priorities at equal timestamps: NBBO deliveries update exchange state
# before any same-instant quote/trade activity there.
_P_NBBO_AT_EXCH = 0
_P_SIP_ARRIVAL = 1
_P_QUOTE = 2
_P_TRADE = 3


class _SymbolSim:
    """Single-symbol event loop; symbols never interact."""

    def __init__(self, topo: Topology, proc: SymbolProcess, rng: np.random.Generator,
                 start: int, end: int):
        self.topo = topo
        self.proc = proc
        self.rng = rng
        self.start = start
        self.end = end
        self.exchanges = sorted(topo.exchanges)
        self.heap: list[tuple] = []
        self.seq = 0
        # Exchange-local state
        self.books: dict[str, Quote] = {}
        self.nbbo_view: dict[str, tuple[int, int]] = {}   # exch -> (bid, offer)
        # SIP state
        self.sip_books: dict[str, Quote] = {}
        self.sip_prices = (0, 0)
        # Observer deliveries
        self.direct_out: dict[str, list[FeedEvent]] = {e: [] for e in self.exchanges}
        self.sip_out: list[FeedEvent] = []
        self.mid_ticks = proc.initial_price // proc.tick
        self.min_mid = max(self.spread_guard(), 1)
        self.book_changes = 0
        self.sip_dispatches = 0
        self.trades = 0
        self.trades_skipped = 0

    def spread_guard(self) -> int:
        return max(self.proc.spread_ticks) + 2

    def push(self, ts: int, prio: int, kind: str, data: tuple) -> None:
        heapq.heappush(self.heap, (ts, prio, self.seq, kind, data))
        self.seq += 1

    def exp_ns(self, rate_per_s: float) -> int:
        return max(1, int(round(self.rng.exponential(1e9 / rate_per_s))))

    def schedule_initial(self, scripted: Sequence[tuple] | None) -> None:
        if scripted is not None:
            for t, exch, bid, bid_size, offer, offer_size in scripted:
                self.push(t, _P_QUOTE, "quote",
                          (exch, Quote(bid, bid_size, offer, offer_size)))
            return
        for exch in self.exchanges:
            self.push(self.start + self.exp_ns(self.proc.quote_rate), _P_QUOTE,
                      "quote", (exch, None))
        if self.proc.trade_rate > 0:
            self.push(self.start + self.exp_ns(self.proc.trade_rate), _P_TRADE,
                      "trade", ())

    def new_quote(self) -> Quote:
        proc = self.proc
        if self.rng.random() < proc.step_prob:
            self.mid_ticks += 1 if self.rng.integers(0, 2) == 1 else -1
            self.mid_ticks = max(self.mid_ticks, self.min_mid)
        spread = int(self.rng.choice(proc.spread_ticks))
        bid_ticks = self.mid_ticks - (spread - spread // 2)
        offer_ticks = self.mid_ticks + spread // 2
        return Quote(
            bid=bid_ticks * proc.tick,
            bid_size=int(self.rng.choice(proc.quote_sizes)),
            offer=offer_ticks * proc.tick,
            offer_size=int(self.rng.choice(proc.quote_sizes)),
        )

    def consolidate_sip(self) -> tuple[int, int, int, int]:
        bid = 0
        bid_size = 0
        offer = _NO_OFFER
        offer_size = 0
        for q in self.sip_books.values():
            if q.bid > 0:
                if q.bid > bid:
                    bid, bid_size = q.bid, q.bid_size
                elif q.bid == bid:
                    bid_size += q.bid_size
            if q.offer > 0:
                if q.offer < offer:
                    offer, offer_size = q.offer, q.offer_size
                elif q.offer == offer:
                    offer_size += q.offer_size
        if offer == _NO_OFFER:
            offer, offer_size = 0, 0
        return bid, bid_size, offer, offer_size

    def dispatch_sip(self, ts_arrival: int, payload: Quote | TradeMsg) -> None:
        topo = self.topo
        t_out = ts_arrival + topo.sip_processing_ns
        t_obs = t_out + topo.latency(topo.sip_location, topo.observer_location)
        symbol = self.proc.symbol
        if isinstance(payload, Quote):
            self.sip_dispatches += 1
            self.sip_out.append(FeedEvent(ts=t_obs, symbol=symbol, source=SIP_SOURCE,
                                          payload=payload))
            for exch in self.exchanges:
                t_exch = t_out + topo.latency(topo.sip_location, topo.exchanges[exch])
                self.push(t_exch, _P_NBBO_AT_EXCH, "nbbo",
                          (exch, payload.bid, payload.offer))
        else:
            trade = TradeMsg(price=payload.price, volume=payload.volume,
                             ts=t_obs, symbol=symbol, venue=payload.venue)
            self.sip_out.append(FeedEvent(ts=t_obs, symbol=symbol, source=SIP_SOURCE,
                                          payload=trade))

    def handle_quote(self, ts: int, exch: str, quote: Quote | None) -> None:
        if quote is None:
            quote = self.new_quote()
            self.push(ts + self.exp_ns(self.proc.quote_rate), _P_QUOTE, "quote", (exch, None))
        self.books[exch] = quote
        self.book_changes += 1
        topo = self.topo
        exch_loc = topo.exchanges[exch]
        t_direct = ts + topo.latency(exch_loc, topo.observer_location)
        self.direct_out[exch].append(FeedEvent(
            ts=t_direct, symbol=self.proc.symbol, source=direct_source(exch), payload=quote))
        t_sip = ts + topo.latency(exch_loc, topo.sip_location)
        self.push(t_sip, _P_SIP_ARRIVAL, "sip_quote", (exch, quote))

    def handle_trade(self, ts: int) -> None:
        self.push(ts + self.exp_ns(self.proc.trade_rate), _P_TRADE, "trade", ())
        exch = self.exchanges[int(self.rng.integers(0, len(self.exchanges)))]
        buy = self.rng.integers(0, 2) == 1
        view = self.nbbo_view.get(exch)
        price = 0
        if view is not None:
            price = view[1] if buy else view[0]
        if price <= 0:
            own = self.books.get(exch)
            if own is not None:
                price = own.offer if buy else own.bid
        if price <= 0:
            self.trades_skipped += 1
            return
        self.trades += 1
        volume = int(self.rng.choice(self.proc.trade_sizes))
        topo = self.topo
        t_sip = ts + topo.latency(topo.exchanges[exch], topo.sip_location)
        msg = TradeMsg(price=price, volume=volume, ts=ts, symbol=self.proc.symbol, venue=exch)
        self.push(t_sip, _P_SIP_ARRIVAL, "sip_trade", (msg,))

    def run(self, scripted: Sequence[tuple] | None = None) -> None:
        self.schedule_initial(scripted)
        while self.heap:
            ts, _prio, _seq, kind, data = heapq.heappop(self.heap)
            if kind == "quote":
                exch, quote = data
                if quote is None and ts >= self.end:
                    continue  # source stops at session end; in-flight messages drain
                self.handle_quote(ts, exch, quote)
            elif kind == "trade":
                if ts >= self.end:
                    continue
                self.handle_trade(ts)
            elif kind == "sip_quote":
                exch, quote = data
                self.sip_books[exch] = quote
                bid, bid_size, offer, offer_size = self.consolidate_sip()
                if (bid, offer) != self.sip_prices:
                    self.sip_prices = (bid, offer)
                    self.dispatch_sip(ts, Quote(bid, bid_size, offer, offer_size))
            elif kind == "sip_trade":
                (msg,) = data
                self.dispatch_sip(ts, msg)
            else:  # nbbo
                exch, bid, offer = data
                self.nbbo_view[exch] = (bid, offer)


def _scan_ground_truth(symbol: str, quote_events: list[FeedEvent],
                       session_end: int) -> list[DislocationSegment]:
    """Maximal constant-ordering runs straight off the observer timeline.

    Independent of the detection pipeline on purpose: this is the analytic
    truth the pipeline is checked against.
    """
    events = sorted(quote_events, key=merge_key)
    book: dict[str, tuple[int, int]] = {}
    sip = (0, 0)
    segments: list[DislocationSegment] = []
    run = {Side.BID: None, Side.OFFER: None}   # side -> [sign, start, mn, mx]

    def close(side: Side, ts: int, truncated: bool) -> None:
        sign, start, mn, mx = run[side]
        ordering = Ordering.SIP_ABOVE if sign > 0 else Ordering.SIP_BELOW
        segments.append(DislocationSegment(
            symbol=symbol, side=side, ordering=ordering, start_ts=start, end_ts=ts,
            min_magnitude=mn, max_magnitude=mx, truncated=truncated))

    # Simultaneous arrivals are atomic: state advances per distinct ts.
    i, n = 0, len(events)
    while i < n:
        ts = events[i].ts
        j = i
        while j < n and events[j].ts == ts:
            q = events[j].payload
            if events[j].source == SIP_SOURCE:
                sip = (q.bid, q.offer)
            else:
                book[events[j].source] = (q.bid, q.offer)
            j += 1
        i = j
        bids = [b for b, _ in book.values() if b > 0]
        offers = [o for _, o in book.values() if o > 0]
        direct = (max(bids) if bids else 0, min(offers) if offers else 0)
        for side, p1, p2 in ((Side.BID, sip[0], direct[0]), (Side.OFFER, sip[1], direct[1])):
            if p1 > 0 and p2 > 0 and p1 != p2:
                sign = 1 if p1 > p2 else -1
                mag = abs(p1 - p2)
            else:
                sign, mag = 0, 0
            cur = run[side]
            if cur is not None and cur[0] == sign:
                if sign != 0:
                    cur[2] = min(cur[2], mag)
                    cur[3] = max(cur[3], mag)
                continue
            if cur is not None:
                close(side, ts, truncated=False)
            run[side] = [sign, ts, mag, mag] if sign != 0 else None
    for side in (Side.BID, Side.OFFER):
        if run[side] is not None:
            close(side, session_end, truncated=True)
    segments.sort(key=DislocationSegment.sort_key)
    return segments


def simulate(config: SimConfig,
             scripted: dict[str, Sequence[tuple]] | None = None) -> SimResult:
    """Run all symbols and assemble sorted observer feed files + ground truth.

    scripted optionally replaces the stochastic driver of named symbols with
    an explicit list of (t, exchange, bid, bid_size, offer, offer_size)
    top-of-book changes.
    """
    config.validate()
    nominal_end = config.session_start_ns + config.session_length_ns
    per_symbol: list[_SymbolSim] = []
    for proc in sorted(config.symbols, key=lambda p: p.symbol):
        rng = symbol_rng(config.seed, proc.symbol)
        sym = _SymbolSim(config.topology, proc, rng, config.session_start_ns, nominal_end)
        sym.run(scripted.get(proc.symbol) if scripted else None)
        per_symbol.append(sym)

    exchanges = sorted(config.topology.exchanges)
    direct_events: dict[str, list[FeedEvent]] = {e: [] for e in exchanges}
    sip_events: list[FeedEvent] = []
    for sym in per_symbol:
        for e in exchanges:
            direct_events[e].extend(sym.direct_out[e])
        sip_events.extend(sym.sip_out)
    # Stable sort keeps per-symbol internal order; equal-ts cross-symbol
    # events order by symbol for reproducibility.
    for e in exchanges:
        direct_events[e].sort(key=lambda ev: (ev.ts, ev.symbol))
    sip_events.sort(key=lambda ev: (ev.ts, ev.symbol))

    last_ts = max(
        [ev.ts for evs in direct_events.values() for ev in evs] +
        [ev.ts for ev in sip_events] + [nominal_end]
    )
    ground_truth: list[DislocationSegment] = []
    for sym in per_symbol:
        quote_events = [ev for ev in sym.sip_out if isinstance(ev.payload, Quote)]
        for e in exchanges:
            quote_events.extend(sym.direct_out[e])
        ground_truth.extend(_scan_ground_truth(sym.proc.symbol, quote_events, last_ts))
    ground_truth.sort(key=DislocationSegment.sort_key)

    return SimResult(
        config=config,
        direct_events=direct_events,
        sip_events=sip_events,
        ground_truth=ground_truth,
        session_end_ns=last_ts,
        book_changes=sum(s.book_changes for s in per_symbol),
        sip_dispatches=sum(s.sip_dispatches for s in per_symbol),
        trades=sum(s.trades for s in per_symbol),
        trades_skipped=sum(s.trades_skipped for s in per_symbol),
    )


# --- Canonical two-exchange co-location walkthrough -------------------------

FIGURE2_SYMBOL = "ACME"
FIGURE2_EXPECTED = dict(side=Side.BID, duration_ns=97_000, magnitude=CENT)


def figure2_config() -> SimConfig:
    """NYSE and the SIP share one campus; NASD and the observer share another.

    Cross-campus links run 282 us each way for every feed, the intra-campus
    exchange-to-SIP hop is 5 us, and the SIP pipeline adds 92 us.  A one-cent
    bid improvement at NYSE therefore reaches the observer via the direct
    feed 97 us (5 + 92) before the matching NBBO update.
    """
    topo = Topology(
        exchanges={"NYSE": "MAHWAH", "NASD": "CARTERET"},
        sip_location="MAHWAH",
        sip_processing_ns=92_000,
        links={
            ("MAHWAH", "CARTERET"): 282_000,
            ("CARTERET", "MAHWAH"): 282_000,
            ("MAHWAH", "MAHWAH"): 5_000,
            ("CARTERET", "CARTERET"): 0,
        },
        observer_location="CARTERET",
    )
    proc = SymbolProcess(symbol=FIGURE2_SYMBOL, initial_price=100_000, trade_rate=0.0)
    return SimConfig(topology=topo, symbols=(proc,), session_start_ns=SESSION_OPEN_NS,
                     session_length_ns=2_000_000, seed=0, date="2016-01-04")


def replay_figure2() -> tuple[SimResult, DislocationSegment]:
    """Emit the six-step walkthrough and its single expected segment.

    Both exchanges start in harmony at 10.00 x 10.02; NYSE then improves its
    bid to 10.01.  The observer sees the direct update 282 us after the
    change and the NBBO update 97 us later, producing exactly one one-cent
    bid-side segment.
    """
    config = figure2_config()
    t_base = config.session_start_ns
    t_improve = t_base + 1_000_000
    script = [
        (t_base, "NYSE", 100_000, 100, 100_200, 100),
        (t_base, "NASD", 100_000, 100, 100_200, 100),
        (t_improve, "NYSE", 100_100, 100, 100_200, 100),
    ]
    result = simulate(config, scripted={FIGURE2_SYMBOL: script})
    expected = DislocationSegment(
        symbol=FIGURE2_SYMBOL, side=Side.BID, ordering=Ordering.SIP_BELOW,
        start_ts=t_improve + 282_000, end_ts=t_improve + 379_000,
        min_magnitude=CENT, max_magnitude=CENT, truncated=False,
    )
    return result, expected


# --- Config file ------------------------------------------------------------

def _choices(raw: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


def load_config(path: str | Path, seed: int | None = None) -> SimConfig:
    """Load a SimConfig from the documented INI key-value format."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep case for exchange ids and locations
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    try:
        topo = Topology(
            exchanges=dict(cp.items("exchanges")),
            sip_location=cp.get("topology", "sip_location"),
            sip_processing_ns=cp.getint("topology", "sip_processing_ns"),
            links={tuple(k.split("->", 1)): int(v) for k, v in cp.items("links")},
            observer_location=cp.get("topology", "observer"),
        )
        symbols = []
        for section in cp.sections():
            if not section.startswith("symbol."):
                continue
            sym = section.split(".", 1)[1]
            get = lambda key, fallback: cp.get(section, key, fallback=fallback)
            symbols.append(SymbolProcess(
                symbol=sym,
                initial_price=int(get("initial_price", "100000")),
                tick=int(get("tick", str(CENT))),
                quote_rate=float(get("quote_rate", "20")),
                step_prob=float(get("step_prob", "0.5")),
                spread_ticks=_choices(get("spread_ticks", "1,2,3")),
                quote_sizes=_choices(get("quote_sizes", "100,200,300,500")),
                trade_rate=float(get("trade_rate", "5")),
                trade_sizes=_choices(get("trade_sizes", "100,200,500")),
            ))
        config = SimConfig(
            topology=topo,
            symbols=tuple(symbols),
            session_start_ns=cp.getint("session", "start_ns", fallback=SESSION_OPEN_NS),
            session_length_ns=cp.getint("session", "length_ns", fallback=1_000_000_000),
            seed=seed if seed is not None else cp.getint("session", "seed", fallback=0),
            date=cp.get("session", "date", fallback="2016-01-04"),
        )
    except (configparser.Error, KeyError, ValueError) as exc:
        if isinstance(exc, SimConfigError):
            raise
        raise SimConfigError(f"bad simulator config {path}: {exc}") from exc
    config.validate()
    return config
