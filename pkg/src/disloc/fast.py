"""Vectorized detection + accounting engine for large event files.

Semantics are identical to pipeline.run_reference (the test suite asserts
exact equality); the implementation works on numpy arrays in chunks so a
10^7-event day processes in seconds.  Per symbol, the SIP NBBO and every
exchange top are forward-filled per event row, the per-side price-difference
sign series is segmented into maximal constant-sign runs (the dislocation
segments), and trades are classified against the state at the end of their
timestamp group (all same-instant quote updates applied first).
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .detector import SEGMENT_CSV_HEADER, DislocationSegment, Ordering
from .feedio import FeedFormatError, StreamOrderError
from .model import FeedEvent, Quote, Side, TradeMsg
from .roc import (
    DIRECT_BID_ABSENT,
    DIRECT_OFFER_ABSENT,
    NOT_DIFFERING,
    PRICE_OFF_QUOTE,
    ROC_CSV_HEADER,
    SIP_LOCKED,
    MatchedSide,
    PurseRow,
    RocRecord,
)

_CHUNK = 1 << 20
_NO_OFFER = np.int64(1) << 62
_SOURCE_RE = re.compile(r"^(SIP|D:[A-Z]{1,8})$")

_REASONS = ("", NOT_DIFFERING, PRICE_OFF_QUOTE, SIP_LOCKED,
            DIRECT_BID_ABSENT, DIRECT_OFFER_ABSENT)
_SIDES = ("", MatchedSide.SIP_BID.value, MatchedSide.SIP_OFFER.value)


@dataclass
class EventFrame:
    """Column view of a merged event stream.

    src holds -1 for SIP rows and an index into exchanges otherwise; trades
    carry price/volume, quotes carry bid/offer (sizes are not kept: they do
    not enter segment or cost math).
    """

    ts: np.ndarray
    sym: np.ndarray
    src: np.ndarray
    is_trade: np.ndarray
    bid: np.ndarray
    offer: np.ndarray
    price: np.ndarray
    volume: np.ndarray
    symbols: list[str]
    exchanges: list[str]

    def __len__(self) -> int:
        return len(self.ts)


_COLS = ["rec", "ts", "symbol", "source", "f4", "f5", "f6", "f7"]


def _load_one(path: str | Path) -> dict:
    """Read one feed file into validated columns (file-local checks).

    String columns stay as categorical codes end to end; only the small
    category tables are touched in Python.
    """
    name = str(path)
    try:
        df = pd.read_csv(
            path, header=None, names=_COLS, comment="#",
            dtype={"rec": "category", "symbol": "category", "source": "category"},
        )
    except FileNotFoundError:
        raise
    except (ValueError, pd.errors.ParserError) as exc:
        raise FeedFormatError(f"unparseable feed file: {exc}", file=name) from None
    rec_tags = [str(t) for t in df["rec"].cat.categories]
    if not set(rec_tags) <= {"Q", "T"}:
        bad = sorted(set(rec_tags) - {"Q", "T"})
        raise FeedFormatError(f"unknown record type {bad[0]!r}", file=name)
    src_tags = [str(t) for t in df["source"].cat.categories]
    for tag in src_tags:
        if not _SOURCE_RE.match(tag):
            raise FeedFormatError(f"unknown source tag {tag!r}", file=name)
    try:
        ts = df["ts"].to_numpy(np.int64)
        fields = [np.nan_to_num(pd.to_numeric(df[c]).to_numpy(np.float64), nan=0.0)
                  for c in ("f4", "f5", "f6", "f7")]
    except (ValueError, TypeError) as exc:
        raise FeedFormatError(f"non-integer numeric field: {exc}", file=name) from None
    if ts.min(initial=0) < 0 or any(f.min(initial=0) < 0 for f in fields):
        raise FeedFormatError("negative numeric field", file=name)
    if len(ts) > 1 and np.any(np.diff(ts) < 0):
        at = int(np.flatnonzero(np.diff(ts) < 0)[0]) + 1
        raise StreamOrderError(f"ts inversion: {ts[at]} after {ts[at - 1]}",
                               file=name, line=at + 2)
    is_trade = df["rec"].cat.codes.to_numpy() == rec_tags.index("T") \
        if "T" in rec_tags else np.zeros(len(ts), bool)
    src_codes = df["source"].cat.codes.to_numpy()
    if is_trade.any() and "SIP" not in src_tags:
        raise FeedFormatError("trades must carry SIP source", file=name)
    if "SIP" in src_tags and np.any(is_trade & (src_codes != src_tags.index("SIP"))):
        raise FeedFormatError("trades must carry SIP source", file=name)
    return dict(
        ts=ts, is_trade=is_trade,
        src_codes=src_codes, src_tags=src_tags,
        sym_codes=df["symbol"].cat.codes.to_numpy(),
        sym_tags=[str(t) for t in df["symbol"].cat.categories],
        fields=[f.astype(np.int64) for f in fields],
    )


def _empty_frame() -> EventFrame:
    z = lambda dt: np.empty(0, dt)
    return EventFrame(ts=z(np.int64), sym=z(np.int64), src=z(np.int64),
                      is_trade=z(bool), bid=z(np.int64), offer=z(np.int64),
                      price=z(np.int64), volume=z(np.int64), symbols=[], exchanges=[])


def load_frame(paths: Sequence[str | Path]) -> EventFrame:
    """Read and merge sorted feed files into one time-ordered frame.

    Ties at equal ts order SIP before direct feeds, then by exchange id,
    then by file position, exactly as feedio.merged_stream does.
    """
    parts = [_load_one(p) for p in paths]
    if not parts or all(len(p["ts"]) == 0 for p in parts):
        return _empty_frame()

    exchanges = sorted({t[2:] for p in parts for t in p["src_tags"] if t != "SIP"})
    exch_index = {f"D:{e}": i for i, e in enumerate(exchanges)}
    symbols: list[str] = []
    sym_index: dict[str, int] = {}
    for p in parts:
        for t in p["sym_tags"]:
            if t not in sym_index:
                sym_index[t] = len(symbols)
                symbols.append(t)

    src_parts = []
    sym_parts = []
    for p in parts:
        src_map = np.array([-1 if t == "SIP" else exch_index[t]
                            for t in p["src_tags"]], dtype=np.int64)
        sym_map = np.array([sym_index[t] for t in p["sym_tags"]], dtype=np.int64)
        src_parts.append(src_map[p["src_codes"]] if len(p["src_tags"])
                         else np.empty(0, np.int64))
        sym_parts.append(sym_map[p["sym_codes"]] if len(p["sym_tags"])
                         else np.empty(0, np.int64))

    ts = np.concatenate([p["ts"] for p in parts])
    is_trade = np.concatenate([p["is_trade"] for p in parts])
    src = np.concatenate(src_parts)
    sym = np.concatenate(sym_parts)
    fields = [np.concatenate([p["fields"][k] for p in parts]) for k in range(4)]
    n = len(ts)

    rank = np.where(src < 0, np.int64(0), src + 1)
    order = np.lexsort((np.arange(n), rank, ts))

    quote = ~is_trade
    return EventFrame(
        ts=ts[order],
        sym=sym[order],
        src=src[order],
        is_trade=is_trade[order],
        bid=np.where(quote, fields[0], 0)[order],
        offer=np.where(quote, fields[2], 0)[order],
        price=np.where(is_trade, fields[0], 0)[order],
        volume=np.where(is_trade, fields[1], 0)[order],
        symbols=symbols,
        exchanges=exchanges,
    )


def frame_from_events(events: Iterable[FeedEvent]) -> EventFrame:
    """Build a frame from in-memory events already in merged order."""
    rows = list(events)
    n = len(rows)
    ts = np.empty(n, np.int64)
    src = np.empty(n, np.int64)
    is_trade = np.zeros(n, bool)
    bid = np.zeros(n, np.int64)
    offer = np.zeros(n, np.int64)
    price = np.zeros(n, np.int64)
    volume = np.zeros(n, np.int64)
    symbols: list[str] = []
    sym_idx: dict[str, int] = {}
    exchanges = sorted({e.source[2:] for e in rows if e.source != "SIP"})
    exch_idx = {e: i for i, e in enumerate(exchanges)}
    sym = np.empty(n, np.int64)
    for i, ev in enumerate(rows):
        ts[i] = ev.ts
        code = sym_idx.get(ev.symbol)
        if code is None:
            code = sym_idx[ev.symbol] = len(symbols)
            symbols.append(ev.symbol)
        sym[i] = code
        src[i] = -1 if ev.source == "SIP" else exch_idx[ev.source[2:]]
        p = ev.payload
        if isinstance(p, TradeMsg):
            is_trade[i] = True
            price[i] = p.price
            volume[i] = p.volume
        else:
            bid[i] = p.bid
            offer[i] = p.offer
    return EventFrame(ts=ts, sym=sym, src=src, is_trade=is_trade, bid=bid,
                      offer=offer, price=price, volume=volume,
                      symbols=symbols, exchanges=exchanges)


def _locf(mask: np.ndarray, values: np.ndarray, carry: int) -> np.ndarray:
    """Last-observation-carried-forward of values[mask], seeded with carry."""
    table = np.empty(int(mask.sum()) + 1, np.int64)
    table[0] = carry
    table[1:] = values[mask]
    return table[np.cumsum(mask)]


class _RunTracker:
    """Maximal constant-sign run accumulator for one (symbol, side)."""

    __slots__ = ("sign", "start_ts", "min_mag", "max_mag",
                 "out_sign", "out_start", "out_end", "out_min", "out_max")

    def __init__(self) -> None:
        self.sign = 0
        self.start_ts = 0
        self.min_mag = 0
        self.max_mag = 0
        self.out_sign: list[np.ndarray] = []
        self.out_start: list[np.ndarray] = []
        self.out_end: list[np.ndarray] = []
        self.out_min: list[np.ndarray] = []
        self.out_max: list[np.ndarray] = []

    def update(self, sign: np.ndarray, mag: np.ndarray, ts: np.ndarray) -> None:
        if len(sign) == 0:
            return
        change = np.flatnonzero(sign[1:] != sign[:-1]) + 1
        starts = np.concatenate(([0], change))
        run_sign = sign[starts]
        run_min = np.minimum.reduceat(mag, starts)
        run_max = np.maximum.reduceat(mag, starts)
        run_start = ts[starts].copy()
        # Close or extend the carried-over run.
        if self.sign != 0:
            if run_sign[0] == self.sign:
                run_start[0] = self.start_ts
                run_min[0] = min(run_min[0], self.min_mag)
                run_max[0] = max(run_max[0], self.max_mag)
            else:
                self._emit_one(self.sign, self.start_ts, int(ts[0]),
                               self.min_mag, self.max_mag)
        # Completed runs: all but the last, keeping only dislocated ones.
        if len(starts) > 1:
            end_ts = ts[starts[1:]]
            live = run_sign[:-1] != 0
            self.out_sign.append(run_sign[:-1][live])
            self.out_start.append(run_start[:-1][live])
            self.out_end.append(end_ts[live])
            self.out_min.append(run_min[:-1][live])
            self.out_max.append(run_max[:-1][live])
        # Last run becomes the new carry.
        self.sign = int(run_sign[-1])
        if self.sign != 0:
            self.start_ts = int(run_start[-1])
            self.min_mag = int(run_min[-1])
            self.max_mag = int(run_max[-1])

    def _emit_one(self, sign: int, start: int, end: int, mn: int, mx: int) -> None:
        self.out_sign.append(np.array([sign], np.int64))
        self.out_start.append(np.array([start], np.int64))
        self.out_end.append(np.array([end], np.int64))
        self.out_min.append(np.array([mn], np.int64))
        self.out_max.append(np.array([mx], np.int64))

    def finish(self, session_end: int) -> np.ndarray:
        """Close an open run at session end; returns truncation flags."""
        counts = sum(len(a) for a in self.out_sign)
        truncated = np.zeros(counts + (1 if self.sign != 0 else 0), bool)
        if self.sign != 0:
            self._emit_one(self.sign, self.start_ts, session_end,
                           self.min_mag, self.max_mag)
            truncated[-1] = True
            self.sign = 0
        return truncated

    def arrays(self) -> tuple[np.ndarray, ...]:
        if not self.out_sign:
            empty = np.empty(0, np.int64)
            return empty, empty, empty, empty, empty
        return (np.concatenate(self.out_sign), np.concatenate(self.out_start),
                np.concatenate(self.out_end), np.concatenate(self.out_min),
                np.concatenate(self.out_max))


@dataclass
class _SymbolOutput:
    code: int
    seg_side: np.ndarray
    seg_sign: np.ndarray
    seg_start: np.ndarray
    seg_end: np.ndarray
    seg_min: np.ndarray
    seg_max: np.ndarray
    seg_trunc: np.ndarray
    trade_ts: np.ndarray
    trade_price: np.ndarray
    trade_volume: np.ndarray
    trade_side: np.ndarray
    trade_roc: np.ndarray
    trade_diff: np.ndarray
    trade_incl: np.ndarray
    trade_reason: np.ndarray


def _process_symbol(code: int, ts, src, is_trade, bid, offer, price, volume,
                    session_end: int) -> _SymbolOutput:
    n = len(ts)
    present = np.unique(src[src >= 0])
    carry_sip = [0, 0]
    carry_ex = {int(e): [0, _NO_OFFER] for e in present}
    bid_runs = _RunTracker()
    offer_runs = _RunTracker()
    t_out: list[dict[str, np.ndarray]] = []

    lo = 0
    while lo < n:
        hi = min(lo + _CHUNK, n)
        if hi < n:
            cut = int(np.searchsorted(ts, ts[hi - 1], side="left"))
            hi = cut if cut > lo else int(np.searchsorted(ts, ts[hi - 1], side="right"))
        c_ts = ts[lo:hi]
        c_src = src[lo:hi]
        c_trade = is_trade[lo:hi]
        c_quote = ~c_trade

        mask = c_quote & (c_src < 0)
        sip_bid = _locf(mask, bid[lo:hi], carry_sip[0])
        sip_offer = _locf(mask, offer[lo:hi], carry_sip[1])
        carry_sip = [int(sip_bid[-1]), int(sip_offer[-1])]

        m = hi - lo
        dir_bid = np.zeros(m, np.int64)
        dir_offer = np.full(m, _NO_OFFER, np.int64)
        for e in carry_ex:
            mask = c_quote & (c_src == e)
            cb, co = carry_ex[e]
            eb = _locf(mask, bid[lo:hi], cb)
            eo = _locf(mask, np.where(offer[lo:hi] > 0, offer[lo:hi], _NO_OFFER), co)
            carry_ex[e] = [int(eb[-1]), int(eo[-1])]
            np.maximum(dir_bid, eb, out=dir_bid)
            np.minimum(dir_offer, eo, out=dir_offer)
        dir_offer[dir_offer == _NO_OFFER] = 0

        bid_diff = sip_bid - dir_bid
        bid_sign = np.sign(bid_diff).astype(np.int8)
        bid_sign[(sip_bid <= 0) | (dir_bid <= 0)] = 0
        offer_diff = sip_offer - dir_offer
        offer_sign = np.sign(offer_diff).astype(np.int8)
        offer_sign[(sip_offer <= 0) | (dir_offer <= 0)] = 0

        # Same-instant events are atomic: segment state advances once per
        # distinct timestamp, on the last row of each ts group.  Chunks end
        # on group boundaries, so the final row is always a group end.
        ge = np.empty(m, bool)
        np.not_equal(c_ts[1:], c_ts[:-1], out=ge[:-1])
        ge[-1] = True
        g_rows = np.flatnonzero(ge)
        bid_runs.update(bid_sign[g_rows], np.abs(bid_diff[g_rows]), c_ts[g_rows])
        offer_runs.update(offer_sign[g_rows], np.abs(offer_diff[g_rows]), c_ts[g_rows])

        tidx = np.flatnonzero(c_trade)
        if len(tidx):
            gend = np.searchsorted(c_ts, c_ts[tidx], side="right") - 1
            sb, so = sip_bid[gend], sip_offer[gend]
            db, do = dir_bid[gend], dir_offer[gend]
            p = price[lo:hi][tidx]
            v = volume[lo:hi][tidx]
            differing = (bid_sign[gend] != 0) | (offer_sign[gend] != 0)
            at_bid = (sb > 0) & (p == sb)
            at_offer = (so > 0) & (p == so)
            side = np.where(at_bid & ~at_offer, 1, np.where(at_offer & ~at_bid, 2, 0)
                            ).astype(np.int8)
            reason = np.zeros(len(tidx), np.int8)
            reason[~differing] = 1
            reason[differing & ~at_bid & ~at_offer] = 2
            reason[differing & at_bid & at_offer] = 3
            reason[differing & (side == 1) & (db <= 0)] = 4
            reason[differing & (side == 2) & (do <= 0)] = 5
            included = reason == 0
            roc = np.zeros(len(tidx), np.int64)
            b_inc = included & (side == 1)
            o_inc = included & (side == 2)
            roc[b_inc] = (db[b_inc] - sb[b_inc]) * v[b_inc]
            roc[o_inc] = (so[o_inc] - do[o_inc]) * v[o_inc]
            t_out.append(dict(ts=c_ts[tidx].copy(), price=p.copy(), volume=v.copy(),
                              side=side, roc=roc, diff=differing, incl=included,
                              reason=reason))
        lo = hi

    bid_trunc = bid_runs.finish(session_end)
    offer_trunc = offer_runs.finish(session_end)
    b = bid_runs.arrays()
    o = offer_runs.arrays()
    seg_side = np.concatenate([np.zeros(len(b[0]), np.int8), np.ones(len(o[0]), np.int8)])

    def cat(key: str, dtype) -> np.ndarray:
        if not t_out:
            return np.empty(0, dtype)
        return np.concatenate([d[key] for d in t_out]).astype(dtype, copy=False)

    return _SymbolOutput(
        code=code,
        seg_side=seg_side,
        seg_sign=np.concatenate([b[0], o[0]]),
        seg_start=np.concatenate([b[1], o[1]]),
        seg_end=np.concatenate([b[2], o[2]]),
        seg_min=np.concatenate([b[3], o[3]]),
        seg_max=np.concatenate([b[4], o[4]]),
        seg_trunc=np.concatenate([bid_trunc, offer_trunc]),
        trade_ts=cat("ts", np.int64), trade_price=cat("price", np.int64),
        trade_volume=cat("volume", np.int64), trade_side=cat("side", np.int8),
        trade_roc=cat("roc", np.int64), trade_diff=cat("diff", bool),
        trade_incl=cat("incl", bool), trade_reason=cat("reason", np.int8),
    )


@dataclass
class EngineResult:
    symbols: list[str]
    seg_sym: np.ndarray
    seg_side: np.ndarray
    seg_sign: np.ndarray
    seg_start: np.ndarray
    seg_end: np.ndarray
    seg_min: np.ndarray
    seg_max: np.ndarray
    seg_trunc: np.ndarray
    roc_sym: np.ndarray
    roc_ts: np.ndarray
    roc_price: np.ndarray
    roc_volume: np.ndarray
    roc_side: np.ndarray
    roc_signed: np.ndarray
    roc_diff: np.ndarray
    roc_incl: np.ndarray
    roc_reason: np.ndarray
    events: int = 0
    session_end: int = 0

    @property
    def n_segments(self) -> int:
        return len(self.seg_start)

    @property
    def n_trades(self) -> int:
        return len(self.roc_ts)

    def segments(self) -> list[DislocationSegment]:
        out = []
        for i in range(self.n_segments):
            out.append(DislocationSegment(
                symbol=self.symbols[self.seg_sym[i]],
                side=Side.BID if self.seg_side[i] == 0 else Side.OFFER,
                ordering=Ordering.SIP_ABOVE if self.seg_sign[i] > 0 else Ordering.SIP_BELOW,
                start_ts=int(self.seg_start[i]), end_ts=int(self.seg_end[i]),
                min_magnitude=int(self.seg_min[i]), max_magnitude=int(self.seg_max[i]),
                truncated=bool(self.seg_trunc[i]),
            ))
        return out

    def roc_records(self) -> list[RocRecord]:
        out = []
        for i in range(self.n_trades):
            side_code = int(self.roc_side[i])
            out.append(RocRecord(
                symbol=self.symbols[self.roc_sym[i]],
                ts=int(self.roc_ts[i]), price=int(self.roc_price[i]),
                volume=int(self.roc_volume[i]),
                side_matched=None if side_code == 0 else MatchedSide(_SIDES[side_code]),
                roc_signed=int(self.roc_signed[i]),
                is_differing=bool(self.roc_diff[i]),
                included=bool(self.roc_incl[i]),
                exclude_reason=_REASONS[self.roc_reason[i]],
            ))
        return out

    def write_segments_csv(self, path: str | Path) -> None:
        names = np.array(self.symbols, dtype=object)[self.seg_sym] if self.n_segments \
            else np.empty(0, object)
        side = np.where(self.seg_side == 0, "BID", "OFFER")
        ordering = np.where(self.seg_sign > 0, Ordering.SIP_ABOVE.value,
                            Ordering.SIP_BELOW.value)
        df = pd.DataFrame({
            "symbol": names, "side": side, "ordering": ordering,
            "start_ns": self.seg_start, "end_ns": self.seg_end,
            "duration_ns": self.seg_end - self.seg_start,
            "min_mag_1e-4usd": self.seg_min, "max_mag_1e-4usd": self.seg_max,
            "truncated": self.seg_trunc.astype(np.int8),
        })
        assert ",".join(df.columns) == SEGMENT_CSV_HEADER
        df.to_csv(path, index=False, lineterminator="\n")

    def write_roc_csv(self, path: str | Path) -> None:
        names = np.array(self.symbols, dtype=object)[self.roc_sym] if self.n_trades \
            else np.empty(0, object)
        df = pd.DataFrame({
            "symbol": names, "ts_ns": self.roc_ts,
            "price_1e-4usd": self.roc_price, "volume": self.roc_volume,
            "side_matched": np.array(_SIDES, object)[self.roc_side],
            "roc_signed_1e-4usd_sh": self.roc_signed,
            "is_differing": self.roc_diff.astype(np.int8),
            "included": self.roc_incl.astype(np.int8),
            "exclude_reason": np.array(_REASONS, object)[self.roc_reason],
        })
        assert ",".join(df.columns) == ROC_CSV_HEADER
        df.to_csv(path, index=False, lineterminator="\n")

    def purse_rows(self, date: str) -> list[PurseRow]:
        rows = []
        value = self.roc_price * self.roc_volume
        for code, symbol in sorted(enumerate(self.symbols), key=lambda kv: kv[1]):
            sel = self.roc_sym == code
            if not sel.any():
                continue
            diff = sel & self.roc_diff
            incl = sel & self.roc_incl
            roc = self.roc_signed[incl]
            rows.append(PurseRow(
                key=symbol, date=date,
                trades=int(sel.sum()), traded_value=int(value[sel].sum()),
                diff_trades=int(diff.sum()), diff_traded_value=int(value[diff].sum()),
                included_trades=int(incl.sum()),
                included_shares=int(self.roc_volume[incl].sum()),
                roc_sip=int(roc[roc > 0].sum()),
                roc_direct=int(-roc[roc < 0].sum()),
            ))
        return rows


def run_engine(frame: EventFrame, session_end: int | None = None,
               threads: int = 1) -> EngineResult:
    """Detect segments and classify trades over a merged event frame.

    Output ordering is canonical (sorted) and independent of thread count.
    """
    n = len(frame)
    end = int(frame.ts[-1]) if n else 0
    if session_end is not None:
        end = max(end, session_end)

    outputs: list[_SymbolOutput] = []
    if n:
        order = np.argsort(frame.sym, kind="stable")
        sorted_codes = frame.sym[order]
        bounds = np.flatnonzero(np.diff(sorted_codes)) + 1
        slices = np.split(order, bounds)

        def work(idx: np.ndarray) -> _SymbolOutput:
            return _process_symbol(
                int(frame.sym[idx[0]]), frame.ts[idx], frame.src[idx],
                frame.is_trade[idx], frame.bid[idx], frame.offer[idx],
                frame.price[idx], frame.volume[idx], end)

        if threads > 1 and len(slices) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outputs = list(pool.map(work, slices))
        else:
            outputs = [work(idx) for idx in slices]

    def cat(attr: str, dtype) -> np.ndarray:
        if not outputs:
            return np.empty(0, dtype)
        return np.concatenate([getattr(o, attr) for o in outputs]).astype(dtype, copy=False)

    seg_sym = np.concatenate([np.full(len(o.seg_start), o.code, np.int64)
                              for o in outputs]) if outputs else np.empty(0, np.int64)
    roc_sym = np.concatenate([np.full(len(o.trade_ts), o.code, np.int64)
                              for o in outputs]) if outputs else np.empty(0, np.int64)
    result = EngineResult(
        symbols=frame.symbols,
        seg_sym=seg_sym, seg_side=cat("seg_side", np.int8), seg_sign=cat("seg_sign", np.int64),
        seg_start=cat("seg_start", np.int64), seg_end=cat("seg_end", np.int64),
        seg_min=cat("seg_min", np.int64), seg_max=cat("seg_max", np.int64),
        seg_trunc=cat("seg_trunc", bool),
        roc_sym=roc_sym, roc_ts=cat("trade_ts", np.int64), roc_price=cat("trade_price", np.int64),
        roc_volume=cat("trade_volume", np.int64), roc_side=cat("trade_side", np.int8),
        roc_signed=cat("trade_roc", np.int64), roc_diff=cat("trade_diff", bool),
        roc_incl=cat("trade_incl", bool), roc_reason=cat("trade_reason", np.int8),
        events=n, session_end=end,
    )
    _sort_canonical(result)
    return result


def _sort_canonical(res: EngineResult) -> None:
    if res.n_segments:
        name_rank = np.argsort(np.argsort(np.array(res.symbols)))
        order = np.lexsort((res.seg_sign, res.seg_end, res.seg_side,
                            res.seg_start, name_rank[res.seg_sym]))
        for attr in ("seg_sym", "seg_side", "seg_sign", "seg_start", "seg_end",
                     "seg_min", "seg_max", "seg_trunc"):
            setattr(res, attr, getattr(res, attr)[order])
    if res.n_trades:
        name_rank = np.argsort(np.argsort(np.array(res.symbols)))
        order = np.lexsort((res.roc_volume, res.roc_price, res.roc_ts,
                            name_rank[res.roc_sym]))
        for attr in ("roc_sym", "roc_ts", "roc_price", "roc_volume", "roc_side",
                     "roc_signed", "roc_diff", "roc_incl", "roc_reason"):
            setattr(res, attr, getattr(res, attr)[order])
