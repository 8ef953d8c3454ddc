"""Dislocation-segment detection between the SIP NBBO and the synthetic DBBO.

A dislocation exists on a side when both feeds quote a price and the prices
differ; a segment is a maximal interval over which the ordering of the two
prices is constant.  Sides are tracked independently: a simultaneous
two-sided dislocation yields two segments, and a sign flip closes one
segment and opens the next at the same instant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bbo import ConsolidatedBBO
from .model import Side

DEFAULT_DURATION_FLOOR_NS = 545_000
DEFAULT_MAGNITUDE_FLOOR = 100  # one cent in 1e-4 USD


class Ordering(Enum):
    SIP_BELOW = "SIP_BELOW"    # sip price < direct-synthetic price
    SIP_ABOVE = "SIP_ABOVE"


@dataclass(frozen=True, slots=True)
class DislocationSegment:
    symbol: str
    side: Side
    ordering: Ordering
    start_ts: int
    end_ts: int
    min_magnitude: int
    max_magnitude: int
    truncated: bool = False

    @property
    def duration(self) -> int:
        return self.end_ts - self.start_ts

    def sort_key(self) -> tuple:
        return (self.symbol, self.start_ts, self.side.value, self.end_ts, self.ordering.value)


class _SideState:
    """Open-segment accumulator for one (symbol, side)."""

    __slots__ = ("sign", "start_ts", "min_mag", "max_mag")

    def __init__(self) -> None:
        self.sign = 0          # 0 idle, +1 sip above, -1 sip below
        self.start_ts = 0
        self.min_mag = 0
        self.max_mag = 0

    def _emit(self, symbol: str, side: Side, end_ts: int, truncated: bool) -> DislocationSegment:
        ordering = Ordering.SIP_ABOVE if self.sign > 0 else Ordering.SIP_BELOW
        return DislocationSegment(
            symbol=symbol, side=side, ordering=ordering,
            start_ts=self.start_ts, end_ts=end_ts,
            min_magnitude=self.min_mag, max_magnitude=self.max_mag,
            truncated=truncated,
        )

    def step(self, symbol: str, side: Side, ts: int, sip_px: int, direct_px: int,
             out: list[DislocationSegment]) -> None:
        if sip_px > 0 and direct_px > 0 and sip_px != direct_px:
            sign = 1 if sip_px > direct_px else -1
            mag = abs(sip_px - direct_px)
        else:
            sign = 0
            mag = 0
        if self.sign == 0:
            if sign != 0:
                self.sign = sign
                self.start_ts = ts
                self.min_mag = self.max_mag = mag
            return
        if sign == self.sign:
            if mag < self.min_mag:
                self.min_mag = mag
            elif mag > self.max_mag:
                self.max_mag = mag
            return
        out.append(self._emit(symbol, side, ts, truncated=False))
        self.sign = sign
        if sign != 0:
            self.start_ts = ts
            self.min_mag = self.max_mag = mag


class DislocationDetector:
    """Per-symbol segment state machine over (SIP NBBO, DBBO) price pairs.

    step() must be called after every event that changes either view's
    prices; size-only updates may be passed and do not affect the output.
    """

    __slots__ = ("symbol", "_bid", "_offer", "_last_ts")

    def __init__(self, symbol: str) -> None:
        self.symbol = symbol
        self._bid = _SideState()
        self._offer = _SideState()
        self._last_ts = -1

    @property
    def bid_open(self) -> bool:
        return self._bid.sign != 0

    @property
    def offer_open(self) -> bool:
        return self._offer.sign != 0

    @property
    def any_open(self) -> bool:
        return self.bid_open or self.offer_open

    def step(self, ts: int, sip: ConsolidatedBBO, dbbo: ConsolidatedBBO) -> list[DislocationSegment]:
        if ts < self._last_ts:
            raise ValueError(f"timestamp regression {ts} < {self._last_ts} for {self.symbol}")
        self._last_ts = ts
        out: list[DislocationSegment] = []
        self._bid.step(self.symbol, Side.BID, ts, sip.bid, dbbo.bid, out)
        self._offer.step(self.symbol, Side.OFFER, ts, sip.offer, dbbo.offer, out)
        return out

    def finalize(self, session_end: int) -> list[DislocationSegment]:
        """Close any open segment at session end, flagged truncated."""
        out: list[DislocationSegment] = []
        for state, side in ((self._bid, Side.BID), (self._offer, Side.OFFER)):
            if state.sign != 0:
                out.append(state._emit(self.symbol, side, session_end, truncated=True))
                state.sign = 0
        return out


def condition(
    segments: Iterable[DislocationSegment],
    duration_floor_ns: int | None = DEFAULT_DURATION_FLOOR_NS,
    magnitude_floor: int | None = DEFAULT_MAGNITUDE_FLOOR,
    include_truncated: bool = False,
) -> list[DislocationSegment]:
    """Filter segments on strict duration and min-magnitude thresholds.

    Both filters are strict (>): a segment of exactly 545 us or exactly one
    cent is dropped.  Truncated end-of-session segments are excluded from
    conditioned output unless include_truncated is set, since their true
    durations are unknown.
    """
    out = []
    conditioning = duration_floor_ns is not None or magnitude_floor is not None
    for seg in segments:
        if seg.truncated and conditioning and not include_truncated:
            continue
        if duration_floor_ns is not None and not seg.duration > duration_floor_ns:
            continue
        if magnitude_floor is not None and not seg.min_magnitude > magnitude_floor:
            continue
        out.append(seg)
    return out


@dataclass(frozen=True)
class FieldSummary:
    mean: float
    std: float
    min: float
    q25: float
    q50: float
    q75: float
    max: float


@dataclass(frozen=True)
class SegmentSummary:
    count: int
    min_magnitude: FieldSummary
    max_magnitude: FieldSummary
    duration: FieldSummary


_NAN_FIELD = FieldSummary(*([float("nan")] * 7))


def _field_summary(values: np.ndarray) -> FieldSummary:
    q25, q50, q75 = np.percentile(values, [25, 50, 75])  # linear interpolation
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return FieldSummary(
        mean=float(values.mean()), std=std,
        min=float(values.min()), q25=float(q25), q50=float(q50), q75=float(q75),
        max=float(values.max()),
    )


def summarize(segments: Sequence[DislocationSegment]) -> SegmentSummary:
    """Moments and quartiles of min/max magnitude and duration."""
    if not segments:
        return SegmentSummary(0, _NAN_FIELD, _NAN_FIELD, _NAN_FIELD)
    min_mag = np.array([s.min_magnitude for s in segments], dtype=np.float64)
    max_mag = np.array([s.max_magnitude for s in segments], dtype=np.float64)
    dur = np.array([s.duration for s in segments], dtype=np.float64)
    return SegmentSummary(
        count=len(segments),
        min_magnitude=_field_summary(min_mag),
        max_magnitude=_field_summary(max_mag),
        duration=_field_summary(dur),
    )


SEGMENT_CSV_HEADER = ("symbol,side,ordering,start_ns,end_ns,duration_ns,"
                      "min_mag_1e-4usd,max_mag_1e-4usd,truncated")


def write_segments(path: str | Path, segments: Iterable[DislocationSegment]) -> None:
    ordered = sorted(segments, key=DislocationSegment.sort_key)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SEGMENT_CSV_HEADER + "\n")
        for s in ordered:
            fh.write(f"{s.symbol},{s.side.value},{s.ordering.value},{s.start_ts},{s.end_ts},"
                     f"{s.duration},{s.min_magnitude},{s.max_magnitude},{int(s.truncated)}\n")


def read_segments(path: str | Path) -> list[DislocationSegment]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != SEGMENT_CSV_HEADER:
            raise ValueError(f"bad segment CSV header in {path}")
        for row in reader:
            out.append(DislocationSegment(
                symbol=row[0], side=Side(row[1]), ordering=Ordering(row[2]),
                start_ts=int(row[3]), end_ts=int(row[4]),
                min_magnitude=int(row[6]), max_magnitude=int(row[7]),
                truncated=bool(int(row[8])),
            ))
    return out
