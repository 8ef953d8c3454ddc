"""Realized opportunity cost: trade classification and purse accounting.

A trade that executes while a dislocation is open is a differing trade.  A
differing trade enters the opportunity-cost sums only when its print price
matches exactly one of the two SIP quotes (the conservative inclusion rule);
the signed cost compares that SIP quote with the direct-feed consolidated
quote on the same side, positive when the direct feed showed the better
price for the active trader.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_EVEN
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .bbo import ConsolidatedBBO
from .model import PRICE_SCALE, SymbolMeta, TradeMsg, usd_str


class MatchedSide(Enum):
    SIP_BID = "SIP_BID"
    SIP_OFFER = "SIP_OFFER"


# Exclusion reasons (empty string means included)
NOT_DIFFERING = "not_differing"
PRICE_OFF_QUOTE = "price_not_at_sip_quote"
SIP_LOCKED = "sip_locked_ambiguous"
DIRECT_BID_ABSENT = "direct_bid_absent"
DIRECT_OFFER_ABSENT = "direct_offer_absent"


@dataclass(frozen=True, slots=True)
class RocRecord:
    symbol: str
    ts: int
    price: int
    volume: int
    side_matched: MatchedSide | None
    roc_signed: int              # 1e-4 USD * shares; > 0 means direct was better
    is_differing: bool
    included: bool
    exclude_reason: str = ""

    def sort_key(self) -> tuple:
        return (self.symbol, self.ts, self.price, self.volume)


def classify_trade(
    trade: TradeMsg,
    sip: ConsolidatedBBO,
    dbbo: ConsolidatedBBO,
    dislocation_open: bool,
) -> RocRecord:
    """Classify one trade against the quote state prevailing at its ts.

    The caller must pass the state after all quote updates with ts <= the
    trade's ts have been applied; dislocation_open says whether any segment
    is open for the symbol at that instant.
    """
    at_bid = sip.has_bid and trade.price == sip.bid
    at_offer = sip.has_offer and trade.price == sip.offer
    if at_bid and at_offer:
        side = None
    elif at_bid:
        side = MatchedSide.SIP_BID
    elif at_offer:
        side = MatchedSide.SIP_OFFER
    else:
        side = None

    def record(included: bool, roc: int, reason: str) -> RocRecord:
        return RocRecord(symbol=trade.symbol, ts=trade.ts, price=trade.price,
                         volume=trade.volume, side_matched=side, roc_signed=roc,
                         is_differing=dislocation_open, included=included,
                         exclude_reason=reason)

    if not dislocation_open:
        return record(False, 0, NOT_DIFFERING)
    if at_bid and at_offer:
        return record(False, 0, SIP_LOCKED)
    if not (at_bid or at_offer):
        return record(False, 0, PRICE_OFF_QUOTE)
    if at_bid:
        if not dbbo.has_bid:
            return record(False, 0, DIRECT_BID_ABSENT)
        return record(True, (dbbo.bid - sip.bid) * trade.volume, "")
    if not dbbo.has_offer:
        return record(False, 0, DIRECT_OFFER_ABSENT)
    return record(True, (sip.offer - dbbo.offer) * trade.volume, "")


@dataclass
class PurseRow:
    """Per-key (symbol or category, per day) trade and opportunity-cost sums.

    Money fields are integers in 1e-4 USD (times shares for traded value and
    cost sums); roc_total == roc_sip + roc_direct holds exactly.
    """

    key: str
    date: str
    trades: int = 0
    traded_value: int = 0
    diff_trades: int = 0
    diff_traded_value: int = 0
    included_trades: int = 0
    included_shares: int = 0
    roc_sip: int = 0
    roc_direct: int = 0

    @property
    def roc_total(self) -> int:
        return self.roc_sip + self.roc_direct

    @property
    def roc_per_share(self) -> float:
        """Share-weighted cost per share (USD) over included records."""
        if self.included_shares == 0:
            return 0.0
        return self.roc_total / self.included_shares / PRICE_SCALE

    def add(self, rec: RocRecord) -> None:
        value = rec.price * rec.volume
        self.trades += 1
        self.traded_value += value
        if rec.is_differing:
            self.diff_trades += 1
            self.diff_traded_value += value
        if rec.included:
            self.included_trades += 1
            self.included_shares += rec.volume
            if rec.roc_signed >= 0:
                self.roc_sip += rec.roc_signed
            else:
                self.roc_direct += -rec.roc_signed

    def merge(self, other: "PurseRow") -> "PurseRow":
        """Rows merge associatively, enabling parallel reduction."""
        if (self.key, self.date) != (other.key, other.date):
            raise ValueError("cannot merge purse rows with different keys")
        return PurseRow(
            key=self.key, date=self.date,
            trades=self.trades + other.trades,
            traded_value=self.traded_value + other.traded_value,
            diff_trades=self.diff_trades + other.diff_trades,
            diff_traded_value=self.diff_traded_value + other.diff_traded_value,
            included_trades=self.included_trades + other.included_trades,
            included_shares=self.included_shares + other.included_shares,
            roc_sip=self.roc_sip + other.roc_sip,
            roc_direct=self.roc_direct + other.roc_direct,
        )


def aggregate_purse(
    records: Iterable[RocRecord],
    date: str,
    by_category: Mapping[str, SymbolMeta] | None = None,
) -> list[PurseRow]:
    """Aggregate classified trades per symbol (default) or per category."""
    rows: dict[str, PurseRow] = {}
    for rec in records:
        key = rec.symbol
        if by_category is not None:
            meta = by_category.get(rec.symbol)
            key = meta.category if meta is not None else "OTHER"
        row = rows.get(key)
        if row is None:
            row = rows[key] = PurseRow(key=key, date=date)
        row.add(rec)
    return [rows[k] for k in sorted(rows)]


_PCT = Decimal("0.01")
_RATIO = Decimal("0.0001")


@dataclass(frozen=True)
class PurseReport:
    """The ten headline accounting lines for an arbitrary symbol set."""

    roc_sip: int
    roc_direct: int
    trades: int
    diff_trades: int
    traded_value: int
    diff_traded_value: int

    @property
    def roc_total(self) -> int:
        return self.roc_sip + self.roc_direct

    @property
    def pct_diff_trades(self) -> Fraction | None:
        if self.trades == 0:
            return None
        return Fraction(100 * self.diff_trades, self.trades)

    @property
    def pct_diff_traded_value(self) -> Fraction | None:
        if self.traded_value == 0:
            return None
        return Fraction(100 * self.diff_traded_value, self.traded_value)

    @property
    def ratio(self) -> Fraction | None:
        """Percent-diff-value over percent-diff-trades, at full precision."""
        if (self.trades == 0 or self.traded_value == 0
                or self.diff_trades == 0):
            return None
        return Fraction(self.diff_traded_value * self.trades,
                        self.traded_value * self.diff_trades)

    @classmethod
    def from_rows(cls, rows: Iterable[PurseRow]) -> "PurseReport":
        tr = tv = dt = dv = rs = rd = 0
        for r in rows:
            tr += r.trades
            tv += r.traded_value
            dt += r.diff_trades
            dv += r.diff_traded_value
            rs += r.roc_sip
            rd += r.roc_direct
        return cls(roc_sip=rs, roc_direct=rd, trades=tr, diff_trades=dt,
                   traded_value=tv, diff_traded_value=dv)

    def lines(self) -> list[tuple[int, str, str]]:
        def pct(f: Fraction | None) -> str:
            if f is None:
                return "undefined"
            return str((Decimal(f.numerator) / f.denominator).quantize(_PCT, ROUND_HALF_EVEN))

        ratio = self.ratio
        ratio_s = ("undefined" if ratio is None else
                   str((Decimal(ratio.numerator) / ratio.denominator).quantize(_RATIO, ROUND_HALF_EVEN)))
        return [
            (1, "Realized Opportunity Cost", f"${usd_str(self.roc_total)}"),
            (2, "SIP Opportunity Cost", f"${usd_str(self.roc_sip)}"),
            (3, "Direct Opportunity Cost", f"${usd_str(self.roc_direct)}"),
            (4, "Trades", f"{self.trades:,}"),
            (5, "Diff. Trades", f"{self.diff_trades:,}"),
            (6, "Traded Value", f"${usd_str(self.traded_value)}"),
            (7, "Diff. Traded Value", f"${usd_str(self.diff_traded_value)}"),
            (8, "Percent Diff. Trades", pct(self.pct_diff_trades)),
            (9, "Percent Diff. Traded Value", pct(self.pct_diff_traded_value)),
            (10, "Ratio of 9 / 8", ratio_s),
        ]

    def render(self) -> str:
        rows = self.lines()
        label_w = max(len(label) for _, label, _ in rows)
        value_w = max(len(value) for _, _, value in rows)
        return "\n".join(f"{n:>2}  {label:<{label_w}}  {value:>{value_w}}"
                         for n, label, value in rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["line", "label", "value"])
            for n, label, value in self.lines():
                writer.writerow([n, label, value])


ROC_CSV_HEADER = ("symbol,ts_ns,price_1e-4usd,volume,side_matched,"
                  "roc_signed_1e-4usd_sh,is_differing,included,exclude_reason")


def write_roc_records(path: str | Path, records: Iterable[RocRecord]) -> None:
    ordered = sorted(records, key=RocRecord.sort_key)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ROC_CSV_HEADER + "\n")
        for r in ordered:
            side = r.side_matched.value if r.side_matched is not None else ""
            fh.write(f"{r.symbol},{r.ts},{r.price},{r.volume},{side},"
                     f"{r.roc_signed},{int(r.is_differing)},{int(r.included)},{r.exclude_reason}\n")


def read_roc_records(path: str | Path) -> list[RocRecord]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != ROC_CSV_HEADER:
            raise ValueError(f"bad roc CSV header in {path}")
        for row in reader:
            out.append(RocRecord(
                symbol=row[0], ts=int(row[1]), price=int(row[2]), volume=int(row[3]),
                side_matched=MatchedSide(row[4]) if row[4] else None,
                roc_signed=int(row[5]), is_differing=bool(int(row[6])),
                included=bool(int(row[7])), exclude_reason=row[8],
            ))
    return out


PURSE_CSV_HEADER = (
    "key,date,trades,traded_value_1e-4usd,diff_trades,diff_traded_value_1e-4usd,"
    "included_trades,included_shares,roc_1e-4usd,roc_sip_1e-4usd,roc_direct_1e-4usd,"
    "traded_value_usd,diff_traded_value_usd,roc_usd,roc_sip_usd,roc_direct_usd,roc_per_share_usd"
)


def write_purse(path: str | Path, rows: Iterable[PurseRow]) -> None:
    """Exact integer fields first, formatted USD columns after."""
    ordered = sorted(rows, key=lambda r: (r.date, r.key))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PURSE_CSV_HEADER + "\n")
        for r in ordered:
            fh.write(
                f"{r.key},{r.date},{r.trades},{r.traded_value},{r.diff_trades},"
                f"{r.diff_traded_value},{r.included_trades},{r.included_shares},"
                f"{r.roc_total},{r.roc_sip},{r.roc_direct},"
                f"{usd_str(r.traded_value, thousands=False)},"
                f"{usd_str(r.diff_traded_value, thousands=False)},"
                f"{usd_str(r.roc_total, thousands=False)},"
                f"{usd_str(r.roc_sip, thousands=False)},"
                f"{usd_str(r.roc_direct, thousands=False)},"
                f"{r.roc_per_share:.6f}\n"
            )


def read_purse(path: str | Path) -> list[PurseRow]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != PURSE_CSV_HEADER:
            raise ValueError(f"bad purse CSV header in {path}")
        for row in reader:
            out.append(PurseRow(
                key=row[0], date=row[1], trades=int(row[2]), traded_value=int(row[3]),
                diff_trades=int(row[4]), diff_traded_value=int(row[5]),
                included_trades=int(row[6]), included_shares=int(row[7]),
                roc_sip=int(row[9]), roc_direct=int(row[10]),
            ))
    return out
