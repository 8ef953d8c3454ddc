"""Per-exchange book tops and consolidated best bid/offer maintenance.

The observer keeps two consolidated views per symbol: the SIP NBBO taken
verbatim from SIP quote messages, and a synthetic direct-feed BBO (DBBO)
recomputed from the latest top-of-book quote of every exchange.  Only top of
book is kept; depth is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Quote

_NO_OFFER = 1 << 62  # sentinel above any representable price


@dataclass(frozen=True, slots=True)
class ConsolidatedBBO:
    """Best bid/offer with sizes; price 0 marks an absent side.

    Sizes sum across all exchanges quoting exactly the best price.  Sizes do
    not enter dislocation or opportunity-cost math, so this aggregation rule
    affects reports only.
    """

    bid: int = 0
    bid_size: int = 0
    offer: int = 0
    offer_size: int = 0
    ts: int = 0

    @property
    def has_bid(self) -> bool:
        return self.bid > 0

    @property
    def has_offer(self) -> bool:
        return self.offer > 0

    def prices_equal(self, other: "ConsolidatedBBO") -> bool:
        return self.bid == other.bid and self.offer == other.offer


EMPTY_BBO = ConsolidatedBBO()


class ExchangeBook:
    """Latest top-of-book quote per exchange for one symbol."""

    __slots__ = ("quotes",)

    def __init__(self) -> None:
        self.quotes: dict[str, Quote] = {}

    def apply_direct_quote(self, exchange: str, quote: Quote, ts: int) -> ConsolidatedBBO:
        """Replace one exchange's top and return the recomputed DBBO."""
        self.quotes[exchange] = quote
        return self.consolidate(ts)

    def consolidate(self, ts: int) -> ConsolidatedBBO:
        """DBBO from scratch: max bid / min offer, sizes summed at best.

        A pure function of the latest quote per exchange; exchanges with an
        absent side contribute nothing to that side.
        """
        best_bid = 0
        bid_size = 0
        best_offer = _NO_OFFER
        offer_size = 0
        for q in self.quotes.values():
            if q.bid > 0:
                if q.bid > best_bid:
                    best_bid = q.bid
                    bid_size = q.bid_size
                elif q.bid == best_bid:
                    bid_size += q.bid_size
            if q.offer > 0:
                if q.offer < best_offer:
                    best_offer = q.offer
                    offer_size = q.offer_size
                elif q.offer == best_offer:
                    offer_size += q.offer_size
        if best_offer == _NO_OFFER:
            best_offer = 0
            offer_size = 0
        return ConsolidatedBBO(bid=best_bid, bid_size=bid_size,
                               offer=best_offer, offer_size=offer_size, ts=ts)


def apply_sip_quote(quote: Quote, ts: int) -> ConsolidatedBBO:
    """SIP NBBO is adopted verbatim; the SIP already consolidated it."""
    return ConsolidatedBBO(bid=quote.bid, bid_size=quote.bid_size,
                           offer=quote.offer, offer_size=quote.offer_size, ts=ts)
