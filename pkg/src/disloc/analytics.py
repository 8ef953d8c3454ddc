"""Statistics over segment and opportunity-cost datasets.

Daily aggregation, conditional averages, intra-day and log-duration
histograms, series normalization, detrended fluctuation analysis, pairwise
Granger-causality testing (four statistics under a Bonferroni rule),
Pearson correlation matrices, log-log least-squares scaling fits, moment
statistics, rankings, and polar (circle-plot) exports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .detector import DislocationSegment
from .model import DAY_NS, PRICE_SCALE
from .roc import PurseRow

_Z95 = float(sps.norm.ppf(0.975))


@dataclass(frozen=True)
class DailySeries:
    """One value per trading day, dates strictly increasing."""

    label: str
    dates: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise ValueError("dates and values length mismatch")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)


def daily_series(rows: Iterable[PurseRow], value: str = "roc",
                 label: str = "") -> DailySeries:
    """Per-day series from purse rows: summed cost or mean cost per share."""
    if value not in ("roc", "roc_per_share"):
        raise ValueError(f"unknown series value {value!r}")
    by_date: dict[str, list[PurseRow]] = {}
    for row in rows:
        by_date.setdefault(row.date, []).append(row)
    dates = tuple(sorted(by_date))
    if value == "roc":
        vals = [sum(r.roc_total for r in by_date[d]) / PRICE_SCALE for d in dates]
    else:
        vals = [float(np.mean([r.roc_per_share for r in by_date[d]])) for d in dates]
    return DailySeries(label=label or value, dates=dates,
                       values=np.asarray(vals, dtype=np.float64))


def conditional_average(values: Sequence[float], condition: Sequence[bool]) -> float:
    """Mean of the values satisfying the condition; NaN when none do."""
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(condition, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError("values and condition must align")
    if not mask.any():
        return float("nan")
    return float(values[mask].mean())


def start_time_histogram(
    segments: Iterable[DislocationSegment],
    bin_width_ns: int,
    session_start_ns: int,
    session_length_ns: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Counts of segment start times per intra-day bin, summed across days.

    Start timestamps are taken modulo one day; bin width must divide the
    session length.  Returns (counts, bin_left_edges_ns, excluded) where
    excluded counts starts outside the session window.
    """
    if bin_width_ns <= 0 or session_length_ns % bin_width_ns != 0:
        raise ValueError("bin width must divide session length")
    n_bins = session_length_ns // bin_width_ns
    counts = np.zeros(n_bins, dtype=np.int64)
    excluded = 0
    for seg in segments:
        intra = (seg.start_ts % DAY_NS) - session_start_ns
        if 0 <= intra < session_length_ns:
            counts[intra // bin_width_ns] += 1
        else:
            excluded += 1
    edges = session_start_ns + bin_width_ns * np.arange(n_bins, dtype=np.int64)
    return counts, edges, excluded


def duration_histogram(
    segments: Iterable[DislocationSegment],
    bin_width: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Histogram of log10(duration in seconds) with half-open [lo, hi) bins.

    Bin edges sit on integer multiples of bin_width.  Zero-duration
    segments cannot be logged; they are excluded and counted.  Returns
    (counts, edges, n_zero_excluded) with len(edges) == len(counts) + 1.
    """
    durations = np.array([s.duration for s in segments], dtype=np.float64)
    zero = int((durations == 0).sum())
    durations = durations[durations > 0]
    if len(durations) == 0:
        return np.zeros(0, np.int64), np.zeros(1), zero
    logs = np.log10(durations / 1e9)
    idx = np.floor(logs / bin_width).astype(np.int64)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1).astype(np.int64)
    edges = bin_width * np.arange(lo, hi + 2, dtype=np.float64)
    return counts, edges, zero


def normalize_series(series: DailySeries) -> DailySeries:
    """Center to zero mean and rescale to unit (population) variance."""
    if len(series) < 2:
        raise ValueError("need at least two observations")
    values = series.values
    var = float(values.var())
    if var == 0.0:
        raise ValueError("zero variance series cannot be normalized")
    out = (values - values.mean()) / math.sqrt(var)
    return DailySeries(label=series.label, dates=series.dates, values=out)


# --- Detrended fluctuation analysis ------------------------------------------

def default_box_sizes(n: int, n_sizes: int = 20) -> np.ndarray:
    """Log-spaced box sizes from 4 to n // 4."""
    if n < 16:
        raise ValueError(f"series too short for fluctuation analysis: "
                         f"need at least 16 points, got {n}")
    sizes = np.unique(np.floor(np.logspace(
        math.log10(4), math.log10(n // 4), n_sizes)).astype(int))
    return sizes


def dfa_fluctuations(values: Sequence[float],
                     box_sizes: Sequence[int] | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """RMS fluctuation of the integrated, per-box linearly detrended series.

    Non-overlapping boxes with an order-1 fit per box; trailing points that
    do not fill a box are dropped for that box size.
    """
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    sizes = default_box_sizes(n) if box_sizes is None else \
        np.asarray(sorted(set(int(s) for s in box_sizes)), dtype=int)
    if sizes[0] < 4:
        raise ValueError("box sizes must be >= 4")
    if n < 4 * sizes[-1]:
        raise ValueError(f"series too short: need at least {4 * sizes[-1]} "
                         f"points for largest box {sizes[-1]}, got {n}")
    profile = np.cumsum(x - x.mean())
    flucts = np.empty(len(sizes), dtype=np.float64)
    for k, size in enumerate(sizes):
        m = n // size
        boxes = profile[: m * size].reshape(m, size).T   # (size, m)
        t = np.arange(size, dtype=np.float64)
        coeff = np.polyfit(t, boxes, 1)                  # (2, m)
        resid = boxes - (np.outer(t, coeff[0]) + coeff[1])
        flucts[k] = math.sqrt(float(np.mean(resid ** 2)))
    return sizes, flucts


def dfa_exponent(values: Sequence[float],
                 box_sizes: Sequence[int] | None = None) -> float:
    """Scaling exponent: slope of log RMS fluctuation against log box size.

    0.5 is uncorrelated noise, below 0.5 anti-persistent (mean reverting),
    1.5 integrated noise.
    """
    sizes, flucts = dfa_fluctuations(values, box_sizes)
    good = flucts > 0
    if good.sum() < 2:
        raise ValueError("not enough usable box sizes")
    slope, _ = np.polyfit(np.log10(sizes[good]), np.log10(flucts[good]), 1)
    return float(slope)


# --- Granger causality --------------------------------------------------------

@dataclass(frozen=True)
class GrangerResult:
    """Per-lag p-values of the four tests for one ordered pair x -> y.

    A lag is significant only when all four p-values clear the
    Bonferroni-corrected level alpha / max_lag.
    """

    pair: str
    max_lag: int
    alpha: float
    lags: tuple[int, ...]
    p_ssr_f: np.ndarray
    p_ssr_chi2: np.ndarray
    p_lr: np.ndarray
    p_wald: np.ndarray
    untestable: tuple[int, ...] = ()

    @property
    def threshold(self) -> float:
        return self.alpha / self.max_lag

    @property
    def significant_lags(self) -> list[int]:
        out = []
        for i, lag in enumerate(self.lags):
            if lag in self.untestable:
                continue
            ps = (self.p_ssr_f[i], self.p_ssr_chi2[i], self.p_lr[i], self.p_wald[i])
            if all(p < self.threshold for p in ps):
                out.append(lag)
        return out

    @property
    def significant(self) -> bool:
        return bool(self.significant_lags)


def _lag_columns(v: np.ndarray, lag: int) -> np.ndarray:
    n = len(v)
    return np.column_stack([v[lag - j: n - j] for j in range(1, lag + 1)])


def granger_tests(x, y, max_lag: int = 40, alpha: float = 0.05) -> GrangerResult:
    """Test whether past values of x improve linear prediction of y.

    For each lag a restricted autoregression of y on its own lags is
    compared with an unrestricted one adding x's lags; the residual-sum
    F and chi-square statistics, a likelihood ratio, and a Wald statistic
    on the x coefficients are evaluated against their reference
    distributions.
    """
    xv = x.values if isinstance(x, DailySeries) else np.asarray(x, np.float64)
    yv = y.values if isinstance(y, DailySeries) else np.asarray(y, np.float64)
    if len(xv) != len(yv):
        raise ValueError("series must have equal length")
    n = len(yv)
    if n < 3 * max_lag:
        raise ValueError(f"need at least {3 * max_lag} observations for "
                         f"max_lag {max_lag}, got {n}")
    label_x = x.label if isinstance(x, DailySeries) else "x"
    label_y = y.label if isinstance(y, DailySeries) else "y"

    lags = tuple(range(1, max_lag + 1))
    p_f = np.full(max_lag, np.nan)
    p_chi2 = np.full(max_lag, np.nan)
    p_lr = np.full(max_lag, np.nan)
    p_wald = np.full(max_lag, np.nan)
    untestable: list[int] = []

    for i, lag in enumerate(lags):
        target = yv[lag:]
        n_obs = len(target)
        ones = np.ones((n_obs, 1))
        x_r = np.hstack([ones, _lag_columns(yv, lag)])
        x_u = np.hstack([x_r, _lag_columns(xv, lag)])
        k_u = x_u.shape[1]
        df_resid = n_obs - k_u

        beta_u, _, rank_u, _ = np.linalg.lstsq(x_u, target, rcond=None)
        if rank_u < k_u or df_resid <= 0:
            untestable.append(lag)
            continue
        beta_r, _, rank_r, _ = np.linalg.lstsq(x_r, target, rcond=None)
        if rank_r < x_r.shape[1]:
            untestable.append(lag)
            continue
        ssr_u = float(np.sum((target - x_u @ beta_u) ** 2))
        ssr_r = float(np.sum((target - x_r @ beta_r) ** 2))
        if ssr_u <= 0.0:
            untestable.append(lag)
            continue

        f_stat = ((ssr_r - ssr_u) / lag) / (ssr_u / df_resid)
        p_f[i] = float(sps.f.sf(f_stat, lag, df_resid))
        chi2 = n_obs * (ssr_r - ssr_u) / ssr_u
        p_chi2[i] = float(sps.chi2.sf(chi2, lag))
        lr = n_obs * math.log(ssr_r / ssr_u)
        p_lr[i] = float(sps.chi2.sf(lr, lag))

        s2 = ssr_u / df_resid
        cov = np.linalg.inv(x_u.T @ x_u) * s2
        bx = beta_u[1 + lag:]
        wald = float(bx @ np.linalg.solve(cov[1 + lag:, 1 + lag:], bx))
        p_wald[i] = float(sps.chi2.sf(wald, lag))

    return GrangerResult(pair=f"{label_x}->{label_y}", max_lag=max_lag,
                         alpha=alpha, lags=lags, p_ssr_f=p_f, p_ssr_chi2=p_chi2,
                         p_lr=p_lr, p_wald=p_wald, untestable=tuple(untestable))


def pearson_matrix(series: Sequence[DailySeries]) -> tuple[list[str], np.ndarray]:
    """Symmetric correlation matrix; zero-variance entries become NaN."""
    labels = [s.label for s in series]
    k = len(series)
    n = {len(s) for s in series}
    if len(n) != 1 or n.pop() < 2:
        raise ValueError("series must share a common length >= 2")
    mat = np.eye(k)
    centered = [s.values - s.values.mean() for s in series]
    norms = [float(np.sqrt(np.sum(c * c))) for c in centered]
    for i in range(k):
        for j in range(i + 1, k):
            if norms[i] == 0.0 or norms[j] == 0.0:
                mat[i, j] = mat[j, i] = float("nan")
            else:
                mat[i, j] = mat[j, i] = float(
                    np.dot(centered[i], centered[j]) / (norms[i] * norms[j]))
    for i in range(k):
        if norms[i] == 0.0:
            mat[i, i] = float("nan")
    return labels, mat


# --- Least-squares scaling fits ----------------------------------------------

class CollinearityError(ValueError):
    """The design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"collinear design columns: {', '.join(columns)}")


@dataclass(frozen=True)
class OlsFit:
    names: tuple[str, ...]
    coef: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    p: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    r2: float
    adj_r2: float
    n_obs: int
    n_excluded: int
    quadratic: bool

    def summary(self) -> str:
        width = max(len(n) for n in self.names)
        lines = [f"n={self.n_obs} excluded={self.n_excluded} "
                 f"R2={self.r2:.4f} adjR2={self.adj_r2:.4f}"]
        for i, name in enumerate(self.names):
            lines.append(
                f"{name:<{width}}  coef={self.coef[i]: .6f}  se={self.stderr[i]:.6f}  "
                f"z={self.z[i]: .3f}  p={self.p[i]:.4g}  "
                f"ci=[{self.ci_low[i]: .4f}, {self.ci_high[i]: .4f}]")
        return "\n".join(lines)


def ols_fit(predictors: Mapping[str, Sequence[float]],
            response: Sequence[float],
            quadratic: bool = False,
            response_name: str = "response") -> OlsFit:
    """Least squares on base-10 logs of the inputs, with optional squares.

    Rows where any logged field is nonpositive are dropped and counted.
    Normal-theory standard errors; z-statistics and 95% intervals from the
    normal reference.  Rank deficiency raises CollinearityError naming the
    columns involved.
    """
    names = list(predictors)
    raw = np.column_stack([np.asarray(predictors[k], np.float64) for k in names])
    yraw = np.asarray(response, np.float64)
    if raw.shape[0] != len(yraw):
        raise ValueError("predictor and response lengths differ")
    keep = (raw > 0).all(axis=1) & (yraw > 0)
    n_excluded = int((~keep).sum())
    logx = np.log10(raw[keep])
    logy = np.log10(yraw[keep])

    columns = [np.ones(len(logy))]
    out_names = ["intercept"]
    for j, name in enumerate(names):
        columns.append(logx[:, j])
        out_names.append(f"log10_{name}")
    if quadratic:
        for j, name in enumerate(names):
            columns.append(logx[:, j] ** 2)
            out_names.append(f"log10_{name}^2")
    design = np.column_stack(columns)
    n_obs, k = design.shape
    if n_obs <= k:
        raise ValueError(f"need more than {k} rows after exclusions, got {n_obs}")

    beta, _, rank, _ = np.linalg.lstsq(design, logy, rcond=None)
    if rank < k:
        _, r, piv = _pivoted_qr(design)
        tol = abs(r[0, 0]) * max(design.shape) * np.finfo(float).eps
        dropped = sorted(piv[rank:])
        raise CollinearityError([out_names[j] for j in dropped])

    resid = logy - design @ beta
    ssr = float(resid @ resid)
    tss = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if tss == 0.0 else 1.0 - ssr / tss
    adj_r2 = 1.0 - (1.0 - r2) * (n_obs - 1) / (n_obs - k)
    s2 = ssr / (n_obs - k)
    cov = np.linalg.inv(design.T @ design) * s2
    stderr = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, beta / stderr, np.inf * np.sign(beta))
    p = 2.0 * sps.norm.sf(np.abs(z))
    return OlsFit(
        names=tuple(out_names), coef=beta, stderr=stderr, z=z, p=p,
        ci_low=beta - _Z95 * stderr, ci_high=beta + _Z95 * stderr,
        r2=r2, adj_r2=adj_r2, n_obs=n_obs, n_excluded=n_excluded,
        quadratic=quadratic,
    )


def _pivoted_qr(a: np.ndarray):
    from scipy.linalg import qr
    q, r, piv = qr(a, mode="economic", pivoting=True)
    return q, r, piv


def skew_kurtosis(values: Sequence[float]) -> tuple[float, float]:
    """Standardized third moment and (non-excess) fourth moment.

    The fourth moment is reported without subtracting the Gaussian
    baseline, so uncorrelated normal data scores 3.
    """
    x = np.asarray(values, dtype=np.float64)
    if len(x) < 3:
        raise ValueError("need at least 3 observations")
    centered = x - x.mean()
    m2 = float(np.mean(centered ** 2))
    if m2 == 0.0:
        raise ValueError("zero variance")
    m3 = float(np.mean(centered ** 3))
    m4 = float(np.mean(centered ** 4))
    return m3 / m2 ** 1.5, m4 / m2 ** 2


# --- Rankings and polar export -------------------------------------------------

RANK_METRICS = ("roc_total", "roc_per_share", "roc_per_traded_value")


@dataclass(frozen=True)
class RankEntry:
    rank: int
    symbol: str
    value: float
    category: str = ""


def _metric_value(row: PurseRow, metric: str) -> float:
    if metric == "roc_total":
        return row.roc_total / PRICE_SCALE
    if metric == "roc_per_share":
        return row.roc_per_share
    if metric == "roc_per_traded_value":
        if row.traded_value == 0:
            return 0.0
        return row.roc_total / row.traded_value
    raise ValueError(f"unknown metric {metric!r}; choose from {RANK_METRICS}")


def rank_by(rows: Iterable[PurseRow], metric: str, top_k: int, bottom_k: int,
            meta: Mapping[str, "SymbolMeta"] | None = None
            ) -> tuple[list[RankEntry], list[RankEntry]]:
    """Top and bottom symbols by a cost metric; ties break by ticker.

    Rows sharing a symbol (multiple days) are merged before ranking.
    """
    merged: dict[str, PurseRow] = {}
    for row in rows:
        if row.key in merged:
            prev = merged[row.key]
            merged[row.key] = PurseRow(
                key=row.key, date=prev.date,
                trades=prev.trades + row.trades,
                traded_value=prev.traded_value + row.traded_value,
                diff_trades=prev.diff_trades + row.diff_trades,
                diff_traded_value=prev.diff_traded_value + row.diff_traded_value,
                included_trades=prev.included_trades + row.included_trades,
                included_shares=prev.included_shares + row.included_shares,
                roc_sip=prev.roc_sip + row.roc_sip,
                roc_direct=prev.roc_direct + row.roc_direct,
            )
        else:
            merged[row.key] = row
    scored = sorted(((-_metric_value(r, metric), key) for key, r in merged.items()))

    def entry(rank: int, key: str, neg_value: float) -> RankEntry:
        category = meta[key].category if meta and key in meta else ""
        return RankEntry(rank=rank, symbol=key, value=-neg_value, category=category)

    top = [entry(i + 1, key, nv) for i, (nv, key) in enumerate(scored[:top_k])]
    n = len(scored)
    bottom = [entry(n - bottom_k + i + 1, key, nv)
              for i, (nv, key) in enumerate(scored[max(0, n - bottom_k):])]
    return top, bottom


def circle_plot_records(segments: Iterable[DislocationSegment],
                        session_start_ns: int,
                        session_length_ns: int) -> np.ndarray:
    """Polar records per segment: intra-day angle, magnitude, duration.

    angle = 2*pi * (intra-day start offset) / session length; radius is the
    maximum magnitude in 1e-4 USD; weight is the duration in ns.
    """
    rows = []
    for seg in segments:
        intra = (seg.start_ts % DAY_NS) - session_start_ns
        angle = 2.0 * math.pi * (intra / session_length_ns)
        rows.append((angle, float(seg.max_magnitude), float(seg.duration)))
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
