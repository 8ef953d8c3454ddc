"""Command-line pipeline: simulate | detect | roc | analyze | report | figure2.

Stages hand off through documented CSV files so every intermediate is
auditable; outputs are canonically sorted and byte-stable for a given
input regardless of --threads.  Exit codes: 0 success, 2 missing input,
3 format/config error, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import analytics
from .detector import (
    DEFAULT_DURATION_FLOOR_NS,
    DEFAULT_MAGNITUDE_FLOOR,
    condition,
    read_segments,
    summarize,
    write_segments,
)
from .fast import load_frame, run_engine
from .feedio import FeedFormatError, load_symbol_meta, read_header
from .model import CENT, SESSION_OPEN_NS
from .roc import PurseReport, read_purse, write_purse
from .sim import SimConfigError, load_config, replay_figure2, simulate

SESSION_LENGTH_NS = 23_400_000_000_000  # 09:30 to 16:00


def _read_manifest(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _engine_run(args):
    manifest = _read_manifest(getattr(args, "manifest", None))
    session_end = getattr(args, "session_end_ns", None)
    if session_end is None:
        session_end = manifest.get("session_end_ns")
    frame = load_frame(args.files)
    result = run_engine(frame, session_end=session_end, threads=args.threads)
    date = getattr(args, "date", None) or manifest.get("date")
    if date is None:
        header = read_header(args.files[0])
        date = header.date or "unknown"
    return result, date


def cmd_simulate(args) -> int:
    config = load_config(args.config, seed=args.seed)
    result = simulate(config)
    paths = result.write(args.out)
    print(f"simulated {result.book_changes} book changes, "
          f"{result.sip_dispatches} consolidated updates, {result.trades} trades, "
          f"{len(result.ground_truth)} ground-truth segments")
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def cmd_detect(args) -> int:
    result, _ = _engine_run(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    result.write_segments_csv(outdir / "segments.csv")
    print(f"events={result.events} segments={result.n_segments}")
    if args.duration_us is not None or args.magnitude_cents is not None:
        dur = None if args.duration_us is None else int(args.duration_us * 1_000)
        mag = None if args.magnitude_cents is None else int(args.magnitude_cents * CENT)
        kept = condition(result.segments(), duration_floor_ns=dur,
                         magnitude_floor=mag,
                         include_truncated=args.include_truncated)
        write_segments(outdir / "segments_conditioned.csv", kept)
        print(f"conditioned={len(kept)}")
    return 0


def cmd_roc(args) -> int:
    result, date = _engine_run(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    result.write_roc_csv(outdir / "roc_records.csv")
    rows = result.purse_rows(date=date)
    write_purse(outdir / "purse.csv", rows)
    if args.meta:
        meta = load_symbol_meta(args.meta)
        from .roc import aggregate_purse
        by_cat = aggregate_purse(result.roc_records(), date=date, by_category=meta)
        write_purse(outdir / "purse_by_category.csv", by_cat)
    report = PurseReport.from_rows(rows)
    print(f"events={result.events} trades={result.n_trades}")
    print(report.render())
    return 0


def _write_summary_block(writer, group: str, label: str, segments) -> None:
    s = summarize(segments)
    for name, f in (("min_magnitude", s.min_magnitude),
                    ("max_magnitude", s.max_magnitude),
                    ("duration", s.duration)):
        writer.writerow([group, label, name, s.count, f.mean, f.std, f.min,
                         f.q25, f.q50, f.q75, f.max])


def cmd_analyze(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    segments = read_segments(args.segments)
    meta = load_symbol_meta(args.meta) if args.meta else None

    conditionings = [
        ("none", segments),
        ("duration", condition(segments, magnitude_floor=None)),
        ("duration_magnitude", condition(segments)),
    ]

    groups = {"ALL": segments}
    if meta:
        for cat in sorted({m.category for m in meta.values()}):
            members = {t for t, m in meta.items() if m.category == cat}
            groups[cat] = [s for s in segments if s.symbol in members]

    with open(outdir / "segment_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "conditioning", "field", "count", "mean", "std",
                         "min", "q25", "q50", "q75", "max"])
        for group, segs in groups.items():
            for label, _ in conditionings:
                subset = {"none": segs,
                          "duration": condition(segs, magnitude_floor=None),
                          "duration_magnitude": condition(segs)}[label]
                _write_summary_block(writer, group, label, subset)

    with open(outdir / "start_time_hist.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["conditioning", "bin_start_ns", "count"])
        for label, segs in conditionings:
            counts, edges, _ = analytics.start_time_histogram(
                segs, args.bin_ns, args.session_start_ns, args.session_length_ns)
            for edge, count in zip(edges, counts):
                writer.writerow([label, edge, count])

    with open(outdir / "duration_hist.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["conditioning", "log10_lo", "log10_hi", "count",
                         "zero_duration_excluded"])
        for label, segs in conditionings:
            counts, edges, zero = analytics.duration_histogram(
                segs, bin_width=args.duration_bin_width)
            for k, count in enumerate(counts):
                writer.writerow([label, edges[k], edges[k + 1], count, zero])

    for symbol in args.circle or ():
        records = analytics.circle_plot_records(
            [s for s in segments if s.symbol == symbol],
            args.session_start_ns, args.session_length_ns)
        with open(outdir / f"circle_{symbol}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["angle_rad", "max_mag_1e-4usd", "duration_ns"])
            writer.writerows(records.tolist())

    if args.purse:
        rows = read_purse(args.purse)
        _analyze_purse(outdir, rows, meta, args)
    print(f"analysis written to {outdir}")
    return 0


def _analyze_purse(outdir: Path, rows, meta, args) -> None:
    by_cat: dict[str, list] = {}
    if meta:
        for row in rows:
            m = meta.get(row.key)
            if m is not None:
                by_cat.setdefault(m.category, []).append(row)
    else:
        by_cat["ALL"] = list(rows)

    with open(outdir / "rankings.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "position", "rank", "symbol", "value", "category"])
        for metric in analytics.RANK_METRICS:
            top, bottom = analytics.rank_by(rows, metric, args.top_k, args.top_k, meta)
            for e in top:
                writer.writerow([metric, "top", e.rank, e.symbol, e.value, e.category])
            for e in bottom:
                writer.writerow([metric, "bottom", e.rank, e.symbol, e.value, e.category])

    if not args.timeseries:
        return
    series_roc = []
    series_ps = []
    for cat, cat_rows in sorted(by_cat.items()):
        dates = {r.date for r in cat_rows}
        if len(dates) >= 2:
            series_roc.append(analytics.daily_series(cat_rows, "roc", label=cat))
            series_ps.append(analytics.daily_series(cat_rows, "roc_per_share", label=cat))

    with open(outdir / "timeseries_stats.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series", "n_days", "skew", "kurtosis", "dfa_alpha"])
        for s in series_roc:
            try:
                alpha = analytics.dfa_exponent(s.values)
            except ValueError:
                alpha = float("nan")
            try:
                skew, kurt = analytics.skew_kurtosis(s.values)
            except ValueError:
                skew = kurt = float("nan")
            writer.writerow([s.label, len(s), skew, kurt, alpha])

    for name, group in (("pearson_roc.csv", series_roc),
                        ("pearson_roc_per_share.csv", series_ps)):
        if len(group) >= 2 and len({len(s) for s in group}) == 1:
            labels, mat = analytics.pearson_matrix(group)
            with open(outdir / name, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["series", *labels])
                for i, label in enumerate(labels):
                    writer.writerow([label, *mat[i].tolist()])

    if len(series_roc) >= 2 and len({len(s) for s in series_roc}) == 1:
        max_lag = min(args.max_lag, max(1, len(series_roc[0]) // 3))
        with open(outdir / "granger.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pair", "max_lag", "threshold", "significant_lags"])
            for a in series_roc:
                for b in series_roc:
                    if a.label == b.label:
                        continue
                    res = analytics.granger_tests(a, b, max_lag=max_lag)
                    writer.writerow([res.pair, res.max_lag, res.threshold,
                                     " ".join(map(str, res.significant_lags))])


def cmd_report(args) -> int:
    rows = read_purse(args.purse)
    if args.category:
        if not args.meta:
            raise FeedFormatError("--category requires --meta")
        meta = load_symbol_meta(args.meta)
        rows = [r for r in rows
                if r.key in meta and meta[r.key].category == args.category]
    report = PurseReport.from_rows(rows)
    print(report.render())
    if args.out:
        report.to_csv(args.out)
    return 0


def cmd_figure2(args) -> int:
    result, expected = replay_figure2()
    if args.out:
        paths = result.write(args.out)
        feed_paths = sorted(v for k, v in paths.items()
                            if k == "sip" or k.startswith("direct_"))
        frame = load_frame(feed_paths)
    else:
        from .fast import frame_from_events
        frame = frame_from_events(result.merged_events())
    res = run_engine(frame, session_end=result.session_end_ns)
    got = res.segments()
    for seg in got:
        print(f"segment side={seg.side.value} ordering={seg.ordering.value} "
              f"start_ns={seg.start_ts} end_ns={seg.end_ts} "
              f"duration_ns={seg.duration} min_mag={seg.min_magnitude} "
              f"max_mag={seg.max_magnitude}")
    ok = got == [expected] and got == result.ground_truth
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disloc",
        description="Detect SIP/direct-feed quote dislocations, price the "
                    "trades executing during them, and analyze the results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the feed-topology simulator")
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=cmd_simulate)

    for name, fn, extra in (("detect", cmd_detect, "segment detection"),
                            ("roc", cmd_roc, "realized opportunity cost")):
        p = sub.add_parser(name, help=extra)
        p.add_argument("files", nargs="+", help="feed event files (ts-sorted)")
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--session-end-ns", type=int, default=None)
        p.add_argument("--manifest", default=None,
                       help="simulator manifest.json supplying session end and date")
        if name == "detect":
            p.add_argument("--duration-us", type=float, default=None,
                           help="strict duration floor in microseconds")
            p.add_argument("--magnitude-cents", type=float, default=None,
                           help="strict min-magnitude floor in cents")
            p.add_argument("--include-truncated", action="store_true")
        else:
            p.add_argument("--date", default=None)
            p.add_argument("--meta", default=None, help="symbol metadata CSV")
        p.set_defaults(func=fn)

    p = sub.add_parser("analyze", help="statistics over segment/purse CSVs")
    p.add_argument("--segments", required=True)
    p.add_argument("--purse", default=None)
    p.add_argument("--meta", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--bin-ns", type=int, default=60_000_000_000)
    p.add_argument("--session-start-ns", type=int, default=SESSION_OPEN_NS)
    p.add_argument("--session-length-ns", type=int, default=SESSION_LENGTH_NS)
    p.add_argument("--duration-bin-width", type=float, default=0.25)
    p.add_argument("--circle", action="append", default=None,
                   help="emit polar records for this symbol (repeatable)")
    p.add_argument("--timeseries", action="store_true",
                   help="per-category daily series statistics")
    p.add_argument("--max-lag", type=int, default=40)
    p.add_argument("--top-k", type=int, default=30)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="ten-line purse report")
    p.add_argument("--purse", required=True)
    p.add_argument("--meta", default=None)
    p.add_argument("--category", default=None)
    p.add_argument("--out", default=None, help="also write the report as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("figure2", help="canonical co-location walkthrough")
    p.add_argument("--out", default=None, help="also write feed files")
    p.set_defaults(func=cmd_figure2)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"disloc-error code=2 kind=missing-input msg={exc}", file=sys.stderr)
        return 2
    except (FeedFormatError, SimConfigError) as exc:
        print(f"disloc-error code=3 kind={type(exc).__name__} msg={exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # invariant breach or bug; never silent
        print(f"disloc-error code=4 kind={type(exc).__name__} msg={exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
