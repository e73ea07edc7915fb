"""Command line entry point: ``oromet {fetch,enrich,delta,classify,report,verify}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import bench, ingest, orometry, verify
from .errors import OrometError, ParseError, TransportError, ValidationError
from .metric import minimal_threshold_pair

log = logging.getLogger("oromet")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4
EXIT_PARSE = 5


def _err(msg):
    print(msg, file=sys.stderr)


def cmd_fetch(args):
    country = args.country.upper()
    endpoint = ingest.endpoint_from_env(args.endpoint)
    records = ingest.fetch_municipalities(endpoint, country)
    if country == "FR":
        records = ingest.filter_mainland_france(records)
    unis, ancestors = ingest.fetch_universities(endpoint, country)
    overrides = ingest.load_overrides(args.overrides) if args.overrides else None
    matched = ingest.match_universities(unis, records, ancestors, overrides)
    points = ingest.build_points(records, matched.locations)
    snap = ingest.save_snapshot(points, args.out, country=country)
    _err(f"{country}: {len(points)} municipalities, {snap.label_count} university locations -> {args.out}")
    if matched.excluded:
        _err(f"excluded {len(matched.excluded)} universities without P131/P159: "
             + ", ".join(u.qid for u in matched.excluded))
    if matched.unresolved:
        _err(f"unresolved {len(matched.unresolved)} universities (add them to an override file): "
             + ", ".join(u.qid for u in matched.unresolved))
    return EXIT_OK


def _report_threshold(ds):
    delta_m, i, j = minimal_threshold_pair(ds)
    a, b = ds.points[i], ds.points[j]
    _err(f"minimal threshold: {delta_m:.3f} km between {a.name} ({a.id}) and {b.name} ({b.id})")
    return delta_m


def cmd_enrich(args):
    ds = ingest.load_snapshot(args.input)
    _report_threshold(ds)
    scores = orometry.enrich(ds, args.delta)
    ingest.write_enriched(ds, scores, args.out)
    labels = [p.label for p in ds.points]
    positive = [k for k, pr in enumerate(scores.prominence) if pr > 0]
    labelled = sum(1 for k in positive if labels[k] == 1)
    _err(f"delta used: {scores.delta_used:.3f} km; {scores.positive_prominence_count} points with positive "
         f"prominence, {labelled} of them labelled 1")
    return EXIT_OK


def cmd_delta(args):
    ds = ingest.load_snapshot(args.input)
    delta_m = _report_threshold(ds)
    print(repr(delta_m))
    return EXIT_OK


def cmd_classify(args):
    ds, scores = ingest.read_enriched(args.input)
    table = bench.normalize(ds, scores)
    combos = bench.COMBINATIONS
    if args.features:
        combos = (tuple(args.features.split("+")),)
    report = bench.run_experiment(table, repeats=args.repeats, folds=args.folds, seed=args.seed,
                                  threads=args.threads, combinations=combos)
    out = Path(args.out)
    out.write_text(report.to_csv(), encoding="utf-8")
    out.with_suffix(".txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_report(args):
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["features", "metric", "mean", "std"]:
            raise ParseError(f"{args.input}: not a classification report")
        rows = list(reader)
    last = None
    print(f"{'features':<10} {'score':<7} {'mean':>8} {'std':>8}")
    for r in rows:
        if r["features"] != last:
            print("-" * 36)
        label = r["features"] if r["features"] != last else ""
        last = r["features"]
        print(f"{label:<10} {r['metric']:<7} {float(r['mean']):8.4f} {float(r['std']):8.4f}")
    return EXIT_OK


def cmd_verify(args):
    if args.trials == 0:
        log.warning("zero trials requested; nothing was checked")
    checks = [verify.check_lemma_coincidence(args.trials, min(args.n, 15), args.seed)] if args.lemma_coincidence else [
        verify.check_oracle_equivalence(args.trials, args.n, args.seed),
        verify.check_monotonicity(args.trials, args.n, args.seed),
    ]
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.ok for c in checks) else EXIT_VALIDATION


def _features(value):
    parts = value.split("+")
    if not parts or any(p not in bench.FEATURES for p in parts) or len(set(parts)) != len(parts):
        raise argparse.ArgumentTypeError(f"expected a '+'-joined subset of {bench.FEATURES}, got {value!r}")
    return "+".join(p for p in bench.FEATURES if p in parts)


def _nonneg(value):
    x = float(value)
    if x < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return x


def _positive_int(value):
    k = int(value)
    if k < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return k


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oromet", description="Isolation and prominence for metric datasets.")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fetch", help="download a municipality snapshot from Wikidata")
    f.add_argument("--country", required=True, type=str.upper, choices=sorted(ingest.COUNTRIES))
    f.add_argument("--endpoint", help=f"SPARQL endpoint (env {ingest.ENDPOINT_ENV})")
    f.add_argument("--overrides", help="CSV university_qid,municipality_qid")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fetch)

    e = sub.add_parser("enrich", help="add isolation and prominence columns to a snapshot")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--delta", type=_nonneg, help="threshold in km (default: minimal threshold)")
    e.set_defaults(func=cmd_enrich)

    d = sub.add_parser("delta", help="print the minimal threshold of a snapshot")
    d.add_argument("--in", dest="input", required=True)
    d.set_defaults(func=cmd_delta)

    c = sub.add_parser("classify", help="run the repeated cross-validation benchmark")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True, help="report CSV; a .txt table is written next to it")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--repeats", type=_positive_int, default=100)
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--features", type=_features, help="single subset such as iso+po (default: all seven)")
    c.add_argument("--threads", type=_positive_int, default=1)
    c.set_defaults(func=cmd_classify)

    r = sub.add_parser("report", help="print a classification report CSV as a table")
    r.add_argument("--in", dest="input", required=True)
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("verify", help="cross-check the prominence implementations on random instances")
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--n", type=int, default=10)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--lemma-coincidence", action="store_true",
                   help="compare graph prominence with prominence on the shortest-path metric")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TransportError as exc:
        _err(f"transport error: {exc}")
        return EXIT_TRANSPORT
    except ParseError as exc:
        _err(f"parse error: {exc}")
        return EXIT_PARSE
    except ValidationError as exc:
        _err(f"validation error: {exc}")
        return EXIT_VALIDATION
    except OrometError as exc:
        _err(f"error: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
