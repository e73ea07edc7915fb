"""Municipality datasets: Wikidata retrieval, university matching, snapshot files.

Live retrieval goes through the Wikidata SPARQL endpoint; everything after
that works from frozen CSV snapshots so downstream numbers never depend on
the network.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import requests

from .errors import ParseError, SuspiciousQueryError, TransportError, ValidationError
from .metric import MetricDataset, PointRecord
from .orometry import OrometricScores

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://query.wikidata.org/sparql"
ENDPOINT_ENV = "OROMET_SPARQL_ENDPOINT"
USER_AGENT = "oromet/0.1 (municipality orometry; python-requests)"

COUNTRIES = {"DE": "Q183", "FR": "Q142"}
MIN_POPULATION = 5000

# lat/lon box around metropolitan France, Corsica included
FRANCE_MAINLAND = {"lat": (41.0, 51.5), "lon": (-5.6, 9.9)}

SNAPSHOT_COLUMNS = ["qid", "name", "lat", "lon", "population", "label"]
ENRICHED_COLUMNS = SNAPSHOT_COLUMNS + ["isolation_km", "prominence", "delta_used"]

MUNICIPALITY_QUERY = """\
SELECT ?item ?itemLabel ?coord ?population WHERE {{
  ?item wdt:P31/wdt:P279* wd:Q15284 ;
        wdt:P17 wd:{country} ;
        wdt:P625 ?coord ;
        wdt:P1082 ?population .
  FILTER(?population > {min_population})
  SERVICE wikibase:label {{ bd:serviceParam wikibase:language "{lang},en". }}
}}
"""

UNIVERSITY_QUERY = """\
SELECT ?uni ?uniLabel ?prop ?loc ?anc WHERE {{
  ?uni wdt:P31/wdt:P279* wd:Q3918 ;
       wdt:P17 wd:{country} .
  OPTIONAL {{
    {{ ?uni wdt:P131 ?loc . BIND("P131" AS ?prop) }}
    UNION
    {{ ?uni wdt:P159 ?loc . BIND("P159" AS ?prop) }}
    OPTIONAL {{ ?loc wdt:P131+ ?anc . }}
  }}
  SERVICE wikibase:label {{ bd:serviceParam wikibase:language "{lang},en". }}
}}
"""

_LANG = {"DE": "de", "FR": "fr"}
_POINT = re.compile(r"^\s*Point\(\s*([-+0-9.eE]+)\s+([-+0-9.eE]+)\s*\)\s*$")


@dataclass(frozen=True)
class RawMunicipalityRecord:
    qid: str
    name: str
    latitude: float
    longitude: float
    population: int


@dataclass(frozen=True)
class UniversityRecord:
    qid: str
    name: str
    p131: tuple[str, ...] = ()
    p159: tuple[str, ...] = ()


@dataclass
class UniversityLocationSet:
    locations: frozenset
    unresolved: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)


@dataclass
class SnapshotFile:
    country: str
    retrieved_at: str
    rows: list

    @property
    def label_count(self) -> int:
        return sum(1 for p in self.rows if p.label == 1)


def endpoint_from_env(explicit: Optional[str] = None) -> str:
    return explicit or os.environ.get(ENDPOINT_ENV) or DEFAULT_ENDPOINT


def _country_qid(country: str) -> str:
    try:
        return COUNTRIES[country.upper()]
    except KeyError:
        raise ValidationError(f"unsupported country {country!r}; expected one of {sorted(COUNTRIES)}") from None


def run_query(endpoint: str, query: str, *, session=None, timeout=120.0, retries=3, backoff=2.0) -> list[dict]:
    """Run a SELECT query and return the result bindings."""
    session = session or requests.Session()
    headers = {"Accept": "application/sparql-results+json", "User-Agent": USER_AGENT}
    for attempt in range(retries):
        try:
            resp = session.get(endpoint, params={"query": query, "format": "json"}, headers=headers, timeout=timeout)
            resp.raise_for_status()
            break
        except requests.RequestException as exc:
            if attempt == retries - 1:
                raise TransportError(f"SPARQL request to {endpoint} failed after {retries} attempts: {exc}") from exc
            wait = backoff * 2**attempt
            log.warning("SPARQL request failed (%s); retrying in %.1fs", exc, wait)
            time.sleep(wait)
    try:
        payload = json.loads(resp.text)
        return payload["results"]["bindings"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed SPARQL results JSON: {resp.text[:200]!r}") from exc


def _qid(uri: str) -> str:
    return uri.rsplit("/", 1)[-1]


def parse_wkt_point(wkt: str) -> tuple[float, float]:
    """``Point(lon lat)`` -> ``(lat, lon)``."""
    m = _POINT.match(wkt)
    if not m:
        raise ParseError(f"not a WKT point: {wkt!r}")
    return float(m.group(2)), float(m.group(1))


def parse_municipalities(bindings: Sequence[Mapping]) -> list[RawMunicipalityRecord]:
    """Turn result rows into records, one per qid, keeping the largest population statement."""
    best: dict[str, RawMunicipalityRecord] = {}
    for i, row in enumerate(bindings):
        try:
            qid = _qid(row["item"]["value"])
            name = row.get("itemLabel", {}).get("value", qid)
            lat, lon = parse_wkt_point(row["coord"]["value"])
            population = int(float(row["population"]["value"]))
        except (KeyError, TypeError, ValueError, ParseError) as exc:
            raise ParseError(f"bad municipality row {i}: {json.dumps(row)[:200]}") from exc
        rec = RawMunicipalityRecord(qid, name, lat, lon, population)
        if qid not in best or population > best[qid].population:
            best[qid] = rec
    return sorted(best.values(), key=lambda r: (int(r.qid[1:]) if r.qid[1:].isdigit() else 0, r.qid))


def fetch_municipalities(endpoint: str, country: str, *, session=None, min_population=MIN_POPULATION) -> list[RawMunicipalityRecord]:
    query = MUNICIPALITY_QUERY.format(
        country=_country_qid(country), min_population=min_population, lang=_LANG.get(country.upper(), "en")
    )
    bindings = run_query(endpoint, query, session=session)
    if not bindings:
        raise SuspiciousQueryError(f"municipality query for {country} returned no rows")
    records = [r for r in parse_municipalities(bindings) if r.population > min_population]
    log.info("%s: %d municipalities above %d inhabitants", country.upper(), len(records), min_population)
    return records


def parse_universities(bindings: Sequence[Mapping]) -> tuple[list[UniversityRecord], dict[str, set]]:
    """Group university rows; returns the universities and each location's P131 ancestors."""
    names: dict[str, str] = {}
    props: dict[str, dict[str, list]] = {}
    ancestors: dict[str, set] = {}
    for i, row in enumerate(bindings):
        try:
            uni = _qid(row["uni"]["value"])
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad university row {i}: {json.dumps(row)[:200]}") from exc
        names.setdefault(uni, row.get("uniLabel", {}).get("value", uni))
        slot = props.setdefault(uni, {"P131": [], "P159": []})
        if "loc" in row:
            loc = _qid(row["loc"]["value"])
            prop = row.get("prop", {}).get("value", "P131")
            if prop not in slot:
                raise ParseError(f"bad university row {i}: unexpected property {prop!r}")
            if loc not in slot[prop]:
                slot[prop].append(loc)
            anc = ancestors.setdefault(loc, set())
            if "anc" in row:
                anc.add(_qid(row["anc"]["value"]))
    unis = [UniversityRecord(q, names[q], tuple(p["P131"]), tuple(p["P159"])) for q, p in props.items()]
    return unis, ancestors


def fetch_universities(endpoint: str, country: str, *, session=None):
    query = UNIVERSITY_QUERY.format(country=_country_qid(country), lang=_LANG.get(country.upper(), "en"))
    bindings = run_query(endpoint, query, session=session)
    if not bindings:
        raise SuspiciousQueryError(f"university query for {country} returned no rows")
    return parse_universities(bindings)


def in_mainland_france(lat: float, lon: float) -> bool:
    (lat0, lat1), (lon0, lon1) = FRANCE_MAINLAND["lat"], FRANCE_MAINLAND["lon"]
    return lat0 <= lat <= lat1 and lon0 <= lon <= lon1


def filter_mainland_france(records: Iterable) -> list:
    """Keep records inside the metropolitan-France box.

    Works on anything with ``latitude``/``longitude`` attributes or on
    :class:`PointRecord` objects.
    """
    kept, dropped = [], 0
    for r in records:
        lat, lon = (r.latitude, r.longitude) if hasattr(r, "latitude") else r.coordinates
        if in_mainland_france(lat, lon):
            kept.append(r)
        else:
            dropped += 1
    log.info("mainland filter: kept %d, dropped %d", len(kept), dropped)
    return kept


def load_overrides(path) -> dict[str, str]:
    """Read a ``university_qid,municipality_qid`` CSV into a dict."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["university_qid", "municipality_qid"]:
            raise ParseError(f"{path}: expected header university_qid,municipality_qid, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            uni, muni = row["university_qid"].strip(), row["municipality_qid"].strip()
            if not uni or not muni:
                raise ParseError(f"{path}: empty qid on line {lineno}")
            out[uni] = muni
    return out


def match_universities(
    universities: Sequence[UniversityRecord],
    municipalities: Sequence,
    ancestors: Optional[Mapping[str, Iterable[str]]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> UniversityLocationSet:
    """Assign each university to the municipality its P131/P159 values point at.

    A value that is itself a municipality wins. Otherwise its P131 ancestors
    are searched; exactly one municipality among them is accepted, anything
    else leaves the university unresolved. Universities with neither property
    are excluded. ``overrides`` maps university qids to municipality qids and
    takes precedence over the properties.
    """
    ancestors = ancestors or {}
    overrides = dict(overrides or {})
    muni_ids = {getattr(m, "qid", None) or m.id for m in municipalities}
    uni_ids = {u.qid for u in universities}
    bad = [u for u in overrides if u not in uni_ids]
    bad += [m for m in overrides.values() if m not in muni_ids]
    if bad:
        raise ValidationError(f"override file references unknown qids: {sorted(set(bad))}")

    result = UniversityLocationSet(frozenset())
    locations = set()
    for u in universities:
        if u.qid in overrides:
            hits = {overrides[u.qid]}
        elif not u.p131 and not u.p159:
            result.excluded.append(u)
            continue
        else:
            hits = set()
            for value in u.p131 + u.p159:
                if value in muni_ids:
                    hits.add(value)
            if not hits:
                for value in u.p131 + u.p159:
                    hits |= set(ancestors.get(value, ())) & muni_ids
        if len(hits) == 1:
            (muni,) = hits
            result.assignments[u.qid] = muni
            locations.add(muni)
        else:
            result.unresolved.append(u)
    if result.unresolved:
        log.warning("%d universities need a manual mapping: %s", len(result.unresolved),
                    ", ".join(u.qid for u in result.unresolved[:10]))
    result.locations = frozenset(locations)
    return result


def build_points(records: Sequence[RawMunicipalityRecord], locations: Iterable[str]) -> list[PointRecord]:
    locations = set(locations)
    return [
        PointRecord(r.qid, r.name, float(r.population), (r.latitude, r.longitude), int(r.qid in locations))
        for r in records
    ]


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _fmt_height(h: float) -> str:
    return str(int(h)) if float(h).is_integer() else repr(float(h))


def _snapshot_row(p: PointRecord) -> list[str]:
    lat, lon = p.coordinates
    return [p.id, p.name, repr(float(lat)), repr(float(lon)), _fmt_height(p.height), "" if p.label is None else str(p.label)]


def save_snapshot(points, path, *, country: str = "", retrieved_at: Optional[str] = None) -> SnapshotFile:
    """Write points as snapshot CSV plus a ``<stem>.meta.json`` sidecar."""
    if isinstance(points, MetricDataset):
        points = points.points
    rows = list(points)
    snap = SnapshotFile(country.upper(), retrieved_at or datetime.now(timezone.utc).isoformat(timespec="seconds"), rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        for p in rows:
            w.writerow(_snapshot_row(p))
    meta = {"country": snap.country, "retrieved_at": snap.retrieved_at, "rows": len(rows), "labels": snap.label_count}
    _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return snap


def _read_rows(path, columns):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ParseError(f"{path}: empty file")
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader)
    if header != columns:
        raise ParseError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(columns):
            raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {len(columns)}")
        rows.append((lineno, dict(zip(columns, row))))
    return rows


def _point_from_row(path, lineno, row) -> PointRecord:
    try:
        pop = row["population"]
        height = float(int(pop)) if pop.isdigit() else float(pop)
        label = None if row["label"] == "" else int(row["label"])
        return PointRecord(row["qid"], row["name"], height, (float(row["lat"]), float(row["lon"])), label)
    except (ValueError, ValidationError) as exc:
        raise ParseError(f"{path}: line {lineno}: {exc}") from exc


def read_snapshot(path) -> SnapshotFile:
    rows = _read_rows(path, SNAPSHOT_COLUMNS)
    points, seen = [], {}
    for lineno, row in rows:
        p = _point_from_row(path, lineno, row)
        if p.id in seen:
            raise ParseError(f"{path}: duplicate qid {p.id} on lines {seen[p.id]} and {lineno}")
        seen[p.id] = lineno
        points.append(p)
    snap = SnapshotFile("", "", points)
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        if meta.get("rows") != len(points) or meta.get("labels") != snap.label_count:
            raise ParseError(
                f"{path}: sidecar says {meta.get('rows')} rows / {meta.get('labels')} labels, "
                f"file has {len(points)} / {snap.label_count}"
            )
        snap.country = meta.get("country", "")
        snap.retrieved_at = meta.get("retrieved_at", "")
    return snap


def load_snapshot(path) -> MetricDataset:
    return MetricDataset.geodesic(read_snapshot(path).rows)


def write_enriched(ds: MetricDataset, scores: OrometricScores, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENRICHED_COLUMNS)
        delta = repr(float(scores.delta_used))
        for p, iso, prom in zip(ds.points, scores.isolation, scores.prominence):
            w.writerow(_snapshot_row(p) + [repr(float(iso)), _fmt_height(prom), delta])


def read_enriched(path) -> tuple[MetricDataset, OrometricScores]:
    rows = _read_rows(path, ENRICHED_COLUMNS)
    points, iso, prom, deltas = [], [], [], set()
    for lineno, row in rows:
        points.append(_point_from_row(path, lineno, row))
        try:
            iso.append(float(row["isolation_km"]))
            prom.append(float(row["prominence"]))
            deltas.add(float(row["delta_used"]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if len(deltas) != 1:
        raise ParseError(f"{path}: expected one delta_used value, found {sorted(deltas)}")
    prom = np.array(prom)
    ds = MetricDataset.geodesic(points)
    return ds, OrometricScores(deltas.pop(), np.array(iso), prom, int(np.count_nonzero(prom > 0)))
