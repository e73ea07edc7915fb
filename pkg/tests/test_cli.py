import pytest
import requests

from oromet import cli, ingest

from conftest import synthetic_municipalities


@pytest.fixture
def snapshot(tmp_path):
    path = tmp_path / "de.csv"
    ingest.save_snapshot(synthetic_municipalities(250, seed=7), path, country="de")
    return path


def test_enrich_and_delta(snapshot, tmp_path, capsys):
    out = tmp_path / "de_enriched.csv"
    assert cli.main(["enrich", "--in", str(snapshot), "--out", str(out)]) == 0
    err = capsys.readouterr().err
    assert "minimal threshold" in err and "positive prominence" in err
    assert out.read_text().splitlines()[0] == ",".join(ingest.ENRICHED_COLUMNS)
    assert cli.main(["delta", "--in", str(snapshot)]) == 0
    printed = float(capsys.readouterr().out)
    ds, scores = ingest.read_enriched(out)
    assert printed == scores.delta_used


def test_enrich_refuses_delta_below_threshold(snapshot, tmp_path, capsys):
    code = cli.main(["enrich", "--in", str(snapshot), "--out", str(tmp_path / "x.csv"), "--delta", "0.5"])
    assert code == cli.EXIT_VALIDATION
    assert "below the minimal threshold" in capsys.readouterr().err


def test_missing_input_is_parse_error(tmp_path):
    assert cli.main(["enrich", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.csv")]) == cli.EXIT_PARSE


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["classify", "--in", "x", "--out", "y", "--features", "iso+height"])
    assert exc.value.code == cli.EXIT_USAGE


def test_classify_smoke_and_determinism(snapshot, tmp_path, capsys):
    enriched = tmp_path / "e.csv"
    cli.main(["enrich", "--in", str(snapshot), "--out", str(enriched)])
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    base = ["classify", "--in", str(enriched), "--repeats", "1", "--folds", "2", "--seed", "3"]
    assert cli.main(base + ["--out", str(a)]) == 0
    assert cli.main(base + ["--out", str(b)]) == 0
    assert cli.main(base + ["--out", str(c), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert a.with_suffix(".txt").read_bytes() == b.with_suffix(".txt").read_bytes()
    assert len(a.read_text().splitlines()) == 1 + 7 * 3
    capsys.readouterr()
    assert cli.main(["report", "--in", str(a)]) == 0
    assert "iso+pr+po" in capsys.readouterr().out


def test_classify_single_subset(snapshot, tmp_path):
    enriched = tmp_path / "e.csv"
    cli.main(["enrich", "--in", str(snapshot), "--out", str(enriched)])
    out = tmp_path / "r.csv"
    cli.main(["classify", "--in", str(enriched), "--out", str(out), "--repeats", "1", "--features", "po+iso"])
    rows = out.read_text().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"iso+po"}


def test_verify(capsys):
    assert cli.main(["verify", "--trials", "50", "--n", "8"]) == 0
    out = capsys.readouterr().out
    assert "PASS oracle equivalence: 50 trials, 0 mismatches" in out
    assert cli.main(["verify", "--lemma-coincidence", "--trials", "20", "--n", "12"]) == 0
    assert "PASS graph coincidence" in capsys.readouterr().out


def test_verify_zero_trials(caplog, capsys):
    assert cli.main(["verify", "--trials", "0"]) == 0
    assert "zero trials" in caplog.text


def test_fetch_unreachable_endpoint(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise requests.ConnectionError("no route to host")

    monkeypatch.setattr(requests.Session, "get", boom)
    monkeypatch.setattr(ingest.time, "sleep", lambda s: None)
    code = cli.main(["fetch", "--country", "de", "--endpoint", "http://127.0.0.1:9/sparql", "--out", str(tmp_path / "x.csv")])
    assert code == cli.EXIT_TRANSPORT
    assert "transport error" in capsys.readouterr().err


def test_fetch_pipeline(tmp_path, monkeypatch, capsys):
    e = "http://www.wikidata.org/entity/"
    munis = [
        {"item": {"value": e + "Q90"}, "itemLabel": {"value": "Paris"}, "coord": {"value": "Point(2.35 48.86)"},
         "population": {"value": "2100000"}},
        {"item": {"value": e + "Q1"}, "itemLabel": {"value": "Basse-Terre"}, "coord": {"value": "Point(-61.7 16.0)"},
         "population": {"value": "10000"}},
        {"item": {"value": e + "Q2"}, "itemLabel": {"value": "Lyon"}, "coord": {"value": "Point(4.83 45.76)"},
         "population": {"value": "516000"}},
    ]
    unis = [{"uni": {"value": e + "Q209842"}, "prop": {"value": "P131"}, "loc": {"value": e + "Q90"}}]
    payloads = iter([munis, unis])

    class Resp:
        def __init__(self, bindings):
            import json
            self.text = json.dumps({"results": {"bindings": bindings}})

        def raise_for_status(self):
            pass

    monkeypatch.setattr(requests.Session, "get", lambda self, *a, **k: Resp(next(payloads)))
    out = tmp_path / "fr.csv"
    assert cli.main(["fetch", "--country", "fr", "--out", str(out)]) == 0
    snap = ingest.read_snapshot(out)
    assert [p.id for p in snap.rows] == ["Q2", "Q90"]
    assert [p.label for p in snap.rows] == [0, 1]
    assert snap.country == "FR"
    assert "2 municipalities, 1 university locations" in capsys.readouterr().err
