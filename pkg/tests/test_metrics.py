import csv

import pytest

from descrl.evaluation.metrics import (
    METRIC_NAMES, EpisodeRecord, compute_metrics, format_table, read_records, summarize,
    write_metrics_csv, write_records,
)
from descrl.exceptions import ValidationError


def record(i=0, success=True, path=4, shortest=4, n=5, m=5, final=0.0, stopped=False):
    return EpisodeRecord(i, 0, success, path, shortest, n, m, final, stopped)


def random_records(rng, count=500):
    out = []
    for i in range(count):
        shortest = int(rng.integers(1, 20))
        m = shortest + int(rng.integers(1, 5))
        out.append(record(
            i,
            success=bool(rng.random() < 0.6),
            path=int(rng.integers(0, 40)),
            shortest=shortest,
            n=int(rng.integers(1, 60)),
            m=m,
            final=float(rng.integers(0, 10)),
            stopped=bool(rng.random() < 0.3),
        ))
    return out


def test_metrics_match_direct_computation(rng):
    records = random_records(rng)
    metrics = compute_metrics(records)
    n = len(records)
    sr = sum(r.success for r in records) / n
    spl = sum(r.success * r.shortest_length / max(r.path_length, r.shortest_length) for r in records) / n
    sna = sum(r.success * r.min_actions / max(r.num_actions, r.min_actions) for r in records) / n
    dtg = sum(r.final_distance for r in records) / n
    stopped = [r for r in records if r.sound_stopped]
    sws = sum(r.success for r in stopped) / len(stopped)
    assert metrics["SR"] == pytest.approx(sr)
    assert metrics["SPL"] == pytest.approx(spl)
    assert metrics["SNA"] == pytest.approx(sna)
    assert metrics["DTG"] == pytest.approx(dtg) == metrics["NE"]
    assert metrics["SWS"] == pytest.approx(sws)
    assert metrics["SPL"] <= metrics["SR"] and metrics["SNA"] <= metrics["SR"]
    assert set(metrics) == set(METRIC_NAMES)


def test_shortest_path_episodes_score_one():
    metrics = compute_metrics([record(i, stopped=i % 2 == 0) for i in range(4)])
    assert metrics["SR"] == metrics["SPL"] == metrics["SNA"] == metrics["SWS"] == 1.0
    assert metrics["DTG"] == 0.0


def test_failures_count_zero_and_sws_needs_stopped_sounds():
    metrics = compute_metrics([record(success=False, final=3.0), record(1, path=8)])
    assert metrics["SR"] == 0.5
    assert metrics["SPL"] == pytest.approx(0.25)
    assert metrics["DTG"] == 1.5
    assert metrics["SWS"] is None


def test_empty_records_rejected():
    with pytest.raises(ValidationError):
        compute_metrics([])


def test_records_round_trip(tmp_path, rng):
    records = random_records(rng, 5)
    records[0].descriptions = ["go forward", "stop near the bed"]
    path = tmp_path / "eval" / "records.jsonl"
    write_records(str(path), records)
    assert read_records(str(path)) == records


def test_metrics_csv_and_table(tmp_path):
    rows = [
        {"run": "a", "seed": 0, **compute_metrics([record()])},
        {"run": "b", "seed": 1, **compute_metrics([record(success=False, final=2.0)])},
    ]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(str(path), rows)
    with open(path, newline="") as f:
        parsed = list(csv.DictReader(f))
    assert list(parsed[0]) == ["run", "seed", *METRIC_NAMES]
    assert parsed[0]["SR"] == "1.000000" and parsed[1]["SWS"] == ""
    table = format_table(rows)
    assert table.splitlines()[0].split() == ["run", "seed", *METRIC_NAMES]
    assert "-" in table.splitlines()[3].split()


def test_summarize():
    assert summarize([0.5, 0.7]) == "0.600±0.100"
    assert summarize([None, 1.0]) == "1.000±0.000"
    assert summarize([None]) == "-"
