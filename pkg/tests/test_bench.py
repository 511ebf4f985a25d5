import csv
import io
import math
import random
import xml.etree.ElementTree as ET
import zlib

import pytest

from fmdelta import bench
from fmdelta.bench import (
    BenchConfig,
    BenchError,
    BenchResult,
    best_parameter,
    emit,
    ratio_baseline,
    ratio_fmdelta,
    run,
    thread_count,
)
from fmdelta.codec import CodecError
from fmdelta.dataio import fmp1_body
from fmdelta.pktgen import DatasetSpec

SMALL = BenchConfig(DatasetSpec(600, 4))


@pytest.fixture(scope="module")
def small_results():
    return run(SMALL)


def test_identical_packets_ratio_matches_record_arithmetic():
    L, w, n = 100, 2, 2000
    res = ratio_fmdelta([bytes(range(L))] * n, w)
    steady = L / (3 + math.ceil(math.ceil(L / w) / 8))
    assert res.compressed_bytes == (L + 3) + (n - 1) * (3 + 7)
    assert res.ratio == pytest.approx(steady, rel=0.01)


def test_single_packet_ratio_below_one():
    res = ratio_fmdelta([b"x" * 50], 2)
    assert res.ratio == 50 / 53


def test_baseline_on_random_bytes_slightly_below_one():
    rng = random.Random(0)
    packets = [rng.randbytes(1000) for _ in range(50)]
    res = ratio_baseline(packets, 9)
    assert 0.95 < res.ratio < 1.0
    assert res.compressed_bytes == len(zlib.compress(fmp1_body(packets), 9))
    assert res.uncompressed_bytes == ratio_fmdelta(packets, 2).uncompressed_bytes == 50_000


def test_ratio_errors():
    with pytest.raises(ValueError):
        ratio_baseline([b"a"], 0)
    with pytest.raises(ValueError):
        ratio_fmdelta([], 2)
    with pytest.raises(CodecError):
        ratio_fmdelta([b"a"], 3)


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(repetitions=0)
    with pytest.raises(ValueError):
        BenchConfig(word_sizes=())
    with pytest.raises(ValueError):
        BenchConfig(word_sizes=(3,))
    with pytest.raises(ValueError):
        BenchConfig(baseline_levels=(0,))
    cfg = BenchConfig.from_json('{"dataset": {"total_packets": 10, "seed": 3}, "word_sizes": [2, 4]}')
    assert cfg.dataset_spec.total_packets == 10 and cfg.word_sizes == (2, 4)
    with pytest.raises(ValueError, match="dataset.bogus"):
        BenchConfig.from_dict({"dataset": {"bogus": 1}})


def test_run_cardinality_and_order(small_results):
    assert len(small_results) == 28
    keys = [(r.algorithm, r.parameter, r.mode) for r in small_results]
    assert keys[:2] == [("fm-delta", 1, "ordered"), ("fm-delta", 1, "random")]
    assert keys[-1] == ("baseline", 9, "random")
    assert len(set(keys)) == 28
    for r in small_results:
        assert r.ratio == r.uncompressed_bytes / r.compressed_bytes
    assert len({r.uncompressed_bytes for r in small_results if r.mode == "ordered"}) == 1
    assert best_parameter(small_results) == 2


def test_repetitions_average():
    cfg = BenchConfig(DatasetSpec(200, 10), word_sizes=(2,), baseline_levels=(9,), repetitions=3)
    combined = run(cfg)
    singles = [run(BenchConfig(DatasetSpec(200, s), (2,), (9,))) for s in (10, 11, 12)]
    for i, r in enumerate(combined):
        ratios = [one[i].ratio for one in singles]
        assert r.ratio == pytest.approx(sum(ratios) / 3)
        assert (r.ratio_min, r.ratio_max) == (min(ratios), max(ratios))
        assert r.compressed_bytes == sum(one[i].compressed_bytes for one in singles)


def test_run_is_deterministic_across_thread_counts(monkeypatch, small_results):
    monkeypatch.setenv("FMDELTA_BENCH_THREADS", "1")
    assert emit(run(SMALL), "csv") == emit(small_results, "csv")


def test_thread_count_env():
    assert thread_count({"FMDELTA_BENCH_THREADS": "3"}) == 3
    assert thread_count({"FMDELTA_BENCH_THREADS": "0"}) >= 1
    assert thread_count({}) >= 1
    with pytest.raises(ValueError):
        thread_count({"FMDELTA_BENCH_THREADS": "-1"})
    with pytest.raises(ValueError):
        thread_count({"FMDELTA_BENCH_THREADS": "many"})


def test_cell_failures_are_aggregated(monkeypatch):
    real = bench.ratio_baseline

    def flaky(packets, level, mode="ordered"):
        if level == 5:
            raise zlib.error("simulated")
        return real(packets, level, mode)

    monkeypatch.setattr(bench, "ratio_baseline", flaky)
    with pytest.raises(BenchError) as info:
        run(BenchConfig(DatasetSpec(20, 1), repetitions=2))
    assert len(info.value.failures) == 4
    assert "baseline param=5 mode=random seed=2" in info.value.failures


def test_csv_emit(small_results):
    text = emit(small_results, "csv").decode()
    lines = text.splitlines()
    assert len(lines) == 29
    assert lines[0] == "algorithm,parameter,mode,ratio,uncompressed_bytes,compressed_bytes"
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0]["algorithm"] == "fm-delta" and rows[0]["parameter"] == "1"
    with pytest.raises(ValueError):
        emit([], "csv")
    with pytest.raises(ValueError):
        emit(small_results, "png")


def test_svg_emit(small_results):
    svg = emit(small_results, "svg")
    assert svg == emit(small_results, "svg")
    root = ET.fromstring(svg)
    gids = {el.get("id") for el in root.iter() if (el.get("id") or "").startswith("series-")}
    assert gids == {f"series-{a}-{m}" for a in ("fm-delta", "baseline") for m in ("ordered", "random")}
    assert b"<dc:date>" not in svg
    only = emit([r for r in small_results if r.algorithm == "baseline"], "svg")
    assert b"series-fm-delta" not in only and b"series-baseline-random" in only


def test_result_invariants():
    with pytest.raises(ValueError):
        BenchResult("gzip", 1, "ordered", 1.0, 1, 1)
    with pytest.raises(ValueError):
        BenchResult("baseline", 1, "ordered", 0.0, 1, 1)
