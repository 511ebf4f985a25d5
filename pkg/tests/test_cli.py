import io
import json
import subprocess
import sys

import pytest

from fmdelta.cli import main, parse_script, UsageError
from fmdelta.codec import CodecParams, CompressedStream, compress_sequence, encode_delta
from fmdelta.dataio import read_dataset, read_fmp1, write_fmp1
from fmdelta.pktgen import DatasetSpec, generate
from fmdelta.store import PacketArena


def call(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    lines = out.getvalue().splitlines()
    return code, lines


def summary(lines):
    last = lines[-1].split()
    assert last[0] == "fmdelta" and last[2] == "ok"
    return dict(kv.split("=", 1) for kv in last[3:])


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "d.fmp1"
    code, lines = call("generate", "--count", 1000, "--seed", 7, "--mode", "ordered", "--out", path)
    assert code == 0
    return path


def test_generate_deterministic(tmp_path, dataset):
    again = tmp_path / "again.fmp1"
    code, lines = call("generate", "--count", 1000, "--seed", 7, "--out", again)
    info = summary(lines)
    assert info["count"] == "1000"
    assert again.read_bytes() == dataset.read_bytes()
    assert int(info["bytes"]) == sum(map(len, read_fmp1(again.read_bytes())))


def test_generate_pcap_matches_fmp1(tmp_path, dataset):
    pcap = tmp_path / "d.pcap"
    assert call("generate", "--count", 1000, "--seed", 7, "--format", "pcap", "--out", pcap)[0] == 0
    assert read_dataset(pcap.read_bytes()) == read_dataset(dataset.read_bytes())


@pytest.mark.parametrize("argv", [
    ["generate", "--count", "5", "--out", "x"],
    ["generate", "--count", "4"],
    ["compress", "--in", "a", "--out", "b", "--word-size", "3"],
    ["compress", "--in", "a", "--out", "b", "--entry-interval", "0"],
    ["bench", "--repetitions", "0"],
    ["frobnicate"],
    ["generate", "--out", "x", "--bogus"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    try:
        code = main(argv, io.StringIO())
    except SystemExit as exc:  # argparse rejections
        code = exc.code
    assert code == 1


def test_compress_decompress_roundtrip(tmp_path, dataset):
    fmd = tmp_path / "d.fmd1"
    code, lines = call("compress", "--in", dataset, "--out", fmd)
    info = summary(lines)
    assert code == 0 and float(info["ratio"]) > 2
    assert fmd.read_bytes()[:4] == b"FMD1"
    back = tmp_path / "back.fmp1"
    assert call("decompress", "--in", fmd, "--out", back)[0] == 0
    assert back.read_bytes() == dataset.read_bytes()


def test_compress_honours_params(tmp_path, dataset):
    fmd = tmp_path / "d.fmd1"
    call("compress", "--in", dataset, "--out", fmd, "--word-size", 4, "--entry-interval", 10)
    packets = read_fmp1(dataset.read_bytes())
    assert fmd.read_bytes() == compress_sequence(packets, CodecParams(4, 10)).to_bytes()


def test_decompress_errors(tmp_path, dataset, capsys):
    fmd = tmp_path / "d.fmd1"
    call("compress", "--in", dataset, "--out", fmd)
    cut = tmp_path / "cut.fmd1"
    cut.write_bytes(fmd.read_bytes()[:600])
    assert call("decompress", "--in", cut, "--out", tmp_path / "o")[0] == 2
    assert "record " in capsys.readouterr().err

    # well-formed records, but the first is a delta
    a, b = b"\x01\x02\x03\x04", b"\x01\x02\x09\x09"
    cut.write_bytes(CompressedStream(CodecParams(), (encode_delta(a, b),)).to_bytes())
    assert call("decompress", "--in", cut, "--out", tmp_path / "o")[0] == 2
    assert "record 0" in capsys.readouterr().err

    assert call("decompress", "--in", tmp_path / "missing", "--out", tmp_path / "o")[0] == 2


def write_packets(tmp_path, packets):
    path = tmp_path / "p.fmp1"
    path.write_bytes(write_fmp1(packets))
    return path


def test_simulate_sweep_emits_every_packet(tmp_path):
    packets = generate(DatasetSpec(4, 1))[:3]
    script = tmp_path / "s.txt"
    script.write_text("sweep\n")
    code, lines = call("simulate", "--in", write_packets(tmp_path, packets), "--capacity", 1000,
                       "--script", script)
    assert code == 0
    emits = [l for l in lines if " emit " in l]
    assert [bytes.fromhex(l.split()[-1]) for l in emits] == packets
    assert summary(lines)["emitted"] == "3"


def test_simulate_remove_matches_rebuild(tmp_path):
    packets = generate(DatasetSpec(40, 2))
    script = tmp_path / "s.txt"
    script.write_text("# drop the second packet\nremove 2\nsweep\n")
    snap = tmp_path / "a.fma1"
    reports = tmp_path / "r.csv"
    log = tmp_path / "log.txt"
    code, lines = call("simulate", "--in", write_packets(tmp_path, packets), "--capacity", 10_000,
                       "--script", script, "--snapshot", snap, "--reports", reports, "--log", log)
    assert code == 0 and len(lines) == 1
    model = packets[:1] + packets[2:]
    first_sweep = [bytes.fromhex(l.split()[-1]) for l in log.read_text().splitlines() if l.startswith("sweep 1 emit")]
    assert first_sweep == model
    arena = PacketArena.from_snapshot(snap.read_bytes())
    assert arena.stream() == compress_sequence(model, CodecParams())
    assert reports.read_text().splitlines()[0] == "count,bytes_read,bytes_written,updates_applied"
    assert reports.read_text().splitlines()[1].startswith("39,")


def test_simulate_access_bound(tmp_path):
    packets = generate(DatasetSpec(100, 5))
    script = tmp_path / "s.txt"
    script.write_text("access 21\naccess 30\naccess 1\n")
    code, lines = call("simulate", "--in", write_packets(tmp_path, packets), "--capacity", 20_000,
                       "--entry-interval", 10, "--script", script)
    access = [l.split() for l in lines if l.startswith("access")]
    assert [a[2] for a in access] == ["reads=1", "reads=10", "reads=1"]
    assert bytes.fromhex(access[1][3]) == packets[29]


def test_simulate_queues_one_update_per_sweep(tmp_path):
    packets = generate(DatasetSpec(10, 5))
    script = tmp_path / "s.txt"
    script.write_text(f"insert 1 {'ab' * 70}\nremove 5\n")
    code, lines = call("simulate", "--in", write_packets(tmp_path, packets), "--capacity", 5000,
                       "--script", script)
    done = [l for l in lines if " done " in l]
    assert [l.split()[3] for l in done] == ["implicit", "final"]
    info = summary(lines)
    assert info["sweeps"] == "2" and info["packets"] == "10"


def test_simulate_error_codes(tmp_path, capsys):
    packets = generate(DatasetSpec(10, 5))
    data = write_packets(tmp_path, packets)
    script = tmp_path / "s.txt"
    script.write_text("sweep\n")
    assert call("simulate", "--in", data, "--capacity", 50, "--script", script)[0] == 3
    script.write_text(f"insert 2 {'cd' * 200}\nsweep\n")
    assert call("simulate", "--in", data, "--capacity", 600, "--script", script)[0] == 3
    assert "script line" in capsys.readouterr().err
    script.write_text("remove 11\n")
    assert call("simulate", "--in", data, "--capacity", 5000, "--script", script)[0] == 1
    script.write_text("remove 1\n")
    one = tmp_path / "one.fmp1"
    one.write_bytes(write_fmp1(packets[:1]))
    assert call("simulate", "--in", one, "--capacity", 5000, "--script", script)[0] == 1
    script.write_text("jump 3\n")
    assert call("simulate", "--in", data, "--capacity", 5000, "--script", script)[0] == 1
    assert call("simulate", "--in", data, "--script", script)[0] == 1


def test_parse_script():
    ops = parse_script("sweep\n\n  remove 3  # note\ninsert 1 0aff\naccess 2\n")
    assert ops == [(1, "sweep", ()), (3, "remove", (3,)), (4, "insert", (1, b"\x0a\xff")),
                   (5, "access", (2,))]
    for bad in ("insert 1 zz", "remove", "access x", "sweep 1"):
        with pytest.raises(UsageError):
            parse_script(bad)


def test_bench_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": {"total_packets": 400, "seed": 3}}))
    csv_path, svg_path = tmp_path / "r.csv", tmp_path / "r.svg"
    code, lines = call("bench", "--config", cfg, "--csv", csv_path, "--plot", svg_path)
    assert code == 0
    info = summary(lines)
    assert info["results"] == "28" and info["best_word_size"] == "2"
    assert len(csv_path.read_text().splitlines()) == 29
    assert svg_path.read_bytes().count(b'id="series-') == 4
    first = csv_path.read_bytes()
    call("bench", "--config", cfg, "--csv", csv_path, "--count", 400)
    assert csv_path.read_bytes() == first


def test_bench_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"word_sizes": [3]}))
    assert call("bench", "--config", cfg)[0] == 1


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fmdelta", "generate", "--count", "4", "--out",
                          str(tmp_path / "x")], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("fmdelta generate ok count=4")
    bad = subprocess.run([sys.executable, "-m", "fmdelta", "nope"], capture_output=True)
    assert bad.returncode == 1
