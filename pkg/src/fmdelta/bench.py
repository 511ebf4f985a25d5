"""Compression-ratio sweeps: FM-Delta over word sizes, zlib over levels.

Both algorithms are measured on the same datasets and divide by the same
uncompressed size, the sum of packet lengths.  FM-Delta runs with a single
entry point.  The zlib baseline compresses the FMP1 body (each packet behind
a 2-byte big-endian length, no file header) as one stream.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from statistics import fmean

from .codec import SINGLE_ENTRY, WORD_SIZES, CodecParams, check_word_size, compress_sequence, compressed_size
from .dataio import fmp1_body
from .pktgen import MODES, DatasetSpec, generate

ALGORITHMS = ("fm-delta", "baseline")
BASELINE_LEVELS = tuple(range(1, 10))
CSV_COLUMNS = ("algorithm", "parameter", "mode", "ratio", "uncompressed_bytes", "compressed_bytes")
THREADS_ENV = "FMDELTA_BENCH_THREADS"


class BenchError(RuntimeError):
    """One or more grid cells failed; ``failures`` maps cell label to exception."""

    def __init__(self, failures: dict[str, BaseException]):
        self.failures = failures
        lines = [f"{cell}: {type(exc).__name__}: {exc}" for cell, exc in failures.items()]
        super().__init__(f"{len(failures)} bench cell(s) failed\n" + "\n".join(lines))


@dataclass(frozen=True)
class BenchConfig:
    dataset_spec: DatasetSpec = field(default_factory=DatasetSpec)
    word_sizes: tuple[int, ...] = WORD_SIZES
    baseline_levels: tuple[int, ...] = BASELINE_LEVELS
    repetitions: int = 1

    def __post_init__(self):
        object.__setattr__(self, "word_sizes", tuple(self.word_sizes))
        object.__setattr__(self, "baseline_levels", tuple(self.baseline_levels))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.word_sizes:
            raise ValueError("word_sizes must be nonempty")
        for w in self.word_sizes:
            check_word_size(w)
        for level in self.baseline_levels:
            if level not in BASELINE_LEVELS:
                raise ValueError(f"baseline level {level} outside 1..9")
        if self.dataset_spec.seed + self.repetitions > 1 << 64:
            raise ValueError("seed + repetitions overflows 64 bits")

    @classmethod
    def from_dict(cls, raw: dict) -> BenchConfig:
        """Build from parsed JSON.  ``dataset`` holds DatasetSpec fields; unknown keys are errors."""
        raw = dict(raw)
        spec_raw = raw.pop("dataset", {})
        known = {f.name for f in fields(cls)} - {"dataset_spec"}
        spec_known = {f.name for f in fields(DatasetSpec)}
        unknown = (set(raw) - known) | {f"dataset.{k}" for k in set(spec_raw) - spec_known}
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "vlan_choices" in spec_raw:
            spec_raw["vlan_choices"] = tuple(spec_raw["vlan_choices"])
        return cls(DatasetSpec(**spec_raw), **raw)

    @classmethod
    def from_json(cls, text: str) -> BenchConfig:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class BenchResult:
    algorithm: str
    parameter: int
    mode: str
    ratio: float
    uncompressed_bytes: int
    compressed_bytes: int
    # spread across repetitions; equal to ratio when there is one
    ratio_min: float | None = None
    ratio_max: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.ratio > 0:
            raise ValueError("ratio must be positive")
        if self.ratio_min is None:
            object.__setattr__(self, "ratio_min", self.ratio)
        if self.ratio_max is None:
            object.__setattr__(self, "ratio_max", self.ratio)

    def csv_row(self) -> list:
        return [self.algorithm, self.parameter, self.mode, f"{self.ratio:.6f}",
                self.uncompressed_bytes, self.compressed_bytes]


def _uncompressed(packets) -> int:
    if not packets:
        raise ValueError("need at least one packet")
    return sum(map(len, packets))


def ratio_fmdelta(packets, word_size: int, mode: str = "ordered") -> BenchResult:
    total = _uncompressed(packets)
    stream = compress_sequence(packets, CodecParams(word_size, SINGLE_ENTRY))
    size = compressed_size(stream)
    return BenchResult("fm-delta", word_size, mode, total / size, total, size)


def ratio_baseline(packets, level: int, mode: str = "ordered") -> BenchResult:
    if level not in BASELINE_LEVELS:
        raise ValueError(f"zlib level must be 1..9, got {level}")
    total = _uncompressed(packets)
    size = len(zlib.compress(fmp1_body(packets), level))
    return BenchResult("baseline", level, mode, total / size, total, size)


def thread_count(env: dict | None = None) -> int:
    raw = (os.environ if env is None else env).get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0")
    return n or min(8, os.cpu_count() or 1)


def _grid(config: BenchConfig):
    for algorithm, params in (("fm-delta", config.word_sizes), ("baseline", config.baseline_levels)):
        for p in params:
            for mode in MODES:
                yield algorithm, p, mode


def run(config: BenchConfig = BenchConfig()) -> list[BenchResult]:
    """One result per (algorithm, parameter, mode), in a fixed order.

    Repetition r uses seed ``seed + r``.  ``ratio`` is the mean over
    repetitions; byte counts are summed.
    """
    seeds = [config.dataset_spec.seed + r for r in range(config.repetitions)]
    keys = [(s, m) for s in seeds for m in MODES]
    cells = [(a, p, m, s) for a, p, m in _grid(config) for s in seeds]
    failures: dict[str, BaseException] = {}

    def make(key):
        seed, mode = key
        return generate(replace(config.dataset_spec, seed=seed, mode=mode))

    def measure(cell):
        algorithm, p, mode, seed = cell
        fn = ratio_fmdelta if algorithm == "fm-delta" else ratio_baseline
        return fn(datasets[seed, mode], p, mode)

    with ThreadPoolExecutor(thread_count()) as pool:
        datasets = {}
        for key, fut in [(k, pool.submit(make, k)) for k in keys]:
            try:
                datasets[key] = fut.result()
            except Exception as exc:
                failures[f"dataset seed={key[0]} mode={key[1]}"] = exc
        if failures:
            raise BenchError(failures)
        measured = {}
        for cell, fut in [(c, pool.submit(measure, c)) for c in cells]:
            try:
                measured[cell] = fut.result()
            except Exception as exc:
                failures["{} param={} mode={} seed={}".format(*cell)] = exc
    if failures:
        raise BenchError(failures)

    out = []
    for algorithm, p, mode in _grid(config):
        reps = [measured[algorithm, p, mode, s] for s in seeds]
        ratios = [r.ratio for r in reps]
        out.append(BenchResult(algorithm, p, mode, fmean(ratios),
                               sum(r.uncompressed_bytes for r in reps),
                               sum(r.compressed_bytes for r in reps),
                               min(ratios), max(ratios)))
    return out


def to_csv(results) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow(r.csv_row())
    return buf.getvalue().encode()


def emit(results, fmt: str) -> bytes:
    results = list(results)
    if not results:
        raise ValueError("no results to emit")
    if fmt == "csv":
        return to_csv(results)
    if fmt == "svg":
        from .plotting import render_svg
        return render_svg(results)
    raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'svg'")


def best_parameter(results, algorithm: str = "fm-delta", mode: str = "ordered") -> int:
    rows = [r for r in results if r.algorithm == algorithm and r.mode == mode]
    if not rows:
        raise ValueError(f"no {algorithm}/{mode} results")
    return max(rows, key=lambda r: r.ratio).parameter
