"""``fmdelta`` command line.

Exit codes: 0 success, 1 usage error, 2 data or corruption error,
3 arena capacity exceeded.  Every successful run ends with one line
``fmdelta <subcommand> ok key=value ...`` on stdout.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence, TextIO

from . import __version__
from .bench import BenchConfig, BenchError, best_parameter, emit, run
from .codec import (
    DEFAULT_WORD_SIZE,
    SINGLE_ENTRY,
    STREAM_MAGIC,
    WORD_SIZES,
    CodecError,
    CodecParams,
    CompressedStream,
    compress_sequence,
    compressed_size,
    decompress_sequence,
)
from .dataio import DatasetFormatError, read_dataset, write_dataset
from .frames import FrameParseError
from .pktgen import MODES, DatasetSpec, generate
from .store import ARENA_MAGIC, ArenaError, CapacityExceededError, PacketArena, SweepReport

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CAPACITY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _summary(out: TextIO, cmd: str, **fields) -> None:
    pairs = " ".join(f"{k}={v}" for k, v in fields.items())
    print(f"fmdelta {cmd} ok {pairs}", file=out)


def _fmt_ratio(x: float) -> str:
    return f"{x:.4f}"


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _entry_interval(text: str) -> int:
    if text.lower() in ("none", "single"):
        return SINGLE_ENTRY
    n = _positive(text)
    if n > SINGLE_ENTRY:
        raise argparse.ArgumentTypeError("entry interval must fit in 32 bits")
    return n


def _read(path: Path) -> bytes:
    return Path(path).read_bytes()


# subcommands ---------------------------------------------------------------

def cmd_generate(args, out: TextIO) -> int:
    try:
        spec = DatasetSpec(args.count, args.seed, args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    packets = generate(spec)
    args.out.write_bytes(write_dataset(packets, args.format))
    _summary(out, "generate", count=len(packets), bytes=sum(map(len, packets)),
             format=args.format, mode=args.mode, seed=args.seed)
    return EXIT_OK


def cmd_compress(args, out: TextIO) -> int:
    packets = read_dataset(_read(args.input))
    if not packets:
        raise DatasetFormatError("dataset holds no packets")
    stream = compress_sequence(packets, CodecParams(args.word_size, args.entry_interval))
    blob = stream.to_bytes()
    args.out.write_bytes(blob)
    total, size = sum(map(len, packets)), compressed_size(stream)
    _summary(out, "compress", packets=len(packets), uncompressed_bytes=total, compressed_bytes=size,
             file_bytes=len(blob), ratio=_fmt_ratio(total / size), word_size=args.word_size)
    return EXIT_OK


def cmd_decompress(args, out: TextIO) -> int:
    stream = CompressedStream.from_bytes(_read(args.input))
    packets = decompress_sequence(stream)
    args.out.write_bytes(write_dataset(packets, args.format))
    _summary(out, "decompress", packets=len(packets), bytes=sum(map(len, packets)), format=args.format)
    return EXIT_OK


def _load_arena(args) -> PacketArena:
    data = _read(args.input)
    if data[:4] == ARENA_MAGIC:
        arena = PacketArena.from_snapshot(data)
        if args.capacity is not None:
            arena = PacketArena.from_stream(arena.stream(), args.capacity)
        return arena
    if args.capacity is None:
        raise UsageError("--capacity is required unless --in is an FMA1 snapshot")
    if data[:4] == STREAM_MAGIC:
        return PacketArena.from_stream(CompressedStream.from_bytes(data), args.capacity)
    params = CodecParams(args.word_size, args.entry_interval)
    return PacketArena.load(read_dataset(data), params, args.capacity)


def parse_script(text: str) -> list[tuple[int, str, tuple]]:
    """Script lines: ``sweep``, ``remove K``, ``insert K HEX``, ``access K``.

    Blank lines and ``#`` comments are ignored.  Indices are 1-based.
    """
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        words = raw.split("#", 1)[0].split()
        if not words:
            continue
        op, rest = words[0].lower(), words[1:]
        arity = {"sweep": 0, "remove": 1, "access": 1, "insert": 2}.get(op)
        if arity is None:
            raise UsageError(f"script line {lineno}: unknown operation {op!r}")
        if len(rest) != arity:
            raise UsageError(f"script line {lineno}: {op} takes {arity} argument(s)")
        try:
            argv = tuple(int(rest[0]) if i == 0 else bytes.fromhex(rest[1]) for i in range(arity))
        except ValueError as exc:
            raise UsageError(f"script line {lineno}: {exc}") from None
        ops.append((lineno, op, argv))
    return ops


class _Simulation:
    def __init__(self, arena: PacketArena, log: TextIO):
        self.arena = arena
        self.log = log
        self.reports: list[SweepReport] = []
        self.emitted = 0
        self.accesses = 0

    def sweep(self, why: str = "sweep") -> None:
        n = len(self.reports) + 1

        def sink(index: int, packet: bytes) -> None:
            print(f"sweep {n} emit {index} {packet.hex()}", file=self.log)

        report = self.arena.sweep(sink)
        self.reports.append(report)
        self.emitted += report.packets_emitted
        print(f"sweep {n} done {why} packets={report.packets_emitted} "
              f"updates={report.updates_applied} bytes_written={report.bytes_written}", file=self.log)

    def update(self, op: str, argv: tuple) -> None:
        # one update per sweep: a queued one goes out first
        if self.arena.pending is not None:
            self.sweep("implicit")
        if op == "remove":
            req = self.arena.prepare_removal(argv[0])
        else:
            req = self.arena.prepare_insertion(argv[0], argv[1])
        self.arena.submit(req)

    def access(self, k: int) -> None:
        packet, reads = self.arena.random_access(k)
        self.accesses += 1
        print(f"access {k} reads={reads} {packet.hex()}", file=self.log)


def cmd_simulate(args, out: TextIO) -> int:
    ops = parse_script(args.script.read_text())
    arena = _load_arena(args)
    log = open(args.log, "w") if args.log else out
    try:
        sim = _Simulation(arena, log)
        for lineno, op, argv in ops:
            try:
                if op == "sweep":
                    sim.sweep()
                elif op == "access":
                    sim.access(*argv)
                else:
                    sim.update(op, argv)
            except CapacityExceededError as exc:
                exc.args = (f"script line {lineno}: {exc}",)
                raise
            except ArenaError as exc:
                raise UsageError(f"script line {lineno}: {exc}") from None
        if arena.pending is not None:
            sim.sweep("final")
    finally:
        if log is not out:
            log.close()
    if args.reports:
        rows = [SweepReport.CSV_HEADER] + [r.csv_row() for r in sim.reports]
        args.reports.write_text("\n".join(rows) + "\n")
    if args.snapshot:
        args.snapshot.write_bytes(arena.snapshot())
    _summary(out, "simulate", sweeps=len(sim.reports), emitted=sim.emitted, accesses=sim.accesses,
             packets=arena.count, used=arena.used, capacity=arena.capacity)
    return EXIT_OK


def cmd_bench(args, out: TextIO) -> int:
    try:
        config = BenchConfig.from_json(args.config.read_text()) if args.config else BenchConfig()
        overrides = {k: v for k, v in (("total_packets", args.count), ("seed", args.seed)) if v is not None}
        config = replace(config, dataset_spec=replace(config.dataset_spec, **overrides))
        if args.repetitions is not None:
            config = replace(config, repetitions=args.repetitions)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad bench config: {exc}") from None
    results = run(config)
    if args.csv:
        args.csv.write_bytes(emit(results, "csv"))
    if args.plot:
        args.plot.write_bytes(emit(results, "svg"))
    fields = dict(results=len(results))
    if any(r.algorithm == "fm-delta" for r in results):
        fields["best_word_size"] = best_parameter(results)
    for r in results:
        if r.mode == "ordered" and (r.algorithm, r.parameter) in (("fm-delta", 2), ("baseline", 9)):
            fields[f"{r.algorithm.replace('-', '_')}_{r.parameter}_ratio"] = _fmt_ratio(r.ratio)
    _summary(out, "bench", **fields)
    return EXIT_OK


# wiring --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fmdelta", description="FM-Delta keepalive packet compression tools")
    parser.add_argument("--version", action="version", version=f"fmdelta {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def codec_flags(p):
        p.add_argument("--word-size", type=int, choices=WORD_SIZES, default=DEFAULT_WORD_SIZE)
        p.add_argument("--entry-interval", type=_entry_interval, default=SINGLE_ENTRY,
                       help="records between uncompressed entry points (default: first record only)")

    p = sub.add_parser("generate", help="write a synthetic CCM/BFD dataset")
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--mode", choices=MODES, default="ordered")
    p.add_argument("--format", choices=("fmp1", "pcap"), default="fmp1")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compress", help="dataset (FMP1 or pcap) to FMD1 stream")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    codec_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="FMD1 stream to dataset")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("fmp1", "pcap"), default="fmp1")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("simulate", help="run an update script against a packet arena")
    p.add_argument("--in", dest="input", type=Path, required=True,
                   help="dataset, FMD1 stream or FMA1 snapshot")
    p.add_argument("--capacity", type=int, help="arena size in bytes")
    p.add_argument("--script", type=Path, required=True)
    p.add_argument("--log", type=Path, help="emission log (default: stdout)")
    p.add_argument("--reports", type=Path, help="per-sweep CSV reports")
    p.add_argument("--snapshot", type=Path, help="write the final arena as FMA1")
    codec_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="compression-ratio sweeps to CSV and SVG")
    p.add_argument("--config", type=Path, help="JSON config")
    p.add_argument("--csv", type=Path)
    p.add_argument("--plot", type=Path, help="SVG output")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=_positive)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    if getattr(args, "capacity", None) is not None and args.capacity < 0:
        return _fail(EXIT_USAGE, "--capacity must be non-negative")
    try:
        return args.func(args, out)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except CapacityExceededError as exc:
        return _fail(EXIT_CAPACITY, str(exc))
    except BenchError as exc:
        return _fail(EXIT_DATA, str(exc))
    except (CodecError, DatasetFormatError, FrameParseError, OSError) as exc:
        return _fail(EXIT_DATA, str(exc))


def _fail(code: int, message: str) -> int:
    print(f"fmdelta: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
