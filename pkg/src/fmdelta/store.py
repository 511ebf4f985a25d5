"""Simulated packet-generation engine over a contiguous record arena.

Records sit back to back from offset 0.  Every sweep reads each record,
decodes it against the cached previous packet, hands it to the transmit
sink and writes it back.  A pending insert or remove is folded into the
sweep: records after the splice point slide left or right as they are
rewritten, so the arena never needs a separate compaction pass.

Writes go through a byte FIFO (the engine cache).  Bytes may only land on
memory that has already been read; anything that cannot be written yet
stays in the FIFO until the read cursor moves past it.

External indices are 1-based, matching P_1 .. P_N; everything inside is
0-based.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .codec import (
    MAX_PACKET_LEN,
    RECORD_HEADER,
    CodecParams,
    CompressedStream,
    CorruptStreamError,
    DeltaRecord,
    check_packet,
    compress_sequence,
    compressed_size,
    decode_record,
    decompress_sequence,
    encode_first,
    encode_with_fallback,
    parse_record,
)

ARENA_MAGIC = b"FMA1"
# two full-size record slots
ENGINE_CACHE_BYTES = 2 * (RECORD_HEADER + MAX_PACKET_LEN)

TransmitSink = Callable[[int, bytes], None]


class ArenaError(Exception):
    pass


class CapacityExceededError(ArenaError):
    def __init__(self, required: int, available: int):
        self.required = required
        self.available = available
        super().__init__(f"needs {required} bytes, capacity is {available}")


class StaleRepatchError(ArenaError):
    """An update carries a record that does not decode against its real predecessor."""


class SweepInProgressError(ArenaError):
    pass


class UpdatePendingError(ArenaError):
    pass


class ArenaIndexError(ArenaError, IndexError):
    pass


class EngineInvariantError(AssertionError):
    """The simulated engine broke one of its hardware constraints."""


@dataclass(frozen=True)
class UpdateRequest:
    kind: str                                # "insert" or "remove"
    index: int                               # k, 1-based
    new_packet: Optional[DeltaRecord] = None
    repatched: Optional[DeltaRecord] = None  # P'_{k+1} (remove) or P'_k (insert); None when no successor

    def __post_init__(self):
        if self.kind not in ("insert", "remove"):
            raise ValueError(f"unknown update kind {self.kind!r}")
        if self.kind == "insert" and self.new_packet is None:
            raise ValueError("insert request without a packet")


@dataclass(frozen=True)
class SweepReport:
    packets_emitted: int
    bytes_read: int
    bytes_written: int
    updates_applied: int
    peak_cache_bytes: int = 0

    CSV_HEADER = "count,bytes_read,bytes_written,updates_applied"

    def csv_row(self) -> str:
        return f"{self.packets_emitted},{self.bytes_read},{self.bytes_written},{self.updates_applied}"


class CollectingSink:
    def __init__(self):
        self.packets: list[bytes] = []
        self.indices: list[int] = []

    def __call__(self, index: int, packet: bytes) -> None:
        self.indices.append(index)
        self.packets.append(packet)


class _Engine:
    """Cursors, write-back FIFO and counters for one pass over the arena."""

    def __init__(self, memory: bytearray, old_end: int, capacity: int, word_size: int):
        self.mem = memory
        self.view = memoryview(memory)[:old_end]
        self.old_end = old_end
        self.capacity = capacity
        self.word_size = word_size
        self.read_cursor = 0
        self.write_cursor = 0
        self.fifo = bytearray()
        self.bytes_read = 0
        self.bytes_written = 0
        self.peak = 0
        self.layout: list[tuple[int, bool]] = []

    def read(self, index: int) -> DeltaRecord:
        try:
            rec, end = parse_record(self.view, self.read_cursor, self.word_size)
        except CorruptStreamError as exc:
            raise CorruptStreamError(str(exc), index) from None
        self.bytes_read += end - self.read_cursor
        self.read_cursor = end
        return rec

    def push(self, rec: DeltaRecord) -> None:
        self.layout.append((self.write_cursor + len(self.fifo), rec.is_uncompressed))
        self.fifo += rec.to_bytes()
        self.flush()

    def flush(self) -> None:
        unread = self.read_cursor < self.old_end
        limit = self.read_cursor if unread else self.capacity
        n = min(len(self.fifo), limit - self.write_cursor)
        if n > 0:
            self._write(n)
        self.peak = max(self.peak, len(self.fifo))
        if len(self.fifo) > ENGINE_CACHE_BYTES:
            raise EngineInvariantError(f"engine cache holds {len(self.fifo)} bytes, limit {ENGINE_CACHE_BYTES}")

    def _write(self, n: int) -> None:
        lo, hi = self.write_cursor, self.write_cursor + n
        if self.read_cursor < self.old_end and hi > self.read_cursor:
            raise EngineInvariantError(
                f"write [{lo}, {hi}) overlaps unread bytes [{self.read_cursor}, {self.old_end})")
        self.mem[lo:hi] = self.fifo[:n]
        del self.fifo[:n]
        self.write_cursor = hi
        self.bytes_written += n

    def finish(self) -> None:
        if self.read_cursor != self.old_end:
            raise CorruptStreamError(f"{self.old_end - self.read_cursor} bytes left after the last record")
        self.view.release()
        self.flush()
        if self.fifo:
            raise CapacityExceededError(self.write_cursor + len(self.fifo), self.capacity)


class PacketArena:
    """Fixed-capacity memory holding a compressed packet sequence."""

    def __init__(self, capacity: int, params: CodecParams = CodecParams()):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = capacity
        self.params = params
        self.memory = bytearray(capacity)
        self.used = 0
        self.count = 0
        self._layout: list[tuple[int, bool]] = []
        self._engine: _Engine | None = None
        self._prev: bytes | None = None
        self._pending: UpdateRequest | None = None

    # observable engine state; all idle outside a sweep
    @property
    def read_cursor(self) -> int:
        return self._engine.read_cursor if self._engine else 0

    @property
    def write_cursor(self) -> int:
        return self._engine.write_cursor if self._engine else 0

    @property
    def prev_cache(self) -> bytes | None:
        return self._prev

    @property
    def sweeping(self) -> bool:
        return self._engine is not None

    @property
    def pending(self) -> UpdateRequest | None:
        return self._pending

    @classmethod
    def load(cls, packets: Iterable[bytes], params: CodecParams = CodecParams(),
             capacity: int = 0) -> "PacketArena":
        return cls.from_stream(compress_sequence(packets, params), capacity)

    @classmethod
    def from_stream(cls, stream: CompressedStream, capacity: int) -> "PacketArena":
        decompress_sequence(stream)
        size = compressed_size(stream)
        if size > capacity:
            raise CapacityExceededError(size, capacity)
        arena = cls(capacity, stream.params)
        pos = 0
        for rec in stream.records:
            raw = rec.to_bytes()
            arena.memory[pos:pos + len(raw)] = raw
            arena._layout.append((pos, rec.is_uncompressed))
            pos += len(raw)
        arena.used = pos
        arena.count = stream.count
        return arena

    def records(self) -> list[DeltaRecord]:
        view = memoryview(self.memory)[:self.used]
        try:
            return [parse_record(view, off, self.params.word_size)[0] for off, _ in self._layout]
        finally:
            view.release()

    def stream(self) -> CompressedStream:
        return CompressedStream(self.params, tuple(self.records()))

    def decode_all(self) -> list[bytes]:
        return decompress_sequence(self.stream())

    def snapshot(self) -> bytes:
        return ARENA_MAGIC + struct.pack(">Q", self.capacity) + self.stream().to_bytes()

    @classmethod
    def from_snapshot(cls, data: bytes) -> "PacketArena":
        if data[:4] != ARENA_MAGIC or len(data) < 12:
            raise CorruptStreamError("not an FMA1 arena snapshot")
        (capacity,) = struct.unpack_from(">Q", data, 4)
        return cls.from_stream(CompressedStream.from_bytes(data[12:]), capacity)

    # software layer -------------------------------------------------------

    def _check_index(self, k: int, upper: int) -> int:
        if not 1 <= k <= upper:
            raise ArenaIndexError(f"index {k} outside [1, {upper}]")
        return k - 1

    def _encode_at(self, index: int, packet: bytes, pred: Optional[bytes]) -> DeltaRecord:
        if self.params.is_entry_point(index):
            return encode_first(packet)
        return encode_with_fallback(pred, packet, self.params.word_size)

    def _check_not_last(self) -> None:
        # a stream always holds at least one record
        if self.count == 1:
            raise ArenaError("cannot remove the only packet in the arena")

    def prepare_removal(self, k: int) -> UpdateRequest:
        r = self._check_index(k, self.count)
        self._check_not_last()
        if k == self.count:
            return UpdateRequest("remove", k)
        after, _ = self.random_access(k + 1)
        before = None if r == 0 else self.random_access(k - 1)[0]
        return UpdateRequest("remove", k, repatched=self._encode_at(r, after, before))

    def prepare_insertion(self, k: int, packet: bytes) -> UpdateRequest:
        r = self._check_index(k, self.count + 1)
        packet = check_packet(packet)
        before = None if r == 0 else self.random_access(k - 1)[0]
        new = self._encode_at(r, packet, before)
        if k == self.count + 1:
            return UpdateRequest("insert", k, new_packet=new)
        succ, _ = self.random_access(k)
        return UpdateRequest("insert", k, new_packet=new, repatched=self._encode_at(r + 1, succ, packet))

    def submit(self, req: UpdateRequest) -> None:
        """Queue one update for the next sweep."""
        if self._pending is not None:
            raise UpdatePendingError("an update is already queued for the next sweep")
        self._validate(req)
        self._pending = req

    def _validate(self, req: UpdateRequest) -> None:
        upper = self.count if req.kind == "remove" else self.count + 1
        self._check_index(req.index, upper)
        if req.kind == "remove":
            self._check_not_last()

    # engine ---------------------------------------------------------------

    def random_access(self, k: int) -> tuple[bytes, int]:
        """Packet ``k`` plus the number of record reads it took.

        Decoding starts from the nearest uncompressed record at or before
        ``k``, so reads never exceed ``(k - 1) % entry_interval + 1``.
        """
        if self.sweeping:
            raise SweepInProgressError("random access during a sweep")
        r = self._check_index(k, self.count)
        start = r
        while not self._layout[start][1]:
            start -= 1
        view = memoryview(self.memory)[:self.used]
        try:
            pkt = None
            for i in range(start, r + 1):
                try:
                    rec, _ = parse_record(view, self._layout[i][0], self.params.word_size)
                    pkt = decode_record(rec, pkt, self.params.word_size)
                except CorruptStreamError as exc:
                    raise CorruptStreamError(str(exc), i) from None
        finally:
            view.release()
        return pkt, r - start + 1

    def sweep(self, sink: Optional[TransmitSink] = None) -> SweepReport:
        """One read-decompress-write pass; applies the queued update if any."""
        if self.sweeping:
            raise SweepInProgressError("sweep already running")
        req, self._pending = self._pending, None
        if req is not None:
            return self.sweep_with_update(sink, req)
        return self._commit(self._pass(sink, None))

    def sweep_with_update(self, sink: Optional[TransmitSink], req: UpdateRequest) -> SweepReport:
        if self.sweeping:
            raise SweepInProgressError("sweep already running")
        self._validate(req)
        # rehearse on a scratch copy so a bad request fails before anything is emitted
        self._pass(None, req)
        return self._commit(self._pass(sink, req))

    def _commit(self, result) -> SweepReport:
        memory, engine, count, emitted, applied = result
        tail = self.used
        self.memory = memory
        if engine.write_cursor < tail:
            self.memory[engine.write_cursor:tail] = bytes(tail - engine.write_cursor)
        self.used = engine.write_cursor
        self.count = count
        self._layout = engine.layout
        return SweepReport(emitted, engine.bytes_read, engine.bytes_written, applied, engine.peak)

    def _pass(self, sink, req):
        memory = bytearray(self.memory)
        engine = _Engine(memory, self.used, self.capacity, self.params.word_size)
        w = self.params.word_size
        n = self.count
        split = n if req is None else req.index - 1
        emitted = 0
        last_out: Optional[bytes] = None

        def emit(pkt: bytes) -> None:
            nonlocal emitted, last_out
            emitted += 1
            last_out = pkt
            if sink is not None:
                sink(emitted, pkt)

        self._engine = engine
        self._prev = None
        try:
            for j in range(n):
                rec = engine.read(j)
                try:
                    pkt = decode_record(rec, self._prev, w)
                except CorruptStreamError as exc:
                    raise CorruptStreamError(str(exc), j) from None
                self._prev = pkt
                if j < split:
                    out = rec
                elif req.kind == "remove":
                    if j == split:
                        continue
                    if j == split + 1:
                        out = self._check_record(req.repatched, last_out, pkt, split, "repatched")
                    else:
                        out = self._repair(rec, pkt, last_out, j - 1)
                else:
                    if j == split:
                        new = self._check_record(req.new_packet, last_out, None, split, "inserted")
                        emit(decode_record(new, last_out, w))
                        engine.push(new)
                        out = self._check_record(req.repatched, last_out, pkt, split + 1, "repatched")
                    else:
                        out = self._repair(rec, pkt, last_out, j + 1)
                emit(pkt)
                engine.push(out)
            if req is not None:
                if req.kind == "insert" and split == n:
                    new = self._check_record(req.new_packet, last_out, None, split, "inserted")
                    emit(decode_record(new, last_out, w))
                    engine.push(new)
                if split >= n - (req.kind == "remove") and req.repatched is not None:
                    raise StaleRepatchError("repatched record given but the packet has no successor")
            engine.finish()
        finally:
            self._engine = None
            self._prev = None
        count = n if req is None else n + (1 if req.kind == "insert" else -1)
        return memory, engine, count, emitted, int(req is not None)

    def _check_record(self, rec, pred, expected, index, what) -> DeltaRecord:
        if rec is None:
            raise StaleRepatchError(f"{what} record missing for position {index + 1}")
        if self.params.is_entry_point(index) and not rec.is_uncompressed:
            raise StaleRepatchError(f"{what} record at entry point {index + 1} must be uncompressed")
        try:
            got = decode_record(rec, pred, self.params.word_size)
        except CorruptStreamError as exc:
            raise StaleRepatchError(f"{what} record does not decode against its predecessor: {exc}") from None
        if expected is not None and got != expected:
            raise StaleRepatchError(f"{what} record decodes to a different packet than position {index + 1}")
        return rec

    def _repair(self, rec, pkt, pred, index) -> DeltaRecord:
        """Re-encode a shifted record whose entry-point status changed."""
        if self.params.is_entry_point(index):
            return rec if rec.is_uncompressed else encode_first(pkt)
        if rec.is_uncompressed:
            return encode_with_fallback(pred, pkt, self.params.word_size)
        return rec
