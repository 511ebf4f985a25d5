"""Word-granular delta encoding of packet sequences.

A stream starts with an uncompressed record; every later record is either
uncompressed (entry points, incompressible packets) or a delta against the
previous packet: a bitmap with one bit per word (1 = copy the word from the
previous packet) followed by the literal bytes of the words that changed.

Record wire format::

    flags (1) | length (2, big-endian) | payload

``flags`` bit 0 set means the payload is the raw packet.  Otherwise the
payload is ``ceil(ceil(length / word_size) / 8)`` bitmap bytes (MSB first,
zero padded) followed by the values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_PACKET_LEN = 9216
WORD_SIZES = (1, 2, 4, 8, 16)
DEFAULT_WORD_SIZE = 2
RECORD_HEADER = 3
FLAG_UNCOMPRESSED = 0x01
# largest value the 4-byte entry_interval field can carry; acts as "no entry points"
SINGLE_ENTRY = 0xFFFFFFFF

STREAM_MAGIC = b"FMD1"
STREAM_VERSION = 0x01
_STREAM_HEADER = struct.Struct(">4sBBII")
_RECORD_HEADER = struct.Struct(">BH")

_BATCH_ROWS = 4096


class CodecError(ValueError):
    """Base class for codec failures."""


class PacketLengthError(CodecError):
    def __init__(self, length: int, index: int | None = None):
        self.length = length
        self.index = index
        where = "" if index is None else f"packet {index}: "
        super().__init__(f"{where}length {length} outside [1, {MAX_PACKET_LEN}]")


class CorruptStreamError(CodecError):
    """A record or stream cannot be decoded.  ``index`` is the record index when known."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)


def check_packet(packet: bytes, index: int | None = None) -> bytes:
    packet = bytes(packet)
    if not 1 <= len(packet) <= MAX_PACKET_LEN:
        raise PacketLengthError(len(packet), index)
    return packet


def check_word_size(word_size: int) -> int:
    if word_size not in WORD_SIZES:
        raise CodecError(f"word size {word_size!r} not in {WORD_SIZES}")
    return word_size


def word_count(length: int, word_size: int) -> int:
    return -(-length // word_size)


def bitmap_size(length: int, word_size: int) -> int:
    return -(-word_count(length, word_size) // 8)


@dataclass(frozen=True)
class CodecParams:
    word_size: int = DEFAULT_WORD_SIZE
    entry_interval: int = SINGLE_ENTRY

    def __post_init__(self):
        check_word_size(self.word_size)
        if not 1 <= self.entry_interval <= SINGLE_ENTRY:
            raise CodecError(f"entry interval {self.entry_interval!r} must be in [1, {SINGLE_ENTRY}]")

    def is_entry_point(self, index: int) -> bool:
        """True if the 0-based record ``index`` must be stored uncompressed."""
        return index % self.entry_interval == 0


@dataclass(frozen=True, slots=True)
class DeltaRecord:
    """One stored packet.

    ``bitmap is None`` marks an uncompressed record whose ``data`` is the raw
    packet; otherwise ``data`` holds the values of the changed words.
    """

    length: int
    data: bytes
    bitmap: bytes | None = None

    @property
    def is_uncompressed(self) -> bool:
        return self.bitmap is None

    @property
    def flags(self) -> int:
        return FLAG_UNCOMPRESSED if self.bitmap is None else 0

    @property
    def values(self) -> bytes:
        if self.bitmap is None:
            raise CodecError("uncompressed record has no values section")
        return self.data

    @property
    def size(self) -> int:
        return RECORD_HEADER + len(self.data) + (0 if self.bitmap is None else len(self.bitmap))

    def to_bytes(self) -> bytes:
        head = _RECORD_HEADER.pack(self.flags, self.length)
        if self.bitmap is None:
            return head + self.data
        return head + self.bitmap + self.data


@dataclass(frozen=True)
class CompressedStream:
    params: CodecParams
    records: tuple[DeltaRecord, ...] = field(default_factory=tuple)

    @property
    def count(self) -> int:
        return len(self.records)

    def to_bytes(self) -> bytes:
        head = _STREAM_HEADER.pack(STREAM_MAGIC, STREAM_VERSION, self.params.word_size,
                                   self.params.entry_interval, self.count)
        return head + b"".join(r.to_bytes() for r in self.records)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CompressedStream":
        buf = bytes(buf)
        if len(buf) < _STREAM_HEADER.size:
            raise CorruptStreamError("truncated stream header")
        magic, version, word_size, interval, count = _STREAM_HEADER.unpack_from(buf)
        if magic != STREAM_MAGIC:
            raise CorruptStreamError(f"bad magic {magic!r}")
        if version != STREAM_VERSION:
            raise CorruptStreamError(f"unsupported version {version}")
        try:
            params = CodecParams(word_size, interval)
        except CodecError as exc:
            raise CorruptStreamError(str(exc)) from None
        records = []
        offset = _STREAM_HEADER.size
        for i in range(count):
            try:
                rec, offset = parse_record(buf, offset, word_size)
            except CorruptStreamError as exc:
                raise CorruptStreamError(str(exc), i) from None
            records.append(rec)
        if offset != len(buf):
            raise CorruptStreamError(f"{len(buf) - offset} trailing bytes after {count} records")
        return cls(params, tuple(records))


def parse_record(buf, offset: int, word_size: int) -> tuple[DeltaRecord, int]:
    """Parse one serialized record at ``offset``; return it and the offset just past it."""
    end = len(buf)
    if offset + RECORD_HEADER > end:
        raise CorruptStreamError("truncated record header")
    flags, length = _RECORD_HEADER.unpack_from(buf, offset)
    if flags & ~FLAG_UNCOMPRESSED:
        raise CorruptStreamError(f"reserved flag bits set (0x{flags:02x})")
    if not 1 <= length <= MAX_PACKET_LEN:
        raise CorruptStreamError(f"length {length} out of range")
    pos = offset + RECORD_HEADER
    if flags & FLAG_UNCOMPRESSED:
        if pos + length > end:
            raise CorruptStreamError("truncated packet payload")
        return DeltaRecord(length, bytes(buf[pos:pos + length])), pos + length
    nbits = word_count(length, word_size)
    nbytes = -(-nbits // 8)
    if pos + nbytes > end:
        raise CorruptStreamError("truncated delta bitmap")
    bitmap = bytes(buf[pos:pos + nbytes])
    _check_padding(bitmap, nbits)
    pos += nbytes
    vlen = values_length(bitmap, length, word_size)
    if pos + vlen > end:
        raise CorruptStreamError("truncated values section")
    return DeltaRecord(length, bytes(buf[pos:pos + vlen]), bitmap), pos + vlen


def _check_padding(bitmap: bytes, nbits: int) -> None:
    spare = len(bitmap) * 8 - nbits
    if spare and bitmap[-1] & ((1 << spare) - 1):
        raise CorruptStreamError("nonzero bitmap padding")


def _word_width(j: int, length: int, word_size: int) -> int:
    return min(word_size, length - j * word_size)


def values_length(bitmap: bytes, length: int, word_size: int) -> int:
    """Byte count of the values section implied by ``bitmap``."""
    nbits = word_count(length, word_size)
    zeros = nbits - sum(b.bit_count() for b in bitmap)
    last = _word_width(nbits - 1, length, word_size)
    if last != word_size and not bitmap[(nbits - 1) >> 3] & (0x80 >> ((nbits - 1) & 7)):
        return (zeros - 1) * word_size + last
    return zeros * word_size


def value_offsets(bitmap: bytes, length: int, word_size: int) -> np.ndarray:
    """Start offset into the values section for every word.

    Entries for copied words point at the next literal word; they are unused.
    The prefix sum over cleared bits is what lets all words decode independently.
    """
    nbits = word_count(length, word_size)
    bits = np.unpackbits(np.frombuffer(bitmap, dtype=np.uint8))[:nbits]
    widths = np.full(nbits, word_size, dtype=np.int64)
    widths[-1] = _word_width(nbits - 1, length, word_size)
    literal = np.where(bits == 0, widths, 0)
    return np.concatenate(([0], np.cumsum(literal)[:-1]))


def encode_first(packet: bytes) -> DeltaRecord:
    packet = check_packet(packet)
    return DeltaRecord(len(packet), packet)


def encode_delta(prev: bytes, curr: bytes, word_size: int = DEFAULT_WORD_SIZE) -> DeltaRecord:
    """Delta-encode ``curr`` against ``prev``.

    A word is copied only if all its bytes exist in ``prev`` and match, so the
    tail of a packet longer than its predecessor is always literal.
    """
    check_word_size(word_size)
    prev = check_packet(prev)
    curr = check_packet(curr)
    length = len(curr)
    plen = len(prev)
    bits = 0
    nbits = word_count(length, word_size)
    values = bytearray()
    for j in range(nbits):
        lo = j * word_size
        hi = min(lo + word_size, length)
        bits <<= 1
        if hi <= plen and prev[lo:hi] == curr[lo:hi]:
            bits |= 1
        else:
            values += curr[lo:hi]
    nbytes = -(-nbits // 8)
    bits <<= nbytes * 8 - nbits
    return DeltaRecord(length, bytes(values), bits.to_bytes(nbytes, "big"))


def encode_with_fallback(prev: bytes, curr: bytes, word_size: int = DEFAULT_WORD_SIZE) -> DeltaRecord:
    """Delta record if strictly smaller than the uncompressed record, else uncompressed."""
    rec = encode_delta(prev, curr, word_size)
    if rec.size >= RECORD_HEADER + rec.length:
        return DeltaRecord(rec.length, bytes(curr))
    return rec


def decode_delta(record: DeltaRecord, prev: bytes, word_size: int = DEFAULT_WORD_SIZE) -> bytes:
    """Rebuild a packet from a delta record and its predecessor, consuming values in order."""
    if record.bitmap is None:
        raise CorruptStreamError("expected a delta record, got an uncompressed one")
    check_word_size(word_size)
    length = record.length
    bitmap = record.bitmap
    values = record.data
    nbits = word_count(length, word_size)
    if len(bitmap) != -(-nbits // 8):
        raise CorruptStreamError(f"bitmap is {len(bitmap)} bytes, expected {-(-nbits // 8)}")
    _check_padding(bitmap, nbits)
    plen = len(prev)
    out = bytearray(prev[:length])
    if plen < length:
        out += bytes(length - plen)
    m = 0
    for byte_index, byte in enumerate(bitmap):
        if byte == 0xFF and (byte_index + 1) * 8 * word_size <= plen:
            continue
        for bit in range(8):
            j = byte_index * 8 + bit
            if j >= nbits:
                break
            lo = j * word_size
            hi = min(lo + word_size, length)
            if byte & (0x80 >> bit):
                if hi > plen:
                    raise CorruptStreamError(
                        f"word {j} copies bytes [{lo}, {hi}) beyond predecessor length {plen}")
            else:
                width = hi - lo
                if m + width > len(values):
                    raise CorruptStreamError(f"values exhausted at word {j}")
                out[lo:hi] = values[m:m + width]
                m += width
    if m != len(values):
        raise CorruptStreamError(f"{len(values) - m} unconsumed values bytes")
    return bytes(out)


def decode_delta_parallel(record: DeltaRecord, prev: bytes, word_size: int = DEFAULT_WORD_SIZE) -> bytes:
    """Decode every word independently using prefix-sum value offsets.

    Produces the same bytes as :func:`decode_delta` for well-formed input.
    """
    if record.bitmap is None:
        raise CorruptStreamError("expected a delta record, got an uncompressed one")
    length = record.length
    nbits = word_count(length, word_size)
    bits = np.unpackbits(np.frombuffer(record.bitmap, dtype=np.uint8))[:nbits].astype(bool)
    offsets = value_offsets(record.bitmap, length, word_size)
    pos = np.arange(length)
    word = pos // word_size
    copied = bits[word]
    if np.any(copied & (pos >= len(prev))):
        raise CorruptStreamError("copy beyond predecessor length")
    src_prev = np.frombuffer(bytes(prev), dtype=np.uint8)
    src_vals = np.frombuffer(record.data, dtype=np.uint8)
    literal_index = offsets[word] + pos % word_size
    if np.any(~copied & (literal_index >= len(src_vals))):
        raise CorruptStreamError("values exhausted")
    out = np.empty(length, dtype=np.uint8)
    out[copied] = src_prev[pos[copied]]
    out[~copied] = src_vals[literal_index[~copied]]
    return out.tobytes()


def decode_record(record: DeltaRecord, prev: bytes | None, word_size: int) -> bytes:
    if record.bitmap is None:
        if len(record.data) != record.length:
            raise CorruptStreamError("payload size differs from length")
        return record.data
    if prev is None:
        raise CorruptStreamError("delta record without a predecessor")
    return decode_delta(record, prev, word_size)


def _delta_batch(packets: Sequence[bytes], word_size: int):
    """Vectorized encode_delta for consecutive pairs ``packets[i-1], packets[i]``.

    Yields ``(bitmap, values)`` for i = 1 .. len(packets) - 1.
    """
    n = len(packets)
    lengths = np.fromiter((len(p) for p in packets), dtype=np.int64, count=n)
    for start in range(1, n, _BATCH_ROWS):
        stop = min(n, start + _BATCH_ROWS)
        rows = packets[start - 1:stop]
        lens = lengths[start - 1:stop]
        width = int(lens.max())
        width += -width % word_size
        mat = np.frombuffer(b"".join(p.ljust(width, b"\0") for p in rows),
                            dtype=np.uint8).reshape(len(rows), width)
        prev, curr = mat[:-1], mat[1:]
        plen, clen = lens[:-1, None], lens[1:, None]
        col = np.arange(width)
        ok = (col >= clen) | ((col < plen) & (prev == curr))
        nwords = width // word_size
        same = ok.reshape(len(curr), nwords, word_size).all(axis=2)
        used = np.arange(nwords) < (-(-lens[1:, None] // word_size))
        same &= used
        packed = np.packbits(same, axis=1)
        literal = np.repeat(~same, word_size, axis=1) & (col < clen)
        flat = curr[literal]
        counts = literal.sum(axis=1)
        ends = np.cumsum(counts)
        flat_bytes = flat.tobytes()
        packed_rows = packed.tobytes()
        stride = packed.shape[1]
        for r in range(len(curr)):
            nb = bitmap_size(int(lens[r + 1]), word_size)
            bitmap = packed_rows[r * stride:r * stride + nb]
            hi = int(ends[r])
            yield bitmap, flat_bytes[hi - int(counts[r]):hi]


def compress_sequence(packets: Iterable[bytes], params: CodecParams = CodecParams()) -> CompressedStream:
    """Encode a packet sequence.

    Record ``i`` is uncompressed when ``i`` is a multiple of the entry interval
    or when its delta form would not be strictly smaller.
    """
    packets = [check_packet(p, i) for i, p in enumerate(packets)]
    if not packets:
        raise CodecError("cannot compress an empty sequence")
    w = params.word_size
    records = [DeltaRecord(len(packets[0]), packets[0])]
    for i, (bitmap, values) in enumerate(_delta_batch(packets, w), start=1):
        pkt = packets[i]
        if params.is_entry_point(i) or len(bitmap) + len(values) >= len(pkt):
            records.append(DeltaRecord(len(pkt), pkt))
        else:
            records.append(DeltaRecord(len(pkt), values, bitmap))
    return CompressedStream(params, tuple(records))


def decompress_sequence(stream: CompressedStream) -> list[bytes]:
    params = stream.params
    out: list[bytes] = []
    prev = None
    for i, rec in enumerate(stream.records):
        if params.is_entry_point(i) and not rec.is_uncompressed:
            raise CorruptStreamError("entry-point record is delta encoded", i)
        try:
            prev = decode_record(rec, prev, params.word_size)
        except CorruptStreamError as exc:
            raise CorruptStreamError(str(exc), i) from None
        out.append(prev)
    return out


def compressed_size(stream: CompressedStream) -> int:
    if not stream.records:
        raise CodecError("a stream holds at least one record")
    return sum(r.size for r in stream.records)
