"""Dataset files: length-prefixed FMP1 and classic libpcap."""

from __future__ import annotations

import struct

from .codec import check_packet

FMP1_MAGIC = b"FMP1"
PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
PCAP_SNAPLEN = 65535

_PCAP_GLOBAL = struct.Struct("<IHHiIII")
_PCAP_RECORD = struct.Struct("<IIII")


class DatasetFormatError(ValueError):
    pass


def fmp1_body(packets) -> bytes:
    return b"".join(struct.pack(">H", len(p)) + p for p in packets)


def write_fmp1(packets) -> bytes:
    packets = list(packets)
    return FMP1_MAGIC + struct.pack(">I", len(packets)) + fmp1_body(packets)


def read_fmp1(data: bytes) -> list[bytes]:
    if data[:4] != FMP1_MAGIC or len(data) < 8:
        raise DatasetFormatError("not an FMP1 file")
    (count,) = struct.unpack_from(">I", data, 4)
    pos = 8
    out = []
    for i in range(count):
        if pos + 2 > len(data):
            raise DatasetFormatError(f"packet {i}: truncated length prefix")
        (n,) = struct.unpack_from(">H", data, pos)
        pos += 2
        if pos + n > len(data):
            raise DatasetFormatError(f"packet {i}: truncated payload")
        out.append(data[pos:pos + n])
        pos += n
    if pos != len(data):
        raise DatasetFormatError(f"{len(data) - pos} trailing bytes")
    return out


def write_pcap(packets) -> bytes:
    """Classic pcap, Ethernet link type, every timestamp zero."""
    parts = [_PCAP_GLOBAL.pack(PCAP_MAGIC, 2, 4, 0, 0, PCAP_SNAPLEN, LINKTYPE_ETHERNET)]
    for p in packets:
        parts.append(_PCAP_RECORD.pack(0, 0, len(p), len(p)))
        parts.append(p)
    return b"".join(parts)


def read_pcap(data: bytes) -> list[bytes]:
    if len(data) < _PCAP_GLOBAL.size:
        raise DatasetFormatError("truncated pcap header")
    (magic,) = struct.unpack_from("<I", data)
    if magic == PCAP_MAGIC:
        order = "<"
    elif magic == struct.unpack(">I", struct.pack("<I", PCAP_MAGIC))[0]:
        order = ">"
    else:
        raise DatasetFormatError("not a classic pcap file")
    linktype = struct.unpack_from(order + "I", data, 20)[0]
    if linktype != LINKTYPE_ETHERNET:
        raise DatasetFormatError(f"link type {linktype} is not Ethernet")
    rec = struct.Struct(order + "IIII")
    pos = _PCAP_GLOBAL.size
    out = []
    while pos < len(data):
        if pos + rec.size > len(data):
            raise DatasetFormatError(f"packet {len(out)}: truncated record header")
        _sec, _usec, incl, _orig = rec.unpack_from(data, pos)
        pos += rec.size
        if pos + incl > len(data):
            raise DatasetFormatError(f"packet {len(out)}: truncated payload")
        out.append(data[pos:pos + incl])
        pos += incl
    return out


def read_dataset(data: bytes) -> list[bytes]:
    """Read FMP1 or pcap, chosen by magic; every packet is length-checked."""
    if data[:4] == FMP1_MAGIC:
        packets = read_fmp1(data)
    else:
        packets = read_pcap(data)
    return [check_packet(p, i) for i, p in enumerate(packets)]


def write_dataset(packets, fmt: str) -> bytes:
    if fmt == "fmp1":
        return write_fmp1(packets)
    if fmt == "pcap":
        return write_pcap(packets)
    raise ValueError(f"unknown dataset format {fmt!r}")
