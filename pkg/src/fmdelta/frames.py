"""CCM and BFD frame layouts: build and parse.

CCM (Y.1731 / 802.1ag) rides directly on Ethernet (EtherType 0x8902).  BFD
control packets (RFC 5880) ride on UDP port 3784 over IPv4.  Frames carry
no FCS.  Either may carry up to two 802.1Q tags.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

ETH_P_8021Q = 0x8100
ETH_P_CFM = 0x8902
ETH_P_IPV4 = 0x0800
IPPROTO_UDP = 17
BFD_CONTROL_PORT = 3784

CFM_OPCODE_CCM = 1
CCM_FIRST_TLV_OFFSET = 70
MEG_ID_LEN = 48
BFD_LEN = 24

_ETH = struct.Struct(">6s6s")
_TAG = struct.Struct(">HH")
_CCM = struct.Struct(">BBBBIH48s16sB")
_IPV4 = struct.Struct(">BBHHHBBH4s4s")
_UDP = struct.Struct(">HHHH")
_BFD = struct.Struct(">BBBBIIIII")

CCM_BASE_LEN = _ETH.size + 2 + _CCM.size
BFD_BASE_LEN = _ETH.size + 2 + _IPV4.size + _UDP.size + _BFD.size
MAX_VLAN_TAGS = 2


class FrameParseError(ValueError):
    def __init__(self, layer: str, message: str, index: int | None = None):
        self.layer = layer
        self.index = index
        self.detail = message
        where = "" if index is None else f"packet {index}: "
        super().__init__(f"{where}{layer}: {message}")


def ipv4_checksum(header: bytes) -> int:
    total = sum(struct.unpack(f">{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class CcmFrame:
    dst_mac: bytes
    src_mac: bytes
    vlan_tags: tuple[int, ...]   # 16-bit TCI values, outermost first
    meg_id: bytes
    md_level: int = 5
    version: int = 0
    flags: int = 0x04            # RDI clear, period code 4 (1 s)
    sequence: int = 0
    mep_id: int = 1
    counters: bytes = bytes(16)  # TxFCf, RxFCb, TxFCb, reserved

    def to_bytes(self) -> bytes:
        return (_ethernet(self.dst_mac, self.src_mac, self.vlan_tags, ETH_P_CFM)
                + _CCM.pack((self.md_level << 5) | self.version, CFM_OPCODE_CCM, self.flags,
                            CCM_FIRST_TLV_OFFSET, self.sequence, self.mep_id, self.meg_id,
                            self.counters, 0))


@dataclass(frozen=True)
class BfdFrame:
    dst_mac: bytes
    src_mac: bytes
    vlan_tags: tuple[int, ...]
    src_ip: bytes
    dst_ip: bytes
    src_port: int = 49152
    ttl: int = 255
    tos: int = 0xC0
    ident: int = 0
    state: int = 3               # Up
    diag: int = 0
    flags: int = 0               # P F C A D M bits
    detect_mult: int = 3
    my_discriminator: int = 1
    your_discriminator: int = 1
    desired_min_tx: int = 1_000_000
    required_min_rx: int = 1_000_000
    required_min_echo_rx: int = 0

    def to_bytes(self) -> bytes:
        bfd = _BFD.pack((1 << 5) | self.diag, (self.state << 6) | self.flags, self.detect_mult,
                        BFD_LEN, self.my_discriminator, self.your_discriminator,
                        self.desired_min_tx, self.required_min_rx, self.required_min_echo_rx)
        udp = _UDP.pack(self.src_port, BFD_CONTROL_PORT, _UDP.size + len(bfd), 0)
        total = _IPV4.size + len(udp) + len(bfd)
        ip = bytearray(_IPV4.pack(0x45, self.tos, total, self.ident, 0, self.ttl, IPPROTO_UDP, 0,
                                  self.src_ip, self.dst_ip))
        struct.pack_into(">H", ip, 10, ipv4_checksum(bytes(ip)))
        return _ethernet(self.dst_mac, self.src_mac, self.vlan_tags, ETH_P_IPV4) + bytes(ip) + udp + bfd


def _ethernet(dst: bytes, src: bytes, tags, ethertype: int) -> bytes:
    head = _ETH.pack(dst, src)
    for tci in tags:
        head += _TAG.pack(ETH_P_8021Q, tci)
    return head + struct.pack(">H", ethertype)


def parse_frame(data: bytes) -> CcmFrame | BfdFrame:
    """Parse a stored frame back into its structured form."""
    data = bytes(data)
    if len(data) < _ETH.size + 2:
        raise FrameParseError("ethernet", f"frame too short ({len(data)} bytes)")
    dst, src = _ETH.unpack_from(data)
    pos = _ETH.size
    tags = []
    (ethertype,) = struct.unpack_from(">H", data, pos)
    while ethertype == ETH_P_8021Q:
        if len(tags) == MAX_VLAN_TAGS:
            raise FrameParseError("vlan", "more than two VLAN tags")
        if pos + _TAG.size + 2 > len(data):
            raise FrameParseError("vlan", "truncated tag")
        tags.append(struct.unpack_from(">H", data, pos + 2)[0])
        pos += _TAG.size
        (ethertype,) = struct.unpack_from(">H", data, pos)
    pos += 2
    if ethertype == ETH_P_CFM:
        return _parse_ccm(data, pos, dst, src, tuple(tags))
    if ethertype == ETH_P_IPV4:
        return _parse_bfd(data, pos, dst, src, tuple(tags))
    raise FrameParseError("ethernet", f"unknown EtherType 0x{ethertype:04x}")


def _parse_ccm(data, pos, dst, src, tags) -> CcmFrame:
    if len(data) - pos != _CCM.size:
        raise FrameParseError("cfm", f"CCM PDU is {len(data) - pos} bytes, expected {_CCM.size}")
    lv, opcode, flags, tlv_offset, seq, mep, meg, counters, end_tlv = _CCM.unpack_from(data, pos)
    if opcode != CFM_OPCODE_CCM:
        raise FrameParseError("cfm", f"opcode {opcode} is not CCM")
    if tlv_offset != CCM_FIRST_TLV_OFFSET:
        raise FrameParseError("cfm", f"first TLV offset {tlv_offset}")
    if end_tlv != 0:
        raise FrameParseError("cfm", "missing end TLV")
    return CcmFrame(dst, src, tags, meg, lv >> 5, lv & 0x1F, flags, seq, mep, counters)


def _parse_bfd(data, pos, dst, src, tags) -> BfdFrame:
    if len(data) - pos < _IPV4.size:
        raise FrameParseError("ipv4", "truncated header")
    header = data[pos:pos + _IPV4.size]
    ver_ihl, tos, total, ident, frag, ttl, proto, _csum, sip, dip = _IPV4.unpack(header)
    if ver_ihl != 0x45:
        raise FrameParseError("ipv4", f"version/IHL 0x{ver_ihl:02x} unsupported")
    if ipv4_checksum(header) != 0:
        raise FrameParseError("ipv4", "bad header checksum")
    if total != len(data) - pos:
        raise FrameParseError("ipv4", f"total length {total} != {len(data) - pos}")
    if frag != 0:
        raise FrameParseError("ipv4", "fragmented datagram")
    if proto != IPPROTO_UDP:
        raise FrameParseError("ipv4", f"protocol {proto} is not UDP")
    pos += _IPV4.size
    if len(data) - pos < _UDP.size:
        raise FrameParseError("udp", "truncated header")
    sport, dport, ulen, _ucsum = _UDP.unpack_from(data, pos)
    if dport != BFD_CONTROL_PORT:
        raise FrameParseError("udp", f"destination port {dport} is not BFD control")
    if ulen != len(data) - pos:
        raise FrameParseError("udp", f"length {ulen} != {len(data) - pos}")
    pos += _UDP.size
    if len(data) - pos != BFD_LEN:
        raise FrameParseError("bfd", f"control packet is {len(data) - pos} bytes, expected {BFD_LEN}")
    vd, sf, mult, blen, my, your, tx, rx, echo = _BFD.unpack_from(data, pos)
    if vd >> 5 != 1:
        raise FrameParseError("bfd", f"version {vd >> 5}")
    if blen != BFD_LEN:
        raise FrameParseError("bfd", f"length field {blen}")
    return BfdFrame(dst, src, tags, sip, dip, sport, ttl, tos, ident, sf >> 6, vd & 0x1F, sf & 0x3F,
                    mult, my, your, tx, rx, echo)
