"""Synthetic CCM/BFD keepalive datasets.

Half of every dataset is CCM, half BFD.  Per packet: the VLAN tag count is
drawn from ``vlan_choices`` and each tag's TCI is uniform over 16 bits; the
source MAC comes from a fixed pool, the destination MAC is unconstrained,
and BFD source/destination IPv4 addresses are uniform.  CCMs get a fresh
random 48-byte MEG ID for every ``meg_group_size`` consecutive packets.

Randomness comes from :class:`random.Random` (MT19937) seeded with
``DatasetSpec.seed``.  Only ``getrandbits``, ``randrange`` and ``shuffle``
are used, all of which CPython keeps stable for a given seed, so a spec
always maps to the same bytes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .frames import BfdFrame, CcmFrame, FrameParseError, MEG_ID_LEN, parse_frame

MODES = ("ordered", "random")


@dataclass(frozen=True)
class DatasetSpec:
    total_packets: int = 100_000
    seed: int = 1
    mode: str = "ordered"
    mac_pool_size: int = 32
    meg_group_size: int = 3
    vlan_choices: tuple[int, ...] = (0, 1, 2)
    # CCMs of one MEG share a tag count (each packet's count stays uniform).
    group_vlan_count: bool = True
    # Draw sequence numbers, MEP IDs, discriminators, timers and flags at random
    # instead of holding them at fixed protocol-typical values.
    randomize_unspecified: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vlan_choices", tuple(sorted(set(self.vlan_choices))))
        if self.total_packets < 2 or self.total_packets % 2:
            raise ValueError(f"total_packets must be an even number >= 2, got {self.total_packets}")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mac_pool_size < 1 or self.meg_group_size < 1:
            raise ValueError("mac_pool_size and meg_group_size must be positive")
        if not self.vlan_choices or not set(self.vlan_choices) <= {0, 1, 2}:
            raise ValueError("vlan_choices must be a nonempty subset of {0, 1, 2}")


def _mac(rng: random.Random) -> bytes:
    return rng.getrandbits(48).to_bytes(6, "big")


def _tags(rng: random.Random, count: int) -> tuple[int, ...]:
    return tuple(rng.getrandbits(16) for _ in range(count))


def synthesize(spec: DatasetSpec) -> list[bytes]:
    """Frames in generation order: all CCMs (MEG groups consecutive), then all BFDs."""
    rng = random.Random(spec.seed)
    # source addresses are unicast: clear the I/G bit
    pool = [bytes([m[0] & 0xFE]) + m[1:] for m in (_mac(rng) for _ in range(spec.mac_pool_size))]
    half = spec.total_packets // 2
    extra = spec.randomize_unspecified
    out = []
    meg_id = b""
    group_tags = 0
    for i in range(half):
        if i % spec.meg_group_size == 0:
            meg_id = rng.getrandbits(8 * MEG_ID_LEN).to_bytes(MEG_ID_LEN, "big")
            group_tags = spec.vlan_choices[rng.randrange(len(spec.vlan_choices))]
        ntags = group_tags if spec.group_vlan_count else spec.vlan_choices[rng.randrange(len(spec.vlan_choices))]
        frame = CcmFrame(_mac(rng), pool[rng.randrange(len(pool))], _tags(rng, ntags), meg_id)
        if extra:
            frame = CcmFrame(frame.dst_mac, frame.src_mac, frame.vlan_tags, meg_id,
                             md_level=rng.getrandbits(3), flags=rng.getrandbits(8),
                             sequence=rng.getrandbits(32), mep_id=rng.getrandbits(13))
        out.append(frame.to_bytes())
    for _ in range(half):
        ntags = spec.vlan_choices[rng.randrange(len(spec.vlan_choices))]
        dst, src, tags = _mac(rng), pool[rng.randrange(len(pool))], _tags(rng, ntags)
        sip, dip = rng.getrandbits(32).to_bytes(4, "big"), rng.getrandbits(32).to_bytes(4, "big")
        if extra:
            frame = BfdFrame(dst, src, tags, sip, dip, src_port=rng.randrange(49152, 65536),
                             state=rng.getrandbits(2), diag=rng.getrandbits(5),
                             flags=rng.getrandbits(6) & 0x3E, detect_mult=rng.randrange(1, 256),
                             my_discriminator=rng.randrange(1, 1 << 32),
                             your_discriminator=rng.getrandbits(32),
                             desired_min_tx=rng.getrandbits(32), required_min_rx=rng.getrandbits(32),
                             required_min_echo_rx=rng.getrandbits(32))
        else:
            frame = BfdFrame(dst, src, tags, sip, dip)
        out.append(frame.to_bytes())
    if spec.mode == "random":
        rng.shuffle(out)
    return out


def generate(spec: DatasetSpec) -> list[bytes]:
    packets = synthesize(spec)
    if spec.mode == "ordered":
        packets = arrange_ordered(packets)
    return packets


def _order_key(packet: bytes, index: int):
    try:
        frame = parse_frame(packet)
    except FrameParseError as exc:
        raise FrameParseError(exc.layer, exc.detail, index) from None
    if isinstance(frame, CcmFrame):
        return (0, len(packet), frame.meg_id, frame.src_mac)
    return (1, len(packet), b"", frame.src_mac)


def arrange_ordered(packets: list[bytes]) -> list[bytes]:
    """Sort by (frame type, length), then MEG ID, then source MAC.

    Equal lengths line fields up word for word; equal MEG IDs put the 48-byte
    field next to a copy of itself.  The sort is stable, so arranging an
    arranged list is a no-op.
    """
    keys = [_order_key(p, i) for i, p in enumerate(packets)]
    order = sorted(range(len(packets)), key=keys.__getitem__)
    return [packets[i] for i in order]
