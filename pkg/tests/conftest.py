import random

import pytest

from fmdelta.pktgen import DatasetSpec, generate


def mixed_packets(seed: int, n: int) -> list[bytes]:
    """Realistic frames plus perturbed and odd-length variants."""
    rng = random.Random(seed)
    frames = generate(DatasetSpec(max(2, n + n % 2), seed, "ordered"))
    out = []
    for i in range(n):
        base = bytearray(frames[i])
        roll = rng.random()
        if roll < 0.2:
            base[rng.randrange(len(base))] ^= 0xFF
        elif roll < 0.3:
            base = bytearray(rng.randbytes(rng.randint(1, 200)))
        elif roll < 0.4 and i:
            base = bytearray(out[-1])
        out.append(bytes(base))
    return out


@pytest.fixture(scope="session")
def small_dataset():
    return generate(DatasetSpec(200, 11, "ordered"))
