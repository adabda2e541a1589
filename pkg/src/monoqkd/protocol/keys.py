"""K-bit XOR distillation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .parties import InsufficientBits


@dataclass(frozen=True)
class KeyBlock:
    round_ids: tuple[int, ...]
    shared_bits: tuple[int, ...]
    key_bit: int

    def __post_init__(self):
        if len(self.round_ids) != len(self.shared_bits):
            raise ValueError("one round id per shared bit")
        parity = 0
        for b in self.shared_bits:
            parity ^= b
        if parity != self.key_bit:
            raise ValueError("key_bit must be the XOR of shared_bits")

    def to_dict(self):
        return {"round_ids": list(self.round_ids), "shared_bits": list(self.shared_bits), "key_bit": self.key_bit}


def block_parities(bits, K: int) -> np.ndarray:
    """XOR of each consecutive K-bit block; the trailing partial block is dropped."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = len(bits) // K
    return np.bitwise_xor.reduce(bits[: n * K].reshape(n, K), axis=1) if n else np.zeros(0, np.uint8)


def distill_key(bits, K: int, round_ids=None) -> list[KeyBlock]:
    """Split ``bits`` into disjoint consecutive K-bit blocks, one key bit each."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) < K:
        raise InsufficientBits(f"{len(bits)} decoded bits, need at least K={K}")
    ids = np.arange(len(bits)) if round_ids is None else np.asarray(round_ids)
    keys = block_parities(bits, K)
    n = len(keys)
    id_rows = ids[: n * K].reshape(n, K).tolist()
    bit_rows = bits[: n * K].reshape(n, K).tolist()
    return [KeyBlock(tuple(i), tuple(b), int(k)) for i, b, k in zip(id_rows, bit_rows, keys.tolist())]
