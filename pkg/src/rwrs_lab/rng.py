"""Determinism primitives: stateless hashing, seed derivation, coordinate packing.

Everything here is a pure function of its integer inputs, so any value in the
pipeline can be regenerated from (master seed, coordinates/indices) without
storing state.  All 64-bit arithmetic wraps modulo 2**64.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_MASK32 = 0xFFFFFFFF

# SplitMix64 finalizer constants.
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_FIELD_SALT = 0xD6E8FEB86659FD93

_U = np.uint64


def mix64(z: int) -> int:
    """SplitMix64 avalanche finalizer on a Python int (wraps mod 2**64)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer over a uint64 array."""
    z = z + _U(_GOLDEN)
    z = (z ^ (z >> _U(30))) * _U(_MIX_A)
    z = (z ^ (z >> _U(27))) * _U(_MIX_B)
    return z ^ (z >> _U(31))


def derive_seed(master: int, *parts: int | str) -> int:
    """Derive a 64-bit stream seed from a master seed and a label path.

    Stable across processes and platforms (no salted hashing), so replica
    seeds do not depend on scheduling or worker count.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master & _MASK64).to_bytes(8, "little"))
    for p in parts:
        if isinstance(p, str):
            h.update(b"s")
            h.update(p.encode("utf-8"))
        else:
            h.update(b"i")
            h.update(int(p & _MASK64).to_bytes(8, "little", signed=False))
        h.update(b"/")
    return int.from_bytes(h.digest(), "little")


def hash_coords(master_seed: int, packed: np.ndarray) -> np.ndarray:
    """Hash packed lattice coordinates under a master seed to uint64.

    The per-site hash is what makes the scenery a pure function of
    (master seed, site): two rounds of mixing, one to fold in the seed and
    one to decorrelate neighbouring coordinates.
    """
    seeded = _U(mix64(master_seed ^ _FIELD_SALT))
    z = packed.astype(np.uint64, copy=False) * _U(_GOLDEN)
    return mix64_array(z ^ seeded)


def uniform_from_bits(bits: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to floats in the open interval (0, 1).

    Uses the top 53 bits, offset by half an ulp so 0 and 1 are unreachable
    (inverse-CDF transforms need the open interval).
    """
    return ((bits >> _U(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def pack2d(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pack signed 2-D lattice coordinates into uint64 (two 32-bit halves).

    Valid for |coordinate| < 2**31; walk horizons at desk scale stay far
    inside that range.
    """
    ux = x.astype(np.int64).astype(np.uint64) & _U(_MASK32)
    uy = y.astype(np.int64).astype(np.uint64) & _U(_MASK32)
    return (ux << _U(32)) | uy


def unpack2d(packed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack2d`."""
    x = (packed >> _U(32)).astype(np.uint32).view(np.int32).astype(np.int64)
    y = (packed & _U(_MASK32)).astype(np.uint32).view(np.int32).astype(np.int64)
    return x, y


def pack1d(x: np.ndarray) -> np.ndarray:
    """Pack signed 1-D coordinates into uint64 (full-width two's complement)."""
    return x.astype(np.int64).view(np.uint64)


def unpack1d(packed: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pack1d`."""
    return packed.astype(np.uint64).view(np.int64)


def pack_site(site) -> int:
    """Pack a single site given as an int (1-D) or an (x, y) pair (2-D)."""
    if isinstance(site, (int, np.integer)):
        return int(pack1d(np.asarray([site]))[0])
    x, y = site
    return int(pack2d(np.asarray([x]), np.asarray([y]))[0])
