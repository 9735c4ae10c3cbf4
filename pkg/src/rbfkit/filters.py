"""Seeded Bloom filters with editable bit vectors and a binary file format.

The filter is an m-bit vector driven by k deterministic position functions.
Bits are only ever set by insertion, so a key inserted and never cleared can
not test negative; clearing individual bits afterwards is what turns a plain
Bloom filter into a retouched one (see :mod:`rbfkit.retouch`).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

MAGIC = b"RBF1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBQIQ")  # magic | version | m | k | seed
HEADER_SIZE = _HEADER.size

_SCAN_CHUNK = 1 << 18


class InvalidParamsError(ValueError):
    """Filter parameters violate m >= 1, 1 <= k <= m, or the seed range."""


class ParamsMismatchError(ValueError):
    """Two filters with different (m, k, seed) cannot be combined."""


class FilterFormatError(ValueError):
    """Serialized filter bytes are not well formed."""


class BadMagicError(FilterFormatError):
    pass


class UnsupportedVersionError(FilterFormatError):
    pass


class TruncatedPayloadError(FilterFormatError):
    pass


def mix64(x: int) -> int:
    """Finalizing 64-bit mixer (splitmix64 style); bijective on [0, 2^64)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & MASK64
    return x ^ (x >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into a 64-bit seed; order-sensitive and deterministic."""
    acc = 0x243F6A8885A308D3
    for part in parts:
        acc = mix64(acc ^ mix64(part))
    return acc


def string_key(text: str | bytes) -> int:
    """Map a string to a 64-bit key at the boundary; keys are ints internally."""
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def _mix64_array(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX_A)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX_B)
    x ^= x >> np.uint64(31)
    return x


class HashFamily:
    """k position functions over [0, m), fully determined by (k, m, seed).

    The default scheme derives one salt per function and runs a 64-bit
    finalizer over the salted key.  The "double" scheme composes every
    position from two base hashes (g_i = h1 + i*h2 mod m), which is cheaper
    and known to preserve the false positive behaviour.
    """

    __slots__ = ("k", "m", "seed", "scheme", "_salts", "_salts_arr")

    def __init__(self, k: int, m: int, seed: int, scheme: str = "independent"):
        if scheme not in ("independent", "double"):
            raise ValueError(f"unknown hash scheme: {scheme!r}")
        self.k = k
        self.m = m
        self.seed = seed
        self.scheme = scheme
        n_salts = 2 if scheme == "double" else k
        self._salts = tuple(
            mix64(seed + (i + 1) * _GOLDEN) for i in range(n_salts)
        )
        self._salts_arr = np.array(self._salts, dtype=np.uint64)

    def positions(self, key: int) -> tuple[int, ...]:
        """The k cell indices for a key; duplicates among the k are allowed."""
        base = (key * _GOLDEN) & MASK64
        if self.scheme == "double":
            h1 = mix64(base + self._salts[0])
            h2 = mix64(base + self._salts[1])
            return tuple(((h1 + i * h2) & MASK64) % self.m for i in range(self.k))
        return tuple(mix64(base + salt) % self.m for salt in self._salts)

    def positions_many(self, keys) -> np.ndarray:
        """Vectorized positions: shape (len(keys), k) of int64 cell indices."""
        keys_u = np.ascontiguousarray(keys, dtype=np.uint64)
        base = keys_u * np.uint64(_GOLDEN)
        m = np.uint64(self.m)
        out = np.empty((keys_u.shape[0], self.k), dtype=np.int64)
        if self.scheme == "double":
            h1 = _mix64_array(base + self._salts_arr[0])
            h2 = _mix64_array(base + self._salts_arr[1])
            for i in range(self.k):
                out[:, i] = ((h1 + np.uint64(i) * h2) % m).astype(np.int64)
        else:
            for i in range(self.k):
                out[:, i] = (_mix64_array(base + self._salts_arr[i]) % m).astype(
                    np.int64
                )
        return out

    def __eq__(self, other):
        if not isinstance(other, HashFamily):
            return NotImplemented
        return (self.k, self.m, self.seed, self.scheme) == (
            other.k,
            other.m,
            other.seed,
            other.scheme,
        )


@dataclass(frozen=True)
class FilterParams:
    """Size m, hash count k and master seed of a filter."""

    m: int
    k: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParamsError(f"m must be >= 1, got {self.m}")
        if self.k < 1:
            raise InvalidParamsError(f"k must be >= 1, got {self.k}")
        if self.k > self.m:
            raise InvalidParamsError(f"k must be <= m, got k={self.k} m={self.m}")
        if not 0 <= self.seed <= MASK64:
            raise InvalidParamsError("seed must fit in 64 bits")


class BloomFilter:
    """m-bit membership filter; mutable, with explicit bit clearing."""

    __slots__ = ("params", "bits", "family")

    def __init__(self, params: FilterParams, scheme: str = "independent"):
        self.params = params
        self.bits = np.zeros(params.m, dtype=bool)
        self.family = HashFamily(params.k, params.m, params.seed, scheme)

    @classmethod
    def from_keys(cls, params: FilterParams, keys, scheme: str = "independent"):
        filt = cls(params, scheme)
        filt.insert_many(keys)
        return filt

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def k(self) -> int:
        return self.params.k

    def popcount(self) -> int:
        return int(self.bits.sum())

    def fill_ratio(self) -> float:
        return self.popcount() / self.params.m

    def positions(self, key: int) -> tuple[int, ...]:
        return self.family.positions(key)

    def positions_many(self, keys) -> np.ndarray:
        return self.family.positions_many(keys)

    def insert(self, key: int) -> None:
        for pos in self.family.positions(key):
            self.bits[pos] = True

    def insert_many(self, keys) -> None:
        keys = np.asarray(keys, dtype=np.uint64)
        if keys.size:
            self.bits[self.family.positions_many(keys).ravel()] = True

    def contains(self, key: int) -> bool:
        bits = self.bits
        return all(bits[pos] for pos in self.family.positions(key))

    def contains_many(self, keys) -> np.ndarray:
        """Boolean membership mask for an array of keys (chunked scan)."""
        keys = np.asarray(keys, dtype=np.uint64)
        out = np.empty(keys.shape[0], dtype=bool)
        for start in range(0, keys.shape[0], _SCAN_CHUNK):
            chunk = keys[start : start + _SCAN_CHUNK]
            pos = self.family.positions_many(chunk)
            out[start : start + _SCAN_CHUNK] = self.bits[pos].all(axis=1)
        return out

    def clear_bit(self, index: int) -> None:
        if not 0 <= index < self.params.m:
            raise IndexError(f"bit index {index} out of range [0, {self.params.m})")
        self.bits[index] = False

    def merge_or(self, other: "BloomFilter") -> "BloomFilter":
        """Bitwise OR of two filters built with identical parameters."""
        if self.params != other.params or self.family.scheme != other.family.scheme:
            raise ParamsMismatchError(
                f"cannot merge {self.params} with {other.params}"
            )
        merged = BloomFilter(self.params, self.family.scheme)
        np.logical_or(self.bits, other.bits, out=merged.bits)
        return merged

    __or__ = merge_or

    def copy(self) -> "BloomFilter":
        dup = BloomFilter(self.params, self.family.scheme)
        dup.bits[:] = self.bits
        return dup

    def __eq__(self, other):
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return self.params == other.params and bool(
            np.array_equal(self.bits, other.bits)
        )

    def to_bytes(self) -> bytes:
        """Serialize: 25-byte header plus ceil(m/8) payload bytes, LSB first."""
        header = _HEADER.pack(
            MAGIC, FORMAT_VERSION, self.params.m, self.params.k, self.params.seed
        )
        payload = np.packbits(self.bits, bitorder="little").tobytes()
        return header + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "BloomFilter":
        if len(data) < HEADER_SIZE:
            if data[:4] != MAGIC and len(data) >= 4:
                raise BadMagicError("bad magic bytes")
            raise TruncatedPayloadError(
                f"need at least {HEADER_SIZE} header bytes, got {len(data)}"
            )
        magic, version, m, k, seed = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic bytes: {magic!r}")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"unsupported format version {version}")
        params = FilterParams(m=m, k=k, seed=seed)
        n_payload = (m + 7) // 8
        payload = data[HEADER_SIZE:]
        if len(payload) < n_payload:
            raise TruncatedPayloadError(
                f"payload holds {len(payload)} bytes, need {n_payload}"
            )
        if len(payload) > n_payload:
            raise FilterFormatError(
                f"{len(payload) - n_payload} trailing bytes after payload"
            )
        filt = cls(params)
        raw = np.frombuffer(payload, dtype=np.uint8)
        filt.bits[:] = np.unpackbits(raw, count=m, bitorder="little").astype(bool)
        return filt

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BloomFilter":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def new_filter(m: int, k: int, seed: int = 0) -> BloomFilter:
    """Convenience constructor from bare parameters."""
    return BloomFilter(FilterParams(m=m, k=k, seed=seed))
