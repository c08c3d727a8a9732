"""2-bit k-mer packing, reverse complement and canonical form.

Bases are packed A=0, C=1, G=2, T=3 with the first base of the k-mer in the
most significant bit pair, so numeric order on packed values equals lexical
order on the strings.  Reads are carried around as ``ReadSet`` objects: one
flat ``uint8`` array of base codes plus an offsets array.  Code 4 marks any
character outside ACGT.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numba as nb
import numpy as np

MIN_K = 15
MAX_K = 31
BAD = 4  # code for non-ACGT characters

BASES = "ACGT"

_CODE = np.full(256, BAD, dtype=np.uint8)
for _i, _b in enumerate(BASES):
    _CODE[ord(_b)] = _i
    _CODE[ord(_b.lower())] = _i
_LETTER = np.frombuffer(b"ACGTN", dtype=np.uint8)


class NonACGT(ValueError):
    """Raised when a character outside A/C/G/T is encoded."""

    def __init__(self, base: str):
        super().__init__(f"non-ACGT base {base!r}")
        self.base = base


def check_k(k: int, lo: int = 1) -> None:
    """Odd k up to 31.  Assembly runs use ``lo=MIN_K``; smaller k is allowed
    for hand-sized graphs."""
    if not (lo <= k <= MAX_K) or k % 2 == 0:
        raise ValueError(f"k must be odd and in [{lo}, {MAX_K}], got {k}")


def encode_base(b: str) -> int:
    code = int(_CODE[ord(b)]) if len(b) == 1 and ord(b) < 256 else BAD
    if code == BAD:
        raise NonACGT(b)
    return code


def encode(seq: str | bytes) -> np.ndarray:
    """Base codes for a whole sequence; non-ACGT positions get ``BAD``."""
    if isinstance(seq, str):
        seq = seq.encode("ascii", errors="replace")
    return _CODE[np.frombuffer(seq, dtype=np.uint8)]


def decode(codes: np.ndarray) -> str:
    return _LETTER[np.minimum(codes, BAD)].tobytes().decode("ascii")


@dataclass(frozen=True, order=True)
class PackedKmer:
    bits: int
    k: int

    def __post_init__(self):
        if self.bits >> (2 * self.k):
            raise ValueError("bits set above position 2k")

    @classmethod
    def from_str(cls, s: str) -> "PackedKmer":
        return cls(pack(s), len(s))

    def __str__(self) -> str:
        return unpack(self.bits, self.k)


class CanonicalKmer(NamedTuple):
    kmer: PackedKmer
    flipped: bool


def pack(s: str) -> int:
    bits = 0
    for ch in s:
        bits = (bits << 2) | encode_base(ch)
    return bits


def unpack(bits: int, k: int) -> str:
    return "".join(BASES[(bits >> (2 * (k - 1 - i))) & 3] for i in range(k))


@nb.njit(cache=True, inline="always")
def revcomp_bits(x, k):
    """Reverse complement of a packed k-mer held in a uint64."""
    x = ~x
    x = ((x >> np.uint64(2)) & np.uint64(0x3333333333333333)) | (
        (x & np.uint64(0x3333333333333333)) << np.uint64(2))
    x = ((x >> np.uint64(4)) & np.uint64(0x0F0F0F0F0F0F0F0F)) | (
        (x & np.uint64(0x0F0F0F0F0F0F0F0F)) << np.uint64(4))
    x = ((x >> np.uint64(8)) & np.uint64(0x00FF00FF00FF00FF)) | (
        (x & np.uint64(0x00FF00FF00FF00FF)) << np.uint64(8))
    x = ((x >> np.uint64(16)) & np.uint64(0x0000FFFF0000FFFF)) | (
        (x & np.uint64(0x0000FFFF0000FFFF)) << np.uint64(16))
    x = (x >> np.uint64(32)) | (x << np.uint64(32))
    return x >> np.uint64(64 - 2 * k)


def reverse_complement(km: PackedKmer) -> PackedKmer:
    return PackedKmer(int(revcomp_bits(np.uint64(km.bits), km.k)), km.k)


def reverse_complement_str(s: str) -> str:
    return s.translate(_RC_TABLE)[::-1]


_RC_TABLE = str.maketrans("ACGTacgtN", "TGCAtgcaN")


def canonicalize(km: PackedKmer) -> CanonicalKmer:
    rc = reverse_complement(km)
    if rc.bits < km.bits:
        return CanonicalKmer(rc, True)
    return CanonicalKmer(km, False)


@nb.njit(cache=True, nogil=True)
def window_kmers(codes, start, end, k, out_can, out_flip, out_ok):
    """Canonical k-mers of every window of ``codes[start:end]``.

    Fills ``out_*[i]`` for window ``i`` (0-based from ``start``).  Windows
    overlapping a non-ACGT code get ``out_ok[i] = False``.  Returns the number
    of windows.
    """
    n = end - start - k + 1
    if n <= 0:
        return 0
    mask = (np.uint64(1) << np.uint64(2 * k)) - np.uint64(1)
    shift = np.uint64(2 * (k - 1))
    fw = np.uint64(0)
    rc = np.uint64(0)
    run = 0
    for j in range(start, end):
        c = codes[j]
        i = j - start - k + 1
        if c > 3:
            run = 0
            fw = np.uint64(0)
            rc = np.uint64(0)
        else:
            run += 1
            fw = ((fw << np.uint64(2)) | np.uint64(c)) & mask
            rc = (rc >> np.uint64(2)) | (np.uint64(3 - c) << shift)
        if i >= 0:
            if run >= k:
                out_ok[i] = True
                if rc < fw:
                    out_can[i] = rc
                    out_flip[i] = True
                else:
                    out_can[i] = fw
                    out_flip[i] = False
            else:
                out_ok[i] = False
    return n


def kmer_windows(read: str, k: int) -> list[tuple[int, CanonicalKmer]]:
    """``(position, canonical k-mer)`` for each window free of non-ACGT bases."""
    codes = encode(read)
    n = max(len(codes) - k + 1, 0)
    can = np.zeros(n, dtype=np.uint64)
    flip = np.zeros(n, dtype=np.bool_)
    ok = np.zeros(n, dtype=np.bool_)
    window_kmers(codes, 0, len(codes), k, can, flip, ok)
    return [(i, CanonicalKmer(PackedKmer(int(can[i]), k), bool(flip[i])))
            for i in range(n) if ok[i]]


class ReadSet:
    """Reads as one flat code array plus offsets (``offsets[i]:offsets[i+1]``)."""

    def __init__(self, codes: np.ndarray, offsets: np.ndarray):
        self.codes = np.ascontiguousarray(codes, dtype=np.uint8)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)

    @classmethod
    def from_strings(cls, seqs: Iterable[str | bytes]) -> "ReadSet":
        parts = []
        lengths = []
        for s in seqs:
            c = encode(s)
            parts.append(c)
            lengths.append(len(c))
        offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        codes = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)
        return cls(codes, offsets)

    @classmethod
    def from_fixed(cls, block: np.ndarray) -> "ReadSet":
        """Wrap an ``(n_reads, read_len)`` code matrix."""
        n, r = block.shape
        return cls(block.reshape(-1), np.arange(n + 1, dtype=np.int64) * r)

    @classmethod
    def concat(cls, sets: Iterable["ReadSet"]) -> "ReadSet":
        sets = list(sets)
        if not sets:
            return cls(np.zeros(0, np.uint8), np.zeros(1, np.int64))
        codes = np.concatenate([s.codes for s in sets])
        offs = [sets[0].offsets]
        base = sets[0].offsets[-1]
        for s in sets[1:]:
            offs.append(s.offsets[1:] + base)
            base += s.offsets[-1]
        return cls(codes, np.concatenate(offs))

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __getitem__(self, i: int) -> str:
        return decode(self.codes[self.offsets[i]:self.offsets[i + 1]])

    def __iter__(self) -> Iterator[str]:
        for i in range(len(self)):
            yield self[i]

    @property
    def total_bases(self) -> int:
        return int(self.offsets[-1])

    def shards(self, n: int) -> list[tuple[int, int]]:
        """Split read indices into ``n`` contiguous ``[lo, hi)`` ranges."""
        edges = np.linspace(0, len(self), max(n, 1) + 1).astype(np.int64)
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
