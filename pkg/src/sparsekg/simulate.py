"""Random genomes and shotgun reads with a position-dependent substitution
error rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kmer import ReadSet, decode, encode, reverse_complement_str

_CHUNK = 100_000


@dataclass(frozen=True)
class ErrorProfile:
    rate_5p: float = 0.0
    rate_3p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rate_5p <= 1.0 or not 0.0 <= self.rate_3p <= 1.0:
            raise ValueError("error rates must lie in [0, 1]")

    def rates(self, read_len: int) -> np.ndarray:
        """Per-position rate, linear from the 5' to the 3' end."""
        if read_len == 1:
            return np.array([self.rate_5p])
        i = np.arange(read_len)
        return self.rate_5p + (self.rate_3p - self.rate_5p) * i / (read_len - 1)

    @property
    def error_free(self) -> bool:
        return self.rate_5p == 0.0 and self.rate_3p == 0.0


def random_genome_codes(length: int, seed: int) -> np.ndarray:
    if length < 1:
        raise ValueError("genome length must be >= 1")
    return np.random.default_rng(seed).integers(0, 4, size=length, dtype=np.uint8)


def random_genome(length: int, seed: int) -> str:
    return decode(random_genome_codes(length, seed))


@dataclass
class SimulatedReads:
    reads: ReadSet
    starts: np.ndarray  # genome position of the leftmost read base
    forward: np.ndarray  # True for reads taken from the given strand
    n_errors: int
    errors_by_position: np.ndarray

    def __len__(self) -> int:
        return len(self.reads)


def simulate_reads(genome: str | np.ndarray, read_len: int, n_reads: int,
                   profile: ErrorProfile = ErrorProfile(), seed: int = 0) -> SimulatedReads:
    """Uniform start, uniform strand; read position ``i`` is substituted by a
    different uniformly chosen base with probability ``profile.rates(r)[i]``."""
    g = genome if isinstance(genome, np.ndarray) else encode(genome)
    if read_len < 1 or read_len > len(g):
        raise ValueError("read length must be in [1, genome length]")
    rng = np.random.default_rng(seed)
    rates = profile.rates(read_len)
    block = np.empty((n_reads, read_len), dtype=np.uint8)
    starts = np.empty(n_reads, dtype=np.int64)
    forward = np.empty(n_reads, dtype=np.bool_)
    per_pos = np.zeros(read_len, dtype=np.int64)
    cols = np.arange(read_len)
    for lo in range(0, n_reads, _CHUNK):
        hi = min(n_reads, lo + _CHUNK)
        m = hi - lo
        st = rng.integers(0, len(g) - read_len + 1, size=m)
        fw = rng.random(m) < 0.5
        seqs = g[st[:, None] + cols[None, :]]
        rev = ~fw
        seqs[rev] = 3 - seqs[rev, ::-1]
        if not profile.error_free:
            hit = rng.random((m, read_len)) < rates[None, :]
            shift = rng.integers(1, 4, size=(m, read_len), dtype=np.uint8)
            seqs = np.where(hit, (seqs + shift) & 3, seqs)
            per_pos += hit.sum(axis=0)
        block[lo:hi] = seqs
        starts[lo:hi] = st
        forward[lo:hi] = fw
    return SimulatedReads(ReadSet.from_fixed(block), starts, forward,
                          int(per_pos.sum()), per_pos)


def tiling_reads(genome: str, read_len: int, step: int = 1) -> ReadSet:
    """Every ``step``-th window of the genome, alternating strands; gives full
    error-free coverage of small genomes."""
    out = []
    for n, i in enumerate(range(0, len(genome) - read_len + 1, step)):
        s = genome[i:i + read_len]
        out.append(s if n % 2 == 0 else reverse_complement_str(s))
    last = genome[len(genome) - read_len:]
    out.append(last)
    return ReadSet.from_strings(out)
