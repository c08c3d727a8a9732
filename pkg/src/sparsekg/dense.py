"""Dense de Bruijn graph used as a reference assembler and memory baseline.

Every canonical k-mer of the reads is a node.  A node carries eight edge bits:
the low nibble marks which bases were seen before the canonical k-mer, the high
nibble which bases were seen after it.  Adjacencies observed on a flipped k-mer
are translated into the canonical frame before being recorded.
"""

from __future__ import annotations

import logging
import math

import numba as nb
import numpy as np

from .graph import EMPTY, MAX_LOAD, _rehash, table_find, table_insert
from .kmer import (BASES, ReadSet, check_k, decode, pack, reverse_complement_str,
                   revcomp_bits, unpack)
from .pipeline import Contig

log = logging.getLogger(__name__)

NODE_RECORD_BITS = 64 + 8  # stored key word plus edge byte; coverage excluded
_COV_MAX = np.uint32(0xFFFFFFFF)


@nb.njit(cache=True)
def _count_reads(codes, offsets, lo, hi, k, keys, mask, edges, cov, size, limit):
    """Adds reads ``lo..hi``; stops early before the table passes ``limit``
    occupied slots and returns the index of the first unprocessed read."""
    kmask = (np.uint64(1) << np.uint64(2 * k)) - np.uint64(1)
    shift = np.uint64(2 * (k - 1))
    for r in range(lo, hi):
        a, b = offsets[r], offsets[r + 1]
        if size[0] + (b - a) > limit:
            return r
        fw = np.uint64(0)
        rc = np.uint64(0)
        run = 0
        prev = -1
        prev_flip = False
        for j in range(a, b):
            c = codes[j]
            if c > 3:
                run = 0
                prev = -1
                continue
            run += 1
            fw = ((fw << np.uint64(2)) | np.uint64(c)) & kmask
            rc = (rc >> np.uint64(2)) | (np.uint64(3 - c) << shift)
            if run < k:
                continue
            flip = rc < fw
            key = rc if flip else fw
            u = table_insert(keys, key, mask)
            if u >= 0:
                size[0] += 1
            else:
                u = -u - 1
            if cov[u] < _COV_MAX:
                cov[u] += np.uint32(1)
            if prev >= 0:
                first = codes[j - k]  # first base of the previous k-mer
                # previous k-mer gains successor c, this one gains predecessor first
                if prev_flip:
                    edges[prev] |= np.uint8(1 << (3 - c))
                else:
                    edges[prev] |= np.uint8(1 << (4 + c))
                if flip:
                    edges[u] |= np.uint8(1 << (4 + 3 - first))
                else:
                    edges[u] |= np.uint8(1 << first)
            prev = u
            prev_flip = flip
    return hi


@nb.njit(cache=True, inline="always")
def _out_bits(e, o):
    """Bases that may follow the node read in orientation ``o``."""
    if o == 0:
        return (e >> 4) & 15
    lo = e & 15
    # predecessor base p of the canonical k-mer is successor 3-p of its complement
    return ((lo & 1) << 3) | ((lo & 2) << 1) | ((lo & 4) >> 1) | ((lo & 8) >> 3)


@nb.njit(cache=True, inline="always")
def _single_base(bits):
    if bits == 1:
        return 0
    if bits == 2:
        return 1
    if bits == 4:
        return 2
    if bits == 8:
        return 3
    return -1


@nb.njit(cache=True)
def _extend(keys, mask, edges, cov, visited, u, o, k, out, acc):
    kmask = (np.uint64(1) << np.uint64(2 * k)) - np.uint64(1)
    y = keys[u] if o == 0 else revcomp_bits(keys[u], k)
    n = 0
    while True:
        b = _single_base(_out_bits(edges[u], o))
        if b < 0:
            return n
        y = ((y << np.uint64(2)) | np.uint64(b)) & kmask
        r = revcomp_bits(y, k)
        o2 = 1 if r < y else 0
        v = table_find(keys, r if o2 else y, mask)
        if v < 0:
            return n
        # entering v must be its only way in, i.e. v reversed has one exit
        if _single_base(_out_bits(edges[v], 1 - o2)) < 0:
            return n
        out[n] = b
        n += 1
        if visited[v]:
            return n
        visited[v] = True
        acc[0] += cov[v]
        acc[1] += 1
        u = v
        o = o2


@nb.njit(cache=True)
def _unitigs(keys, mask, edges, cov, order, k, out, bounds, covs):
    visited = np.zeros(len(keys), np.bool_)
    right = np.empty(len(order) + 1, np.uint8)
    left = np.empty(len(order) + 1, np.uint8)
    acc = np.zeros(2, np.int64)
    pos = 0
    nc = 0
    for u in order:
        if visited[u]:
            continue
        visited[u] = True
        acc[0] = cov[u]
        acc[1] = 1
        nr = _extend(keys, mask, edges, cov, visited, u, 0, k, right, acc)
        nl = _extend(keys, mask, edges, cov, visited, u, 1, k, left, acc)
        start = pos
        for i in range(nl - 1, -1, -1):
            out[pos] = 3 - left[i]
            pos += 1
        key = keys[u]
        for i in range(k):
            out[pos] = np.uint8((key >> np.uint64(2 * (k - 1 - i))) & np.uint64(3))
            pos += 1
        for i in range(nr):
            out[pos] = right[i]
            pos += 1
        lo, hi = start, pos - 1
        flip = False
        while lo <= hi:
            a, b = out[lo], 3 - out[hi]
            if a != b:
                flip = b < a
                break
            lo += 1
            hi -= 1
        if flip:
            lo, hi = start, pos - 1
            while lo < hi:
                a = out[lo]
                out[lo] = 3 - out[hi]
                out[hi] = 3 - a
                lo += 1
                hi -= 1
            if lo == hi:
                out[lo] = 3 - out[lo]
        bounds[nc + 1] = pos
        covs[nc, 0] = acc[0]
        covs[nc, 1] = acc[1]
        nc += 1
    return nc


class DenseGraph:
    """Every distinct canonical k-mer with edge bits and coverage."""

    def __init__(self, k: int, capacity: int = 1024):
        check_k(k)
        self.k = k
        cap = 1 << max(4, math.ceil(math.log2(max(capacity, 16) / MAX_LOAD)))
        self._alloc(cap)
        self.size = np.zeros(1, np.int64)

    def _alloc(self, cap: int) -> None:
        self.keys = np.full(cap, EMPTY, dtype=np.uint64)
        self.edges = np.zeros(cap, dtype=np.uint8)
        self.cov = np.zeros(cap, dtype=np.uint32)
        self.mask = cap - 1

    def _grow(self) -> None:
        keys, edges, cov = self.keys, self.edges, self.cov
        self._alloc(2 * len(keys))
        _rehash(keys, edges, cov, self.keys, self.edges, self.cov, self.mask,
                np.empty(len(keys), np.int64))

    def add_reads(self, reads: ReadSet) -> None:
        r, n = 0, len(reads)
        while r < n:
            limit = int(MAX_LOAD * len(self.keys))
            r = _count_reads(reads.codes, reads.offsets, r, n, self.k, self.keys,
                             self.mask, self.edges, self.cov, self.size, limit)
            if r < n:
                self._grow()

    def _find(self, kmer: str) -> int:
        bits = pack(kmer)
        rc = int(revcomp_bits(np.uint64(bits), self.k))
        return int(table_find(self.keys, np.uint64(min(bits, rc)), self.mask))

    def __contains__(self, kmer: str) -> bool:
        return self._find(kmer) >= 0

    def coverage(self, kmer: str) -> int:
        u = self._find(kmer)
        return int(self.cov[u]) if u >= 0 else 0

    def successors(self, kmer: str) -> str:
        """Bases observed after ``kmer`` read in the given orientation."""
        u = self._find(kmer)
        if u < 0:
            raise KeyError(kmer)
        bits = pack(kmer)
        o = 1 if int(self.keys[u]) != bits else 0
        m = int(_out_bits(self.edges[u], o))
        return "".join(BASES[b] for b in range(4) if m >> b & 1)

    def predecessors(self, kmer: str) -> str:
        after = self.successors(reverse_complement_str(kmer))
        return "".join(sorted(reverse_complement_str(b) for b in after))

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self.keys != EMPTY)

    def node_count(self) -> int:
        return int(self.size[0])

    def measured_bits(self) -> int:
        return self.node_count() * NODE_RECORD_BITS

    def dump(self) -> str:
        """Same line layout as the sparse dump; each edge is a one-base label
        with count 1 since the dense store keeps presence only."""
        lines = []
        ids = self.live_ids()
        for u in ids[np.argsort(self.keys[ids], kind="stable")]:
            fields = [unpack(int(self.keys[u]), self.k), str(int(self.cov[u]))]
            for side, o in (("L", 1), ("R", 0)):
                m = int(_out_bits(self.edges[u], o))
                fields += [f"{side},{BASES[b]},1" for b in range(4) if m >> b & 1]
            lines.append(" ".join(fields))
        return "\n".join(lines) + ("\n" if lines else "")


def build_dense(reads: ReadSet, k: int) -> DenseGraph:
    graph = DenseGraph(k, capacity=min(reads.total_bases, 1 << 22) or 16)
    graph.add_reads(reads)
    log.info("stage=dense_build nodes=%d bits=%d", graph.node_count(),
             graph.measured_bits())
    return graph


def extract_unitigs(graph: DenseGraph, min_len: int = 0) -> list[Contig]:
    """Maximal non-branching paths, seeded in ascending k-mer order and
    reported in the lexically smaller orientation."""
    ids = graph.live_ids()
    if len(ids) == 0:
        return []
    order = ids[np.argsort(graph.keys[ids], kind="stable")]
    out = np.empty(len(ids) * (graph.k + 1), np.uint8)
    bounds = np.zeros(len(ids) + 1, np.int64)
    covs = np.zeros((len(ids), 2), np.int64)
    nc = _unitigs(graph.keys, graph.mask, graph.edges, graph.cov, order, graph.k,
                  out, bounds, covs)
    contigs = []
    for i in range(nc):
        a, b = bounds[i], bounds[i + 1]
        if b - a < min_len:
            continue
        contigs.append(Contig(decode(out[a:b]), round(covs[i, 0] / covs[i, 1], 6),
                              int(covs[i, 1])))
    return contigs
