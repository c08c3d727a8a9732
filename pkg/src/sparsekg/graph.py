"""Sparse k-mer graph store.

Nodes live in an open-addressing table keyed by canonical k-mer; a node's id
is its slot.  Each side of a node has one inline link slot, and further links
on the same side spill into a shared overflow pool threaded per node.  Every
link is stored twice, once at each end, so the graph can be walked in either
direction without hashing.

A link word packs the label and the side it enters the destination through::

    bits 0..2*len   label bases, first base most significant
    bits 58..62     label length
    bit 63          destination entry side (LEFT=0, RIGHT=1)

A node's RIGHT side extends its canonical orientation; its LEFT side extends
the reverse complement.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba as nb
import numpy as np

from .kmer import (BASES, CanonicalKmer, PackedKmer, check_k, pack,
                   revcomp_bits, unpack)

LEFT = 0
RIGHT = 1
SIDE_NAMES = "LR"

EMPTY = np.uint64(0xFFFFFFFFFFFFFFFF)
DELETED = np.uint8(1)
VISITED = np.uint8(2)
MAX_G = 29  # 2*29 label bits + 5 length bits + 1 side bit = 64
COUNT_MAX = 0xFFFF

_LEN_SHIFT = np.uint64(58)
_SIDE_SHIFT = np.uint64(63)
_LABEL_MASK = (np.uint64(1) << _LEN_SHIFT) - np.uint64(1)
_LEN_MASK = np.uint64(31)
_HASH_MUL = np.uint64(0x9E3779B97F4A7C15)
MAX_LOAD = 0.7


def check_g(g: int, k: int) -> None:
    if not 1 <= g <= min(k, MAX_G):
        raise ValueError(f"g must be in [1, {min(k, MAX_G)}] for k={k}, got {g}")


class Label(NamedTuple):
    bits: int
    length: int

    @classmethod
    def from_str(cls, s: str) -> "Label":
        return cls(pack(s), len(s))

    def __str__(self) -> str:
        return unpack(self.bits, self.length)


class Link(NamedTuple):
    label: Label
    count: int
    dest: int
    dest_entry_side: int


# ---------------------------------------------------------------- kernels

@nb.njit(cache=True, inline="always")
def _slot0(key, mask):
    h = key * _HASH_MUL
    h ^= h >> np.uint64(29)
    return np.int64(h & np.uint64(mask))


@nb.njit(cache=True, nogil=True)
def table_find(keys, key, mask):
    i = _slot0(key, mask)
    while True:
        kk = keys[i]
        if kk == key:
            return i
        if kk == EMPTY:
            return -1
        i = (i + 1) & mask


@nb.njit(cache=True)
def table_insert(keys, key, mask):
    """Returns ``slot`` if newly inserted, ``-slot - 1`` if already present."""
    i = _slot0(key, mask)
    while True:
        kk = keys[i]
        if kk == key:
            return -i - 1
        if kk == EMPTY:
            keys[i] = key
            return i
        i = (i + 1) & mask


@nb.njit(cache=True, inline="always")
def make_word(label, length, entry):
    return (np.uint64(label) | (np.uint64(length) << _LEN_SHIFT)
            | (np.uint64(entry) << _SIDE_SHIFT))


@nb.njit(cache=True, inline="always")
def word_len(w):
    return np.int64((w >> _LEN_SHIFT) & _LEN_MASK)


@nb.njit(cache=True, inline="always")
def word_entry(w):
    return np.int64(w >> _SIDE_SHIFT)


@nb.njit(cache=True, inline="always")
def word_label(w):
    return w & _LABEL_MASK


@nb.njit(cache=True, inline="always")
def oriented(key, side, k):
    if side == 1:
        return key
    return revcomp_bits(key, k)


@nb.njit(cache=True)
def mirror_word(key, side, w, k):
    """Word of the reciprocal link stored at the destination."""
    n = word_len(w)
    head = oriented(key, side, k) >> np.uint64(2 * (k - n))
    return make_word(revcomp_bits(head, n), n, side)


@nb.njit(cache=True)
def slide(key, side, w, k):
    """Oriented k-mer reached by appending the label of ``w`` at ``side``."""
    n = word_len(w)
    mask = (np.uint64(1) << np.uint64(2 * k)) - np.uint64(1)
    return ((oriented(key, side, k) << np.uint64(2 * n)) | word_label(w)) & mask


@nb.njit(cache=True)
def side_degree(L, u, s):
    lw, lc, ld, ohead, oside, ow, oc, od, onext = L[:9]
    d = 1 if lc[u, s] > 0 else 0
    j = ohead[u]
    while j >= 0:
        if oside[j] == s:
            d += 1
        j = onext[j]
    return d


@nb.njit(cache=True)
def _add_half(L, u, s, w, dest, amount):
    lw, lc, ld, ohead, oside, ow, oc, od, onext, meta = L
    if lc[u, s] > 0 and lw[u, s] == w:
        c = min(np.int64(lc[u, s]) + amount, COUNT_MAX)
        lc[u, s] = c
        return c
    j = ohead[u]
    while j >= 0:
        if oside[j] == s and ow[j] == w:
            c = min(np.int64(oc[j]) + amount, COUNT_MAX)
            oc[j] = c
            return c
        j = onext[j]
    c = min(amount, COUNT_MAX)
    if lc[u, s] == 0:
        lw[u, s] = w
        lc[u, s] = c
        ld[u, s] = dest
        return c
    j = meta[0]
    meta[0] += 1
    meta[1] += 1
    oside[j] = s
    ow[j] = w
    oc[j] = c
    od[j] = dest
    onext[j] = ohead[u]
    ohead[u] = j
    return c


@nb.njit(cache=True)
def _unlink_overflow(L, u, j):
    ohead, onext, meta = L[3], L[8], L[9]
    prev = -1
    i = ohead[u]
    while i >= 0:
        if i == j:
            if prev < 0:
                ohead[u] = onext[i]
            else:
                onext[prev] = onext[i]
            meta[1] -= 1
            return
        prev = i
        i = onext[i]


@nb.njit(cache=True)
def _remove_half(L, u, s, w):
    lw, lc, ld, ohead, oside, ow, oc, od, onext, meta = L
    if lc[u, s] > 0 and lw[u, s] == w:
        j = ohead[u]
        while j >= 0:
            if oside[j] == s:
                break
            j = onext[j]
        if j >= 0:
            lw[u, s] = ow[j]
            lc[u, s] = oc[j]
            ld[u, s] = od[j]
            oc[j] = 0
            _unlink_overflow(L, u, j)
        else:
            lc[u, s] = 0
        return True
    j = ohead[u]
    while j >= 0:
        if oside[j] == s and ow[j] == w:
            oc[j] = 0
            _unlink_overflow(L, u, j)
            return True
        j = onext[j]
    return False


@nb.njit(cache=True)
def add_link(keys, L, k, u, s, w, v, amount):
    e = word_entry(w)
    mw = mirror_word(keys[u], s, w, k)
    c = _add_half(L, u, s, w, v, amount)
    if not (u == v and s == e and mw == w):
        _add_half(L, v, e, mw, u, amount)
    return c


@nb.njit(cache=True)
def remove_link(keys, L, k, u, s, w, v):
    e = word_entry(w)
    mw = mirror_word(keys[u], s, w, k)
    _remove_half(L, u, s, w)
    if not (u == v and s == e and mw == w):
        _remove_half(L, v, e, mw)


@nb.njit(cache=True)
def side_links(L, u, s, out_w, out_c, out_d):
    """Copy links of ``(u, s)`` into the output buffers; returns how many."""
    lw, lc, ld, ohead, oside, ow, oc, od, onext = L[:9]
    n = 0
    if lc[u, s] > 0:
        out_w[0] = lw[u, s]
        out_c[0] = lc[u, s]
        out_d[0] = ld[u, s]
        n = 1
    j = ohead[u]
    while j >= 0:
        if oside[j] == s:
            if n < len(out_w):
                out_w[n] = ow[j]
                out_c[n] = oc[j]
                out_d[n] = od[j]
            n += 1
        j = onext[j]
    return n


@nb.njit(cache=True)
def delete_node(keys, flags, L, k, u):
    """Drop every link touching ``u`` and mark it deleted."""
    ws = np.empty(64, np.uint64)
    cs = np.empty(64, np.int64)
    ds = np.empty(64, np.int64)
    for s in range(2):
        while True:
            n = side_links(L, u, s, ws, cs, ds)
            if n == 0:
                break
            remove_link(keys, L, k, u, s, ws[0], ds[0])
    flags[u] |= DELETED


@nb.njit(cache=True)
def _rehash(keys, flags, cov, new_keys, new_flags, new_cov, new_mask, remap):
    for i in range(len(keys)):
        if keys[i] != EMPTY:
            j = table_insert(new_keys, keys[i], new_mask)
            new_flags[j] = flags[i]
            new_cov[j] = cov[i]
            remap[i] = j


@nb.njit(cache=True)
def _remap_links(remap, lw, lc, ld, ohead, n_lw, n_lc, n_ld, n_ohead, od, used):
    for i in range(len(remap)):
        j = remap[i]
        if j < 0:
            continue
        for s in range(2):
            n_lw[j, s] = lw[i, s]
            n_lc[j, s] = lc[i, s]
            n_ld[j, s] = remap[ld[i, s]] if lc[i, s] > 0 else -1
        n_ohead[j] = ohead[i]
    for j in range(used):
        if od[j] >= 0:
            od[j] = remap[od[j]]


@nb.njit(cache=True)
def _live_link_count(keys, flags, L, k):
    lw, lc, ld, ohead, oside, ow, oc, od, onext = L[:9]
    halves = 0
    selfs = 0
    for u in range(len(keys)):
        if keys[u] == EMPTY or flags[u] & DELETED:
            continue
        for s in range(2):
            if lc[u, s] > 0:
                halves += 1
                w = lw[u, s]
                if ld[u, s] == u and word_entry(w) == s and mirror_word(keys[u], s, w, k) == w:
                    selfs += 1
        j = ohead[u]
        while j >= 0:
            halves += 1
            w = ow[j]
            if od[j] == u and word_entry(w) == oside[j] and mirror_word(keys[u], oside[j], w, k) == w:
                selfs += 1
            j = onext[j]
    # a self-mirrored link is stored once, every other link twice
    return (halves - selfs) // 2 + selfs


# ---------------------------------------------------------------- store

_OVERFLOW_START = 256


class SparseGraph:
    """Canonical k-mer nodes with coverage and labeled, counted links."""

    def __init__(self, k: int, g: int, capacity: int = 1024):
        check_k(k)
        check_g(g, k)
        self.k = k
        self.g = g
        cap = 1 << max(4, math.ceil(math.log2(max(capacity, 16) / MAX_LOAD)))
        self._alloc_nodes(cap)
        self.size = 0  # occupied slots, including deleted nodes
        self.has_links = False

    def _alloc_nodes(self, cap: int) -> None:
        self.keys = np.full(cap, EMPTY, dtype=np.uint64)
        self.flags = np.zeros(cap, dtype=np.uint8)
        self.cov = np.zeros(cap, dtype=np.uint16)
        self.mask = cap - 1

    @property
    def capacity(self) -> int:
        return len(self.keys)

    # ---- link storage

    def enable_links(self) -> None:
        if self.has_links:
            return
        cap = self.capacity
        self.lw = np.zeros((cap, 2), dtype=np.uint64)
        self.lc = np.zeros((cap, 2), dtype=np.uint16)
        self.ld = np.full((cap, 2), -1, dtype=np.int32)
        self.ohead = np.full(cap, -1, dtype=np.int32)
        self._alloc_overflow(_OVERFLOW_START)
        self.meta = np.zeros(2, dtype=np.int64)  # [pool used, live entries]
        self.has_links = True

    def _alloc_overflow(self, n: int, keep: int = 0) -> None:
        def grow(old, dtype, fill=0):
            new = np.full(n, fill, dtype=dtype)
            if old is not None:
                new[:keep] = old[:keep]
            return new
        self.oside = grow(getattr(self, "oside", None), np.uint8)
        self.ow = grow(getattr(self, "ow", None), np.uint64)
        self.oc = grow(getattr(self, "oc", None), np.uint16)
        self.od = grow(getattr(self, "od", None), np.int32, -1)
        self.onext = grow(getattr(self, "onext", None), np.int32, -1)

    def reserve_overflow(self, extra: int) -> None:
        used = int(self.meta[0])
        if used + extra > len(self.ow):
            self._alloc_overflow(max(2 * len(self.ow), used + extra), keep=used)

    @property
    def L(self):
        return (self.lw, self.lc, self.ld, self.ohead, self.oside, self.ow,
                self.oc, self.od, self.onext, self.meta)

    # ---- nodes

    def _grow(self, cap: int) -> None:
        old_keys, old_flags, old_cov = self.keys, self.flags, self.cov
        self._alloc_nodes(cap)
        remap = np.full(len(old_keys), -1, dtype=np.int64)
        _rehash(old_keys, old_flags, old_cov, self.keys, self.flags, self.cov,
                self.mask, remap)
        if self.has_links:
            lw, lc, ld, ohead = self.lw, self.lc, self.ld, self.ohead
            self.lw = np.zeros((cap, 2), dtype=np.uint64)
            self.lc = np.zeros((cap, 2), dtype=np.uint16)
            self.ld = np.full((cap, 2), -1, dtype=np.int32)
            self.ohead = np.full(cap, -1, dtype=np.int32)
            _remap_links(remap, lw, lc, ld, ohead, self.lw, self.lc, self.ld,
                         self.ohead, self.od, int(self.meta[0]))

    def reserve(self, n_new: int) -> None:
        """Make room for ``n_new`` further insertions without rehashing."""
        need = self.size + n_new
        if need > MAX_LOAD * self.capacity:
            cap = self.capacity
            while need > MAX_LOAD * cap:
                cap *= 2
            self._grow(cap)

    def _key(self, kmer) -> int:
        if isinstance(kmer, CanonicalKmer):
            kmer = kmer.kmer
        if isinstance(kmer, PackedKmer):
            if kmer.k != self.k:
                raise ValueError(f"k-mer length {kmer.k} != graph k {self.k}")
            bits = kmer.bits
        elif isinstance(kmer, str):
            bits = pack(kmer)
        else:
            bits = int(kmer)
        rc = int(revcomp_bits(np.uint64(bits), self.k))
        if rc < bits:
            raise ValueError("k-mer is not canonical")
        return bits

    def get_or_insert_node(self, kmer) -> tuple[int, bool]:
        """Node id and whether it was new.  An insert that grows the table
        renumbers every node; call ``reserve`` first to keep ids stable."""
        key = self._key(kmer)
        self.reserve(1)
        r = int(table_insert(self.keys, np.uint64(key), self.mask))
        if r >= 0:
            self.size += 1
            return r, True
        u = -r - 1
        if self.flags[u] & DELETED:
            self.flags[u] = 0
            self.cov[u] = 0
            return u, True
        return u, False

    def node_id(self, kmer) -> int | None:
        u = int(table_find(self.keys, np.uint64(self._key(kmer)), self.mask))
        if u < 0 or self.flags[u] & DELETED:
            return None
        return u

    def kmer(self, u: int) -> PackedKmer:
        return PackedKmer(int(self.keys[u]), self.k)

    def coverage(self, u: int) -> int:
        return int(self.cov[u])

    def is_live(self, u: int) -> bool:
        return self.keys[u] != EMPTY and not (self.flags[u] & DELETED)

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero((self.keys != EMPTY) & ((self.flags & DELETED) == 0))

    def delete_node(self, u: int) -> None:
        if self.has_links:
            delete_node(self.keys, self.flags, self.L, self.k, u)
        else:
            self.flags[u] |= DELETED

    # ---- links

    def _word(self, u: int, side: int, label, dest: int, dest_entry_side: int) -> np.uint64:
        if isinstance(label, str):
            label = Label.from_str(label)
        if not 1 <= label.length <= self.g:
            raise ValueError(f"label length {label.length} outside [1, {self.g}]")
        w = np.uint64(make_word(np.uint64(label.bits), label.length, dest_entry_side))
        reached = int(slide(self.keys[u], side, w, self.k))
        expect = int(oriented(self.keys[dest], 1 - dest_entry_side, self.k))
        if reached != expect:
            raise ValueError("label does not lead to the destination k-mer")
        return w

    def add_or_bump_link(self, src: int, src_side: int, label, dest: int,
                         dest_entry_side: int, amount: int = 1) -> int:
        self.enable_links()
        if not (self.is_live(src) and self.is_live(dest)):
            raise ValueError("both link ends must be live nodes")
        w = self._word(src, src_side, label, dest, dest_entry_side)
        self.reserve_overflow(2)
        return int(add_link(self.keys, self.L, self.k, src, src_side, w, dest, amount))

    def remove_link(self, src: int, src_side: int, label, dest: int,
                    dest_entry_side: int) -> None:
        w = self._word(src, src_side, label, dest, dest_entry_side)
        remove_link(self.keys, self.L, self.k, src, src_side, w, dest)

    def degree(self, u: int, side: int) -> int:
        if not self.has_links:
            return 0
        return int(side_degree(self.L, u, side))

    def links(self, u: int, side: int) -> list[Link]:
        if not self.has_links:
            return []
        ws = np.empty(64, np.uint64)
        cs = np.empty(64, np.int64)
        ds = np.empty(64, np.int64)
        n = int(side_links(self.L, u, side, ws, cs, ds))
        if n > 64:
            ws = np.empty(n, np.uint64)
            cs = np.empty(n, np.int64)
            ds = np.empty(n, np.int64)
            side_links(self.L, u, side, ws, cs, ds)
        out = []
        for i in range(n):
            w = ws[i]
            out.append(Link(Label(int(word_label(w)), int(word_len(w))),
                            int(cs[i]), int(ds[i]), int(word_entry(w))))
        return out

    # ---- counters

    def node_count(self) -> int:
        return int(len(self.live_ids()))

    def live_link_count(self) -> int:
        if not self.has_links:
            return 0
        return int(_live_link_count(self.keys, self.flags, self.L, self.k))

    def node_record_bits(self) -> int:
        bits = 8 * (self.keys.itemsize + self.flags.itemsize + self.cov.itemsize)
        if self.has_links:
            bits += 8 * 2 * (self.lw.itemsize + self.lc.itemsize + self.ld.itemsize)
            bits += 8 * self.ohead.itemsize
        return bits

    def overflow_record_bits(self) -> int:
        return 8 * (self.oside.itemsize + self.ow.itemsize + self.oc.itemsize
                    + self.od.itemsize + self.onext.itemsize)

    def measured_bits(self) -> int:
        """Bit cost of the live records under the store's actual field layout."""
        bits = self.node_count() * self.node_record_bits()
        if self.has_links:
            bits += int(self.meta[1]) * self.overflow_record_bits()
        return bits

    def allocated_bytes(self) -> int:
        arrays = [self.keys, self.flags, self.cov]
        if self.has_links:
            arrays += [self.lw, self.lc, self.ld, self.ohead, self.oside,
                       self.ow, self.oc, self.od, self.onext]
        return sum(a.nbytes for a in arrays)

    # ---- diagnostics

    def dump(self) -> str:
        """One line per live node in k-mer order: k-mer, coverage, links."""
        lines = []
        ids = self.live_ids()
        for u in ids[np.argsort(self.keys[ids], kind="stable")]:
            fields = [unpack(int(self.keys[u]), self.k), str(int(self.cov[u]))]
            for s in (LEFT, RIGHT):
                for ln in sorted(self.links(int(u), s)):
                    fields.append(f"{SIDE_NAMES[s]},{ln.label},{ln.count}")
            lines.append(" ".join(fields))
        return "\n".join(lines) + ("\n" if lines else "")

    def check_invariants(self) -> None:
        """Full scan of the mirror, label and duplicate-label invariants."""
        k = self.k
        for u in self.live_ids():
            u = int(u)
            key = int(self.keys[u])
            if int(revcomp_bits(np.uint64(key), k)) < key:
                raise AssertionError(f"node {u} not canonical")
            for s in (LEFT, RIGHT):
                seen = set()
                for ln in self.links(u, s):
                    if ln.label in seen:
                        raise AssertionError(f"duplicate label on node {u} side {s}")
                    seen.add(ln.label)
                    if ln.count < 1:
                        raise AssertionError("live link with zero count")
                    if not self.is_live(ln.dest):
                        raise AssertionError(f"link from {u} to dead node {ln.dest}")
                    w = np.uint64(make_word(np.uint64(ln.label.bits),
                                            ln.label.length, ln.dest_entry_side))
                    reached = int(slide(np.uint64(key), s, w, k))
                    dest_or = int(oriented(self.keys[ln.dest], 1 - ln.dest_entry_side, k))
                    if reached != dest_or:
                        raise AssertionError(f"label of link {u}->{ln.dest} inconsistent")
                    mw = np.uint64(mirror_word(np.uint64(key), s, w, k))
                    back = [m for m in self.links(ln.dest, ln.dest_entry_side)
                            if m.dest == u and m.dest_entry_side == s
                            and m.label == Label(int(word_label(mw)), int(word_len(mw)))]
                    if len(back) != 1 or back[0].count != ln.count:
                        raise AssertionError(f"mirror of link {u}->{ln.dest} missing")
        for u in np.flatnonzero(self.flags & DELETED):
            if self.has_links and (self.degree(int(u), 0) or self.degree(int(u), 1)):
                raise AssertionError(f"deleted node {u} still owns links")


def estimate_dense_bits(n_kmers: int, k: int) -> int:
    """Minimum bits of a de Bruijn graph: k-mer plus 4 edge bits per side."""
    if n_kmers < 0:
        raise ValueError("negative k-mer count")
    return n_kmers * (2 * k + 8)


def estimate_sparse_bits(n_kmers: int, k: int, g: int, ptr_bits: int = 64) -> int:
    """Lower-bound bits of the sparse graph: one node per g k-mers, with g-base
    labels on each side and ``ptr_bits`` of link bookkeeping."""
    if g < 1:
        raise ValueError("g must be >= 1")
    if n_kmers < 0:
        raise ValueError("negative k-mer count")
    return -(-n_kmers // g) * (2 * k + 4 * g + ptr_bits)


__all__ = [
    "BASES", "DELETED", "EMPTY", "LEFT", "Label", "Link", "MAX_G", "RIGHT",
    "SparseGraph", "VISITED", "check_g", "estimate_dense_bits",
    "estimate_sparse_bits",
]
