"""Two-round sparse graph construction, cleaning and contig traversal."""

from __future__ import annotations

import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np

from .graph import (COUNT_MAX, DELETED, EMPTY, LEFT, MAX_LOAD, RIGHT, VISITED,
                    Label, SparseGraph, add_link, check_g, make_word,
                    remove_link, side_degree, side_links, table_find,
                    table_insert, word_entry, word_label, word_len)
from .kmer import ReadSet, check_k, decode, window_kmers

log = logging.getLogger(__name__)

_CHUNK_READS = 200_000


@dataclass
class GraphParams:
    k: int = 31
    g: int = 25
    min_node_cov: int = 2
    min_link_cov: int = 2
    tip_depth_limit: int | None = None  # bases; None means 2 * (k + g)
    min_contig_len: int = 100

    def __post_init__(self):
        check_k(self.k)
        check_g(self.g, self.k)
        if self.tip_depth_limit is None:
            self.tip_depth_limit = 2 * (self.k + self.g)
        if self.min_node_cov < 0 or self.min_link_cov < 0 or self.tip_depth_limit < 0:
            raise ValueError("thresholds must be non-negative")

    @classmethod
    def noise_free(cls, **kw) -> "GraphParams":
        kw.setdefault("min_node_cov", 0)
        kw.setdefault("min_link_cov", 1)
        kw.setdefault("tip_depth_limit", 0)
        return cls(**kw)


@dataclass
class Contig:
    seq: str
    coverage: float  # mean node coverage
    n_nodes: int

    def __len__(self) -> int:
        return len(self.seq)


@dataclass
class AssemblyResult:
    contigs: list[Contig]
    counters: dict = field(default_factory=dict)
    graph: SparseGraph | None = None


def log_stage(name: str, **kv) -> None:
    log.info("stage=%s %s", name, " ".join(f"{k}={v}" for k, v in kv.items()))


def _max_read_len(reads: ReadSet) -> int:
    if len(reads) == 0:
        return 0
    return int(np.max(np.diff(reads.offsets)))


# ------------------------------------------------------------------ round 1

@nb.njit(cache=True)
def _bump(cov, slot):
    if cov[slot] < COUNT_MAX:
        cov[slot] += 1


@nb.njit(cache=True)
def _round1(codes, offsets, lo, hi, keys, flags, cov, mask, k, g, size, limit, maxlen):
    can = np.empty(maxlen + 1, np.uint64)
    flip = np.empty(maxlen + 1, np.bool_)
    ok = np.empty(maxlen + 1, np.bool_)
    for r in range(lo, hi):
        if size[0] > limit:
            return r
        n = window_kmers(codes, offsets[r], offsets[r + 1], k, can, flip, ok)
        i = 0
        while i < n:
            if not ok[i]:
                i += 1
                continue
            b = i
            while b + 1 < n and ok[b + 1]:
                b += 1
            # segment of valid windows [i, b]
            c = -1
            for p in range(i, min(i + g - 1, b) + 1):
                slot = table_find(keys, can[p], mask)
                if slot >= 0:
                    _bump(cov, slot)
                    c = p
                    break
            if c < 0:
                slot = table_insert(keys, can[i], mask)
                size[0] += 1
                cov[slot] = 1
                c = i
            while True:
                hit = -1
                for p in range(c + 1, min(c + g, b) + 1):
                    slot = table_find(keys, can[p], mask)
                    if slot >= 0:
                        hit = p
                        break
                if hit >= 0:
                    _bump(cov, slot)
                    c = hit
                elif c + g <= b:
                    slot = table_insert(keys, can[c + g], mask)
                    size[0] += 1
                    cov[slot] = 1
                    c += g
                else:
                    break
            i = b + 1
    return hi


def round1_select_nodes(reads: ReadSet, params: GraphParams,
                        graph: SparseGraph | None = None) -> SparseGraph:
    """Pick sparse nodes: from each node hit, look at most g windows ahead for
    an existing node; if none is there, the g-th window becomes a new node."""
    if graph is None:
        graph = SparseGraph(params.k, params.g,
                            capacity=max(1024, reads.total_bases // (4 * params.g)))
    maxlen = _max_read_len(reads)
    headroom = maxlen // params.g + 2
    size = np.array([graph.size], dtype=np.int64)
    r, n = 0, len(reads)
    while r < n:
        limit = int(MAX_LOAD * graph.capacity) - headroom
        if size[0] > limit:
            graph.size = int(size[0])
            graph.reserve(graph.capacity)  # doubles
            continue
        r = _round1(reads.codes, reads.offsets, r, n, graph.keys, graph.flags,
                    graph.cov, graph.mask, graph.k, graph.g, size, limit, maxlen)
    graph.size = int(size[0])
    return graph


def filter_low_coverage_nodes(graph: SparseGraph, min_node_cov: int) -> int:
    if min_node_cov <= 1:
        return 0
    live = (graph.keys != EMPTY) & ((graph.flags & DELETED) == 0)
    drop = np.flatnonzero(live & (graph.cov < min_node_cov))
    for u in drop:
        graph.delete_node(int(u))
    return int(len(drop))


def compact(graph: SparseGraph) -> SparseGraph:
    """Rebuild a link-free graph holding only its live nodes."""
    if graph.has_links:
        raise ValueError("compaction is only supported before links exist")
    ids = graph.live_ids()
    out = SparseGraph(graph.k, graph.g, capacity=max(len(ids), 16))
    _fill(out.keys, out.cov, out.mask, graph.keys[ids], graph.cov[ids])
    out.size = len(ids)
    return out


@nb.njit(cache=True)
def _fill(keys, cov, mask, src_keys, src_cov):
    for i in range(len(src_keys)):
        cov[table_insert(keys, src_keys[i], mask)] = src_cov[i]


# ------------------------------------------------------------------ round 2

@nb.njit(cache=True, nogil=True)
def _round2_hits(codes, offsets, lo, hi, keys, flags, mask, k, maxlen,
                 out_read, out_pos, out_slot, out_flip):
    """Every live-node occurrence in reads ``lo..hi``, in read order."""
    can = np.empty(maxlen + 1, np.uint64)
    flip = np.empty(maxlen + 1, np.bool_)
    ok = np.empty(maxlen + 1, np.bool_)
    m = 0
    for r in range(lo, hi):
        n = window_kmers(codes, offsets[r], offsets[r + 1], k, can, flip, ok)
        for p in range(n):
            if not ok[p]:
                continue
            slot = table_find(keys, can[p], mask)
            if slot >= 0 and not (flags[slot] & DELETED):
                out_read[m] = r
                out_pos[m] = p
                out_slot[m] = slot
                out_flip[m] = flip[p]
                m += 1
    return m


@nb.njit(cache=True)
def _round2_apply(codes, offsets, hit_read, hit_pos, hit_slot, hit_flip, start, m,
                  keys, cov, L, k, g, stats):
    """Bump coverage per hit and link consecutive hits; returns the next hit
    index (``< m`` when the overflow pool needs to grow)."""
    meta = L[9]
    pool = len(L[5])
    for i in range(start, m):
        if meta[0] + 2 > pool:
            return i
        slot = hit_slot[i]
        _bump(cov, slot)
        stats[0] += 1
        if i == 0 or hit_read[i - 1] != hit_read[i]:
            continue
        gap = hit_pos[i] - hit_pos[i - 1]
        if gap > stats[3]:
            stats[3] = gap
        if gap > g:
            stats[2] += 1
            continue
        base = offsets[hit_read[i]] + hit_pos[i - 1] + k
        label = np.uint64(0)
        for j in range(base, base + gap):
            label = (label << np.uint64(2)) | np.uint64(codes[j])
        src_side = 0 if hit_flip[i - 1] else 1
        entry = 1 if hit_flip[i] else 0
        w = make_word(label, gap, entry)
        add_link(keys, L, k, hit_slot[i - 1], src_side, w, slot, 1)
        stats[1] += 1
    return m


def round2_build_links(reads: ReadSet, graph: SparseGraph, params: GraphParams,
                       threads: int = 1, strict_gap: bool = False) -> dict:
    """Rescan reads against the fixed node set, recount coverage and link
    consecutive node hits.  Lookups are sharded over ``threads``; updates are
    applied in read order so the result does not depend on the thread count."""
    graph.enable_links()
    graph.cov[:] = 0
    maxlen = _max_read_len(reads)
    stats = np.zeros(4, dtype=np.int64)  # hits, link observations, breaks, max gap
    n = len(reads)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def lookup(lo, hi):
        cap = int(reads.offsets[hi] - reads.offsets[lo]) + 1
        bufs = (np.empty(cap, np.int64), np.empty(cap, np.int32),
                np.empty(cap, np.int64), np.empty(cap, np.bool_))
        m = _round2_hits(reads.codes, reads.offsets, lo, hi, graph.keys,
                         graph.flags, graph.mask, graph.k, maxlen, *bufs)
        return [b[:m] for b in bufs]

    try:
        for lo in range(0, n, _CHUNK_READS):
            hi = min(n, lo + _CHUNK_READS)
            edges = np.linspace(lo, hi, max(threads, 1) + 1).astype(np.int64)
            spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
            if pool is not None:
                parts = list(pool.map(lambda s: lookup(*s), spans))
            else:
                parts = [lookup(*s) for s in spans]
            hit_read, hit_pos, hit_slot, hit_flip = (np.concatenate(x) for x in zip(*parts))
            i, m = 0, len(hit_read)
            while i < m:
                i = _round2_apply(reads.codes, reads.offsets, hit_read, hit_pos, hit_slot,
                                  hit_flip, i, m, graph.keys, graph.cov, graph.L,
                                  graph.k, graph.g, stats)
                if i < m:
                    graph.reserve_overflow(len(graph.ow))
    finally:
        if pool is not None:
            pool.shutdown()
    if strict_gap and stats[2]:
        raise AssertionError(
            f"{stats[2]} consecutive node hits more than g={graph.g} apart "
            f"(max gap {stats[3]})")
    return {"hits": int(stats[0]), "link_observations": int(stats[1]),
            "chain_breaks": int(stats[2]), "max_gap": int(stats[3])}


# ------------------------------------------------------------------ cleaning

@nb.njit(cache=True)
def _remove_weak(keys, flags, cov, L, k, min_link_cov, min_node_cov):
    ws = np.empty(64, np.uint64)
    cs = np.empty(64, np.int64)
    ds = np.empty(64, np.int64)
    removed = 0
    for u in range(len(keys)):
        if keys[u] == EMPTY or flags[u] & DELETED:
            continue
        for s in range(2):
            again = True
            while again:
                again = False
                n = min(side_links(L, u, s, ws, cs, ds), 64)
                for j in range(n):
                    if cs[j] < min_link_cov:
                        remove_link(keys, L, k, u, s, ws[j], ds[j])
                        removed += 1
                        again = True
                        break
    dropped = 0
    for u in range(len(keys)):
        if keys[u] == EMPTY or flags[u] & DELETED:
            continue
        if cov[u] < min_node_cov and side_degree(L, u, 0) == 0 and side_degree(L, u, 1) == 0:
            flags[u] |= DELETED
            dropped += 1
    return removed, dropped


def remove_weak_links(graph: SparseGraph, min_link_cov: int,
                      min_node_cov: int = 0) -> int:
    """Drop links seen fewer than ``min_link_cov`` times, then any node left
    without links whose coverage is under ``min_node_cov``."""
    if not graph.has_links:
        return 0
    removed, _ = _remove_weak(graph.keys, graph.flags, graph.cov, graph.L,
                              graph.k, min_link_cov, min_node_cov)
    return int(removed)


@nb.njit(cache=True)
def _branching_sides(keys, flags, L):
    us = []
    ss = []
    for u in range(len(keys)):
        if keys[u] == EMPTY or flags[u] & DELETED:
            continue
        for s in range(2):
            if side_degree(L, u, s) >= 2:
                us.append(u)
                ss.append(s)
    return np.array(us, dtype=np.int64), np.array(ss, dtype=np.int64)


def branching_sides(graph: SparseGraph) -> list[tuple[int, int]]:
    """``(node, side)`` pairs with two or more links, in canonical k-mer order."""
    if not graph.has_links:
        return []
    us, ss = _branching_sides(graph.keys, graph.flags, graph.L)
    if len(us) == 0:
        return []
    order = np.lexsort((ss, graph.keys[us]))
    return [(int(us[i]), int(ss[i])) for i in order]


class _Step:
    __slots__ = ("src", "side", "link", "dist", "branch", "prev")

    def __init__(self, src, side, link, dist, branch, prev):
        self.src = src
        self.side = side
        self.link = link
        self.dist = dist
        self.branch = branch
        self.prev = prev

    def path(self) -> list["_Step"]:
        out = []
        s = self
        while s is not None:
            out.append(s)
            s = s.prev
        return out[::-1]


def _path_weight(steps) -> int:
    return sum(s.link.count for s in steps)


def _branch_key(weight: int, first: Label):
    # heavier wins; on ties the lexically smaller first label wins
    return (-weight, first.length, first.bits)


def _walk_tip(graph: SparseGraph, u: int, link, limit: int):
    """Follow a branch while it stays unbranched.  Returns (nodes, weight)
    if it dead-ends within ``limit`` bases, else None."""
    nodes = []
    seen = {u}
    weight = 0
    length = 0
    while True:
        v, e = link.dest, link.dest_entry_side
        weight += link.count
        length += link.label.length
        if length > limit or v in seen or graph.degree(v, e) != 1:
            return None
        nodes.append(v)
        seen.add(v)
        out = graph.links(v, 1 - e)
        if not out:
            return nodes, weight
        if len(out) > 1:
            return None
        link = out[0]


def _greedy_weight(graph: SparseGraph, u: int, link, limit: int) -> int:
    """Summed counts along the heaviest walk of a branch, up to ``limit`` bases."""
    weight = 0
    length = 0
    seen = {u}
    while link is not None:
        weight += link.count
        length += link.label.length
        v = link.dest
        if length >= limit or v in seen:
            break
        seen.add(v)
        out = graph.links(v, 1 - link.dest_entry_side)
        link = max(out, key=lambda x: (x.count, -x.label.length, -x.label.bits)) if out else None
    return weight


def _clip_tips(graph: SparseGraph, u: int, s: int, limit: int) -> int:
    branches = sorted(graph.links(u, s), key=lambda x: (x.label.length, x.label.bits))
    if len(branches) < 2:
        return 0
    tips = {}
    for i, b in enumerate(branches):
        t = _walk_tip(graph, u, b, limit)
        if t is not None:
            tips[i] = t
    if not tips:
        return 0
    strength = {}
    for i, b in enumerate(branches):
        w = tips[i][1] if i in tips else _greedy_weight(graph, u, b, limit)
        strength[i] = _branch_key(w, b.label)
    best = min(strength, key=strength.get)
    removed = 0
    for i, (nodes, _) in tips.items():
        if i == best:
            continue
        for v in nodes:
            graph.delete_node(v)
        removed += 1
    return removed


def _find_bubble(graph: SparseGraph, u: int, s: int, limit: int):
    """Uniform-cost search (cost = bases) over all branches leaving ``(u, s)``.
    Returns the two step paths of the first pair of branches that reconverge
    on the same node and side, or None."""
    heap = []
    counter = 0
    for i, b in enumerate(sorted(graph.links(u, s), key=lambda x: (x.label.length, x.label.bits))):
        st = _Step(u, s, b, b.label.length, i, None)
        heapq.heappush(heap, (st.dist, counter, st))
        counter += 1
    settled = {}
    while heap:
        dist, _, st = heapq.heappop(heap)
        if dist > limit:
            break
        v, e = st.link.dest, st.link.dest_entry_side
        if v == u:
            continue
        prev = settled.get(v)
        if prev is not None:
            if prev.branch != st.branch and prev.link.dest_entry_side == e:
                return prev.path(), st.path()
            continue
        settled[v] = st
        for nxt in graph.links(v, 1 - e):
            ns = _Step(v, 1 - e, nxt, dist + nxt.label.length, st.branch, st)
            heapq.heappush(heap, (ns.dist, counter, ns))
            counter += 1
    return None


def _pop_bubble(graph: SparseGraph, path_a, path_b) -> bool:
    wa, wb = _path_weight(path_a), _path_weight(path_b)
    ka = _branch_key(wa, path_a[0].link.label)
    kb = _branch_key(wb, path_b[0].link.label)
    winner, loser = (path_a, path_b) if ka <= kb else (path_b, path_a)
    keep = {st.link.dest for st in winner} | {winner[0].src}
    interior = [st.link.dest for st in loser[:-1]]
    doomed = [v for v in interior if v not in keep]
    if any(graph.degree(v, 0) != 1 or graph.degree(v, 1) != 1 for v in doomed):
        return False
    if doomed:
        for v in doomed:
            graph.delete_node(v)
    else:
        first = loser[0]
        graph.remove_link(first.src, first.side, first.link.label,
                          first.link.dest, first.link.dest_entry_side)
    return True


def remove_tips_and_bubbles(graph: SparseGraph, tip_depth_limit: int,
                            max_rounds: int = 100) -> tuple[int, int]:
    """Clip short dead-end branches and pop short bubbles at every branching
    side, keeping the more heavily covered branch, until nothing changes."""
    if tip_depth_limit <= 0 or not graph.has_links:
        return 0, 0
    tips = bubbles = 0
    for _ in range(max_rounds):
        changed = False
        for u, s in branching_sides(graph):
            if not graph.is_live(u):
                continue
            n = _clip_tips(graph, u, s, tip_depth_limit)
            tips += n
            changed |= n > 0
            stuck = set()
            while graph.is_live(u) and graph.degree(u, s) >= 2:
                found = _find_bubble(graph, u, s, tip_depth_limit)
                if found is None:
                    break
                key = tuple(st.link.dest for st in found[0] + found[1])
                if key in stuck or not _pop_bubble(graph, *found):
                    # reconvergence through a branched path: leave it
                    stuck.add(key)
                    break
                bubbles += 1
                changed = True
        if not changed:
            break
    return tips, bubbles


# ------------------------------------------------------------------ traversal

@nb.njit(cache=True)
def _emit_label(w, buf, n):
    m = word_len(w)
    lab = word_label(w)
    for i in range(m):
        buf[n + i] = np.uint8((lab >> np.uint64(2 * (m - 1 - i))) & np.uint64(3))
    return n + m


@nb.njit(cache=True)
def _extend(keys, flags, cov, L, u, s, buf, acc):
    """Walk from ``(u, s)`` through unambiguous links, appending labels."""
    ws = np.empty(2, np.uint64)
    cs = np.empty(2, np.int64)
    ds = np.empty(2, np.int64)
    n = 0
    while True:
        if side_links(L, u, s, ws, cs, ds) != 1:
            break
        v = ds[0]
        e = word_entry(ws[0])
        if side_degree(L, v, e) != 1:
            break
        n = _emit_label(ws[0], buf, n)
        if flags[v] & VISITED:
            # closes a cycle or hairpin walked in this same contig
            break
        flags[v] |= VISITED
        acc[0] += cov[v]
        acc[1] += 1
        u = v
        s = 1 - e
    return n


@nb.njit(cache=True)
def _traverse(keys, flags, cov, L, k, order, out, bounds, covs):
    right = np.empty(len(out), np.uint8)
    left = np.empty(len(out), np.uint8)
    acc = np.zeros(2, np.int64)
    pos = 0
    nc = 0
    for u in order:
        if flags[u] & (VISITED | DELETED):
            continue
        flags[u] |= VISITED
        acc[0] = cov[u]
        acc[1] = 1
        nr = _extend(keys, flags, cov, L, u, 1, right, acc)
        nl = _extend(keys, flags, cov, L, u, 0, left, acc)
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
        # report the lexically smaller of the contig and its reverse complement
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


def extract_contigs(graph: SparseGraph, params: GraphParams | None = None,
                    min_contig_len: int | None = None) -> list[Contig]:
    """Walk unbranched paths from unvisited seeds taken in k-mer order."""
    if min_contig_len is None:
        min_contig_len = params.min_contig_len if params is not None else 0
    graph.enable_links()
    graph.flags &= ~VISITED
    ids = graph.live_ids()
    if len(ids) == 0:
        return []
    order = ids[np.argsort(graph.keys[ids], kind="stable")]
    out = np.empty(len(ids) * (graph.k + graph.g), np.uint8)
    bounds = np.zeros(len(ids) + 1, np.int64)
    covs = np.zeros((len(ids), 2), np.int64)
    nc = _traverse(graph.keys, graph.flags, graph.cov, graph.L, graph.k, order,
                   out, bounds, covs)
    contigs = []
    for i in range(nc):
        a, b = bounds[i], bounds[i + 1]
        if b - a < min_contig_len:
            continue
        contigs.append(Contig(decode(out[a:b]), round(covs[i, 0] / covs[i, 1], 6),
                              int(covs[i, 1])))
    return contigs


# ------------------------------------------------------------------ driver

def assemble(reads: ReadSet, params: GraphParams, threads: int = 1,
             check_gap: bool = True) -> AssemblyResult:
    """Round 1, filtering, round 2, weak-link removal, tip/bubble removal and
    traversal, in that order."""
    counters = {"reads": len(reads), "bases": reads.total_bases}
    log_stage("params", threads=threads, **asdict(params))
    t0 = time.perf_counter()

    graph = round1_select_nodes(reads, params)
    counters["nodes_selected"] = graph.node_count()
    peak = graph.measured_bits()
    log_stage("round1", nodes=counters["nodes_selected"], bits=peak,
              secs=f"{time.perf_counter() - t0:.1f}")

    counters["nodes_filtered"] = filter_low_coverage_nodes(graph, params.min_node_cov)
    graph = compact(graph)
    log_stage("filter", removed=counters["nodes_filtered"], nodes=graph.node_count())

    # with no node filtered, round 1 guarantees hits at most g apart
    strict = check_gap and counters["nodes_filtered"] == 0
    r2 = round2_build_links(reads, graph, params, threads=threads, strict_gap=strict)
    counters["links_built"] = graph.live_link_count()
    counters["round2_hits"] = r2["hits"]
    counters["chain_breaks"] = r2["chain_breaks"]
    peak = max(peak, graph.measured_bits())
    log_stage("round2", links=counters["links_built"], **r2,
              bits=graph.measured_bits(), secs=f"{time.perf_counter() - t0:.1f}")

    before = graph.node_count()
    counters["weak_links_removed"] = remove_weak_links(graph, params.min_link_cov,
                                                       params.min_node_cov)
    log_stage("weak_links", removed=counters["weak_links_removed"],
              nodes_dropped=before - graph.node_count())

    tips, bubbles = remove_tips_and_bubbles(graph, params.tip_depth_limit)
    counters["tips_removed"] = tips
    counters["bubbles_removed"] = bubbles
    log_stage("tips_bubbles", tips=tips, bubbles=bubbles,
              secs=f"{time.perf_counter() - t0:.1f}")

    contigs = extract_contigs(graph, params)
    counters["nodes_final"] = graph.node_count()
    counters["links_final"] = graph.live_link_count()
    counters["contigs"] = len(contigs)
    counters["measured_bits"] = peak
    log_stage("traverse", contigs=len(contigs), measured_bits=peak,
              secs=f"{time.perf_counter() - t0:.1f}")
    return AssemblyResult(contigs, counters, graph)
