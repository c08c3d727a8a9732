"""Contig size statistics and reference-based placement.

Contigs are placed on the reference without gaps: every reference k-mer that
occurs exactly once (up to reverse complement) is an anchor, and a contig takes
the strand and offset most of its anchored k-mers agree on.  Contigs without
any unique anchor fall back to the best of their multi-copy placements.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kmer import encode, window_kmers

ERROR_THRESHOLDS = (1, 3, 5)
MIN_LEN = 100  # "> 100 bp" size class
LONG_LEN = 10_000
_MAX_OCC = 64
_MAX_CANDIDATES = 16


class EvaluationError(ValueError):
    pass


def n50(lengths: Iterable[int]) -> int:
    """Largest L such that contigs of length >= L hold half the total."""
    ls = sorted((int(x) for x in lengths), reverse=True)
    half = sum(ls) / 2
    acc = 0
    for x in ls:
        acc += x
        if acc >= half:
            return x
    return 0


@dataclass
class AssemblyReport:
    n_contigs_ge_100: int = 0
    sum_ge_100: int = 0
    n_contigs_ge_10k: int = 0
    sum_ge_10k: int = 0
    longest: int = 0
    mean_size: float = 0.0
    n50: int = 0
    coverage_pct: float | None = None
    error_hist: tuple[int, int, int] | None = None
    unplaced: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        hist = d.pop("error_hist")
        if hist is not None:
            for t, n in zip(ERROR_THRESHOLDS, hist):
                d[f"e_ge_{t}"] = n
        d.update(extra)
        return {k: v for k, v in d.items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("Memory peak (MB)", self.extra.get("memory_peak_mb")),
            ("Longest contig (bp)", f"{self.longest:,}"),
            (">10 kbp (# contigs)", f"{self.n_contigs_ge_10k:,}"),
            ("Sum (bp)", f"{self.sum_ge_10k:,}"),
            (">100 bp (# contigs)", f"{self.n_contigs_ge_100:,}"),
            ("Sum (bp)", f"{self.sum_ge_100:,}"),
            ("Mean size (bp)", f"{self.mean_size:,.0f}"),
            ("N50 (bp)", f"{self.n50:,}"),
        ]
        if self.coverage_pct is not None:
            rows.append(("Coverage (%)", f"{self.coverage_pct:.2f}"))
        if self.error_hist is not None:
            for t, n in zip(ERROR_THRESHOLDS, self.error_hist):
                rows.append((f"E >= {t}", str(n)))
        rows = [(a, b) for a, b in rows if b is not None]
        w = max(len(a) for a, _ in rows)
        return "\n".join(f"{a:<{w}}  {b:>12}" for a, b in rows) + "\n"


def size_stats(lengths: Sequence[int]) -> AssemblyReport:
    """Size-class fields over contigs longer than 100 bp (and 10 kbp)."""
    ls = [int(x) for x in lengths]
    big = [x for x in ls if x > MIN_LEN]
    huge = [x for x in ls if x > LONG_LEN]
    return AssemblyReport(
        n_contigs_ge_100=len(big),
        sum_ge_100=sum(big),
        n_contigs_ge_10k=len(huge),
        sum_ge_10k=sum(huge),
        longest=max(ls, default=0),
        mean_size=round(sum(big) / len(big), 1) if big else 0.0,
        n50=n50(big),
    )


def _windows(codes: np.ndarray, k: int):
    n = max(len(codes) - k + 1, 0)
    can = np.zeros(n, np.uint64)
    flip = np.zeros(n, np.bool_)
    ok = np.zeros(n, np.bool_)
    window_kmers(codes, 0, len(codes), k, can, flip, ok)
    return can, flip, ok


@dataclass
class Placement:
    strand: int  # +1 or -1
    offset: int
    mismatches: int
    votes: int


class ReferenceIndex:
    """Canonical k-mer index of a linear reference."""

    def __init__(self, reference: str | np.ndarray, k: int):
        self.k = k
        self.ref = reference if isinstance(reference, np.ndarray) else encode(reference)
        can, flip, ok = _windows(self.ref, k)
        pos = np.flatnonzero(ok)
        can, flip = can[pos], flip[pos]
        order = np.argsort(can, kind="stable")
        self.all_keys = can[order]
        self.all_pos = pos[order]
        self.all_flip = flip[order]
        keys, first, counts = np.unique(self.all_keys, return_index=True, return_counts=True)
        once = counts == 1
        self.uniq_keys = keys[once]
        self.uniq_pos = self.all_pos[first[once]]
        self.uniq_flip = self.all_flip[first[once]]
        if len(self.uniq_keys) == 0:
            raise EvaluationError("reference has no unique k-mers to anchor contigs on")

    def __len__(self) -> int:
        return len(self.ref)

    def _offsets(self, i, n, c_flip, r_pos, r_flip):
        same = c_flip == r_flip
        strand = np.where(same, 1, -1)
        offset = np.where(same, r_pos - i, r_pos - (n - i - self.k))
        return strand, offset

    def mismatches(self, codes: np.ndarray, strand: int, offset: int) -> int:
        q = codes if strand > 0 else (3 - codes[::-1])
        n = len(q)
        lo, hi = max(offset, 0), min(offset + n, len(self.ref))
        outside = n - max(hi - lo, 0)
        if hi <= lo:
            return n
        seg = q[lo - offset:hi - offset]
        return int(np.count_nonzero(seg != self.ref[lo:hi])) + outside

    def place(self, contig: str | np.ndarray) -> Placement | None:
        codes = contig if isinstance(contig, np.ndarray) else encode(contig)
        n = len(codes)
        can, flip, ok = _windows(codes, self.k)
        idx = np.flatnonzero(ok)
        if len(idx) == 0:
            return None
        can, flip = can[idx], flip[idx]
        j = np.searchsorted(self.uniq_keys, can)
        j[j >= len(self.uniq_keys)] = 0
        hit = self.uniq_keys[j] == can
        if hit.any():
            strand, offset = self._offsets(idx[hit], n, flip[hit],
                                           self.uniq_pos[j[hit]], self.uniq_flip[j[hit]])
            cands = self._vote(strand, offset)[:1]
        else:
            lo = np.searchsorted(self.all_keys, can, side="left")
            hi = np.searchsorted(self.all_keys, can, side="right")
            ii, rp, rf, cf = [], [], [], []
            for t in np.flatnonzero(hi > lo):
                span = slice(lo[t], min(hi[t], lo[t] + _MAX_OCC))
                m = span.stop - span.start
                ii.append(np.full(m, idx[t]))
                cf.append(np.full(m, flip[t]))
                rp.append(self.all_pos[span])
                rf.append(self.all_flip[span])
            if not ii:
                return None
            strand, offset = self._offsets(np.concatenate(ii), n, np.concatenate(cf),
                                           np.concatenate(rp), np.concatenate(rf))
            cands = self._vote(strand, offset)[:_MAX_CANDIDATES]
        best = None
        for s, o, v in cands:
            mm = self.mismatches(codes, s, o)
            if best is None or (mm, -v) < (best.mismatches, -best.votes):
                best = Placement(s, o, mm, v)
        return best

    @staticmethod
    def _vote(strand, offset):
        key = np.stack([strand, offset], axis=1)
        uniq, counts = np.unique(key, axis=0, return_counts=True)
        # most votes first; ties broken by (strand, offset) order
        order = np.lexsort((uniq[:, 1], uniq[:, 0], -counts))
        return [(int(uniq[i, 0]), int(uniq[i, 1]), int(counts[i])) for i in order]


def coverage_and_errors(contigs: Sequence[str], reference: str | np.ndarray | ReferenceIndex,
                        k: int = 31) -> tuple[float, tuple[int, int, int], int]:
    """Reference coverage (%), contig counts at or above each error threshold,
    and the number of contigs that could not be placed (counted as erroneous)."""
    index = reference if isinstance(reference, ReferenceIndex) else ReferenceIndex(reference, k)
    covered = np.zeros(len(index), dtype=np.bool_)
    hist = [0] * len(ERROR_THRESHOLDS)
    unplaced = 0
    for seq in contigs:
        if len(seq) <= MIN_LEN:
            continue
        p = index.place(seq)
        if p is None:
            unplaced += 1
            hist = [h + 1 for h in hist]
            continue
        covered[max(p.offset, 0):max(p.offset + len(seq), 0)] = True
        for i, t in enumerate(ERROR_THRESHOLDS):
            if p.mismatches >= t:
                hist[i] += 1
    pct = round(100.0 * np.count_nonzero(covered) / len(index), 4)
    return pct, tuple(hist), unplaced


def evaluate(contigs: Sequence[str], reference=None, k: int = 31) -> AssemblyReport:
    report = size_stats([len(c) for c in contigs])
    if reference is not None:
        pct, hist, unplaced = coverage_and_errors(contigs, reference, k)
        report.coverage_pct = pct
        report.error_hist = hist
        report.unplaced = unplaced
    return report
