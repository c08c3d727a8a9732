"""FASTA/FASTQ reading and contig FASTA writing."""

from __future__ import annotations

import os
from typing import Iterable, Iterator, Sequence

from .kmer import ReadSet

WRAP = 80


class FormatError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


def _fasta(fh, path) -> Iterator[str]:
    parts: list[str] | None = None
    for n, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if parts is not None:
                yield "".join(parts).upper()
            parts = []
        elif parts is None:
            raise FormatError(path, n, "sequence before first '>' header")
        else:
            parts.append(line)
    if parts is not None:
        yield "".join(parts).upper()


def _fastq(fh, path) -> Iterator[str]:
    lines = (ln.rstrip("\r\n") for ln in fh)
    n = 0
    for head in lines:
        n += 1
        if not head.strip():
            continue
        if not head.startswith("@"):
            raise FormatError(path, n, "expected '@' record header")
        rec = [next(lines, None) for _ in range(3)]
        if rec[2] is None:
            raise FormatError(path, n, "truncated FASTQ record")
        seq, plus, qual = rec
        if not plus.startswith("+"):
            raise FormatError(path, n + 2, "expected '+' separator line")
        if len(qual) != len(seq):
            raise FormatError(path, n + 3, "quality length differs from sequence length")
        n += 3
        yield seq.strip().upper()


def read_sequences(paths: str | os.PathLike | Sequence[str | os.PathLike]) -> Iterator[str]:
    """Sequences from one or more FASTA or FASTQ files, in file order.  The
    format is chosen per file from its first non-blank character."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    for path in paths:
        with open(path) as fh:
            first = ""
            for line in fh:
                if line.strip():
                    first = line.lstrip()[0]
                    break
            if not first:
                continue
            fh.seek(0)
            if first == ">":
                yield from _fasta(fh, path)
            elif first == "@":
                yield from _fastq(fh, path)
            else:
                raise FormatError(path, 1, "neither FASTA ('>') nor FASTQ ('@')")


def read_readset(paths) -> ReadSet:
    return ReadSet.from_strings(read_sequences(paths))


def format_record(header: str, seq: str) -> str:
    body = "\n".join(seq[i:i + WRAP] for i in range(0, len(seq), WRAP))
    return f">{header}\n{body}\n"


def write_fasta(records: Iterable[tuple[str, str]], path) -> None:
    with open(path, "w") as fh:
        for header, seq in records:
            fh.write(format_record(header, seq))


def write_contigs(contigs, path) -> None:
    """Contigs as 80-column FASTA with ``contig_<i> len=<bp> cov=<x>`` headers."""
    write_fasta(((f"contig_{i} len={len(c.seq)} cov={c.coverage:.1f}", c.seq)
                 for i, c in enumerate(contigs)), path)
