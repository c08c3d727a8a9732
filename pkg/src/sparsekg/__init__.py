"""Sparse k-mer graph assembler for short reads."""

from .dense import DenseGraph, build_dense, extract_unitigs
from .evaluate import AssemblyReport, coverage_and_errors, evaluate, n50, size_stats
from .graph import (LEFT, RIGHT, Label, Link, SparseGraph, estimate_dense_bits,
                    estimate_sparse_bits)
from .kmer import (CanonicalKmer, PackedKmer, ReadSet, canonicalize, pack,
                   reverse_complement, unpack)
from .pipeline import AssemblyResult, Contig, GraphParams, assemble
from .seqio import read_sequences, write_contigs
from .simulate import ErrorProfile, random_genome, simulate_reads

__version__ = "0.1.0"
