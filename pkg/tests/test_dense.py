import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _util import contains, repeat_free_genome
from sparsekg.dense import NODE_RECORD_BITS, build_dense, extract_unitigs
from sparsekg.graph import estimate_dense_bits
from sparsekg.kmer import ReadSet, reverse_complement_str
from sparsekg.simulate import random_genome, simulate_reads, tiling_reads


def test_single_read_nodes_and_edges():
    d = build_dense(ReadSet.from_strings(["AAACC"]), 3)
    assert d.node_count() == 3
    assert all(km in d for km in ("AAA", "AAC", "ACC"))
    assert d.successors("AAA") == "C"
    assert d.predecessors("AAC") == "A"
    assert d.successors("ACC") == ""
    # the same adjacency seen from the other strand
    assert d.successors("GGT") == "T"
    assert d.dump() == "AAA 1 R,C,1\nAAC 1 L,T,1 R,C,1\nACC 1 L,T,1\n"


def test_flipped_reads_give_same_graph():
    fw = build_dense(ReadSet.from_strings(["ACGTTGCA"]), 5)
    rc = build_dense(ReadSet.from_strings([reverse_complement_str("ACGTTGCA")]), 5)
    assert fw.dump() == rc.dump()


def test_n_breaks_adjacency():
    d = build_dense(ReadSet.from_strings(["AAANCCC"]), 3)
    assert d.successors("AAA") == "" and d.predecessors("CCC") == ""


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_distinct_count_matches_genome(seed):
    genome = random_genome(2000, seed)
    d = build_dense(tiling_reads(genome, 60, 5), 15)
    want = {min(genome[i:i + 15], reverse_complement_str(genome[i:i + 15]))
            for i in range(len(genome) - 14)}
    assert d.node_count() == len(want)


def test_edge_bits_reflect_observed_neighbors():
    genome = random_genome(3000, 3)
    reads = simulate_reads(genome, 50, 300, seed=3).reads
    d = build_dense(reads, 11)
    for read in list(reads)[:50]:
        for i in range(len(read) - 11):
            assert read[i + 11] in d.successors(read[i:i + 11])
            assert read[i] in d.predecessors(read[i + 1:i + 12])


def test_growth():
    genome = random_genome(50_000, 4)
    d = build_dense(tiling_reads(genome, 100, 50), 21)
    assert d.node_count() == len({min(genome[i:i + 21], reverse_complement_str(genome[i:i + 21]))
                                   for i in range(len(genome) - 20)})


def test_measured_bits():
    d = build_dense(tiling_reads(random_genome(5000, 1), 100, 10), 31)
    assert d.measured_bits() == d.node_count() * NODE_RECORD_BITS
    est = estimate_dense_bits(d.node_count(), 31)
    assert est <= d.measured_bits() <= est * 72 / 70


class TestUnitigs:
    def test_single_read(self):
        read = repeat_free_genome(80, 0, k=15)
        [u] = extract_unitigs(build_dense(ReadSet.from_strings([read]), 15))
        assert u.seq in (read, reverse_complement_str(read))
        assert u.n_nodes == 80 - 14

    def test_repeat_breaks(self):
        a, r, b, c = (random_genome(n, s) for n, s in ((300, 1), (40, 2), (300, 3), (300, 4)))
        genome = a + r + b + r + c
        us = extract_unitigs(build_dense(tiling_reads(genome, 100, 1), 21))
        seqs = [u.seq for u in us]
        assert any(s in (r, reverse_complement_str(r)) for s in seqs)
        assert all(contains(genome, s) for s in seqs)
        assert not any(contains(s, r) and len(s) > len(r) + 21 for s in seqs)

    @pytest.mark.parametrize("seed", range(5))
    def test_repeat_free_genome_single_unitig(self, seed):
        genome = repeat_free_genome(10_000, seed)
        [u] = extract_unitigs(build_dense(tiling_reads(genome, 100, 7), 31))
        assert u.seq in (genome, reverse_complement_str(genome))

    def test_deterministic_and_canonical(self):
        reads = simulate_reads(random_genome(20_000, 5), 100, 5000, seed=5).reads
        a = extract_unitigs(build_dense(reads, 21))
        b = extract_unitigs(build_dense(reads, 21))
        assert [u.seq for u in a] == [u.seq for u in b]
        assert all(u.seq <= reverse_complement_str(u.seq) for u in a)

    def test_min_len_and_empty(self):
        assert extract_unitigs(build_dense(ReadSet.from_strings([]), 15)) == []
        read = random_genome(50, 6)
        assert extract_unitigs(build_dense(ReadSet.from_strings([read]), 15), min_len=51) == []
