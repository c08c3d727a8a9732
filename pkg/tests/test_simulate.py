import numpy as np
import pytest

from sparsekg.kmer import encode, reverse_complement_str
from sparsekg.simulate import (ErrorProfile, random_genome, simulate_reads,
                               tiling_reads)

PAPER_PROFILE = ErrorProfile(0.005, 0.02)


class TestGenome:
    def test_seeded(self):
        assert random_genome(100, 1) == random_genome(100, 1)
        assert random_genome(100, 1) != random_genome(100, 2)

    def test_single_base(self):
        assert random_genome(1, 5) in "ACGT"

    def test_base_frequencies(self):
        codes = encode(random_genome(1_000_000, 11))
        freq = np.bincount(codes, minlength=4) / len(codes)
        assert np.all(np.abs(freq - 0.25) < 0.01)

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            random_genome(0, 1)


class TestProfile:
    def test_linear_rates(self):
        r = PAPER_PROFILE.rates(100)
        assert r[0] == pytest.approx(0.005) and r[-1] == pytest.approx(0.02)
        assert np.allclose(np.diff(r), np.diff(r)[0])
        assert r.mean() == pytest.approx(0.0125)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ErrorProfile(-0.1, 0.2)
        with pytest.raises(ValueError):
            ErrorProfile(0.1, 1.5)


class TestReads:
    def test_error_free_reads_are_substrings(self):
        genome = random_genome(5000, 3)
        rc = reverse_complement_str(genome)
        sim = simulate_reads(genome, 100, 500, seed=3)
        assert sim.n_errors == 0
        for read, start, fw in zip(sim.reads, sim.starts, sim.forward):
            window = genome[start:start + 100]
            assert read == (window if fw else reverse_complement_str(window))
            assert read in genome or read in rc

    def test_seeded(self):
        genome = random_genome(5000, 3)
        a = simulate_reads(genome, 100, 200, PAPER_PROFILE, seed=9)
        b = simulate_reads(genome, 100, 200, PAPER_PROFILE, seed=9)
        assert list(a.reads) == list(b.reads)

    def test_too_long(self):
        with pytest.raises(ValueError):
            simulate_reads("ACGT", 5, 1)

    def test_errors_are_substitutions(self):
        genome = random_genome(5000, 4)
        sim = simulate_reads(genome, 100, 2000, ErrorProfile(0.05, 0.05), seed=4)
        diffs = 0
        for read, start, fw in zip(sim.reads, sim.starts, sim.forward):
            window = genome[start:start + 100]
            truth = window if fw else reverse_complement_str(window)
            assert len(read) == 100
            diffs += sum(a != b for a, b in zip(read, truth))
        assert diffs == sim.n_errors

    def test_mean_errors_and_strand_balance(self):
        genome = random_genome(100_000, 5)
        sim = simulate_reads(genome, 100, 200_000, PAPER_PROFILE, seed=5)
        assert sim.n_errors / len(sim) == pytest.approx(1.25, abs=0.02)
        assert abs(sim.forward.mean() - 0.5) < 0.01
        # 3M reads of this profile carry about 3.75M substitutions
        assert sim.n_errors / len(sim) * 3_000_000 > 2_000_000

    def test_error_slope(self):
        genome = random_genome(100_000, 6)
        sim = simulate_reads(genome, 100, 1_000_000, PAPER_PROFILE, seed=6)
        ratio = sim.errors_by_position[99] / sim.errors_by_position[0]
        assert ratio == pytest.approx(4.0, rel=0.10)

    def test_nominal_coverage(self):
        assert 3_000_000 * 100 / 4_640_000 == pytest.approx(65, abs=1)


def test_tiling_covers_genome():
    genome = random_genome(1000, 8)
    reads = tiling_reads(genome, 100, 30)
    covered = np.zeros(len(genome), bool)
    for r in reads:
        i = genome.find(r)
        if i < 0:
            i = genome.find(reverse_complement_str(r))
        assert i >= 0
        covered[i:i + 100] = True
    assert covered.all()
