"""Acceptance criteria, each checked at its stated tolerance.

Every criterion prints one ``criterion <n> PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary.  Criteria 1, 2 and 7 assemble three
million simulated reads from the bundled E. coli K-12 reference and take a few
minutes in total.
"""

import gzip
import json
import time
from pathlib import Path

import numpy as np
import pytest

from _util import contains, every, bubble_tip_graph, record, repeat_free_genome, thread_path
from sparsekg.cli import _report
from sparsekg.dense import build_dense, extract_unitigs
from sparsekg.evaluate import evaluate, n50
from sparsekg.graph import SparseGraph, estimate_dense_bits, estimate_sparse_bits
from sparsekg.kmer import ReadSet, reverse_complement_str, revcomp_bits, unpack, pack
from sparsekg.pipeline import (GraphParams, assemble, branching_sides, compact,
                               extract_contigs, filter_low_coverage_nodes,
                               remove_tips_and_bubbles, remove_weak_links,
                               round1_select_nodes, round2_build_links)
from sparsekg.seqio import write_contigs
from sparsekg.simulate import ErrorProfile, random_genome, simulate_reads, tiling_reads

REFERENCE = Path(__file__).parent / "data" / "ecoli_k12_w3110.fa.gz"
N_READS = 3_000_000
READ_LEN = 100
SEED = 7


@pytest.fixture(scope="module")
def ecoli():
    with gzip.open(REFERENCE, "rt") as fh:
        return "".join(line.strip() for line in fh if not line.startswith(">")).upper()


@pytest.fixture(scope="module")
def noise_free_run(ecoli):
    reads = simulate_reads(ecoli, READ_LEN, N_READS, ErrorProfile(), seed=SEED).reads
    t0 = time.perf_counter()
    res = assemble(reads, GraphParams.noise_free(), threads=1)
    secs = time.perf_counter() - t0
    dense = build_dense(reads, 31)
    yield {"reads": reads, "res": res, "secs": secs, "dense_nodes": dense.node_count(),
           "dense_bits": dense.measured_bits()}


def _outputs(res, tmp: Path, tag: str) -> tuple[bytes, bytes]:
    fasta = tmp / f"{tag}.fa"
    write_contigs(res.contigs, fasta)
    return fasta.read_bytes(), _report(res.contigs, res.counters).to_json().encode()


def test_criterion_1_noise_free_ecoli(ecoli, noise_free_run):
    res = noise_free_run["res"]
    rep = evaluate([c.seq for c in res.contigs], ecoli)
    bits = res.counters["measured_bits"]
    ratio = bits / noise_free_run["dense_bits"]
    checks = {
        "coverage": rep.coverage_pct >= 97.0,
        "n50": rep.n50 >= 14_000,
        "errors": rep.error_hist[0] == 0,
        "memory": ratio <= 0.25,
        "runtime": noise_free_run["secs"] <= 600,
    }
    ok = all(checks.values())
    record(1, "noise-free E. coli", ok,
           f"coverage={rep.coverage_pct:.2f}% (>=97.0) n50={rep.n50} (>=14000) "
           f"E>=1={rep.error_hist[0]} (==0) measured/dense={ratio:.3f} (<=0.25) "
           f"runtime={noise_free_run['secs']:.0f}s (<=600)")
    assert ok, checks


def test_criterion_1_node_budget(noise_free_run):
    """Sparse stores at most about 2/g of the distinct k-mers."""
    sparse = noise_free_run["res"].counters["nodes_selected"]
    dense = noise_free_run["dense_nodes"]
    assert sparse <= 2 * dense / 25
    assert dense >= sparse * 25 / 2
    assert noise_free_run["res"].counters["measured_bits"] <= 0.25 * estimate_dense_bits(dense, 31)


def test_criterion_2_error_mode_ecoli(ecoli):
    sim = simulate_reads(ecoli, READ_LEN, N_READS, ErrorProfile(0.005, 0.02), seed=SEED)
    params = GraphParams(min_node_cov=2, min_link_cov=2)
    res = assemble(sim.reads, params)
    rep = evaluate([c.seq for c in res.contigs], ecoli)
    c = res.counters
    checks = {
        "coverage": rep.coverage_pct >= 94.0,
        "errors": rep.error_hist[2] <= 5,
        "n50": rep.n50 >= 10_000,
    }
    ok = all(checks.values())
    record(2, "error-mode E. coli", ok,
           f"coverage={rep.coverage_pct:.2f}% (>=94.0) E>=5={rep.error_hist[2]} (<=5) "
           f"n50={rep.n50} (>=10000) substitutions={sim.n_errors} "
           f"filtered={c['nodes_filtered']}/{c['nodes_selected']} nodes")
    assert ok, checks
    assert sim.n_errors > 2_000_000


def test_criterion_3_memory_formulas():
    s1 = estimate_dense_bits(4_000_000, 31)
    s2 = estimate_sparse_bits(4_000_000, 31, 25, 64)
    ratio = s2 / s1
    ok = s1 == 280_000_000 and s2 == 36_160_000 and abs(ratio - 0.1291) <= 1e-4
    record(3, "memory formulas", ok, f"S1={s1} S2={s2} ratio={ratio:.4f} (0.1291+-0.0001)")
    assert ok


def _covered(genome: str, contigs) -> np.ndarray:
    rc = reverse_complement_str(genome)
    mask = np.zeros(len(genome), bool)
    for s in contigs:
        i = genome.find(s)
        if i < 0:
            j = rc.find(s)
            i = len(genome) - j - len(s) if j >= 0 else -1
        if i >= 0:
            mask[i:i + len(s)] = True
    return mask


def test_criterion_4_oracle_equivalence():
    rng = np.random.default_rng(4)
    worst = 0.0
    failures = []
    for case in range(50):
        length = int(rng.integers(5_000, 20_001))
        genome = repeat_free_genome(length, 1000 + case)
        reads = tiling_reads(genome, READ_LEN, 5)
        sparse = [c.seq for c in assemble(reads, GraphParams.noise_free()).contigs]
        dense = [c.seq for c in extract_unitigs(build_dense(reads, 31), 100)]
        diff = np.count_nonzero(_covered(genome, sparse) ^ _covered(genome, dense)) / length
        worst = max(worst, diff)
        if diff >= 0.01 or not all(contains(genome, s) for s in sparse):
            failures.append(case)
    ok = not failures
    record(4, "oracle equivalence", ok,
           f"50 genomes, worst covered-position difference {100 * worst:.3f}% (<1%), "
           f"failing cases {failures}")
    assert ok


def test_criterion_5_bubbles_and_tips():
    problems = []
    graph, backbone, _ = bubble_tip_graph()
    tips, bubbles = remove_tips_and_bubbles(graph, 40)
    chain = extract_contigs(graph)
    if (tips, bubbles) != (1, 1) or branching_sides(graph) or len(chain) != 1 \
            or chain[0].seq not in (backbone, reverse_complement_str(backbone)):
        problems.append("bubble_tip")
    for seed in range(10):
        graph, backbone, alt = bubble_tip_graph(main=8, minor=2, seed=seed)
        remove_tips_and_bubbles(graph, 40)
        [c] = extract_contigs(graph)
        if c.seq not in (backbone, reverse_complement_str(backbone)):
            problems.append(f"variant-graph-{seed}")
    for seed in range(3):
        hap = repeat_free_genome(50_000, 50 + seed)
        m = 25_000
        var = hap[:m] + {"A": "G", "C": "T", "G": "A", "T": "C"}[hap[m]] + hap[m + 1:]
        reads = ReadSet.concat([simulate_reads(hap, 100, 20_000, seed=seed).reads,
                                simulate_reads(var, 100, 5_000, seed=seed + 9).reads])
        res = assemble(reads, GraphParams())
        if not all(contains(hap, c.seq) for c in res.contigs):
            problems.append(f"variant-reads-{seed}")
    for seed in range(20):
        genome = random_genome(2_000, 500 + seed)
        graph = SparseGraph(21, 7)
        thread_path(graph, genome, every(7, len(genome), 21), count=3)
        if branching_sides(graph):
            continue
        before = graph.dump()
        if remove_tips_and_bubbles(graph, 56) != (0, 0) or graph.dump() != before:
            problems.append(f"fixed-point-{seed}")
    ok = not problems
    record(5, "bubble/tip suite", ok,
           "chain+bubble+tip -> single chain; 20% variant removed in 13 cases; "
           f"branch-free graphs unchanged; problems {problems}")
    assert ok


def test_criterion_6_invariants():
    problems = []
    for k in (15, 21, 31):
        rng = np.random.default_rng(k)
        codes = rng.integers(0, 4, size=(100_000, k), dtype=np.uint64)
        weights = np.uint64(4) ** np.arange(k - 1, -1, -1, dtype=np.uint64)
        bits = (codes * weights).sum(axis=1, dtype=np.uint64)
        rc = np.array([revcomp_bits(b, k) for b in bits], np.uint64)
        back = np.array([revcomp_bits(b, k) for b in rc], np.uint64)
        text_ok = all(pack(unpack(int(b), k)) == int(b) for b in bits)
        can = np.minimum(bits, rc)
        if not (text_ok and np.array_equal(back, bits) and not np.any(rc == bits)
                and np.array_equal(np.minimum(can, np.array([revcomp_bits(c, k) for c in can],
                                                            np.uint64)), can)):
            problems.append(f"codec-k{k}")
    for seed in range(5):
        genome = random_genome(8_000, 60 + seed)
        reads = simulate_reads(genome, 100, 4_000, ErrorProfile(0.005, 0.02), seed=seed).reads
        params = GraphParams(k=21, g=9)
        g = round1_select_nodes(reads, params)
        filter_low_coverage_nodes(g, params.min_node_cov)
        g = compact(g)
        stages = [lambda: round2_build_links(reads, g, params),
                  lambda: remove_weak_links(g, params.min_link_cov, params.min_node_cov),
                  lambda: remove_tips_and_bubbles(g, params.tip_depth_limit),
                  lambda: extract_contigs(g, params)]
        for stage in stages:
            stage()
            try:
                g.check_invariants()
            except AssertionError as exc:
                problems.append(f"links-{seed}: {exc}")
    toy = assemble(ReadSet.from_strings(["AAACCCGGG"]), GraphParams.noise_free(k=3, g=3))
    toy.graph.check_invariants()
    cases = {(5000, 4000, 3000, 2000, 1000): 4000, (7,): 7, (): 0, (1, 1, 1, 10): 10}
    if any(n50(list(x)) != want for x, want in cases.items()):
        problems.append("n50")
    for seed in range(5):
        genome = random_genome(30_000, 70 + seed)
        reads = simulate_reads(genome, 100, 15_000, seed=seed).reads
        params = GraphParams.noise_free()
        g = compact(round1_select_nodes(reads, params))
        try:
            round2_build_links(reads, g, params, strict_gap=True)
        except AssertionError:
            problems.append(f"g-gap-{seed}")
    ok = not problems
    record(6, "invariant suites", ok,
           "codec 1e5 k-mers x k in {15,21,31}; mirror/label after each stage; "
           f"N50 cases; strict g-gap in round 2; problems {problems}")
    assert ok


def test_criterion_7_thread_determinism(noise_free_run, tmp_path):
    one = _outputs(noise_free_run["res"], tmp_path, "t1")
    res8 = assemble(noise_free_run["reads"], GraphParams.noise_free(), threads=8)
    eight = _outputs(res8, tmp_path, "t8")
    ok = one == eight
    stats = json.loads(one[1])
    record(7, "thread determinism", ok,
           f"threads 1 vs 8: FASTA {'identical' if one[0] == eight[0] else 'differs'} "
           f"({len(one[0])} bytes, {stats['contigs']} contigs), stats JSON "
           f"{'identical' if one[1] == eight[1] else 'differs'}")
    assert ok
