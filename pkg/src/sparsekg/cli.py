"""Command line entry point: assemble, simulate, evaluate, estimate-mem, oracle."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .graph import MAX_G, estimate_dense_bits, estimate_sparse_bits
from .kmer import MAX_K, MIN_K, decode

log = logging.getLogger("sparsekg")


def _kmer_len(text: str) -> int:
    k = int(text)
    if k % 2 == 0 or not MIN_K <= k <= MAX_K:
        raise argparse.ArgumentTypeError(f"k must be odd and in [{MIN_K}, {MAX_K}], got {k}")
    return k


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _non_negative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"error rate must be in [0, 1], got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsekg", description=(
        "Sparse k-mer graph assembler for short reads."))
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("assemble", help="assemble reads into contigs")
    a.add_argument("-i", "--input", nargs="+", required=True, help="FASTA/FASTQ read files")
    a.add_argument("-o", "--output", required=True, help="contig FASTA")
    a.add_argument("-k", type=_kmer_len, default=31)
    a.add_argument("-g", type=_positive, default=25, help="skip distance")
    a.add_argument("--min-node-cov", type=_non_negative, default=None,
                   help="default 2, or 0 with --noise-free")
    a.add_argument("--min-link-cov", type=_non_negative, default=None,
                   help="default 2, or 1 with --noise-free")
    a.add_argument("--tip-depth", type=_non_negative, default=None,
                   help="bases; default 2*(k+g), or 0 with --noise-free")
    a.add_argument("--noise-free", action="store_true",
                   help="disable coverage thresholds and tip/bubble removal")
    a.add_argument("--min-contig-len", type=_non_negative, default=100)
    a.add_argument("--threads", type=_positive, default=1)
    a.add_argument("--stats-json", help="write flat JSON statistics here")

    s = sub.add_parser("simulate", help="simulate shotgun reads")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--genome-len", type=_positive, help="random genome of this length")
    src.add_argument("--genome", help="FASTA reference (first record is used)")
    s.add_argument("--reads", type=_positive, required=True)
    s.add_argument("--read-len", type=_positive, default=100)
    s.add_argument("--err5", type=_rate, default=0.0, help="error rate at the 5' end")
    s.add_argument("--err3", type=_rate, default=0.0, help="error rate at the 3' end")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True,
                   help="prefix; writes <prefix>.reads.fa and <prefix>.genome.fa")

    e = sub.add_parser("evaluate", help="contig statistics against a reference")
    e.add_argument("--contigs", required=True)
    e.add_argument("--reference", help="reference FASTA (records are concatenated)")
    e.add_argument("-k", type=_kmer_len, default=31, help="anchor k-mer length")
    e.add_argument("--stats-json")

    m = sub.add_parser("estimate-mem", help="dense and sparse memory formulas")
    m.add_argument("--kmers", type=_non_negative, required=True)
    m.add_argument("-k", type=_kmer_len, default=31)
    m.add_argument("-g", type=_positive, default=25)
    m.add_argument("--ptr-bits", type=_non_negative, default=64)

    o = sub.add_parser("oracle", help="dense de Bruijn unitigs for small inputs")
    o.add_argument("-i", "--input", nargs="+", required=True)
    o.add_argument("-o", "--output", required=True)
    o.add_argument("-k", type=_kmer_len, default=31)
    o.add_argument("--min-contig-len", type=_non_negative, default=100)
    o.add_argument("--stats-json")
    return p


def _check_inputs(parser, paths) -> None:
    for path in paths:
        if not Path(path).is_file():
            parser.error(f"input not found: {path}")


def _write_stats(report, path) -> None:
    text = report.to_json()
    if path:
        Path(path).write_text(text + "\n")
    sys.stdout.write(report.to_table())


def _report(contigs, counters: dict):
    from .evaluate import size_stats
    report = size_stats([len(c.seq) for c in contigs])
    report.extra.update(counters)
    bits = counters.get("measured_bits")
    if bits is not None:
        report.extra["memory_peak_mb"] = round(bits / 8 / 1e6, 3)
    return report


def cmd_assemble(args) -> None:
    from .pipeline import GraphParams, assemble
    from .seqio import read_readset, write_contigs

    kw = {"k": args.k, "g": args.g, "min_contig_len": args.min_contig_len}
    for name, value in (("min_node_cov", args.min_node_cov),
                        ("min_link_cov", args.min_link_cov),
                        ("tip_depth_limit", args.tip_depth)):
        if value is not None:
            kw[name] = value
    params = GraphParams.noise_free(**kw) if args.noise_free else GraphParams(**kw)
    reads = read_readset(args.input)
    res = assemble(reads, params, threads=args.threads)
    write_contigs(res.contigs, args.output)
    _write_stats(_report(res.contigs, res.counters), args.stats_json)


def cmd_simulate(args) -> None:
    from .kmer import encode
    from .seqio import read_sequences, write_fasta
    from .simulate import ErrorProfile, random_genome_codes, simulate_reads

    if args.genome:
        seqs = list(read_sequences(args.genome))
        if not seqs:
            raise ValueError(f"no sequence in {args.genome}")
        genome = encode(seqs[0])
        if (genome > 3).any():
            raise ValueError("reference contains non-ACGT bases")
    else:
        genome = random_genome_codes(args.genome_len, args.seed)
    log.info("stage=params command=simulate genome_len=%d reads=%d read_len=%d "
             "err5=%g err3=%g seed=%d", len(genome), args.reads, args.read_len,
             args.err5, args.err3, args.seed)
    sim = simulate_reads(genome, args.read_len, args.reads,
                         ErrorProfile(args.err5, args.err3), seed=args.seed)
    prefix = args.output
    write_fasta(((f"r{i} start={int(sim.starts[i])} strand={'+' if sim.forward[i] else '-'}",
                  sim.reads[i]) for i in range(len(sim))), f"{prefix}.reads.fa")
    write_fasta([("genome", decode(genome))], f"{prefix}.genome.fa")
    log.info("stage=simulate reads=%d errors=%d", len(sim), sim.n_errors)


def cmd_evaluate(args) -> None:
    from .evaluate import evaluate
    from .seqio import read_sequences

    contigs = list(read_sequences(args.contigs))
    reference = "".join(read_sequences(args.reference)) if args.reference else None
    log.info("stage=params command=evaluate contigs=%d reference=%s k=%d",
             len(contigs), args.reference, args.k)
    _write_stats(evaluate(contigs, reference, k=args.k), args.stats_json)


def cmd_estimate(args) -> None:
    s1 = estimate_dense_bits(args.kmers, args.k)
    s2 = estimate_sparse_bits(args.kmers, args.k, args.g, args.ptr_bits)
    ratio = s2 / s1 if s1 else float("nan")
    print(f"S1={s1} bits")
    print(f"S2={s2} bits")
    print(f"ratio={ratio:.4f}")


def cmd_oracle(args) -> None:
    from .dense import build_dense, extract_unitigs
    from .seqio import read_readset, write_contigs

    log.info("stage=params command=oracle k=%d min_contig_len=%d",
             args.k, args.min_contig_len)
    graph = build_dense(read_readset(args.input), args.k)
    contigs = extract_unitigs(graph, args.min_contig_len)
    write_contigs(contigs, args.output)
    counters = {"nodes_final": graph.node_count(), "contigs": len(contigs),
                "measured_bits": graph.measured_bits()}
    _write_stats(_report(contigs, counters), args.stats_json)


COMMANDS = {
    "assemble": cmd_assemble,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "estimate-mem": cmd_estimate,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "assemble" and args.g > min(args.k, MAX_G):
        parser.error(f"g must be in [1, {min(args.k, MAX_G)}] for k={args.k}, got {args.g}")
    _check_inputs(parser, getattr(args, "input", None) or [])
    for name in ("contigs", "reference", "genome"):
        if getattr(args, name, None):
            _check_inputs(parser, [getattr(args, name)])
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"sparsekg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
