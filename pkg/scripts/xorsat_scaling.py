"""Qubit count and longest chain of local embeddings of random XOR-3-SAT.

Writes a per-instance table and per-size medians (plot-ready TSV).

    python scripts/xorsat_scaling.py --sizes 9:30:3 --instances 50 -o xorsat.tsv
"""
import argparse
import sys

from annealmap.cli import main


def parse(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="9:30:3")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--hardware", default="C12")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    return p.parse_args(argv)


if __name__ == "__main__":
    a = parse()
    argv = ["bench", "xorsat", "--sizes", a.sizes, "--instances", str(a.instances), "--hardware", a.hardware,
            "--threads", str(a.threads), "--seed", str(a.seed), "--format", "tsv"]
    if a.output:
        argv += ["-o", a.output]
    sys.exit(main(argv))
