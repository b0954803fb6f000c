"""Divide-and-concur success rate on random planted CSPs, exact and SA oracles.

    python scripts/dc_success.py --n 20 --m 16 --regions 3 --instances 50
"""
import argparse
import sys

from annealmap.cli import main


def parse(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--regions", type=int, default=3)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    return p.parse_args(argv)


if __name__ == "__main__":
    a = parse()
    argv = ["bench", "dc", "--n", str(a.n), "--m", str(a.m), "--regions", str(a.regions),
            "--instances", str(a.instances), "--max-iters", str(a.max_iters), "--threads", str(a.threads),
            "--seed", str(a.seed), "--format", "tsv"]
    if a.output:
        argv += ["-o", a.output]
    sys.exit(main(argv))
