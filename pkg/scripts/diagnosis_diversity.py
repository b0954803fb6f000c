"""Ground-state diversity of direct SA fault diagnosis.

For each seeded observation: size of the min-fault set, samples drawn,
expected samples to the first and to all diagnoses, and expected coverage
M_c(N) for N in 10, 100, 1000.

    python scripts/diagnosis_diversity.py --circuit adder4 --instances 20
"""
import argparse
import sys

from annealmap.cli import main


def parse(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--circuit", default="adder4", help=".isc path or bundled name")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--reads", type=int, default=1000, help="samples per min-fault diagnosis")
    p.add_argument("--sweeps", type=int, default=300)
    p.add_argument("--hardware", default="C12")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output", default=None)
    return p.parse_args(argv)


if __name__ == "__main__":
    a = parse()
    argv = ["bench", "diversity", "--circuit", a.circuit, "--instances", str(a.instances), "--reads", str(a.reads),
            "--sweeps", str(a.sweeps), "--hardware", a.hardware, "--threads", str(a.threads),
            "--seed", str(a.seed), "--format", "tsv"]
    if a.output:
        argv += ["-o", a.output]
    sys.exit(main(argv))
