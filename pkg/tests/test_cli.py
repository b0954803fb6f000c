import itertools
import json
import os
import subprocess
import sys

import pytest

from annealmap.cli import EXIT_BAD_INPUT, EXIT_INVALID_OUTPUT, EXIT_OK, main
from annealmap.csp import dumps_csp, example_csp, loads_csp
from annealmap.embedding import loads_embedding
from annealmap.ising import IsingModel, dumps


@pytest.fixture
def example(tmp_path):
    path = tmp_path / "example.csp"
    path.write_text(dumps_csp(example_csp()))
    return path


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_solve_exact_reports_all_solutions(capsys, example):
    rc, out, _ = run(capsys, "solve", example, "--backend", "exact", "--hardware", "C2", "--format", "tsv",
                     "--reads", 1000)
    assert rc == EXIT_OK
    csp = example_csp()
    brute = {"".join("+" if s > 0 else "-" for s in x)
             for x in itertools.product((-1, 1), repeat=csp.num_vars) if csp.is_satisfied(x)}
    rows = [line.split("\t") for line in out.splitlines() if not line.startswith("#")]
    assert rows[0] == ["assignment", "count", "infeasible", "faulty", "satisfied"]
    assert {r[0] for r in rows[1:]} == brute
    assert all(r[4] == "yes" for r in rows[1:])
    assert f"solutions {len(brute)}" in out


def test_solve_sa_byte_identical(capsys, example, tmp_path):
    outs = []
    for k in range(2):
        samples = tmp_path / f"s{k}.txt"
        rc, out, _ = run(capsys, "solve", example, "--hardware", "C2", "--reads", 50, "--seed", 4,
                         "--samples", samples)
        assert rc == EXIT_OK
        outs.append((out, samples.read_bytes()))
    assert outs[0] == outs[1]


def test_solve_ising_file(capsys, tmp_path):
    path = tmp_path / "pair.ising"
    path.write_text(dumps(IsingModel(2, {}, {(0, 1): -1.0})))
    rc, out, _ = run(capsys, "solve", path, "--backend", "exact", "--format", "tsv")
    assert rc == EXIT_OK and "lowest_energy\t-1" in out


def test_solve_decomposed(capsys, example, tmp_path):
    trace = tmp_path / "trace.tsv"
    rc, out, _ = run(capsys, "solve", example, "--method", "both", "--backend", "exact", "--trace", trace)
    assert rc == EXIT_OK
    assert trace.read_text().strip()


def test_embed_single_constraint(capsys, tmp_path):
    csp = tmp_path / "one.csp"
    csp.write_text("vars a b\ncon ne: a b = +- -+\n")
    out = tmp_path / "emb.txt"
    rc, stats, _ = run(capsys, "embed", csp, "--hardware", "C1", "-o", out, "--format", "tsv")
    assert rc == EXIT_OK
    emb = loads_embedding(out.read_text(), ["a", "b"])
    assert len(emb.scopes) == 1 and all(len(ch) == 1 for ch in emb.chains.values())
    assert "max_chain\t1" in stats and "valid\tyes" in stats


def test_embed_failure_leaves_no_file(capsys, tmp_path):
    csp = tmp_path / "big.csp"
    csp.write_text(dumps_csp(example_csp()))
    out = tmp_path / "emb.txt"
    rc, _, err = run(capsys, "embed", csp, "--hardware", "C1", "-o", out, "--restarts", 1, "--max-iters", 5)
    assert rc == EXIT_INVALID_OUTPUT and not out.exists()
    assert err.startswith("annealmap: error:")


def test_synth_writes_penalties(capsys, tmp_path, example):
    out = tmp_path / "pen.json"
    rc, _, _ = run(capsys, "synth", example, "--graph", "K3,3", "-o", out)
    assert rc == EXIT_OK
    data = json.loads(out.read_text())
    assert [d["constraint"] for d in data] == ["xor_a", "xor_b", "neq"]


def test_unknown_config_key(capsys, tmp_path, example):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"reads": 10, "bogus": 1}))
    rc, _, err = run(capsys, "solve", example, "--config", cfg)
    assert rc == EXIT_BAD_INPUT and "bogus" in err


def test_config_values_and_flag_override(capsys, tmp_path, example):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "solve", "backend": "exact", "hardware": "C2", "format": "tsv"}))
    rc, out, _ = run(capsys, "solve", example, "--config", cfg)
    assert rc == EXIT_OK and out.startswith("# variables")
    rc, out, _ = run(capsys, "solve", example, "--config", cfg, "--format", "text")
    assert rc == EXIT_OK and "\t" not in out
    cfg.write_text(json.dumps({"reads": "many"}))
    assert run(capsys, "solve", example, "--config", cfg)[0] == EXIT_BAD_INPUT


@pytest.mark.parametrize("argv", [
    ["embed", "{csp}", "--hardware", "Z9"],
    ["solve", "{csp}", "--reads", "0"],
    ["solve", "{missing}"],
    ["bench", "xorsat", "--sizes", "a:b"],
])
def test_bad_inputs_exit_nonzero(capsys, example, tmp_path, argv):
    argv = [a.format(csp=example, missing=tmp_path / "nope.csp") for a in argv]
    rc, _, err = run(capsys, *argv, "--format", "tsv")
    assert rc == EXIT_BAD_INPUT and err.startswith("error\t")


def test_malformed_csp_reports_line(capsys, tmp_path):
    bad = tmp_path / "bad.csp"
    bad.write_text("vars a b\ncon x: a c = ++\n")
    rc, _, err = run(capsys, "solve", bad)
    assert rc == EXIT_BAD_INPUT and "line 2" in err


def test_diagnose_c17(capsys, tmp_path):
    obs = tmp_path / "obs.txt"
    obs.write_text("in: 00000\nout: 11\nin: 11111\nout: 00\n")
    out = tmp_path / "report.json"
    rc, text, _ = run(capsys, "diagnose", "c17", "--observations", obs, "--backend", "exact", "--oracle",
                      "-o", out)
    assert rc == EXIT_OK
    reports = json.loads(out.read_text())
    assert len(reports) == 2 and all(r["min_cardinality"] is not None for r in reports)
    assert "Mc_100" in text


def test_diagnose_requires_observations(capsys):
    rc, _, _ = run(capsys, "diagnose", "c17")
    assert rc == EXIT_BAD_INPUT


def test_bench_xorsat_small(capsys, tmp_path):
    out = tmp_path / "bench.tsv"
    argv = ["bench", "xorsat", "--sizes", "6,8", "--instances", 2, "--hardware", "C6", "--format", "tsv", "-o", out]
    assert run(capsys, *argv)[0] == EXIT_OK
    first = out.read_bytes()
    assert run(capsys, *argv)[0] == EXIT_OK
    assert out.read_bytes() == first
    text = first.decode()
    med = text.split("# medians\n")[1].splitlines()
    assert med[0].split("\t") == ["n", "embedded", "instances", "median_qubits", "median_max_chain"]
    assert [r.split("\t")[0] for r in med[1:]] == ["6", "8"]


def test_module_entry_point(example):
    res = subprocess.run([sys.executable, "-m", "annealmap", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("annealmap")
