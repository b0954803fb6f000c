"""Command-line front end: ``annealmap {synth,embed,solve,diagnose,bench}``.

Machine-readable outputs are written atomically and depend only on the
inputs and seeds. Options may also come from a JSON config file (keys are the
long option names with dashes replaced by underscores); flags given on the
command line win. Exit status is 0 on success, 2 on invalid input or config
and 1 when a produced artifact fails validation.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import statistics
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import networkx as nx
import numpy as np

from . import __version__
from .compile import compile_csp, csp_penalties, embed_csp, embed_problems
from .csp import Csp, CspError, dumps_csp, loads_csp, random_planted_csp, random_xorsat
from .decomposition import (
    DcParams,
    GbpParams,
    dc_solve,
    exact_oracle,
    exact_region_sampler,
    gbp_solve,
    partition_regions,
    sa_oracle,
    sa_region_sampler,
)
from .embedding import EmbeddingError, RrrParams, dumps_embedding, validate_embedding
from .ising import HardwareGraph, IsingModel, ModelError, chimera_graph, loads
from .penalty import PenaltyCache, PenaltyError, best_penalty, verify_penalty
from .samplers import SampleSet, Schedule, exact_ground_states, exact_sample, majority_vote_decode, sa_sample

EXIT_OK, EXIT_INVALID_OUTPUT, EXIT_BAD_INPUT = 0, 1, 2


class ConfigError(ValueError):
    pass


class ValidationFailure(RuntimeError):
    pass


# -- output helpers -------------------------------------------------------


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".annealmap-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def table(header: Sequence[str], rows: Sequence[Sequence[Any]], fmt: str) -> str:
    cells = [[_cell(v) for v in r] for r in rows]
    if fmt == "tsv":
        return "\n".join("\t".join(r) for r in [list(header)] + cells) + "\n"
    widths = [max(len(str(h)), *(len(r[k]) for r in cells)) if cells else len(str(h))
              for k, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip()]
    for r in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if v != v:
            return "nan"
        return f"{v:.6g}"
    return str(v)


# -- input parsing --------------------------------------------------------

_CHIMERA = re.compile(r"^C(\d+)(?:x(\d+))?(?::(\d+))?$")


def parse_hardware(spec: str, dead: Sequence[int] = ()) -> HardwareGraph:
    """``C<rows>[x<cols>][:<shore>]``, e.g. ``C12`` or ``C2x3:4``."""
    m = _CHIMERA.match(spec.strip())
    if not m:
        raise ConfigError(f"bad hardware spec {spec!r}; expected C<rows>[x<cols>][:<shore>]")
    rows = int(m.group(1))
    cols = int(m.group(2)) if m.group(2) else rows
    shore = int(m.group(3)) if m.group(3) else 4
    if rows < 1 or cols < 1 or shore < 1:
        raise ConfigError(f"hardware dimensions must be positive in {spec!r}")
    return chimera_graph(rows, cols, shore, dead)


def parse_graph(spec: str) -> nx.Graph:
    """Small penalty graph: ``K<n>``, ``K<a>,<b>``, ``path<n>``, ``cycle<n>`` or a Chimera spec."""
    s = spec.strip()
    if m := re.fullmatch(r"K(\d+),(\d+)", s):
        return nx.complete_bipartite_graph(int(m.group(1)), int(m.group(2)))
    if m := re.fullmatch(r"K(\d+)", s):
        return nx.complete_graph(int(m.group(1)))
    if m := re.fullmatch(r"path(\d+)", s):
        return nx.path_graph(int(m.group(1)))
    if m := re.fullmatch(r"cycle(\d+)", s):
        return nx.cycle_graph(int(m.group(1)))
    if _CHIMERA.match(s):
        hw = parse_hardware(s)
        g = nx.Graph()
        g.add_nodes_from(hw.vertices())
        g.add_edges_from(hw.edges())
        return nx.convert_node_labels_to_integers(g, ordering="sorted")
    raise ConfigError(f"bad graph spec {spec!r}")


def read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from e


def read_csp(path: str) -> Csp:
    csp = loads_csp(read_text(path))
    if not csp.constraints:
        raise CspError(f"{path}: no constraints")
    return csp


def read_dead(spec: str | None) -> list[int]:
    if not spec:
        return []
    try:
        return [int(t) for t in spec.replace(",", " ").split()]
    except ValueError as e:
        raise ConfigError(f"bad dead-qubit list {spec!r}") from e


def _penalties(csp: Csp, args) -> list:
    cache = PenaltyCache(args.penalty_cache) if args.penalty_cache else PenaltyCache()
    pens = csp_penalties(csp, cache, args.target_gap)
    cache.save()
    return pens


# -- commands -------------------------------------------------------------


def cmd_synth(args) -> int:
    csp = read_csp(args.constraints)
    graph = parse_graph(args.graph) if args.graph else None
    cache = PenaltyCache(args.penalty_cache) if args.penalty_cache else PenaltyCache()
    out, rows = [], []
    for k, c in enumerate(csp.constraints):
        if graph is not None:
            pm = best_penalty(c.feasible, graph, c.faulty or None, args.fault_level)
        else:
            pm = csp_penalties(Csp(csp.variables, (c,)), cache, args.target_gap, args.fault_level)[0]
        rep = verify_penalty(pm, c.feasible, c.faulty or None)
        if not (rep.gap == pm.gap or abs(rep.gap - pm.gap) <= 1e-6):
            raise ValidationFailure(f"constraint {c.name or k}: certified gap {rep.gap} differs from {pm.gap}")
        name = c.name or f"c{k}"
        out.append({"constraint": name, "scope": [csp.variables[v] for v in c.scope], "penalty": pm.to_json()})
        rows.append([name, c.arity, pm.placement.num_vertices, len(pm.placement.ancillas), pm.gap,
                     "-" if pm.fault_level is None else pm.fault_level])
    cache.save()
    emit(args.output, json.dumps(out, indent=1, sort_keys=True) + "\n")
    if args.output not in (None, "-"):
        sys.stdout.write(table(["constraint", "vars", "qubits", "ancillas", "gap", "fault_level"], rows, args.format))
    return EXIT_OK


def cmd_embed(args) -> int:
    csp = read_csp(args.csp)
    hw = parse_hardware(args.hardware, read_dead(args.dead))
    pens = _penalties(csp, args)
    params = RrrParams(args.alpha, max_iters=args.max_iters, seed=args.seed)
    _, res = embed_csp(csp, hw, pens, params, restarts=args.restarts)
    emb = res.embedding
    rep = validate_embedding(hw, emb, [p.edges for p in embed_problems(hw, csp, pens)])
    if not rep.ok:
        raise ValidationFailure("; ".join(rep.violations))
    emit(args.output, dumps_embedding(emb, csp.variables))
    rows = [["constraints", len(csp.constraints)], ["variables", csp.num_vars], ["qubits", rep.total_qubits],
            ["max_chain", rep.max_chain], ["mean_chain", rep.mean_chain], ["iterations", res.iterations],
            ["valid", rep.ok]]
    stats = table(["stat", "value"], rows, args.format)
    if args.verbose:
        stats += table(["iteration", "max_multiplicity"], list(enumerate(res.trace, 1)), args.format)
    (sys.stderr if args.output in (None, "-") else sys.stdout).write(stats)
    return EXIT_OK


def _solution_report(csp: Csp, found: dict, total: int, fmt: str) -> str:
    rows = []
    for x, n in sorted(found.items(), key=lambda kv: (-kv[1], kv[0])):
        bad, faulty = csp.counts(x)
        rows.append(["".join("+" if s > 0 else "-" for s in x), n, bad, faulty, bad == 0 and faulty == 0])
    head = table(["assignment", "count", "infeasible", "faulty", "satisfied"], rows, fmt)
    sat = sum(1 for r in rows if r[-1])
    return f"# variables {' '.join(csp.variables)}\n# samples {total} distinct {len(rows)} solutions {sat}\n" + head


def _solve_ising(model: IsingModel, args) -> int:
    if args.method != "direct":
        raise ConfigError("Ising inputs only support --method direct")
    if args.backend == "exact":
        ss = exact_sample(model, args.reads, args.seed)
    else:
        ss = sa_sample(model, Schedule(args.sweeps), args.reads, args.seed)
    if args.samples:
        write_atomic(args.samples, ss.to_text())
    lo, e = ss.lowest()
    rows = [["reads", ss.num_reads], ["distinct", len(ss.counts)], ["lowest_energy", float(e)],
            ["lowest_state", "".join("+" if s > 0 else "-" for s in lo)]]
    emit(args.output, table(["stat", "value"], rows, args.format))
    return EXIT_OK


def cmd_solve(args) -> int:
    kind = args.input_kind
    if kind == "auto":
        kind = "ising" if args.input.endswith(".ising") else "csp"
    if kind == "ising":
        return _solve_ising(loads(read_text(args.input)), args)
    csp = read_csp(args.input)
    hw = parse_hardware(args.hardware, read_dead(args.dead)) if args.method == "direct" else None
    pens = _penalties(csp, args)
    found: dict[tuple, int] = {}
    trace_lines = []
    total = 0
    if args.method == "direct":
        comp = compile_csp(csp, hw, pens, args.chain_strength, RrrParams(seed=args.seed), restarts=args.restarts)
        small, act = comp.model.compacted()
        info = {"seed": args.seed, "sampler": "exact"}
        if args.backend == "exact":
            sub = np.array(exact_ground_states(small, cap=args.reads).states, dtype=np.int8)
        else:
            raw = sa_sample(small, Schedule(args.sweeps), args.reads, args.seed)
            sub, info = raw.expanded(), raw.info
        # Idle qubits carry no terms; report them as +1.
        reads = np.ones((len(sub), comp.model.num_vars), dtype=np.int8)
        reads[:, act] = sub
        ss = SampleSet.from_reads(reads, comp.model, info)
        if args.samples:
            write_atomic(args.samples, ss.to_text())
        dec, _ = majority_vote_decode(ss, comp.chains, args.seed)
        for x, n in zip(dec.samples, dec.counts):
            key = tuple(int(v) for v in x)
            found[key] = found.get(key, 0) + int(n)
        total = int(sum(dec.counts))
    else:
        rg = partition_regions(csp, pens, num_regions=min(args.regions, len(csp.constraints)), seed=args.seed)
        methods = ("dc", "gbp") if args.method == "both" else (args.method,)
        for meth in methods:
            if meth == "dc":
                oracle = exact_oracle(args.seed) if args.backend == "exact" else sa_oracle(20, Schedule(args.sweeps), args.seed)
                res = dc_solve(rg, oracle, DcParams(args.max_iters))
            else:
                sampler = (exact_region_sampler() if args.backend == "exact"
                           else sa_region_sampler(args.reads, args.sweeps, args.seed))
                res = gbp_solve(rg, sampler, args.temperature, GbpParams(args.max_iters))
            trace_lines += [f"# {meth}"] + [row.line() for row in res.trace]
            key = tuple(int(v) for v in res.assignment)
            found[key] = found.get(key, 0) + 1
            total += 1
    if args.trace:
        write_atomic(args.trace, "\n".join(trace_lines) + "\n")
    emit(args.output, _solution_report(csp, found, total, args.format))
    return EXIT_OK


def _load_netlist(ref: str, max_fanin: int):
    from .faultdiag import load_circuit, parse_isc

    if os.path.exists(ref):
        return parse_isc(read_text(ref), max_fanin, os.path.splitext(os.path.basename(ref))[0])
    try:
        return load_circuit(ref, max_fanin)
    except (FileNotFoundError, OSError) as e:
        raise ConfigError(f"no netlist file or bundled circuit named {ref!r}") from e


def _diagnosis_stats(reports, omegas, fmt: str) -> str:
    from .faultdiag import coupon_stats

    rows = []
    for k, (rep, omega) in enumerate(zip(reports, omegas)):
        counts = rep.counts(omega)
        if sum(counts) == 0:
            rows.append([k, len(omega), 0, float("inf"), float("inf"), 0.0, 0.0, 0.0])
            continue
        st = coupon_stats(counts, rep.num_samples)
        rows.append([k, len(omega), sum(1 for c in counts if c)] + st.row())
    return table(["obs", "omega", "seen", "E_first", "E_all", "Mc_10", "Mc_100", "Mc_1000"], rows, fmt)


def cmd_diagnose(args) -> int:
    from .faultdiag import (build_model, consistent, diagnose, min_fault_oracle, parse_modes,
                            parse_observations, prepare)
    from .faultdiag.diagnose import report_json

    if not args.observations:
        raise ConfigError("diagnose needs --observations")
    circuit = _load_netlist(args.netlist, args.max_fanin)
    if args.modes:
        circuit = circuit.with_modes(parse_modes(read_text(args.modes), circuit))
    observations = parse_observations(read_text(args.observations))
    for obs in observations:
        obs.check(circuit)
    cache = PenaltyCache(args.penalty_cache) if args.penalty_cache else None
    kw = dict(max_cluster_vars=args.cluster_cap, fault_model=args.fault_model, cache=cache)
    if args.method == "direct" and args.backend == "sa":
        hw = parse_hardware(args.hardware, read_dead(args.dead))
        dm = prepare(circuit, hw, args.chain_strength, RrrParams(seed=args.seed), args.restarts, **kw)
    else:
        dm = build_model(circuit, **kw)
    if cache is not None:
        cache.save()
    reports = []
    for k, obs in enumerate(observations):
        rep = diagnose(dm, obs, args.method, args.backend, args.reads, args.seed + k, args.sweeps,
                       args.regions, args.temperature, args.max_iters)
        for d, _ in rep.diagnoses:
            if not consistent(circuit, obs, d.mapping()):
                raise ValidationFailure(f"observation {k}: diagnosis {d} fails simulation")
        reports.append(rep)
    if args.oracle:
        omegas = [min_fault_oracle(circuit, obs)[1] for obs in observations]
    else:
        omegas = [rep.minimal() for rep in reports]
    if args.output not in (None, "-"):
        write_atomic(args.output, report_json(reports))
    text = "".join(r.to_text() for r in reports) if args.format == "text" else ""
    sys.stdout.write(text + _diagnosis_stats(reports, omegas, args.format))
    return EXIT_OK


# -- bench ----------------------------------------------------------------


def _instance_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def _bench_xorsat(job):
    n, k, seed, hw_spec, ratio, max_iters = job
    s = _instance_seed(seed, 1000 * n + k)
    csp, _ = random_xorsat(n, ratio, rng=s)
    hw = parse_hardware(hw_spec)
    pens = csp_penalties(csp)
    try:
        _, res = embed_csp(csp, hw, pens, RrrParams(max_iters=max_iters, seed=k))
    except EmbeddingError:
        return [n, k, False, 0, 0]
    emb = res.embedding
    return [n, k, True, len(emb.qubits()), emb.max_chain]


def _bench_dc(job):
    n, m, k, seed, regions, max_iters, sweeps = job
    s = _instance_seed(seed, k)
    csp, _ = random_planted_csp(n, m, rng=s)
    pens = csp_penalties(csp)
    rg = partition_regions(csp, pens, num_regions=regions, seed=k)
    row = [k]
    for oracle in (exact_oracle(s), sa_oracle(20, Schedule(sweeps), s)):
        res = dc_solve(rg, oracle, DcParams(max_iters))
        row += [res.consensus and csp.is_satisfied(res.assignment), res.iterations]
    return row


def _bench_diversity(job):
    from .faultdiag import coupon_stats, diagnose, min_fault_oracle

    dm, k, obs, card, reads_per, seed, sweeps = job
    _, omega = min_fault_oracle(dm.circuit, obs)
    rep = diagnose(dm, obs, "direct", "sa", reads_per * len(omega), seed + k, sweeps)
    counts = rep.counts(omega)
    if sum(counts) == 0:
        return [k, card, len(omega), rep.num_samples, 0, float("inf"), float("inf"), 0.0, 0.0, 0.0]
    st = coupon_stats(counts, rep.num_samples)
    return [k, card, len(omega), rep.num_samples, sum(1 for c in counts if c)] + st.row()


def _pool_map(fn: Callable, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


def _median(xs):
    return float(statistics.median(xs)) if xs else float("nan")


def cmd_bench(args) -> int:
    fmt = args.format
    if args.suite == "xorsat":
        sizes = _parse_range(args.sizes)
        jobs = [(n, k, args.seed, args.hardware, args.ratio, args.max_iters)
                for n in sizes for k in range(args.instances)]
        parse_hardware(args.hardware)
        rows = _pool_map(_bench_xorsat, jobs, args.threads)
        series = []
        for n in sizes:
            ok = [r for r in rows if r[0] == n and r[2]]
            series.append([n, len(ok), len([r for r in rows if r[0] == n]),
                           _median([r[3] for r in ok]), _median([r[4] for r in ok])])
        text = ("# instances\n" + table(["n", "instance", "success", "qubits", "max_chain"], rows, fmt)
                + "# medians\n" + table(["n", "embedded", "instances", "median_qubits", "median_max_chain"],
                                        series, fmt))
    elif args.suite == "dc":
        jobs = [(args.n, args.m, k, args.seed, args.regions, args.max_iters, args.sweeps)
                for k in range(args.instances)]
        rows = _pool_map(_bench_dc, jobs, args.threads)
        summary = [["exact", sum(r[1] for r in rows), len(rows)], ["sa", sum(r[3] for r in rows), len(rows)]]
        text = ("# instances\n" + table(["instance", "exact_solved", "exact_iters", "sa_solved", "sa_iters"], rows, fmt)
                + "# success\n" + table(["oracle", "solved", "instances"], summary, fmt))
    else:
        from .faultdiag import prepare, random_observations

        circuit = _load_netlist(args.circuit, args.max_fanin)
        obs = random_observations(circuit, args.instances, seed=args.seed)
        dm = prepare(circuit, parse_hardware(args.hardware), args.chain_strength,
                     RrrParams(seed=args.seed), args.restarts)
        jobs = [(dm, k, o, card, args.reads, args.seed, args.sweeps) for k, (o, card) in enumerate(obs)]
        rows = _pool_map(_bench_diversity, jobs, args.threads)
        text = table(["obs", "faults", "omega", "samples", "seen", "E_first", "E_all",
                      "Mc_10", "Mc_100", "Mc_1000"], rows, fmt)
    emit(args.output, text)
    return EXIT_OK


def _parse_range(spec: str) -> list[int]:
    """``9:30:3`` (inclusive), ``10,20,30`` or a single size."""
    try:
        if ":" in spec:
            parts = [int(t) for t in spec.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step <= 0:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [int(t) for t in spec.split(",")]
    except (ValueError, IndexError) as e:
        raise ConfigError(f"bad size range {spec!r}") from e


# -- argument parsing -----------------------------------------------------


class _Options:
    """Records each option's real default; argparse sees SUPPRESS so config values can fill gaps."""

    def __init__(self):
        self.defaults: dict[str, dict[str, Any]] = {}
        self.actions: dict[str, dict[str, argparse.Action]] = {}

    def add(self, group: str, parser, *flags, default=None, **kw):
        action = parser.add_argument(*flags, default=argparse.SUPPRESS, **kw)
        if action.option_strings:
            self.defaults.setdefault(group, {})[action.dest] = default
            self.actions.setdefault(group, {})[action.dest] = action
        return action


def build_parser() -> tuple[argparse.ArgumentParser, _Options]:
    opts = _Options()
    common = argparse.ArgumentParser(add_help=False)
    opts.add("*", common, "--seed", type=int, default=0, help="base random seed")
    opts.add("*", common, "--backend", choices=("exact", "sa"), default="sa", help="sampler backend")
    opts.add("*", common, "--threads", type=int, default=1, help="worker processes for bench suites")
    opts.add("*", common, "--format", choices=("text", "tsv"), default="text", help="table format")
    opts.add("*", common, "--config", default=None, help="JSON file with option values")
    opts.add("*", common, "-o", "--output", default=None, help="output file (default stdout)")
    opts.add("*", common, "--penalty-cache", default=None, help="JSON penalty library cache")

    parser = argparse.ArgumentParser(prog="annealmap", parents=[common],
                                     description="Compile, embed and solve CSPs on Chimera-structured Ising models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="synthesize penalty models")
    p.add_argument("constraints", help="CSP file; one penalty per constraint")
    opts.add("synth", p, "--graph", default=None, help="penalty graph, e.g. K3,3 or K4 (default: smallest library shape)")
    opts.add("synth", p, "--fault-level", type=float, default=None, help="fault level for MAX-CSP constraints")
    opts.add("synth", p, "--target-gap", type=float, default=2.0)

    def hw_opts(name, p, default="C4"):
        opts.add(name, p, "--hardware", default=default, help="Chimera spec C<rows>[x<cols>][:<shore>]")
        opts.add(name, p, "--dead", default=None, help="comma-separated dead qubits")
        opts.add(name, p, "--restarts", type=int, default=3)
        opts.add(name, p, "--target-gap", type=float, default=2.0)

    p = sub.add_parser("embed", parents=[common], help="place and route a CSP")
    p.add_argument("csp")
    hw_opts("embed", p)
    opts.add("embed", p, "--alpha", type=float, default=8.0, help="congestion base")
    opts.add("embed", p, "--max-iters", type=int, default=200)
    opts.add("embed", p, "-v", "--verbose", action="store_true", default=False,
             help="print the per-iteration maximum multiplicity")

    p = sub.add_parser("solve", parents=[common], help="sample an Ising model or solve a CSP")
    p.add_argument("input", help=".ising model or CSP file")
    hw_opts("solve", p)
    opts.add("solve", p, "--input-kind", choices=("auto", "ising", "csp"), default="auto")
    opts.add("solve", p, "--method", choices=("direct", "dc", "gbp", "both"), default="direct")
    opts.add("solve", p, "--reads", type=int, default=100)
    opts.add("solve", p, "--sweeps", type=int, default=1000)
    opts.add("solve", p, "--chain-strength", type=float, default=1.0)
    opts.add("solve", p, "--regions", type=int, default=2)
    opts.add("solve", p, "--max-iters", type=int, default=200)
    opts.add("solve", p, "--temperature", type=float, default=0.2)
    opts.add("solve", p, "--samples", default=None, help="write the raw sample set here")
    opts.add("solve", p, "--trace", default=None, help="write the message-passing trace here")

    p = sub.add_parser("diagnose", parents=[common], help="min-fault diagnosis of circuit observations")
    p.add_argument("netlist", help=".isc file or bundled circuit name (c17, adder4)")
    hw_opts("diagnose", p, "C12")
    opts.add("diagnose", p, "--observations", default=None, help="file of in:/out: lines")
    opts.add("diagnose", p, "--modes", default=None, help="fault-mode sidecar file")
    opts.add("diagnose", p, "--method", choices=("direct", "dc", "gbp"), default="direct")
    opts.add("diagnose", p, "--fault-model", choices=("implicit", "explicit"), default="implicit")
    opts.add("diagnose", p, "--cluster-cap", type=int, default=None)
    opts.add("diagnose", p, "--max-fanin", type=int, default=4)
    opts.add("diagnose", p, "--reads", type=int, default=1000)
    opts.add("diagnose", p, "--sweeps", type=int, default=300)
    opts.add("diagnose", p, "--chain-strength", type=float, default=2.0)
    opts.add("diagnose", p, "--regions", type=int, default=2)
    opts.add("diagnose", p, "--max-iters", type=int, default=200)
    opts.add("diagnose", p, "--temperature", type=float, default=0.2)
    opts.add("diagnose", p, "--oracle", action="store_true", default=False,
             help="measure coverage against the brute-force min-fault set")

    p = sub.add_parser("bench", parents=[common], help="benchmark suites emitting plot-ready tables")
    p.add_argument("suite", choices=("xorsat", "dc", "diversity"))
    opts.add("bench", p, "--instances", type=int, default=50)
    opts.add("bench", p, "--sizes", default="9:30:3", help="xorsat sizes lo:hi[:step] or a,b,c")
    opts.add("bench", p, "--ratio", type=float, default=1.0)
    opts.add("bench", p, "--hardware", default="C12")
    opts.add("bench", p, "--max-iters", type=int, default=200)
    opts.add("bench", p, "--n", type=int, default=20, help="dc: variables")
    opts.add("bench", p, "--m", type=int, default=16, help="dc: constraints")
    opts.add("bench", p, "--regions", type=int, default=3)
    opts.add("bench", p, "--sweeps", type=int, default=300)
    opts.add("bench", p, "--circuit", default="adder4")
    opts.add("bench", p, "--max-fanin", type=int, default=4)
    opts.add("bench", p, "--reads", type=int, default=1000, help="diversity: samples per min-fault diagnosis")
    opts.add("bench", p, "--chain-strength", type=float, default=2.0)
    opts.add("bench", p, "--restarts", type=int, default=3)
    return parser, opts


def _coerce(action: argparse.Action, key: str, value):
    if isinstance(action, argparse._StoreTrueAction):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be a boolean")
        return value
    if value is None:
        return None
    if isinstance(value, (dict, list, bool)):
        raise ConfigError(f"config key {key!r} has unsupported type {type(value).__name__}")
    conv = action.type or str
    try:
        if conv is int and isinstance(value, float) and value != int(value):
            raise ValueError
        out = conv(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key {key!r}: invalid value {value!r}") from e
    if action.choices is not None and out not in action.choices:
        raise ConfigError(f"config key {key!r}: {out!r} not in {sorted(action.choices)}")
    return out


def load_config(path: str, command: str, opts: _Options) -> dict:
    try:
        data = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "command" in data:
        if data.pop("command") != command:
            raise ConfigError(f"{path}: config is for a different command")
    allowed = {**opts.actions["*"], **opts.actions.get(command, {})}
    allowed.pop("config")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return {k: _coerce(allowed[k], k, v) for k, v in data.items()}


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser, opts = build_parser()
    ns = parser.parse_args(argv)
    cfg = load_config(ns.config, ns.command, opts) if getattr(ns, "config", None) else {}
    for group in ("*", ns.command):
        for dest, default in opts.defaults.get(group, {}).items():
            if not hasattr(ns, dest):
                setattr(ns, dest, cfg.get(dest, default))
    return ns


def check_counts(ns: argparse.Namespace) -> None:
    for key in ("threads", "reads", "restarts", "instances", "regions", "max_iters", "sweeps"):
        if hasattr(ns, key) and getattr(ns, key) is not None and getattr(ns, key) < 1:
            raise ConfigError(f"--{key.replace('_', '-')} must be at least 1")


COMMANDS = {"synth": cmd_synth, "embed": cmd_embed, "solve": cmd_solve, "diagnose": cmd_diagnose, "bench": cmd_bench}

INPUT_ERRORS = (ConfigError, CspError, ModelError, PenaltyError, ValueError, KeyError)


def _report_error(kind: str, msg: str, fmt: str) -> None:
    if fmt == "tsv":
        sys.stderr.write(f"error\t{kind}\t{msg}\n")
    else:
        sys.stderr.write(f"annealmap: error: {kind}: {msg}\n")


def main(argv: Sequence[str] | None = None) -> int:
    fmt = "text"
    try:
        args = parse_args(argv)
        fmt = args.format
        check_counts(args)
        return COMMANDS[args.command](args)
    except ValidationFailure as e:
        _report_error("validation", str(e), fmt)
        return EXIT_INVALID_OUTPUT
    except EmbeddingError as e:
        _report_error(type(e).__name__, str(e), fmt)
        return EXIT_INVALID_OUTPUT
    except INPUT_ERRORS as e:
        _report_error(type(e).__name__, str(e), fmt)
        return EXIT_BAD_INPUT
    except RuntimeError as e:
        _report_error(type(e).__name__, str(e), fmt)
        return EXIT_INVALID_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
