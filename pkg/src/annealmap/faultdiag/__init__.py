"""Circuit fault diagnosis on top of the penalty, embedding and sampling layers."""
from .circuit import (
    Circuit,
    CircuitError,
    Gate,
    dumps_isc,
    full_adder_circuit,
    outputs,
    parse_isc,
    parse_modes,
    ripple_adder,
    simulate,
    split_gate,
    split_wide_gates,
    truth_table,
)
from .clusters import Cluster, cone_cluster, gate_constraint, literal_count
from .diagnose import (
    Diagnosis,
    DiagnosisError,
    DiagnosisModel,
    DiagnosisReport,
    Observation,
    build_model,
    consistent,
    diagnose,
    min_fault_oracle,
    parse_observations,
    prepare,
    random_observations,
    report_json,
)
from .stats import CouponStats, coupon_stats, expected_all, simulate_all


def load_circuit(name: str, max_fanin: int = 4) -> Circuit:
    """Bundled netlist by stem, e.g. ``"c17"`` or ``"adder4"``."""
    from importlib.resources import files

    text = files("annealmap").joinpath(f"data/{name}.isc").read_text()
    return parse_isc(text, max_fanin, name)
