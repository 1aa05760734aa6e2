"""Cross-entropy estimators and the sample-complexity analysis.

chi_C compares the measurement-record distributions of one circuit under two
initial states: numerator = <p_sigma>_rho, denominator = <p_sigma>_sigma.
Three routes: exact enumeration over all 2^N records, the histogram
(empirical-mean) estimator over sampled records, and the generative-model
estimator (see mcxeb.rnn). Record index convention: bit i of a record (site
order, from 0) is bit N-1-i of the enumeration index, i.e. site 1 is the most
significant bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .circuit import CircuitDescriptor
from .errors import DegenerateEstimateError, EnumerationInfeasibleError
from .trajectory import InitialState, compile_circuit

MAX_ENUM_MEASUREMENTS = 22

SWEEP_COLUMNS = ["L", "p", "circuit_index", "chi", "estimator", "M"]
CURVE_COLUMNS = ["M", "chi", "epsilon", "estimator", "ref_kind"]
DELTA_M_COLUMNS = ["epsilon", "Mmin_hist", "Mmin_rnn", "deltaM"]
NOT_ACHIEVED = "NA"

REF_EXACT = "exact-enumeration"
REF_PLATEAU = "large-M-plateau"


@dataclass
class XebEstimate:
    chi: float
    estimator: str  # exact | histogram | rnn
    numerator: float
    denominator: float
    circuit_hash: str
    m: int | None = None  # runs used; None for exact
    num_qubits: int | None = None
    measurement_rate: float | None = None


@dataclass
class AccuracyPoint:
    m: int
    chi: float
    epsilon: float


@dataclass
class AccuracyCurve:
    points: list[AccuracyPoint]
    ref_value: float
    ref_kind: str  # exact-enumeration | large-M-plateau
    estimator: str


@dataclass
class DeltaMEntry:
    epsilon: float
    m_min_histogram: int | None
    m_min_rnn: int | None

    @property
    def delta_m(self) -> int | None:
        if self.m_min_histogram is None or self.m_min_rnn is None:
            return None
        return self.m_min_histogram - self.m_min_rnn


def enumerate_record_probabilities(
    c: CircuitDescriptor, init: InitialState, max_measurements: int = MAX_ENUM_MEASUREMENTS
) -> np.ndarray:
    """All 2^N record probabilities by a branching replay that shares prefixes.

    Matches per-record replay_probability up to float associativity; zero-
    weight branches short-circuit their whole subtree.
    """
    n_meas = c.num_measurements
    if n_meas > max_measurements:
        raise EnumerationInfeasibleError(
            f"N={n_meas} measurements exceed the enumeration budget of {max_measurements}"
        )
    compiled = compile_circuit(c)
    n = c.num_qubits
    schedule: list[tuple[str, object]] = []
    for layer in compiled:
        schedule.append(("u", layer))
        for qubit in layer.measured:
            schedule.append(("m", qubit))
    probs = np.zeros(1 << n_meas)

    def walk(amps: np.ndarray, pos: int, prefix: int) -> None:
        while pos < len(schedule) and schedule[pos][0] == "u":
            layer = schedule[pos][1]
            if layer.unitaries.shape[0]:
                kernels.apply_layer(amps, layer.unitaries, layer.start, n)
            pos += 1
        if pos == len(schedule):
            probs[prefix] = float(np.sum(amps.real * amps.real + amps.imag * amps.imag))
            return
        qubit = schedule[pos][1]
        for outcome in (0, 1):
            child = amps.copy()
            w = kernels.project(child, qubit, outcome, False, n)
            if w > 0.0:
                walk(child, pos + 1, (prefix << 1) | outcome)

    walk(init.make_state(n).amplitudes, 0, 0)
    return probs


def chi_exact(
    c: CircuitDescriptor,
    rho_init: InitialState = InitialState.PLUS,
    sigma_init: InitialState = InitialState.ZERO,
) -> XebEstimate:
    """chi_C by full enumeration over all 2^N records."""
    p_sigma = enumerate_record_probabilities(c, sigma_init)
    p_rho = p_sigma if rho_init == sigma_init else enumerate_record_probabilities(c, rho_init)
    numerator = float(np.dot(p_rho, p_sigma))
    denominator = float(np.dot(p_sigma, p_sigma))
    return XebEstimate(
        chi=numerator / denominator,
        estimator="exact",
        numerator=numerator,
        denominator=denominator,
        circuit_hash=c.content_hash(),
        num_qubits=c.num_qubits,
        measurement_rate=c.measurement_rate,
    )


def chi_histogram(
    rho_scores,
    sigma_scores,
    circuit_hash: str = "",
    num_qubits: int | None = None,
    measurement_rate: float | None = None,
) -> XebEstimate:
    """Empirical-mean estimator: `rho_scores` are the sigma-replay
    probabilities of rho-sampled records; `sigma_scores` likewise for
    sigma-sampled records."""
    rho_scores = np.asarray(rho_scores, dtype=float)
    sigma_scores = np.asarray(sigma_scores, dtype=float)
    if rho_scores.size == 0 or sigma_scores.size == 0:
        raise ValueError("both score lists must be non-empty")
    numerator = float(np.mean(rho_scores))
    denominator = float(np.mean(sigma_scores))
    if denominator == 0.0:
        raise DegenerateEstimateError("all sigma-replay probabilities are zero")
    return XebEstimate(
        chi=numerator / denominator,
        estimator="histogram",
        numerator=numerator,
        denominator=denominator,
        circuit_hash=circuit_hash,
        m=int(rho_scores.size),
        num_qubits=num_qubits,
        measurement_rate=measurement_rate,
    )


def chi_circuit_average(estimates: list[XebEstimate]) -> tuple[float, float]:
    """Sample mean and sample standard deviation of chi over circuits at one
    (L, p) point; mixed points are rejected."""
    if len(estimates) < 2:
        raise ValueError("need at least 2 estimates to average")
    keys = {(e.num_qubits, e.measurement_rate) for e in estimates}
    if len(keys) != 1:
        raise ValueError(f"mixed (L, p) inputs: {sorted(keys)}")
    chis = np.array([e.chi for e in estimates])
    return float(np.mean(chis)), float(np.std(chis, ddof=1))


def accuracy_curve(
    estimates: list[XebEstimate], ref_value: float, ref_kind: str
) -> AccuracyCurve:
    """Accuracy-versus-M curve: epsilon = |ref - estimate| at each grid M."""
    if not estimates:
        raise ValueError("empty estimate list")
    ms = [e.m for e in estimates]
    if any(m is None for m in ms) or sorted(set(ms)) != ms:
        raise ValueError("estimates must carry strictly increasing M values")
    estimators = {e.estimator for e in estimates}
    if len(estimators) != 1:
        raise ValueError(f"mixed estimators: {sorted(estimators)}")
    points = [AccuracyPoint(e.m, e.chi, abs(ref_value - e.chi)) for e in estimates]
    return AccuracyCurve(points, ref_value, ref_kind, estimators.pop())


def m_min(curve: AccuracyCurve, epsilon: float) -> int | None:
    """Smallest grid M whose accuracy meets `epsilon`; None if never achieved.

    First-achieving grid point; later points are not required to stay within
    epsilon (recorded in output metadata by the orchestrator).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not curve.points:
        raise ValueError("empty curve")
    for point in curve.points:
        if point.epsilon <= epsilon:
            return point.m
    return None


def delta_m_report(
    hist_curve: AccuracyCurve,
    rnn_curve: AccuracyCurve,
    epsilons: list[float] | None = None,
) -> list[DeltaMEntry]:
    """Per-target-accuracy comparison of the two estimators' M_min.

    Default targets: the union of accuracies achieved by either curve.
    """
    if epsilons is None:
        achieved = {p.epsilon for p in hist_curve.points} | {p.epsilon for p in rnn_curve.points}
        epsilons = sorted(e for e in achieved if e > 0)
    return [
        DeltaMEntry(eps, m_min(hist_curve, eps), m_min(rnn_curve, eps))
        for eps in epsilons
    ]


def _fmt(value) -> str:
    if value is None:
        return NOT_ACHIEVED
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_sweep_csv(path, rows: list[dict]) -> None:
    """Sweep CSV: one row per circuit estimate, columns L,p,circuit_index,chi,estimator,M."""
    write_csv(path, SWEEP_COLUMNS, rows)


def write_curve_csv(path, curves: list[AccuracyCurve]) -> None:
    rows = [
        {
            "M": p.m,
            "chi": p.chi,
            "epsilon": p.epsilon,
            "estimator": c.estimator,
            "ref_kind": c.ref_kind,
        }
        for c in curves
        for p in c.points
    ]
    write_csv(path, CURVE_COLUMNS, rows)


def write_delta_m_csv(path, entries: list[DeltaMEntry]) -> None:
    rows = [
        {
            "epsilon": e.epsilon,
            "Mmin_hist": e.m_min_histogram,
            "Mmin_rnn": e.m_min_rnn,
            "deltaM": e.delta_m,
        }
        for e in entries
    ]
    write_csv(path, DELTA_M_COLUMNS, rows)


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in columns])
