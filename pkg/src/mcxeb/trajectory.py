"""Execute circuit descriptors end to end.

Three run modes over one compiled circuit:
  * Born-rule sampling: draw measurement outcomes, collapse and renormalize,
    return the record (and, as a by-product, its probability);
  * unnormalized replay: fix a record, apply projectors without renormalizing,
    return the final squared norm = the record's probability;
  * entropy tracing: record the half-chain von Neumann entropy after every
    layer's measurement sub-step.

Each layer's three native gates per pair are fused into one 4x4 unitary at
compile time and shared by every run of that circuit. Run j of a batch draws
its outcomes from the Philox substream SeedSequence(seed, spawn_key=(j,)), so
records regenerate exactly regardless of scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .circuit import CircuitDescriptor, layer_pairs
from .errors import FormatError, RecordLengthError
from .statevector import StateVector, entanglement_entropy, ms_gate, rotation_gate

RECORDS_FORMAT = "mcxeb-records"
RECORDS_VERSION = 1


class InitialState(Enum):
    PLUS = "plus"  # |+>^L
    ZERO = "zero"  # |0>^L

    def make_state(self, num_qubits: int) -> StateVector:
        if self is InitialState.PLUS:
            return StateVector.all_plus(num_qubits)
        return StateVector.all_zero(num_qubits)


@dataclass(frozen=True)
class MeasurementRecord:
    """Ordered in-circuit measurement outcomes, aligned with descriptor.sites."""

    bits: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.bits)

    def as_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_string(cls, text: str) -> "MeasurementRecord":
        if not all(ch in "01" for ch in text):
            raise ValueError(f"record string must be over {{0,1}}, got {text!r}")
        return cls(tuple(int(ch) for ch in text))


@dataclass
class EntropyTrace:
    """Half-chain entropy after each layer, in nats."""

    layers: list[int]
    values: list[float]
    num_circuits: int = 1
    pair_averaged: bool = False


@dataclass
class _CompiledLayer:
    start: int  # first qubit of the brick pattern (0 odd layers, 1 even)
    unitaries: np.ndarray  # (num_pairs, 4, 4) fused MS(pi/4) (R x R) blocks
    measured: tuple[int, ...]  # qubits measured after this layer, ascending


def compile_circuit(c: CircuitDescriptor) -> list[_CompiledLayer]:
    """Precompute per-layer fused unitaries and measurement lists."""
    ms = ms_gate(math.pi / 4.0).matrix
    by_layer: dict[int, list[int]] = {}
    for s in c.sites:
        by_layer.setdefault(s.layer, []).append(s.qubit)
    layers = []
    for layer in range(1, c.total_layers + 1):
        pairs = layer_pairs(c.num_qubits, layer)
        us = np.empty((len(pairs), 4, 4), dtype=np.complex128)
        for k, (i, j) in enumerate(pairs):
            ri = rotation_gate(math.pi / 2.0, c.phi[(layer, i)]).matrix
            rj = rotation_gate(math.pi / 2.0, c.phi[(layer, j)]).matrix
            us[k] = ms @ np.kron(ri, rj)
        layers.append(
            _CompiledLayer(
                start=pairs[0][0] if pairs else 0,
                unitaries=us,
                measured=tuple(sorted(by_layer.get(layer, ()))),
            )
        )
    return layers


def _sample_pass(
    compiled: list[_CompiledLayer],
    num_qubits: int,
    init: InitialState,
    rng: np.random.Generator,
) -> tuple[list[int], float]:
    """One Born-rule trajectory; returns (bits, probability of the record)."""
    amps = init.make_state(num_qubits).amplitudes
    bits: list[int] = []
    prob = 1.0
    for layer in compiled:
        if layer.unitaries.shape[0]:
            kernels.apply_layer(amps, layer.unitaries, layer.start, num_qubits)
        for qubit in layer.measured:
            p0 = kernels.prob_zero(amps, qubit, num_qubits)
            outcome = 0 if rng.random() < p0 else 1
            w = kernels.project(amps, qubit, outcome, True, num_qubits)
            bits.append(outcome)
            prob *= w
    return bits, prob


def _replay_pass(
    compiled: list[_CompiledLayer],
    num_qubits: int,
    init: InitialState,
    bits: tuple[int, ...],
) -> float:
    """Unnormalized projector replay; returns the final squared norm."""
    amps = init.make_state(num_qubits).amplitudes
    pos = 0
    for layer in compiled:
        if layer.unitaries.shape[0]:
            kernels.apply_layer(amps, layer.unitaries, layer.start, num_qubits)
        for qubit in layer.measured:
            w = kernels.project(amps, qubit, bits[pos], False, num_qubits)
            pos += 1
            if w == 0.0:
                return 0.0
    a = amps
    return float(np.sum(a.real * a.real + a.imag * a.imag))


def run_sampling(c: CircuitDescriptor, init: InitialState, seed: int) -> MeasurementRecord:
    """Sample one trajectory of the circuit under Born's rule."""
    rng = _run_rng(seed, 0)
    bits, _ = _sample_pass(compile_circuit(c), c.num_qubits, init, rng)
    return MeasurementRecord(tuple(bits))


def replay_probability(
    c: CircuitDescriptor, init: InitialState, record: MeasurementRecord
) -> float:
    """Probability of `record` under `init`, by unnormalized projector replay."""
    if len(record) != c.num_measurements:
        raise RecordLengthError(
            f"record has {len(record)} bits, descriptor expects {c.num_measurements}"
        )
    return _replay_pass(compile_circuit(c), c.num_qubits, init, record.bits)


_BATCH_ELEMENTS = 1 << 19  # amplitudes held per trajectory block (~8 MiB complex128)


def _block_size(num_qubits: int, remaining: int) -> int:
    return max(1, min(remaining, _BATCH_ELEMENTS >> num_qubits))


def _init_columns(init: InitialState, num_qubits: int, nb: int) -> np.ndarray:
    col = init.make_state(num_qubits).amplitudes
    return np.repeat(col[:, np.newaxis], nb, axis=1)


def _batch_sample_pass(
    compiled: list[_CompiledLayer],
    num_qubits: int,
    init: InitialState,
    rngs: list[np.random.Generator],
) -> tuple[np.ndarray, np.ndarray]:
    """Born-rule trajectories, one per column; returns (bits (B, N), probs (B,)).

    Column b consumes uniforms from rngs[b] in measurement order, so each
    trajectory is identical to a standalone _sample_pass with the same stream.
    """
    nb = len(rngs)
    amps = _init_columns(init, num_qubits, nb)
    p0 = np.empty(nb)
    w = np.empty(nb)
    probs = np.ones(nb)
    bit_cols: list[np.ndarray] = []
    for layer in compiled:
        if layer.unitaries.shape[0]:
            kernels.bapply_layer(amps, layer.unitaries, layer.start, num_qubits)
        for qubit in layer.measured:
            kernels.bprob_zero(amps, qubit, num_qubits, p0)
            draws = np.array([rng.random() for rng in rngs])
            outcomes = (draws >= p0).astype(np.int64)
            kernels.bproject(amps, qubit, outcomes, True, num_qubits, w)
            probs = probs * w
            bit_cols.append(outcomes)
    if bit_cols:
        bits = np.stack(bit_cols, axis=1)
    else:
        bits = np.zeros((nb, 0), dtype=np.int64)
    return bits, probs


def _batch_replay_pass(
    compiled: list[_CompiledLayer],
    num_qubits: int,
    init: InitialState,
    bit_matrix: np.ndarray,
) -> np.ndarray:
    """Unnormalized projector replay of one record per column; returns the
    per-column final squared norms."""
    nb = bit_matrix.shape[0]
    amps = _init_columns(init, num_qubits, nb)
    w = np.empty(nb)
    pos = 0
    for layer in compiled:
        if layer.unitaries.shape[0]:
            kernels.bapply_layer(amps, layer.unitaries, layer.start, num_qubits)
        for qubit in layer.measured:
            outcomes = np.ascontiguousarray(bit_matrix[:, pos])
            kernels.bproject(amps, qubit, outcomes, False, num_qubits, w)
            pos += 1
    out = np.empty(nb)
    kernels.bnorm_squared(amps, out)
    return out


def batch_sample(
    c: CircuitDescriptor,
    init: InitialState,
    num_runs: int,
    seed: int,
    replay_init: InitialState | None = None,
) -> tuple[list[MeasurementRecord], list[float] | None]:
    """Sample `num_runs` independent trajectories.

    Runs are advanced in vectorized blocks (one statevector column per run);
    run j always draws from the substream spawn_key=(j,), so the records do
    not depend on the block size. With `replay_init`, each record is also
    scored with its probability under that initial state. When
    replay_init == init the in-run branch-weight product already equals the
    replay value and no second pass is made; otherwise each distinct record
    is replayed once, also in blocks.
    """
    if num_runs < 1:
        raise ValueError(f"num_runs must be >= 1, got {num_runs}")
    compiled = compile_circuit(c)
    n = c.num_qubits
    records: list[MeasurementRecord] = []
    own_probs: list[float] = []
    start = 0
    while start < num_runs:
        nb = _block_size(n, num_runs - start)
        rngs = [_run_rng(seed, start + k) for k in range(nb)]
        bits, probs = _batch_sample_pass(compiled, n, init, rngs)
        records.extend(MeasurementRecord(tuple(map(int, row))) for row in bits)
        own_probs.extend(probs.tolist())
        start += nb
    if replay_init is None:
        return records, None
    if replay_init == init:
        return records, own_probs
    distinct = list(dict.fromkeys(rec.bits for rec in records))
    values: dict[tuple[int, ...], float] = {}
    start = 0
    while start < len(distinct):
        nb = _block_size(n, len(distinct) - start)
        block = distinct[start : start + nb]
        bit_matrix = np.array(block, dtype=np.int64).reshape(nb, c.num_measurements)
        weights = _batch_replay_pass(compiled, n, replay_init, bit_matrix)
        values.update(zip(block, weights.tolist()))
        start += nb
    return records, [values[rec.bits] for rec in records]


def entropy_trace(
    c: CircuitDescriptor,
    init: InitialState,
    seed: int,
    pair_average: bool = False,
) -> EntropyTrace:
    """Half-chain entropy after every layer of one sampled trajectory.

    With `pair_average`, adjacent odd/even layers are averaged in
    non-overlapping pairs to smooth the brick-layer alternation.
    """
    compiled = compile_circuit(c)
    n = c.num_qubits
    rng = _run_rng(seed, 0)
    amps = init.make_state(n).amplitudes
    layers: list[int] = []
    values: list[float] = []
    for t, layer in enumerate(compiled, start=1):
        if layer.unitaries.shape[0]:
            kernels.apply_layer(amps, layer.unitaries, layer.start, n)
        for qubit in layer.measured:
            p0 = kernels.prob_zero(amps, qubit, n)
            outcome = 0 if rng.random() < p0 else 1
            kernels.project(amps, qubit, outcome, True, n)
        layers.append(t)
        values.append(entanglement_entropy(StateVector(n, amps), n // 2))
    if pair_average:
        layers, values = _pair_average(layers, values)
    return EntropyTrace(layers, values, num_circuits=1, pair_averaged=pair_average)


def _pair_average(layers: list[int], values: list[float]) -> tuple[list[int], list[float]]:
    out_layers, out_values = [], []
    for k in range(0, len(layers) - 1, 2):
        out_layers.append(layers[k + 1])
        out_values.append(0.5 * (values[k] + values[k + 1]))
    return out_layers, out_values


def _run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(run_index,)))
    )


def write_records(
    path,
    c: CircuitDescriptor,
    init: InitialState,
    seed: int,
    records: list[MeasurementRecord],
    probs: list[float] | None = None,
) -> None:
    """Write a measurement-record dataset; bit-exact round-trip with read_records."""
    lines = [
        f"# {RECORDS_FORMAT} {RECORDS_VERSION}",
        f"# circuit={c.content_hash()}",
        f"# init={init.value}",
        f"# seed={seed}",
        f"# M={len(records)}",
        f"# N={c.num_measurements}",
    ]
    for k, rec in enumerate(records):
        bits = rec.as_string() or "-"  # "-" marks the empty record of an N=0 circuit
        if probs is not None:
            lines.append(f"{bits} {probs[k]!r}")
        else:
            lines.append(bits)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_records(path) -> tuple[dict, list[MeasurementRecord], list[float] | None]:
    """Read a dataset written by write_records; returns (header, records, probs)."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0] != f"# {RECORDS_FORMAT} {RECORDS_VERSION}":
        raise FormatError("missing or unsupported records header")
    header: dict = {}
    body_start = 1
    for line in raw[1:]:
        if not line.startswith("# "):
            break
        key, _, value = line[2:].partition("=")
        header[key] = value
        body_start += 1
    for key in ("circuit", "init", "seed", "M", "N"):
        if key not in header:
            raise FormatError(f"records header missing {key!r}")
    n_bits = int(header["N"])
    records: list[MeasurementRecord] = []
    probs: list[float] = []
    has_probs: bool | None = None
    for line in raw[body_start:]:
        if not line:
            continue
        parts = line.split()
        if has_probs is None:
            has_probs = len(parts) == 2
        if len(parts) != (2 if has_probs else 1):
            raise FormatError(f"inconsistent record row: {line!r}")
        bits = "" if parts[0] == "-" else parts[0]
        if len(bits) != n_bits:
            raise FormatError(f"record row has {len(bits)} bits, header says {n_bits}")
        records.append(MeasurementRecord.from_string(bits))
        if has_probs:
            probs.append(float(parts[1]))
    if len(records) != int(header["M"]):
        raise FormatError(f"expected {header['M']} records, found {len(records)}")
    return header, records, (probs if has_probs else None)
