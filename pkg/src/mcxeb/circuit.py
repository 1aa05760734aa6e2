"""Random circuit descriptors: brick-layer schedule, per-gate rotation phases,
and fixed measurement sites, with a canonical serialized form.

A descriptor fixes everything about one circuit realization: the chain length
L, encoding/bulk depths, the phase phi of every single-qubit rotation, and the
(qubit, layer) positions of the in-circuit measurements. Layers are numbered
from 1; layers 1..t_encoding are measurement-free, layers t_encoding+1..
t_encoding+t_bulk form the bulk.

Randomness uses the Philox counter-based generator with two documented
streams derived from the descriptor seed: stream 0 for phase draws (layers
ascending, pairs ascending, pair member i before i+1) and stream 1 for site
placement (bulk layers ascending, qubits ascending).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

PHI_ANGLES = (0.0, math.pi / 4.0, math.pi / 2.0)
PHI_TAGS = ("0", "pi/4", "pi/2")
_TAG_TO_ANGLE = dict(zip(PHI_TAGS, PHI_ANGLES))
_ANGLE_TO_TAG = dict(zip(PHI_ANGLES, PHI_TAGS))

FORMAT_NAME = "mcxeb-circuit"
FORMAT_VERSION = 1

MAX_QUBITS = 24


@dataclass(frozen=True, order=True)
class MeasurementSite:
    """One projective Z measurement at (layer, qubit); layer-major ordering."""

    layer: int
    qubit: int


@dataclass
class CircuitDescriptor:
    num_qubits: int
    t_encoding: int
    t_bulk: int
    measurement_rate: float
    seed: int
    phi: dict[tuple[int, int], float]  # (layer, qubit) -> angle, gate qubits only
    sites: tuple[MeasurementSite, ...]  # layer-major, qubit-ascending
    _hash: str | None = field(default=None, repr=False, compare=False)

    @property
    def total_layers(self) -> int:
        return self.t_encoding + self.t_bulk

    @property
    def num_measurements(self) -> int:
        return len(self.sites)

    def sites_at_layer(self, layer: int) -> list[MeasurementSite]:
        return [s for s in self.sites if s.layer == layer]

    def content_hash(self) -> str:
        if self._hash is None:
            self._hash = _hash_body(_canonical_body(self))
        return self._hash


def layer_pairs(num_qubits: int, layer: int) -> list[tuple[int, int]]:
    """Gate pairs of a brick layer: odd layers start at qubit 0, even at 1;
    edge qubits idle on even layers (open boundary)."""
    start = 0 if layer % 2 == 1 else 1
    return [(q, q + 1) for q in range(start, num_qubits - 1, 2)]


def sample_circuit(
    num_qubits: int,
    measurement_rate: float,
    seed: int,
    t_encoding: int | None = None,
    t_bulk: int | None = None,
) -> CircuitDescriptor:
    """Draw one random circuit realization, deterministically from `seed`."""
    if num_qubits % 2 != 0:
        raise ValueError(f"chain length must be even, got {num_qubits}")
    if not 2 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"chain length must be in [2, {MAX_QUBITS}], got {num_qubits}")
    if not 0.0 <= measurement_rate <= 1.0:
        raise ValueError(f"measurement rate must be in [0, 1], got {measurement_rate}")
    if t_encoding is None:
        t_encoding = 2 * num_qubits
    if t_bulk is None:
        t_bulk = 2 * num_qubits

    phi_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))
    site_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1,))))

    phi: dict[tuple[int, int], float] = {}
    for layer in range(1, t_encoding + t_bulk + 1):
        for i, j in layer_pairs(num_qubits, layer):
            phi[(layer, i)] = PHI_ANGLES[phi_rng.integers(3)]
            phi[(layer, j)] = PHI_ANGLES[phi_rng.integers(3)]

    sites = []
    for layer in range(t_encoding + 1, t_encoding + t_bulk + 1):
        for qubit in range(num_qubits):
            if site_rng.random() < measurement_rate:
                sites.append(MeasurementSite(layer, qubit))

    return CircuitDescriptor(
        num_qubits=num_qubits,
        t_encoding=t_encoding,
        t_bulk=t_bulk,
        measurement_rate=measurement_rate,
        seed=int(seed),
        phi=phi,
        sites=tuple(sites),
    )


def gate_sequence(c: CircuitDescriptor, layer: int) -> list[tuple[tuple[int, int], float, float]]:
    """Gates of one layer as ((i, i+1), phi_i, phi_{i+1}) triples: each pair
    gets R(pi/2, phi_i), R(pi/2, phi_{i+1}) followed by MS(pi/4)."""
    if not 1 <= layer <= c.total_layers:
        raise ValueError(f"layer must be in [1, {c.total_layers}], got {layer}")
    return [
        ((i, j), c.phi[(layer, i)], c.phi[(layer, j)])
        for i, j in layer_pairs(c.num_qubits, layer)
    ]


def _canonical_body(c: CircuitDescriptor) -> dict:
    phi_rows = [
        [layer, qubit, _ANGLE_TO_TAG[angle]]
        for (layer, qubit), angle in sorted(c.phi.items())
    ]
    return {
        "L": c.num_qubits,
        "measurement_rate": c.measurement_rate,
        "phi": phi_rows,
        "seed": c.seed,
        "sites": [[s.layer, s.qubit] for s in c.sites],
        "t_bulk": c.t_bulk,
        "t_encoding": c.t_encoding,
    }


def _hash_body(body: dict) -> str:
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def serialize(c: CircuitDescriptor) -> str:
    """Canonical, diffable text form with format version and content hash."""
    body = _canonical_body(c)
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "hash": _hash_body(body),
        "body": body,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def deserialize(text: str) -> CircuitDescriptor:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid circuit text: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise FormatError("missing or wrong format tag")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported version {doc.get('version')!r}")
    body = doc.get("body")
    if not isinstance(body, dict):
        raise FormatError("missing body")
    if _hash_body(body) != doc.get("hash"):
        raise FormatError("content hash mismatch")
    try:
        phi = {
            (int(layer), int(qubit)): _TAG_TO_ANGLE[tag]
            for layer, qubit, tag in body["phi"]
        }
        sites = tuple(MeasurementSite(int(t), int(q)) for t, q in body["sites"])
        c = CircuitDescriptor(
            num_qubits=int(body["L"]),
            t_encoding=int(body["t_encoding"]),
            t_bulk=int(body["t_bulk"]),
            measurement_rate=float(body["measurement_rate"]),
            seed=int(body["seed"]),
            phi=phi,
            sites=sites,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed body: {exc}") from exc
    _validate(c)
    return c


def _validate(c: CircuitDescriptor) -> None:
    if c.num_qubits % 2 != 0 or not 2 <= c.num_qubits <= MAX_QUBITS:
        raise FormatError(f"bad chain length {c.num_qubits}")
    for s in c.sites:
        if not (c.t_encoding < s.layer <= c.total_layers):
            raise FormatError(f"measurement site {s} outside the bulk phase")
        if not 0 <= s.qubit < c.num_qubits:
            raise FormatError(f"measurement site {s} qubit out of range")
    if list(c.sites) != sorted(c.sites):
        raise FormatError("sites not in layer-major, qubit-ascending order")
    for layer in range(1, c.total_layers + 1):
        for i, j in layer_pairs(c.num_qubits, layer):
            if (layer, i) not in c.phi or (layer, j) not in c.phi:
                raise FormatError(f"missing phi entry at layer {layer}")
