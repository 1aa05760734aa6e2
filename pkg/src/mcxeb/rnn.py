"""Autoregressive GRU over N-bit measurement records, written from scratch.

One GRU cell (sigmoid gates, tanh candidate, one bias per gate), inverted
dropout on the hidden state, a linear head to 2 logits, and a softmax. The
chain is kicked off by the start token (0, 0); outcome bits are one-hot
encoded as 0 -> (1, 0), 1 -> (0, 1). Training minimizes the NLL averaged
over both the batch and the measurement sites, with hand-written BPTT and
adaptive-moment gradient descent (beta1=0.9, beta2=0.999, eps=1e-8).

All log-probabilities are natural-log and accumulated in double precision;
probabilities are re-exponentiated only at the estimator boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EnumerationInfeasibleError,
    FormatError,
    TrainingDivergenceError,
)
from .trajectory import MeasurementRecord
from .xeb import XebEstimate

INPUT_DIM = 2
OUTPUT_DIM = 2

CHECKPOINT_FORMAT = "mcxeb-rnn"
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Flattening order for gradients, optimizer state, and checkpoints.
PARAM_NAMES = (
    "w_iz", "w_hz", "b_z",
    "w_ir", "w_hr", "b_r",
    "w_in", "w_hn", "b_n",
    "w_out", "b_out",
)


@dataclass
class GruParameters:
    w_iz: np.ndarray  # (Nh, 2) update gate, input kernel
    w_hz: np.ndarray  # (Nh, Nh) update gate, recurrent kernel
    b_z: np.ndarray  # (Nh,)
    w_ir: np.ndarray  # reset gate
    w_hr: np.ndarray
    b_r: np.ndarray
    w_in: np.ndarray  # candidate
    w_hn: np.ndarray
    b_n: np.ndarray
    w_out: np.ndarray  # (2, Nh) output head
    b_out: np.ndarray  # (2,)

    @property
    def n_hidden(self) -> int:
        return self.b_z.shape[0]

    def as_list(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def copy(self) -> "GruParameters":
        return GruParameters(*(a.copy() for a in self.as_list()))


@dataclass
class RnnModel:
    params: GruParameters
    dropout_rate: float
    record_length: int
    mode: str = "eval"  # train | eval


@dataclass
class TrainingConfig:
    dataset_size: int
    batch_size: int
    validation_size: int
    n_hidden: int
    dropout_rate: float
    n_epochs: int
    learning_rate: float = 1e-3
    n_sample: int | None = None  # None = exact enumeration at estimation time
    seed: int = 0


@dataclass
class LossReport:
    """Per-epoch NLL per site, averaged over the batch as well."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def init_model(
    n_hidden: int, record_length: int, dropout_rate: float, seed: int
) -> RnnModel:
    """Uniform +-1/sqrt(Nh) initialization for every kernel and bias."""
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))
    bound = 1.0 / math.sqrt(n_hidden)

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    params = GruParameters(
        w_iz=u(n_hidden, INPUT_DIM), w_hz=u(n_hidden, n_hidden), b_z=u(n_hidden),
        w_ir=u(n_hidden, INPUT_DIM), w_hr=u(n_hidden, n_hidden), b_r=u(n_hidden),
        w_in=u(n_hidden, INPUT_DIM), w_hn=u(n_hidden, n_hidden), b_n=u(n_hidden),
        w_out=u(OUTPUT_DIM, n_hidden), b_out=u(OUTPUT_DIM),
    )
    return RnnModel(params, dropout_rate, record_length, mode="eval")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _log_softmax(logits):
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _cell_forward(p: GruParameters, h, x):
    """One GRU step for a batch; returns (h_new, cache_for_backward)."""
    z = _sigmoid(x @ p.w_iz.T + h @ p.w_hz.T + p.b_z)
    r = _sigmoid(x @ p.w_ir.T + h @ p.w_hr.T + p.b_r)
    hr = h @ p.w_hn.T
    cand = np.tanh(x @ p.w_in.T + r * hr + p.b_n)
    h_new = (1.0 - z) * cand + z * h
    return h_new, (x, h, z, r, hr, cand)


def forward_step(model: RnnModel, hidden: np.ndarray, x: np.ndarray):
    """Single eval-mode step: returns (new_hidden, conditional distribution y)."""
    if not np.all(np.isfinite(hidden)):
        raise TrainingDivergenceError("non-finite hidden state")
    h_new, _ = _cell_forward(model.params, hidden[None, :], np.asarray(x, dtype=float)[None, :])
    logits = h_new @ model.params.w_out.T + model.params.b_out
    y = np.exp(_log_softmax(logits))
    return h_new[0], y[0]


def _sequence_log_probs(model: RnnModel, bits: np.ndarray) -> np.ndarray:
    """Log-probability of each row of `bits` (shape (B, N)) in eval mode."""
    p = model.params
    batch, n_sites = bits.shape
    h = np.zeros((batch, p.n_hidden))
    x = np.zeros((batch, INPUT_DIM))  # start token (0, 0)
    total = np.zeros(batch)
    for t in range(n_sites):
        h, _ = _cell_forward(p, h, x)
        logits = h @ p.w_out.T + p.b_out
        logp = _log_softmax(logits)
        sel = bits[:, t]
        total += logp[np.arange(batch), sel]
        x = np.zeros((batch, INPUT_DIM))
        x[np.arange(batch), sel] = 1.0
    return total


def sequence_log_prob(model: RnnModel, record: MeasurementRecord) -> float:
    """Natural-log probability the model assigns to one record."""
    if len(record) != model.record_length:
        raise ValueError(
            f"record has {len(record)} bits, model expects {model.record_length}"
        )
    if model.record_length == 0:
        return 0.0
    bits = np.array([record.bits], dtype=np.int64)
    return float(_sequence_log_probs(model, bits)[0])


def _nll(model: RnnModel, bits: np.ndarray) -> float:
    """NLL per site per sample over a dataset, eval mode."""
    return float(-np.mean(_sequence_log_probs(model, bits)) / bits.shape[1])


def _forward_backward(
    p: GruParameters,
    bits: np.ndarray,
    dropout_rate: float,
    rng: np.random.Generator | None,
) -> tuple[float, list[np.ndarray]]:
    """Batched BPTT; returns (loss, gradients in PARAM_NAMES order).

    Loss is the NLL averaged over the batch and the sites. Dropout (inverted
    scaling) is applied to the hidden state before the output head when `rng`
    is given and dropout_rate > 0.
    """
    batch, n_sites = bits.shape
    n_h = p.n_hidden
    h = np.zeros((batch, n_h))
    x = np.zeros((batch, INPUT_DIM))
    caches = []
    loss = 0.0
    scale = 1.0 / (batch * n_sites)
    dlogits_steps = []
    for t in range(n_sites):
        h, cache = _cell_forward(p, h, x)
        if rng is not None and dropout_rate > 0.0:
            mask = (rng.random((batch, n_h)) >= dropout_rate) / (1.0 - dropout_rate)
        else:
            mask = None
        dropped = h * mask if mask is not None else h
        logits = dropped @ p.w_out.T + p.b_out
        logp = _log_softmax(logits)
        sel = bits[:, t]
        loss -= np.sum(logp[np.arange(batch), sel]) * scale
        # d(loss)/d(logits) for softmax + NLL
        dlogits = np.exp(logp)
        dlogits[np.arange(batch), sel] -= 1.0
        dlogits *= scale
        dlogits_steps.append(dlogits)
        caches.append((cache, mask, dropped))
        x = np.zeros((batch, INPUT_DIM))
        x[np.arange(batch), sel] = 1.0

    grads = {name: np.zeros_like(getattr(p, name)) for name in PARAM_NAMES}
    dh_next = np.zeros((batch, n_h))
    for t in range(n_sites - 1, -1, -1):
        (x_t, h_prev, z, r, hr, cand), mask, dropped = caches[t]
        dlogits = dlogits_steps[t]
        grads["w_out"] += dlogits.T @ dropped
        grads["b_out"] += dlogits.sum(axis=0)
        dh = dlogits @ p.w_out
        if mask is not None:
            dh *= mask
        dh += dh_next
        # h_new = (1 - z) * cand + z * h_prev
        dz = dh * (h_prev - cand)
        dcand = dh * (1.0 - z)
        dh_prev = dh * z
        dpre_n = dcand * (1.0 - cand * cand)
        grads["w_in"] += dpre_n.T @ x_t
        grads["b_n"] += dpre_n.sum(axis=0)
        dr = dpre_n * hr
        dhr = dpre_n * r
        grads["w_hn"] += dhr.T @ h_prev
        dh_prev += dhr @ p.w_hn
        dpre_z = dz * z * (1.0 - z)
        grads["w_iz"] += dpre_z.T @ x_t
        grads["w_hz"] += dpre_z.T @ h_prev
        grads["b_z"] += dpre_z.sum(axis=0)
        dh_prev += dpre_z @ p.w_hz
        dpre_r = dr * r * (1.0 - r)
        grads["w_ir"] += dpre_r.T @ x_t
        grads["w_hr"] += dpre_r.T @ h_prev
        grads["b_r"] += dpre_r.sum(axis=0)
        dh_prev += dpre_r @ p.w_hr
        dh_next = dh_prev
    return loss, [grads[name] for name in PARAM_NAMES]


class _Adam:
    def __init__(self, shapes, learning_rate: float):
        self.lr = learning_rate
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        correct1 = 1.0 - ADAM_BETA1**self.t
        correct2 = 1.0 - ADAM_BETA2**self.t
        for w, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            w -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)


def train(
    dataset: list[MeasurementRecord],
    config: TrainingConfig,
    seed: int | None = None,
) -> tuple[RnnModel, LossReport]:
    """Train on `dataset`, returning the best-validation-loss checkpoint.

    The dataset is split by a seeded permutation into a validation set of
    config.validation_size records and a training set of the rest; batches
    are reshuffled each epoch with a seeded permutation (last partial batch
    kept). Deterministic given (dataset, config, seed).
    """
    if seed is None:
        seed = config.seed
    n_records = len(dataset)
    if n_records != config.dataset_size:
        raise ValueError(
            f"dataset has {n_records} records, config says {config.dataset_size}"
        )
    if n_records < config.batch_size + config.validation_size:
        raise ValueError("dataset smaller than batch size + validation size")
    n_sites = len(dataset[0])
    bits = np.array([rec.bits for rec in dataset], dtype=np.int64).reshape(n_records, n_sites)

    model = init_model(config.n_hidden, n_sites, config.dropout_rate, seed)
    split_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1,))))
    shuffle_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2,))))
    dropout_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(3,))))

    perm = split_rng.permutation(n_records)
    val_bits = bits[perm[: config.validation_size]]
    train_bits = bits[perm[config.validation_size :]]

    report = LossReport()
    best_val = math.inf
    best_params = model.params.copy()
    params_list = model.params.as_list()
    opt = _Adam([a.shape for a in params_list], config.learning_rate)

    for epoch in range(config.n_epochs):
        order = shuffle_rng.permutation(train_bits.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, train_bits.shape[0], config.batch_size):
            batch = train_bits[order[lo : lo + config.batch_size]]
            loss, grads = _forward_backward(
                model.params, batch, config.dropout_rate, dropout_rng
            )
            if not math.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch offset {lo}"
                )
            opt.step(params_list, grads)
            epoch_loss += loss
            n_batches += 1
        val_loss = _nll(model, val_bits) if val_bits.size else math.inf
        report.train_loss.append(float(epoch_loss / n_batches))
        report.val_loss.append(float(val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = model.params.copy()
            report.best_epoch = epoch
    return RnnModel(best_params, config.dropout_rate, n_sites, mode="eval"), report


def sample(model: RnnModel, count: int, seed: int) -> list[MeasurementRecord]:
    """Ancestral sampling of `count` records (eval mode)."""
    p = model.params
    n_sites = model.record_length
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    h = np.zeros((count, p.n_hidden))
    x = np.zeros((count, INPUT_DIM))
    out = np.empty((count, n_sites), dtype=np.int64)
    for t in range(n_sites):
        h, _ = _cell_forward(p, h, x)
        logits = h @ p.w_out.T + p.b_out
        y = np.exp(_log_softmax(logits))
        draws = (rng.random(count) >= y[:, 0]).astype(np.int64)
        out[:, t] = draws
        x = np.zeros((count, INPUT_DIM))
        x[np.arange(count), draws] = 1.0
    return [MeasurementRecord(tuple(int(b) for b in row)) for row in out]


def enumerate_model_distribution(model: RnnModel, max_bits: int = 22) -> np.ndarray:
    """Model probability of every record, indexed with site 1 as the MSB."""
    n_sites = model.record_length
    if n_sites > max_bits:
        raise EnumerationInfeasibleError(f"N={n_sites} exceeds enumeration budget {max_bits}")
    bits = _all_bitstrings(n_sites)
    return np.exp(_sequence_log_probs(model, bits))


def _all_bitstrings(n_sites: int) -> np.ndarray:
    idx = np.arange(1 << n_sites, dtype=np.int64)
    return (idx[:, None] >> (n_sites - 1 - np.arange(n_sites))) & 1


def chi_rnn(
    rho_model: RnnModel,
    sigma_model: RnnModel,
    n_sample: int | None,
    seed: int = 0,
    circuit_hash: str = "",
    m: int | None = None,
) -> XebEstimate:
    """Cross entropy from two trained models.

    Finite mode: numerator = mean sigma-model probability of rho-model
    samples, denominator likewise for sigma-model samples. Exact mode
    (n_sample None): both sums enumerated over all 2^N records.
    """
    if rho_model.record_length != sigma_model.record_length:
        raise ValueError("models disagree on record length")
    if n_sample is None:
        p_rho = enumerate_model_distribution(rho_model)
        p_sigma = enumerate_model_distribution(sigma_model)
        numerator = float(np.dot(p_rho, p_sigma))
        denominator = float(np.dot(p_sigma, p_sigma))
    else:
        rho_recs = sample(rho_model, n_sample, _spawn_seed(seed, 0))
        sigma_recs = sample(sigma_model, n_sample, _spawn_seed(seed, 1))
        rho_bits = np.array([r.bits for r in rho_recs], dtype=np.int64)
        sigma_bits = np.array([r.bits for r in sigma_recs], dtype=np.int64)
        numerator = float(np.mean(np.exp(_sequence_log_probs(sigma_model, rho_bits))))
        denominator = float(np.mean(np.exp(_sequence_log_probs(sigma_model, sigma_bits))))
    return XebEstimate(
        chi=numerator / denominator,
        estimator="rnn",
        numerator=numerator,
        denominator=denominator,
        circuit_hash=circuit_hash,
        m=m,
    )


def _spawn_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(k,)).generate_state(1)[0])


def gradient_check(
    model: RnnModel, batch: np.ndarray, epsilon_fd: float = 1e-5
) -> float:
    """Max relative error of BPTT gradients against central finite differences.

    Intended for small models (Nh <= 4, N <= 4); dropout disabled so the loss
    is a pure function of the parameters.
    """
    p = model.params
    _, grads = _forward_backward(p, batch, 0.0, None)
    worst = 0.0
    for name, grad in zip(PARAM_NAMES, grads):
        w = getattr(p, name)
        flat_w = w.reshape(-1)
        flat_g = grad.reshape(-1)
        for i in range(flat_w.size):
            orig = flat_w[i]
            flat_w[i] = orig + epsilon_fd
            up, _ = _forward_backward(p, batch, 0.0, None)
            flat_w[i] = orig - epsilon_fd
            down, _ = _forward_backward(p, batch, 0.0, None)
            flat_w[i] = orig
            fd = (up - down) / (2.0 * epsilon_fd)
            denom = max(abs(fd), abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(fd - flat_g[i]) / denom)
    return worst


def save_model(path, model: RnnModel, seed: int | None = None, extra: dict | None = None) -> None:
    """Versioned checkpoint: dims and flat parameter arrays in full decimal
    precision (lossless float round-trip via repr)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "n_hidden": model.params.n_hidden,
        "record_length": model.record_length,
        "dropout_rate": model.dropout_rate,
        "seed": seed,
        "optimizer": "adam(beta1=0.9,beta2=0.999,eps=1e-8)",
        "params": {
            name: getattr(model.params, name).reshape(-1).tolist()
            for name in PARAM_NAMES
        },
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> RnnModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError("not an rnn checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {doc.get('version')!r}")
    n_h = doc["n_hidden"]
    shapes = {
        "w_iz": (n_h, INPUT_DIM), "w_hz": (n_h, n_h), "b_z": (n_h,),
        "w_ir": (n_h, INPUT_DIM), "w_hr": (n_h, n_h), "b_r": (n_h,),
        "w_in": (n_h, INPUT_DIM), "w_hn": (n_h, n_h), "b_n": (n_h,),
        "w_out": (OUTPUT_DIM, n_h), "b_out": (OUTPUT_DIM,),
    }
    arrays = {
        name: np.array(doc["params"][name], dtype=float).reshape(shapes[name])
        for name in PARAM_NAMES
    }
    return RnnModel(
        GruParameters(**arrays), doc["dropout_rate"], doc["record_length"], mode="eval"
    )


def write_training_csv(path, report: LossReport) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_nll,val_nll\n")
        for i, (tr, va) in enumerate(zip(report.train_loss, report.val_loss)):
            fh.write(f"{i},{tr!r},{va!r}\n")
