"""Wire the library into reproducible experiments.

Four experiment kinds, each driven by a versioned JSON config and emitting
CSVs plus a run manifest with content hashes:

  * sweep        - circuit-averaged chi over an (L, p) grid;
  * convergence  - chi_C versus number of runs M for one fixed circuit;
  * delta-m      - histogram-versus-GRU accuracy curves and the M_min gap;
  * entropy      - circuit-averaged half-chain entropy versus depth.

Every random quantity is seeded by logical index (SeedSequence spawn keys),
so results are byte-identical regardless of the worker count. Workers > 1
fan tasks out over a process pool; reduction keeps task order.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__, rnn, xeb
from .circuit import sample_circuit, serialize
from .errors import ConfigError, DegenerateEstimateError, TrainingDivergenceError
from .trajectory import InitialState, batch_sample, entropy_trace, write_records

CONFIG_VERSION = 1
MAX_DEGENERATE_RETRIES = 5
FAILURE_ABORT_FRACTION = 0.10

# Dataset sizes used for the accuracy/delta-M studies.
DEFAULT_M_GRID = [100, 500, 1000, 2000, 3000, 4000, 5000, 6000,
                  7000, 8000, 9000, 10000, 12000, 15000]

# Published hyperparameter tables keyed by dataset size M:
# (batch size, validation size, N_h, dropout rate, epochs, n_sample; None = exact).
TRAINING_TABLE_P01 = {
    15000: (1000, 3000, 20, 0.2, 60000, None),
    12000: (1000, 2000, 18, 0.2, 60000, None),
    10000: (1000, 2000, 14, 0.1, 60000, None),
    9000: (1000, 2000, 13, 0.1, 60000, None),
    8000: (1000, 1000, 12, 0.2, 60000, None),
    7000: (1000, 1000, 12, 0.2, 60000, None),
    6000: (1000, 1000, 12, 0.2, 60000, None),
    5000: (1000, 1000, 12, 0.35, 60000, None),
    4000: (1000, 1000, 12, 0.6, 60000, None),
    3000: (600, 600, 10, 0.5, 60000, None),
    2000: (400, 400, 9, 0.5, 60000, None),
    1000: (200, 200, 7, 0.6, 60000, None),
    500: (100, 100, 5, 0.6, 60000, None),
    100: (20, 20, 3, 0.6, 60000, None),
}
TRAINING_TABLE_P02 = {
    12000: (1000, 2000, 19, 0.1, 40000, 20000),
    10000: (1000, 2000, 18, 0.1, 40000, 20000),
    7000: (1000, 1000, 18, 0.2, 40000, 50000),
    5000: (1000, 1000, 17, 0.2, 40000, 20000),
    3000: (600, 600, 14, 0.2, 40000, 50000),
    1000: (200, 200, 12, 0.4, 60000, 50000),
    200: (40, 40, 6, 0.5, 60000, 50000),
}

ENTROPY_COLUMNS = ["L", "p", "layer", "S_mean", "S_sem", "n_circuits"]
SUMMARY_COLUMNS = ["L", "p", "chi_mean", "chi_std", "n_circuits"]


@dataclass
class RunResult:
    outdir: str
    files: list[str]
    failures: int = 0
    notes: dict = field(default_factory=dict)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg.get('version')!r}")
    if "experiment" not in cfg:
        raise ConfigError("config missing 'experiment'")
    return cfg


def _derive(seed: int, *key: int) -> int:
    return int(
        np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1, dtype=np.uint64)[0]
    )


def _run_tasks(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.get_context("fork").Pool(workers) as pool:
        return pool.map(fn, tasks)


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"config missing {key!r}")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"config key {key!r} has wrong type {type(value).__name__}")
    return value


def _hash_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(outdir: str, cfg: dict, seed: int, workers: int, result: RunResult,
                   elapsed: float) -> None:
    manifest = {
        "code_version": __version__,
        "config_hash": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()
        ).hexdigest(),
        "seed": seed,
        "workers": workers,
        "failures": result.failures,
        "notes": result.notes,
        "files": {
            rel: _hash_file(os.path.join(outdir, rel)) for rel in sorted(result.files)
        },
        "wall_clock_seconds": elapsed,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _persist_circuit(outdir: str, text: str, chash: str, files: list[str]) -> None:
    rel = os.path.join("circuits", f"{chash}.json")
    path = os.path.join(outdir, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    if not os.path.exists(path):
        with open(path, "w") as fh:
            fh.write(text)
        files.append(rel)


# ---------------------------------------------------------------- sweep

def _sweep_task(args):
    li, pi, ci, num_qubits, rate, seed, num_runs, estimator = args
    last_error = "degenerate estimate"
    for retry in range(MAX_DEGENERATE_RETRIES):
        c = sample_circuit(num_qubits, rate, _derive(seed, 0, li, pi, ci, retry))
        try:
            if estimator == "exact":
                est = xeb.chi_exact(c)
            else:
                _, rho_probs = batch_sample(
                    c, InitialState.PLUS, num_runs,
                    _derive(seed, 1, li, pi, ci, retry), replay_init=InitialState.ZERO,
                )
                _, sigma_probs = batch_sample(
                    c, InitialState.ZERO, num_runs,
                    _derive(seed, 2, li, pi, ci, retry), replay_init=InitialState.ZERO,
                )
                est = xeb.chi_histogram(
                    rho_probs, sigma_probs, c.content_hash(), num_qubits, rate
                )
            return ("ok", li, pi, ci, est.chi, est.estimator, est.m,
                    serialize(c), c.content_hash(), retry)
        except DegenerateEstimateError:
            continue
        except Exception as exc:  # per-circuit isolation; counted below
            last_error = repr(exc)
            break
    return ("fail", li, pi, ci, last_error)


def run_sweep(cfg: dict, outdir: str, seed: int, workers: int,
              estimator: str | None = None) -> RunResult:
    ls = _require(cfg, "L", list)
    ps = _require(cfg, "p", list)
    num_circuits = int(cfg.get("num_circuits", 100))
    num_runs = int(cfg.get("num_runs", 5000))
    estimator = estimator or cfg.get("estimator", "histogram")
    if estimator not in ("histogram", "exact"):
        raise ConfigError(f"sweep estimator must be histogram or exact, got {estimator!r}")
    for num_qubits in ls:
        if not (isinstance(num_qubits, int) and 2 <= num_qubits <= 24 and num_qubits % 2 == 0):
            raise ConfigError(f"infeasible chain length {num_qubits!r}")
    if num_circuits < 1 or num_runs < 1:
        raise ConfigError("num_circuits and num_runs must be positive")

    tasks = [
        (li, pi, ci, num_qubits, rate, seed, num_runs, estimator)
        for li, num_qubits in enumerate(ls)
        for pi, rate in enumerate(ps)
        for ci in range(num_circuits)
    ]
    results = _run_tasks(_sweep_task, tasks, workers)

    files: list[str] = []
    rows = []
    retried = 0
    failures = []
    grouped: dict[tuple, list[float]] = {}
    for res in results:
        if res[0] == "fail":
            failures.append({"L": ls[res[1]], "p": ps[res[2]],
                             "circuit_index": res[3], "error": res[4]})
            continue
        _, li, pi, ci, chi, est_kind, m_used, text, chash, retry = res
        retried += retry
        rows.append({"L": ls[li], "p": ps[pi], "circuit_index": ci, "chi": chi,
                     "estimator": est_kind, "M": m_used})
        grouped.setdefault((ls[li], ps[pi]), []).append(chi)
        _persist_circuit(outdir, text, chash, files)

    if len(failures) > FAILURE_ABORT_FRACTION * len(tasks):
        raise RuntimeError(
            f"{len(failures)} of {len(tasks)} circuits failed "
            f"(> {FAILURE_ABORT_FRACTION:.0%} threshold)"
        )

    xeb.write_sweep_csv(os.path.join(outdir, "sweep.csv"), rows)
    files.append("sweep.csv")
    summary_rows = [
        {"L": num_qubits, "p": rate,
         "chi_mean": float(np.mean(chis)),
         "chi_std": float(np.std(chis, ddof=1)) if len(chis) > 1 else 0.0,
         "n_circuits": len(chis)}
        for (num_qubits, rate), chis in sorted(grouped.items())
    ]
    xeb.write_csv(os.path.join(outdir, "sweep_summary.csv"), SUMMARY_COLUMNS, summary_rows)
    files.append("sweep_summary.csv")
    return RunResult(outdir, files, failures=len(failures),
                     notes={"degenerate_resamples": retried, "failed_circuits": failures})


# ---------------------------------------------------------- convergence

def _fixed_circuit(cfg: dict):
    num_qubits = int(_require(cfg, "L"))
    rate = float(_require(cfg, "p"))
    circuit_seed = int(_require(cfg, "circuit_seed"))
    return sample_circuit(num_qubits, rate, circuit_seed)


def _prefix_datasets(c, m_max: int, seed: int):
    """One rho and one sigma dataset of m_max runs each, with sigma scores;
    per-M analyses take prefixes so every M shares the same outcomes."""
    rho_records, rho_scores = batch_sample(
        c, InitialState.PLUS, m_max, _derive(seed, 101), replay_init=InitialState.ZERO
    )
    sigma_records, sigma_scores = batch_sample(
        c, InitialState.ZERO, m_max, _derive(seed, 102), replay_init=InitialState.ZERO
    )
    return rho_records, rho_scores, sigma_records, sigma_scores


def _reference(cfg: dict, c, hist_estimates) -> tuple[float, str]:
    mode = cfg.get("reference", "auto")
    if mode not in ("auto", "exact", "plateau"):
        raise ConfigError(f"reference must be auto, exact or plateau, got {mode!r}")
    if mode == "auto":
        mode = "exact" if c.num_measurements <= xeb.MAX_ENUM_MEASUREMENTS else "plateau"
    if mode == "exact":
        return xeb.chi_exact(c).chi, xeb.REF_EXACT
    return hist_estimates[-1].chi, xeb.REF_PLATEAU


def run_convergence(cfg: dict, outdir: str, seed: int, workers: int) -> RunResult:
    c = _fixed_circuit(cfg)
    m_grid = sorted(int(m) for m in cfg.get("m_grid", DEFAULT_M_GRID))
    _, rho_scores, _, sigma_scores = _prefix_datasets(c, m_grid[-1], seed)
    estimates = [
        xeb.chi_histogram(rho_scores[:m], sigma_scores[:m], c.content_hash(),
                          c.num_qubits, c.measurement_rate)
        for m in m_grid
    ]
    ref_value, ref_kind = _reference(cfg, c, estimates)
    curve = xeb.accuracy_curve(estimates, ref_value, ref_kind)
    files: list[str] = []
    _persist_circuit(outdir, serialize(c), c.content_hash(), files)
    xeb.write_curve_csv(os.path.join(outdir, "curve.csv"), [curve])
    files.append("curve.csv")
    return RunResult(outdir, files,
                     notes={"circuit": c.content_hash(), "N": c.num_measurements,
                            "ref_value": ref_value, "ref_kind": ref_kind})


# -------------------------------------------------------------- delta-m

def _training_config(table_row, m: int, seed: int) -> rnn.TrainingConfig:
    return rnn.TrainingConfig(
        dataset_size=m,
        batch_size=int(table_row["batch_size"]),
        validation_size=int(table_row["validation_size"]),
        n_hidden=int(table_row["n_hidden"]),
        dropout_rate=float(table_row["dropout_rate"]),
        n_epochs=int(table_row["n_epochs"]),
        n_sample=table_row.get("n_sample"),
        seed=seed,
    )


def default_training_table(rate: float, epoch_scale: float = 1.0) -> dict:
    """Published hyperparameters as a config-style table keyed by str(M)."""
    source = TRAINING_TABLE_P02 if rate >= 0.15 else TRAINING_TABLE_P01
    return {
        str(m): {
            "batch_size": batch, "validation_size": val, "n_hidden": n_h,
            "dropout_rate": drop, "n_epochs": max(1, int(epochs * epoch_scale)),
            "n_sample": n_sample,
        }
        for m, (batch, val, n_h, drop, epochs, n_sample) in source.items()
    }


def _delta_m_task(args):
    (m, table_row, seed, cfg_blob, outdir) = args
    c = _fixed_circuit(cfg_blob)
    rho_records, rho_scores, sigma_records, sigma_scores = _prefix_datasets(
        c, m, seed
    )
    hist = xeb.chi_histogram(rho_scores[:m], sigma_scores[:m], c.content_hash(),
                             c.num_qubits, c.measurement_rate)
    try:
        rho_cfg = _training_config(table_row, m, _derive(seed, 201, m))
        sigma_cfg = _training_config(table_row, m, _derive(seed, 202, m))
        rho_model, rho_report = rnn.train(rho_records[:m], rho_cfg)
        sigma_model, sigma_report = rnn.train(sigma_records[:m], sigma_cfg)
        rnn_est = rnn.chi_rnn(rho_model, sigma_model, table_row.get("n_sample"),
                              seed=_derive(seed, 203, m), circuit_hash=c.content_hash(), m=m)
        written = []
        for tag, model, report, tseed in (
            ("rho", rho_model, rho_report, rho_cfg.seed),
            ("sigma", sigma_model, sigma_report, sigma_cfg.seed),
        ):
            ck = os.path.join("models", f"{tag}_M{m}.json")
            rnn.save_model(os.path.join(outdir, ck), model, seed=tseed,
                           extra={"best_epoch": report.best_epoch})
            tc = os.path.join("models", f"{tag}_M{m}_training.csv")
            rnn.write_training_csv(os.path.join(outdir, tc), report)
            written += [ck, tc]
        return ("ok", m, hist, rnn_est, written)
    except TrainingDivergenceError as exc:
        return ("diverged", m, hist, repr(exc), [])


def run_delta_m(cfg: dict, outdir: str, seed: int, workers: int) -> RunResult:
    c = _fixed_circuit(cfg)
    m_grid = sorted(int(m) for m in cfg.get("m_grid", DEFAULT_M_GRID))
    table = cfg.get("training") or default_training_table(
        float(cfg["p"]), float(cfg.get("epoch_scale", 1.0))
    )
    for m in m_grid:
        if str(m) not in table:
            raise ConfigError(f"no training config for M={m}")
    os.makedirs(os.path.join(outdir, "models"), exist_ok=True)
    cfg_blob = {"L": cfg["L"], "p": cfg["p"], "circuit_seed": cfg["circuit_seed"]}
    tasks = [(m, table[str(m)], seed, cfg_blob, outdir) for m in m_grid]
    results = _run_tasks(_delta_m_task, tasks, workers)

    files: list[str] = []
    _persist_circuit(outdir, serialize(c), c.content_hash(), files)
    hist_estimates, rnn_estimates, diverged = [], [], []
    for res in results:
        if res[0] == "ok":
            _, m, hist_est, rnn_est, written = res
            hist_estimates.append(hist_est)
            rnn_est.m = m
            rnn_estimates.append(rnn_est)
            files += written
        else:
            hist_estimates.append(res[2])
            diverged.append({"M": res[1], "error": res[3]})
    if not rnn_estimates:
        raise RuntimeError("all trainings diverged")

    ref_value, ref_kind = _reference(cfg, c, hist_estimates)
    hist_curve = xeb.accuracy_curve(hist_estimates, ref_value, ref_kind)
    rnn_curve = xeb.accuracy_curve(rnn_estimates, ref_value, ref_kind)
    entries = xeb.delta_m_report(hist_curve, rnn_curve, cfg.get("epsilons"))

    xeb.write_curve_csv(os.path.join(outdir, "curve.csv"), [hist_curve, rnn_curve])
    xeb.write_delta_m_csv(os.path.join(outdir, "deltam.csv"), entries)
    files += ["curve.csv", "deltam.csv"]
    return RunResult(outdir, files, failures=len(diverged),
                     notes={"circuit": c.content_hash(), "N": c.num_measurements,
                            "ref_value": ref_value, "ref_kind": ref_kind,
                            "m_min_rule": "first grid point achieving epsilon",
                            "diverged": diverged,
                            "epoch_scale": cfg.get("epoch_scale", 1.0)})


# -------------------------------------------------------------- entropy

def _entropy_task(args):
    li, pi, ci, num_qubits, rate, seed, pair_average = args
    c = sample_circuit(num_qubits, rate, _derive(seed, 301, li, pi, ci))
    trace = entropy_trace(c, InitialState.PLUS, _derive(seed, 302, li, pi, ci),
                          pair_average=pair_average)
    return (li, pi, trace.layers, trace.values)


def run_entropy(cfg: dict, outdir: str, seed: int, workers: int) -> RunResult:
    ls = _require(cfg, "L", list)
    ps = _require(cfg, "p", list)
    num_circuits = int(cfg.get("num_circuits", 100))
    pair_average = bool(cfg.get("pair_average", True))
    tasks = [
        (li, pi, ci, num_qubits, rate, seed, pair_average)
        for li, num_qubits in enumerate(ls)
        for pi, rate in enumerate(ps)
        for ci in range(num_circuits)
    ]
    results = _run_tasks(_entropy_task, tasks, workers)
    grouped: dict[tuple, list] = {}
    layer_axis: dict[tuple, list[int]] = {}
    for li, pi, layers, values in results:
        grouped.setdefault((li, pi), []).append(values)
        layer_axis[(li, pi)] = layers
    rows = []
    for (li, pi), traces in sorted(grouped.items()):
        arr = np.array(traces)
        mean = arr.mean(axis=0)
        sem = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0]) if arr.shape[0] > 1 else np.zeros(arr.shape[1])
        for k, layer in enumerate(layer_axis[(li, pi)]):
            rows.append({"L": ls[li], "p": ps[pi], "layer": layer,
                         "S_mean": float(mean[k]), "S_sem": float(sem[k]),
                         "n_circuits": arr.shape[0]})
    xeb.write_csv(os.path.join(outdir, "entropy.csv"), ENTROPY_COLUMNS, rows)
    return RunResult(outdir, ["entropy.csv"])


# ------------------------------------------------------------- one-shots

def run_train(cfg: dict, outdir: str, seed: int, workers: int) -> RunResult:
    from .trajectory import read_records

    dataset_path = _require(cfg, "dataset", str)
    header, records, _ = read_records(dataset_path)
    row = _require(cfg, "training", dict)
    tc = _training_config(row, len(records), seed)
    model, report = rnn.train(records, tc)
    rnn.save_model(os.path.join(outdir, "model.json"), model, seed=seed,
                   extra={"best_epoch": report.best_epoch, "circuit": header["circuit"]})
    rnn.write_training_csv(os.path.join(outdir, "training.csv"), report)
    return RunResult(outdir, ["model.json", "training.csv"],
                     notes={"best_epoch": report.best_epoch,
                            "best_val_nll": report.val_loss[report.best_epoch]})


def run_chi(cfg: dict, outdir: str, seed: int, workers: int,
            estimator: str | None = None) -> RunResult:
    from .circuit import deserialize

    with open(_require(cfg, "circuit", str)) as fh:
        c = deserialize(fh.read())
    estimator = estimator or cfg.get("estimator", "exact")
    if estimator == "exact":
        est = xeb.chi_exact(c)
    elif estimator == "histogram":
        num_runs = int(cfg.get("num_runs", 5000))
        _, rho_scores = batch_sample(c, InitialState.PLUS, num_runs,
                                     _derive(seed, 1), replay_init=InitialState.ZERO)
        _, sigma_scores = batch_sample(c, InitialState.ZERO, num_runs,
                                       _derive(seed, 2), replay_init=InitialState.ZERO)
        est = xeb.chi_histogram(rho_scores, sigma_scores, c.content_hash(),
                                c.num_qubits, c.measurement_rate)
    elif estimator == "rnn":
        rho_model = rnn.load_model(_require(cfg, "rho_model", str))
        sigma_model = rnn.load_model(_require(cfg, "sigma_model", str))
        est = rnn.chi_rnn(rho_model, sigma_model, cfg.get("n_sample"), seed=seed,
                          circuit_hash=c.content_hash())
    else:
        raise ConfigError(f"unknown estimator {estimator!r}")
    out = {"chi": est.chi, "estimator": est.estimator, "numerator": est.numerator,
           "denominator": est.denominator, "circuit": est.circuit_hash, "M": est.m}
    with open(os.path.join(outdir, "chi.json"), "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    return RunResult(outdir, ["chi.json"], notes=out)


def run_gradcheck(cfg: dict, outdir: str, seed: int, workers: int) -> RunResult:
    n_hidden = int(cfg.get("n_hidden", 3))
    record_length = int(cfg.get("record_length", 4))
    batch_size = int(cfg.get("batch_size", 3))
    epsilon_fd = float(cfg.get("epsilon_fd", 1e-5))
    model = rnn.init_model(n_hidden, record_length, 0.0, _derive(seed, 401))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(402,))))
    batch = rng.integers(0, 2, size=(batch_size, record_length))
    err = rnn.gradient_check(model, batch, epsilon_fd)
    out = {"max_relative_error": err, "n_hidden": n_hidden,
           "record_length": record_length, "epsilon_fd": epsilon_fd}
    with open(os.path.join(outdir, "gradcheck.json"), "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    return RunResult(outdir, ["gradcheck.json"], notes=out)


def generate_dataset(c, init: InitialState, num_runs: int, seed: int, path) -> None:
    """Sample a dataset for offline training and persist it with sigma scores."""
    records, scores = batch_sample(c, init, num_runs, seed, replay_init=InitialState.ZERO)
    write_records(path, c, init, seed, records, scores)


EXPERIMENTS = {
    "sweep": run_sweep,
    "convergence": run_convergence,
    "delta-m": run_delta_m,
    "entropy": run_entropy,
    "train": run_train,
    "chi": run_chi,
    "gradcheck": run_gradcheck,
}
