"""One renderer per figure kind, all deterministic given identical inputs.

Kinds:
  sweep        - circuit-averaged chi vs measurement rate, error bars, one
                 series per chain length (from sweep_summary.csv);
  convergence  - chi vs run count M, log-x, one series per estimator, with a
                 horizontal reference line when the curve carries an exact
                 reference (from curve.csv);
  accuracy     - accuracy epsilon vs M, log-x, one series per estimator
                 (from curve.csv);
  deltam       - run-count saving Delta M vs target accuracy, log-x
                 (from deltam.csv);
  entropy      - half-chain entropy vs layer with shaded standard error, one
                 series per (L, p) (from entropy.csv).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from . import schemas  # noqa: E402

REF_EXACT = "exact-enumeration"

# fixed salt so SVG element ids do not vary between runs; keep text as text
# so labels are inspectable and diffs stay readable
plt.rcParams["svg.hashsalt"] = "plotkit"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, out_path) -> None:
    out_path = str(out_path)
    metadata = None
    if out_path.endswith(".svg"):
        metadata = {"Date": None}
    elif out_path.endswith(".pdf"):
        metadata = {"CreationDate": None}
    fig.savefig(out_path, metadata=metadata)
    plt.close(fig)


def _groups(rows: list[dict], key) -> dict:
    out: dict = {}
    for row in rows:
        out.setdefault(key(row), []).append(row)
    return out


def render_sweep(csv_path, out_path) -> None:
    rows = schemas.load_rows(csv_path, schemas.SWEEP_SUMMARY)
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    for length, group in sorted(_groups(rows, lambda r: r["L"]).items()):
        group = sorted(group, key=lambda r: r["p"])
        ax.errorbar([r["p"] for r in group], [r["chi_mean"] for r in group],
                    yerr=[r["chi_std"] for r in group],
                    marker="o", capsize=3, label=f"L = {length}")
    ax.set_xlabel("measurement rate p")
    ax.set_ylabel(r"circuit-averaged $\chi$")
    ax.legend()
    _save(fig, out_path)


def reconstruct_reference(group: list[dict]) -> float | None:
    """Recover the reference value from (chi, epsilon) pairs.

    Each row constrains it to {chi - epsilon, chi + epsilon}; the value
    consistent with every row is the reference. If both candidates survive
    (e.g. a single row), the one nearer the largest-M estimate is used.
    """
    tol = 1e-9
    candidates = {round(group[0]["chi"] - group[0]["epsilon"], 12),
                  round(group[0]["chi"] + group[0]["epsilon"], 12)}
    for row in group[1:]:
        candidates = {c for c in candidates
                      if abs(abs(c - row["chi"]) - row["epsilon"]) <= tol}
    if not candidates:
        return None
    last = max(group, key=lambda r: r["M"])["chi"]
    return min(sorted(candidates), key=lambda c: (round(abs(c - last), 9), c))


def render_convergence(csv_path, out_path) -> None:
    rows = schemas.load_rows(csv_path, schemas.CURVE)
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    for estimator, group in sorted(_groups(rows, lambda r: r["estimator"]).items()):
        group = sorted(group, key=lambda r: r["M"])
        ax.plot([r["M"] for r in group], [r["chi"] for r in group],
                marker="o", label=estimator)
    if all(r["ref_kind"] == REF_EXACT for r in rows):
        ref = reconstruct_reference(sorted(rows, key=lambda r: r["M"]))
        if ref is not None:
            ax.axhline(ref, color="red", linestyle="--", linewidth=1,
                       label="exact value")
    ax.set_xscale("log")
    ax.set_xlabel("number of runs M")
    ax.set_ylabel(r"$\chi$ estimate")
    ax.legend()
    _save(fig, out_path)


def render_accuracy(csv_path, out_path) -> None:
    rows = schemas.load_rows(csv_path, schemas.CURVE)
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    for estimator, group in sorted(_groups(rows, lambda r: r["estimator"]).items()):
        group = sorted(group, key=lambda r: r["M"])
        ax.plot([r["M"] for r in group], [r["epsilon"] for r in group],
                marker="o", label=estimator)
    ax.set_xscale("log")
    ax.set_xlabel("number of runs M")
    ax.set_ylabel(r"accuracy $\epsilon$")
    ax.legend()
    _save(fig, out_path)


def render_deltam(csv_path, out_path) -> None:
    rows = schemas.load_rows(csv_path, schemas.DELTA_M)
    achieved = [r for r in rows if r["deltaM"] is not None]
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    achieved = sorted(achieved, key=lambda r: r["epsilon"])
    ax.plot([r["epsilon"] for r in achieved], [r["deltaM"] for r in achieved],
            marker="s", color="tab:green")
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xscale("log")
    ax.set_xlabel(r"target accuracy $\epsilon$")
    ax.set_ylabel(r"run-count saving $\Delta M$")
    _save(fig, out_path)


def render_entropy(csv_path, out_path) -> None:
    rows = schemas.load_rows(csv_path, schemas.ENTROPY)
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    for (length, rate), group in sorted(_groups(rows, lambda r: (r["L"], r["p"])).items()):
        group = sorted(group, key=lambda r: r["layer"])
        layers = [r["layer"] for r in group]
        mean = [r["S_mean"] for r in group]
        sem = [r["S_sem"] for r in group]
        line, = ax.plot(layers, mean, label=f"L = {length}, p = {rate}")
        ax.fill_between(layers,
                        [m - s for m, s in zip(mean, sem)],
                        [m + s for m, s in zip(mean, sem)],
                        color=line.get_color(), alpha=0.25, linewidth=0)
    ax.set_xlabel("layer t")
    ax.set_ylabel(r"half-chain entropy $S_{L/2}$ (nats)")
    ax.legend()
    _save(fig, out_path)


RENDERERS = {
    "sweep": render_sweep,
    "convergence": render_convergence,
    "accuracy": render_accuracy,
    "deltam": render_deltam,
    "entropy": render_entropy,
}
