"""SVG plot emission with companion CSV tables.

Every figure gets a CSV holding the numbers it draws, so results stay
diffable. SVGs embed no timestamps and use a fixed hash salt, which
makes repeated runs byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import io
from .errors import MissingSectionError
from .pipeline import DiagnosisReport

plt.rcParams["svg.hashsalt"] = "faultdiag"

_FIGSIZE = (6.0, 4.0)
_CMAP = plt.get_cmap("tab10")

PLOT_NAMES = (
    "feature_box", "wss", "silhouette", "scree",
    "pca_scatter", "labels_vs_time", "centroid_box", "pcoa_scatter",
)


@dataclass
class EmitResult:
    """Which plot files were written and which sections were missing."""

    written: dict[str, list[Path]] = field(default_factory=dict)
    missing: dict[str, str] = field(default_factory=dict)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def box_stats(values: np.ndarray) -> dict[str, float]:
    """Five-number summary with type-7 (linear interpolation) quartiles."""
    q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    return {
        "min": float(np.min(values)), "q1": float(q1), "median": float(med),
        "q3": float(q3), "max": float(np.max(values)),
    }


def _need(report: DiagnosisReport, section: str):
    value = getattr(report, section)
    if value is None:
        raise MissingSectionError(section)
    return value


def _plot_feature_box(report, out):
    feats = _need(report, "features")
    values = np.asarray(feats["values"])
    names = feats["feature_names"]
    rows = []
    for j, name in enumerate(names):
        stats = box_stats(values[:, j])
        rows.append([name, stats["min"], stats["q1"], stats["median"],
                     stats["q3"], stats["max"]])
    csv_path = out / "feature_box.csv"
    io._write_rows(csv_path, ["feature", "min", "q1", "median", "q3", "max"], rows)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(names)), 4.0))
    ax.boxplot([values[:, j] for j in range(len(names))], tick_labels=names)
    ax.set_ylabel("normalized value")
    ax.set_title("Feature distributions")
    plt.setp(ax.get_xticklabels(), rotation=90, fontsize=6)
    fig.tight_layout()
    return [csv_path, _save(fig, out / "feature_box.svg")]


def _plot_wss(report, out):
    sel = _need(report, "selection")
    k, wss = sel["k_values"], sel["wss"]
    csv_path = out / "wss.csv"
    io._write_rows(csv_path, ["k", "wss"], zip(k, wss))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(k, wss, marker="o")
    ax.axvline(sel["recommended_k"], linestyle="--", color="gray")
    ax.set_xlabel("number of clusters k")
    ax.set_ylabel("within-cluster sum of squares")
    ax.set_title("WSS elbow")
    fig.tight_layout()
    return [csv_path, _save(fig, out / "wss.svg")]


def _plot_silhouette(report, out):
    sel = _need(report, "selection")
    if not sel.get("avg_silhouette"):
        raise MissingSectionError("selection.avg_silhouette")
    k, sil = sel["k_values"], sel["avg_silhouette"]
    csv_path = out / "silhouette.csv"
    io._write_rows(csv_path, ["k", "avg_silhouette"], zip(k, sil))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(k, sil, marker="o")
    ax.set_xlabel("number of clusters k")
    ax.set_ylabel("average silhouette width")
    ax.set_title("Silhouette by cluster count")
    fig.tight_layout()
    return [csv_path, _save(fig, out / "silhouette.svg")]


def _plot_scree(report, out):
    ordn = _need(report, "ordination")
    eig = ordn["pca"]["eigenvalues"]
    frac = ordn["pca"]["variance_fraction"]
    csv_path = out / "scree.csv"
    io._write_rows(csv_path, ["axis", "eigenvalue", "variance_fraction"],
                   zip(range(1, len(eig) + 1), eig, frac))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.bar(range(1, len(eig) + 1), eig)
    ax.set_xlabel("principal component")
    ax.set_ylabel("variance")
    ax.set_title("Scree")
    fig.tight_layout()
    return [csv_path, _save(fig, out / "scree.svg")]


def _scatter_by_label(ax, x, y, labels):
    labels = np.asarray(labels)
    for li, lab in enumerate(np.unique(labels)):
        mask = labels == lab
        ax.scatter(x[mask], y[mask], s=12, color=_CMAP(li % 10),
                   label=f"cluster {lab}")
    ax.legend(fontsize=6)


def _plot_pca_scatter(report, out):
    ordn = _need(report, "ordination")
    assignments = _need(report, "assignments")
    coords = np.asarray(ordn["pca"]["coords"])
    labels = assignments["labels"]
    n_axes = coords.shape[1]
    csv_path = out / "pca_coords.csv"
    header = ["sample_id"] + [f"pc{j + 1}" for j in range(n_axes)] + ["label"]
    rows = ([sid] + list(row) + [lab] for sid, row, lab in
            zip(ordn["pca"]["sample_ids"], coords, labels))
    io._write_rows(csv_path, header, rows)
    paths = [csv_path]
    pairs = [(i, j) for i in range(n_axes) for j in range(i + 1, n_axes)][:3]
    for i, j in pairs:
        fig, ax = plt.subplots(figsize=_FIGSIZE)
        _scatter_by_label(ax, coords[:, i], coords[:, j], labels)
        ax.set_xlabel(f"PC{i + 1}")
        ax.set_ylabel(f"PC{j + 1}")
        ax.set_title(f"PCA projection {i + 1}-{j + 1}")
        fig.tight_layout()
        paths.append(_save(fig, out / f"pca_scatter_{i + 1}{j + 1}.svg"))
    return paths


def _plot_labels_vs_time(report, out):
    assignments = _need(report, "assignments")
    ts = assignments["timestamps"]
    labels = assignments["labels"]
    csv_path = out / "labels_vs_time.csv"
    io._write_rows(csv_path, ["sample_id", "timestamp", "label"],
                   zip(assignments["sample_ids"], ts, labels))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    _scatter_by_label(ax, np.asarray(ts, dtype=float), np.asarray(labels, dtype=float),
                      labels)
    ax.set_xlabel("timestamp (s)")
    ax.set_ylabel("cluster label")
    ax.set_title("Cluster membership over time")
    fig.tight_layout()
    return [csv_path, _save(fig, out / "labels_vs_time.svg")]


def _plot_centroid_box(report, out):
    disp = _need(report, "dispersion")
    z = np.asarray(disp["centroid_distances"])
    sampling = _need(report, "sampling")
    assignments = _need(report, "assignments")
    by_id = dict(zip(assignments["sample_ids"], assignments["labels"]))
    labels = np.array([by_id[s] for s in sampling["sampled_ids"]])
    groups = disp["groups"]
    rows = []
    data = []
    for g in groups:
        zg = z[labels == g]
        data.append(zg)
        stats = box_stats(zg)
        rows.append([g, stats["min"], stats["q1"], stats["median"],
                     stats["q3"], stats["max"]])
    csv_path = out / "centroid_box.csv"
    io._write_rows(csv_path, ["group", "min", "q1", "median", "q3", "max"], rows)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.boxplot(data, tick_labels=[str(g) for g in groups])
    ax.set_xlabel("cluster")
    ax.set_ylabel("distance to centroid")
    ax.set_title("Centroid distances by cluster")
    fig.tight_layout()
    return [csv_path, _save(fig, out / "centroid_box.svg")]


def _plot_pcoa_scatter(report, out):
    ordn = _need(report, "ordination")
    if "pcoa" not in ordn:
        raise MissingSectionError("ordination.pcoa")
    po = ordn["pcoa"]
    coords = np.asarray(po["coords"])
    if coords.ndim != 2 or coords.shape[1] < 2:
        raise MissingSectionError("ordination.pcoa (needs 2 axes)")
    labels = po["labels"]
    csv_path = out / "pcoa_coords.csv"
    rows = ([sid] + list(row[:2]) + [lab] for sid, row, lab in
            zip(po["sample_ids"], coords, labels))
    io._write_rows(csv_path, ["sample_id", "axis1", "axis2", "label"], rows)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    _scatter_by_label(ax, coords[:, 0], coords[:, 1], labels)
    ax.set_xlabel("PCoA 1")
    ax.set_ylabel("PCoA 2")
    ax.set_title("Principal coordinates")
    fig.tight_layout()
    return [csv_path, _save(fig, out / "pcoa_scatter.svg")]


_PLOTTERS = {
    "feature_box": _plot_feature_box,
    "wss": _plot_wss,
    "silhouette": _plot_silhouette,
    "scree": _plot_scree,
    "pca_scatter": _plot_pca_scatter,
    "labels_vs_time": _plot_labels_vs_time,
    "centroid_box": _plot_centroid_box,
    "pcoa_scatter": _plot_pcoa_scatter,
}


def emit_plots(report: DiagnosisReport, out_dir, names=PLOT_NAMES) -> EmitResult:
    """Render the requested plots; each missing report section is
    recorded per plot instead of aborting the rest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = EmitResult()
    for name in names:
        if name not in _PLOTTERS:
            raise KeyError(f"unknown plot {name!r}; choose from {PLOT_NAMES}")
        try:
            result.written[name] = _PLOTTERS[name](report, out)
        except MissingSectionError as err:
            result.missing[name] = str(err.args[0])
    return result
