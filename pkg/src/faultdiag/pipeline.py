"""End-to-end diagnosis pipeline.

Order of stages: ingest, feature extraction, normalization, cluster
count selection, mixture clustering, per-cluster sampling, normality
and variance-homogeneity checks on first-principal-component scores,
distance matrix, PERMANOVA, dispersion homogeneity with pairwise
table, and ordination summaries. A stage failure is recorded in the
report's error section and the remaining independent stages still run.

Everything is driven by (inputs, config, seed): the report JSON and
every emitted table are byte-identical across runs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .cluster import ClusterSelection, gmm_fit, gmm_predict, selection_curves
from .datagen import default_bands
from .distance import METRICS, distance_matrix
from .errors import ConfigError, FaultDiagError
from .features import BandSpec, FeatureConfig, build_feature_matrix, normalize_features
from .hypotest import GroupLabels, bartlett_test, permanova, permdisp, shapiro_wilk
from .ordination import pca, pcoa, scree
from .rng import derive_seed, rng_for

# Stage tags for per-stage seed derivation from the master seed.
_STAGE_SELECTION = 1
_STAGE_GMM = 2
_STAGE_SAMPLING = 3
_STAGE_PERMANOVA = 4
_STAGE_PERMDISP = 5


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the pipeline needs; the seed is mandatory because
    determinism is part of the output contract."""

    manifest: str
    seed: int
    out_dir: str | None = None
    sampling_rate_hz: float | None = 2048.0
    window_len: int = 2048
    bands: tuple[tuple[float, float], ...] = default_bands()
    taper: str = "none"
    normalization: str = "zscore"
    metric: str = "euclidean"
    k: int | None = None
    k_max: int = 10
    permutations: int = 999
    sample_per_cluster: int = 30
    kmeans_restarts: int = 10
    gmm_restarts: int = 5

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.permutations < 1:
            raise ConfigError("permutations must be >= 1")
        if self.k is None and self.k_max < 3:
            raise ConfigError("k_max must be >= 3 when k is not fixed")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")
        if self.normalization not in ("zscore", "minmax"):
            raise ConfigError("normalization must be zscore or minmax")
        if self.sample_per_cluster < 1:
            raise ConfigError("sample_per_cluster must be >= 1")
        object.__setattr__(
            self, "bands", tuple((float(c), float(h)) for c, h in self.bands)
        )

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "bands" in payload:
            payload = dict(payload)
            payload["bands"] = tuple(tuple(b) for b in payload["bands"])
        try:
            return cls(**payload)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "bands":
                value = [list(b) for b in value]
            out[f.name] = value
        return out


@dataclass
class DiagnosisReport:
    """JSON-shaped pipeline outcome; sections are None when their stage
    failed (see ``errors`` for the stage tag and message)."""

    config: dict
    warnings: list[str] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    features: dict | None = None
    selection: dict | None = None
    chosen_k: int | None = None
    assignments: dict | None = None
    sampling: dict | None = None
    normality: dict | None = None
    bartlett: dict | None = None
    permanova: dict | None = None
    dispersion: dict | None = None
    ordination: dict | None = None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, payload: dict) -> "DiagnosisReport":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in payload.items() if k in known})


class _StageRunner:
    """Runs one stage, captures its warnings, records failures."""

    def __init__(self, report: DiagnosisReport):
        self.report = report

    def __call__(self, name, fn):
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                result = fn()
        except (FaultDiagError, OSError, np.linalg.LinAlgError) as err:
            self.report.errors.append({
                "stage": name, "error": type(err).__name__, "message": str(err),
            })
            return None
        for w in caught:
            message = f"{name}: {w.message}"
            if message not in self.report.warnings:
                self.report.warnings.append(message)
        return result


def _floats(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def _selection_dict(sel: ClusterSelection) -> dict:
    return {
        "k_values": list(sel.k_values),
        "wss": _floats(sel.wss),
        "avg_silhouette": _floats(sel.avg_silhouette),
        "bic": _floats(sel.bic),
        "aic": _floats(sel.aic),
        "recommended_k": int(sel.recommended_k),
        "method": sel.method,
        "low_confidence": bool(sel.low_confidence),
    }


def _test_record(test, **extra) -> dict:
    out = {
        "statistic": float(test.statistic),
        "permutations": int(test.permutations),
        "exceedances": int(test.exceedances),
        "p_value": float(test.p_value),
        "seed": int(test.seed),
    }
    if test.parametric_p is not None:
        out["parametric_p"] = float(test.parametric_p)
    out.update(extra)
    return out


def _sample_per_cluster(labels: np.ndarray, size: int, seed: int):
    """Seeded without-replacement sample of up to ``size`` rows per
    cluster; clusters smaller than ``size`` contribute everything."""
    chosen = []
    short = []
    for code in np.unique(labels):
        members = np.flatnonzero(labels == code)
        if members.size <= size:
            take = members
            if members.size < size:
                short.append((int(code), int(members.size)))
        else:
            rng = rng_for(seed, int(code))
            take = np.sort(rng.choice(members, size=size, replace=False))
        chosen.append(take)
    if short:
        detail = ", ".join(f"cluster {c} has {n}" for c, n in short)
        warnings.warn(f"sample_per_cluster={size} not met ({detail}); "
                      "using full clusters", stacklevel=2)
    return np.concatenate(chosen)


def run_pipeline(cfg: PipelineConfig) -> DiagnosisReport:
    """Run the full diagnosis workflow and return the report.

    When ``cfg.out_dir`` is set, the report JSON and companion tables
    are also written there.
    """
    report = DiagnosisReport(config=cfg.to_dict())
    stage = _StageRunner(report)

    observations = stage("ingest", lambda: io.read_dataset(
        cfg.manifest, sampling_rate_hz=cfg.sampling_rate_hz))

    fm_raw = None
    if observations is not None:
        feature_cfg = FeatureConfig(
            bands=tuple(BandSpec(c, h) for c, h in cfg.bands), taper=cfg.taper,
        )
        fm_raw = stage("features", lambda: build_feature_matrix(
            observations, feature_cfg))

    fm = None
    if fm_raw is not None:
        fm = stage("normalize", lambda: normalize_features(
            fm_raw, method=cfg.normalization))
    if fm is not None:
        report.features = {
            "feature_names": list(fm.feature_names),
            "sample_ids": list(fm.sample_ids),
            "normalization": cfg.normalization,
            "values": _floats(fm.values),
        }

    chosen_k = None
    if fm is not None:
        if cfg.k is not None:
            chosen_k = cfg.k
            report.selection = None
        else:
            sel = stage("select_k", lambda: selection_curves(
                fm, cfg.k_max, seed=derive_seed(cfg.seed, _STAGE_SELECTION),
                restarts=cfg.kmeans_restarts, gmm_restarts=cfg.gmm_restarts))
            if sel is not None:
                report.selection = _selection_dict(sel)
                chosen_k = sel.recommended_k
    report.chosen_k = chosen_k

    labels = None
    if fm is not None and chosen_k is not None:
        def _cluster():
            model = gmm_fit(
                fm, chosen_k, seed=derive_seed(cfg.seed, _STAGE_GMM),
                restarts=cfg.gmm_restarts,
            )
            resp, hard = gmm_predict(model, fm)
            return model, resp, hard

        clustered = stage("cluster", _cluster)
        if clustered is not None:
            model, resp, labels = clustered
            timestamps = [obs.timestamp for obs in observations]
            report.assignments = {
                "sample_ids": list(fm.sample_ids),
                "timestamps": timestamps,
                "labels": [int(v) for v in labels],
                "responsibilities": _floats(resp),
                "model": {
                    "k": int(chosen_k),
                    "weights": _floats(model.weights_),
                    "log_likelihood": float(model.log_likelihood_),
                    "bic": float(model.bic_),
                    "aic": float(model.aic_),
                    "n_iter": int(model.n_iter_),
                    "converged": bool(model.converged_),
                },
            }

    sampled_idx = None
    if labels is not None:
        sampled_idx = stage("sampling", lambda: _sample_per_cluster(
            labels, cfg.sample_per_cluster,
            derive_seed(cfg.seed, _STAGE_SAMPLING)))
        if sampled_idx is not None:
            report.sampling = {
                "sample_per_cluster": cfg.sample_per_cluster,
                "sampled_ids": [fm.sample_ids[i] for i in sampled_idx],
            }

    sampled_values = None
    sampled_labels = None
    pc1 = None
    if sampled_idx is not None:
        sampled_values = fm.values[sampled_idx]
        sampled_labels = labels[sampled_idx]

        def _normality():
            ordn = pca(sampled_values, n_components=1)
            scores = ordn.coords[:, 0]
            w, p = shapiro_wilk(scores)
            variances = np.var(sampled_values, axis=0, ddof=1)
            order = np.argsort(-variances, kind="stable")[:5]
            per_feature = {}
            for idx in order:
                name = fm.feature_names[int(idx)]
                column = sampled_values[:, int(idx)]
                if column.min() == column.max():
                    continue
                fw, fp = shapiro_wilk(column)
                per_feature[name] = {"W": fw, "p": fp}
            return scores, {"pc1": {"W": w, "p": p}, "per_feature": per_feature}

        result = stage("normality", _normality)
        if result is not None:
            pc1, report.normality = result

    if pc1 is not None:
        def _bartlett():
            groups = [pc1[sampled_labels == code]
                      for code in np.unique(sampled_labels)]
            k2, df, p = bartlett_test(groups)
            return {"k_squared": k2, "df": df, "p_value": p}

        report.bartlett = stage("bartlett", _bartlett)

    D = None
    if sampled_values is not None:
        D = stage("distance", lambda: distance_matrix(
            sampled_values, metric=cfg.metric))

    group = None
    if D is not None and sampled_labels is not None:
        group = GroupLabels.from_labels(int(v) for v in sampled_labels)

        def _permanova():
            res = permanova(D, group, permutations=cfg.permutations,
                            seed=derive_seed(cfg.seed, _STAGE_PERMANOVA))
            return {
                "ss_total": res.ss_total,
                "ss_among": res.ss_among,
                "ss_within": res.ss_within,
                "df_among": res.df_among,
                "df_within": res.df_within,
                "pseudo_f": res.pseudo_f,
                "test": _test_record(res.test),
            }

        report.permanova = stage("permanova", _permanova)

        def _dispersion():
            res = permdisp(D, group, permutations=cfg.permutations,
                           seed=derive_seed(cfg.seed, _STAGE_PERMDISP))
            pairwise = [
                {
                    "group_i": int(res.groups[i]),
                    "group_j": int(res.groups[j]),
                    "observed_p": float(res.pairwise[j, i]),
                    "permuted_p": float(res.pairwise[i, j]),
                }
                for i in range(len(res.groups))
                for j in range(i + 1, len(res.groups))
            ]
            return {
                "groups": [int(g) for g in res.groups],
                "centroid_distances": _floats(res.centroid_distances),
                "group_mean_distances": _floats(res.group_mean_distances),
                "anova_f": float(res.anova_f),
                "clamped_count": int(res.clamped_count),
                "test": _test_record(res.test),
                "pairwise": pairwise,
            }

        report.dispersion = stage("dispersion", _dispersion)

    if fm is not None:
        def _ordination():
            n, p = fm.values.shape
            limit = min(n - 1, p)
            full = pca(fm, n_components=min(3, limit))
            out = {
                "pca": {
                    "eigenvalues": _floats(full.eigenvalues),
                    "variance_fraction": _floats(scree(full)),
                    "coords": _floats(full.coords),
                    "sample_ids": list(fm.sample_ids),
                }
            }
            if D is not None:
                po = pcoa(D)
                out["pcoa"] = {
                    "eigenvalues": _floats(po.eigenvalues),
                    "variance_fraction": _floats(scree(po)),
                    "coords": _floats(po.coords[:, :min(2, po.coords.shape[1])]),
                    "sample_ids": [fm.sample_ids[i] for i in sampled_idx],
                    "labels": [int(v) for v in sampled_labels],
                    "n_imaginary_axes": int(
                        po.imaginary_coords.shape[1]
                        if po.imaginary_coords is not None else 0
                    ),
                }
            return out

        report.ordination = stage("ordination", _ordination)

    if cfg.out_dir is not None:
        write_report_files(report, cfg.out_dir)
    return report


def write_report_files(report: DiagnosisReport, out_dir) -> Path:
    """Write report.json plus the companion CSV tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.dump_json(out / "report.json", report.to_dict())
    if report.selection is not None:
        sel = report.selection
        selection = ClusterSelection(
            k_values=sel["k_values"], wss=sel["wss"],
            avg_silhouette=sel["avg_silhouette"], bic=sel["bic"], aic=sel["aic"],
        )
        io.write_selection_csv(out / "selection.csv", selection)
    if report.assignments is not None:
        a = report.assignments
        io.write_assignments_csv(
            out / "assignments.csv", a["sample_ids"], a["timestamps"],
            a["labels"], np.asarray(a["responsibilities"]))
    if report.dispersion is not None:
        d = report.dispersion
        groups = d["groups"]
        size = len(groups)
        table = np.full((size, size), np.nan)
        for entry in d["pairwise"]:
            i = groups.index(entry["group_i"])
            j = groups.index(entry["group_j"])
            table[j, i] = entry["observed_p"]
            table[i, j] = entry["permuted_p"]
        io.write_pairwise_csv(out / "pairwise.csv", groups, table)
    return out / "report.json"
