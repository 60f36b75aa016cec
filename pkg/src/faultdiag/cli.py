"""Command-line entry point.

Subcommands mirror the pipeline stages: datagen, features, select-k,
cluster, ordinate, test (permanova|permdisp|normality|bartlett),
pipeline, and plot. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .cluster import gmm_fit, gmm_predict, selection_curves
from .datagen import (
    DEFAULT_SAMPLING_RATE_HZ,
    DEFAULT_WINDOW_LEN,
    default_state_specs,
    synth_dataset,
)
from .distance import METRICS, distance_matrix
from .errors import ConfigError, DataError, NumericError
from .features import BandSpec, FeatureConfig, build_feature_matrix, normalize_features
from .hypotest import bartlett_test, permanova, permdisp, shapiro_wilk
from .ordination import pca, pcoa, scree
from .pipeline import DiagnosisReport, PipelineConfig, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _band(text: str) -> tuple[float, float]:
    try:
        center, halfwidth = text.split(":")
        return float(center), float(halfwidth)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"band must look like CENTER:HALFWIDTH, got {text!r}"
        ) from None


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    parser.add_argument("--permutations", type=int, default=999,
                        help="permutation count B (default 999)")
    parser.add_argument("--metric", choices=METRICS, default="euclidean")
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--out", type=Path, help="output directory")


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required for this command")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(
        bands=tuple(BandSpec(c, h) for c, h in (args.band or [])),
        taper=args.taper,
    )


def _load_features(args):
    return io.read_feature_csv(args.features)


def _load_group_labels(args, fm):
    mapping = io.read_labels_csv(args.labels)
    missing = [s for s in fm.sample_ids if s not in mapping]
    if missing:
        raise DataError(f"labels file lacks sample ids: {missing[:5]}")
    return [mapping[s] for s in fm.sample_ids]


def cmd_datagen(args) -> int:
    out = _require_out(args)
    states = [(spec, args.windows_per_state) for spec in default_state_specs()]
    observations, labels = synth_dataset(
        states, fs=args.fs, window_len=args.window_len, seed=args.seed,
    )
    manifest = io.write_dataset(out, observations)
    io.write_labels_csv(out / "labels.csv",
                        [o.sample_id for o in observations], labels)
    print(f"wrote {len(observations)} observations; manifest at {manifest}")
    return EXIT_OK


def cmd_features(args) -> int:
    out = _require_out(args)
    observations = io.read_dataset(args.manifest, sampling_rate_hz=args.sampling_rate)
    fm = build_feature_matrix(observations, _feature_config(args))
    io.write_feature_csv(out / "features.csv", fm)
    written = [out / "features.csv"]
    if args.normalize != "none":
        fm_norm = normalize_features(fm, method=args.normalize)
        io.write_feature_csv(out / "features_normalized.csv", fm_norm)
        written.append(out / "features_normalized.csv")
    print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


def cmd_select_k(args) -> int:
    out = _require_out(args)
    fm = _load_features(args)
    sel = selection_curves(fm, args.k_max, seed=args.seed, restarts=args.restarts)
    io.write_selection_csv(out / "selection.csv", sel)
    io.dump_json(out / "selection.json", {
        "recommended_k": sel.recommended_k,
        "method": sel.method,
        "low_confidence": sel.low_confidence,
    })
    print(f"recommended k = {sel.recommended_k}"
          + (" (low confidence)" if sel.low_confidence else ""))
    return EXIT_OK


def cmd_cluster(args) -> int:
    out = _require_out(args)
    fm = _load_features(args)
    model = gmm_fit(fm, args.k, seed=args.seed, restarts=args.restarts)
    resp, labels = gmm_predict(model, fm)
    io.write_assignments_csv(out / "assignments.csv", fm.sample_ids,
                             [0] * fm.n_samples, labels, resp)
    io.dump_json(out / "model.json", {
        "k": args.k,
        "weights": model.weights_.tolist(),
        "means": model.means_.tolist(),
        "covariances": model.covariances_.tolist(),
        "log_likelihood": model.log_likelihood_,
        "bic": model.bic_,
        "aic": model.aic_,
        "n_iter": model.n_iter_,
        "converged": model.converged_,
        "seed": args.seed,
    })
    print(f"clustered {fm.n_samples} samples into {args.k} components")
    return EXIT_OK


def cmd_ordinate(args) -> int:
    out = _require_out(args)
    if args.features is None and args.distances is None:
        raise ConfigError("ordinate needs --features (PCA) or --distances (PCoA)")
    if args.features is not None:
        fm = _load_features(args)
        limit = min(fm.n_samples - 1, fm.n_features)
        m = min(args.components, limit)
        ordn = pca(fm, n_components=m)
        io.write_coords_csv(out / "pca_coords.csv", fm.sample_ids, ordn.coords,
                            prefix="pc")
        io.dump_json(out / "pca_meta.json", {
            "eigenvalues": ordn.eigenvalues.tolist(),
            "variance_fraction": scree(ordn).tolist(),
        })
        _projection_svgs(out, ordn.coords)
        print(f"wrote PCA coordinates ({m} axes) to {out}")
    if args.distances is not None:
        D = io.read_distance_csv(args.distances)
        ordn = pcoa(D)
        ids = D.sample_ids or tuple(str(i) for i in range(D.n))
        io.write_coords_csv(out / "pcoa_coords.csv", ids, ordn.coords)
        io.dump_json(out / "pcoa_meta.json", {
            "eigenvalues": ordn.eigenvalues.tolist(),
            "variance_fraction": scree(ordn).tolist(),
            "n_imaginary_axes": int(ordn.imaginary_coords.shape[1]),
        })
        print(f"wrote PCoA coordinates to {out}")
    return EXIT_OK


def _projection_svgs(out: Path, coords: np.ndarray) -> None:
    import matplotlib.pyplot as plt

    from .plots import _FIGSIZE  # shares the deterministic SVG settings

    n_axes = coords.shape[1]
    for i, j in [(a, b) for a in range(n_axes) for b in range(a + 1, n_axes)][:3]:
        fig, ax = plt.subplots(figsize=_FIGSIZE)
        ax.scatter(coords[:, i], coords[:, j], s=12)
        ax.set_xlabel(f"PC{i + 1}")
        ax.set_ylabel(f"PC{j + 1}")
        fig.tight_layout()
        fig.savefig(out / f"pca_projection_{i + 1}{j + 1}.svg", format="svg",
                    metadata={"Date": None})
        plt.close(fig)


def cmd_test(args) -> int:
    out = _require_out(args)
    fm = _load_features(args)
    payload: dict = {"test": args.kind, "seed": args.seed, "warnings": []}
    if args.kind == "normality":
        scores = pca(fm, n_components=1).coords[:, 0]
        w, p = shapiro_wilk(scores)
        payload.update({"statistic": w, "p_value": p,
                        "detail": "Shapiro-Wilk on first principal component"})
    elif args.kind == "bartlett":
        labels = _load_group_labels(args, fm)
        scores = pca(fm, n_components=1).coords[:, 0]
        codes = np.asarray(labels)
        groups = [scores[codes == g] for g in sorted(set(labels))]
        k2, df, p = bartlett_test(groups)
        payload.update({"statistic": k2, "df": df, "p_value": p,
                        "detail": "Bartlett on per-group first-PC scores"})
    else:
        labels = _load_group_labels(args, fm)
        D = distance_matrix(fm, metric=args.metric)
        if args.kind == "permanova":
            res = permanova(D, labels, permutations=args.permutations,
                            seed=args.seed)
            payload.update({
                "statistic": res.pseudo_f,
                "df": [res.df_among, res.df_within],
                "ss": {"total": res.ss_total, "among": res.ss_among,
                       "within": res.ss_within},
                "permutations": res.test.permutations,
                "exceedances": res.test.exceedances,
                "p_value": res.test.p_value,
            })
        else:  # permdisp
            res = permdisp(D, labels, permutations=args.permutations,
                           seed=args.seed)
            payload.update({
                "statistic": res.anova_f,
                "df": [len(res.groups) - 1, D.n - len(res.groups)],
                "permutations": res.test.permutations,
                "exceedances": res.test.exceedances,
                "p_value": res.test.p_value,
                "parametric_p": res.test.parametric_p,
                "clamped_count": res.clamped_count,
            })
            io.write_pairwise_csv(out / "pairwise.csv", res.groups, res.pairwise)
    io.dump_json(out / f"{args.kind}.json", payload)
    print(f"{args.kind}: p = {payload['p_value']:.6g}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    payload = {}
    if args.config is not None:
        payload = io.load_json(args.config)
    if args.manifest is not None:
        payload["manifest"] = str(args.manifest)
    if args.out is not None:
        payload["out_dir"] = str(args.out)
    payload.setdefault("seed", args.seed)
    payload.setdefault("permutations", args.permutations)
    payload.setdefault("metric", args.metric)
    if args.k is not None:
        payload["k"] = args.k
    if args.k_max is not None:
        payload["k_max"] = args.k_max
    if args.sample_per_cluster is not None:
        payload["sample_per_cluster"] = args.sample_per_cluster
    if "manifest" not in payload:
        raise ConfigError("pipeline needs --manifest (or a config with one)")
    cfg = PipelineConfig.from_dict(payload)
    report = run_pipeline(cfg)
    if report.errors:
        print("pipeline finished with stage errors:")
        for err in report.errors:
            print(f"  [{err['stage']}] {err['error']}: {err['message']}")
    if cfg.out_dir:
        print(f"report written to {Path(cfg.out_dir) / 'report.json'}")
    if report.chosen_k is not None:
        print(f"chosen k = {report.chosen_k}")
    if report.permanova is not None:
        print(f"permanova p = {report.permanova['test']['p_value']:.6g}")
    if report.dispersion is not None:
        print(f"dispersion p = {report.dispersion['test']['p_value']:.6g}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import emit_plots

    out = _require_out(args)
    report = DiagnosisReport.from_dict(io.load_json(args.report))
    result = emit_plots(report, out)
    for name, paths in sorted(result.written.items()):
        print(f"{name}: " + ", ".join(p.name for p in paths))
    for name, reason in sorted(result.missing.items()):
        print(f"{name}: skipped (missing section {reason})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultdiag",
        description="Vibration fault diagnosis by clustering with "
                    "permutation-test validation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate the synthetic six-state dataset")
    p.add_argument("--windows-per-state", type=int, default=30)
    p.add_argument("--fs", type=float, default=DEFAULT_SAMPLING_RATE_HZ)
    p.add_argument("--window-len", type=int, default=DEFAULT_WINDOW_LEN)
    _common_flags(p)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("features", help="extract features from a waveform manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--band", type=_band, action="append",
                   help="spectral band CENTER:HALFWIDTH in Hz (repeatable)")
    p.add_argument("--taper", choices=("none", "hann"), default="none")
    p.add_argument("--sampling-rate", type=float, default=None)
    p.add_argument("--normalize", choices=("zscore", "minmax", "none"),
                   default="zscore")
    _common_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("select-k", help="cluster-count selection curves")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--restarts", type=int, default=10)
    _common_flags(p)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("cluster", help="Gaussian-mixture clustering")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=5)
    _common_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("ordinate", help="PCA of features or PCoA of distances")
    p.add_argument("--features", type=Path)
    p.add_argument("--distances", type=Path)
    p.add_argument("--components", type=int, default=3)
    _common_flags(p)
    p.set_defaults(func=cmd_ordinate)

    p = sub.add_parser("test", help="run one statistical test")
    p.add_argument("kind", choices=("permanova", "permdisp", "normality", "bartlett"))
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--labels", type=Path,
                   help="CSV sample_id,label (required except for normality)")
    _common_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("pipeline", help="run the full diagnosis pipeline")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--k", type=int)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--sample-per-cluster", type=int, default=None)
    _common_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plot", help="emit SVG plots from a report")
    p.add_argument("--report", type=Path, required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "test" and args.kind != "normality" and args.labels is None:
        parser.error(f"test {args.kind} requires --labels")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
