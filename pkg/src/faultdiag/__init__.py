"""Unsupervised vibration fault diagnosis with statistically validated
clusters.

The package covers the full workflow: time/frequency feature
extraction, Gaussian-mixture clustering with cluster-count selection,
PCA/PCoA ordination, and permutation-based validation (PERMANOVA,
multivariate dispersion homogeneity, pairwise tables) alongside the
classical Shapiro-Wilk and Bartlett checks.
"""

from .cluster import (
    ClusterSelection,
    GaussianMixtureModel,
    KMeansCluster,
    gmm_fit,
    gmm_predict,
    kmeans_fit,
    recommend_k,
    selection_curves,
    silhouette_widths,
    wss_curve,
)
from .datagen import MachineStateSpec, default_dataset, default_state_specs, synth_dataset
from .distance import DistanceMatrix, distance_matrix, gower_center
from .features import (
    BandSpec,
    FeatureConfig,
    FeatureMatrix,
    FeatureScaler,
    Observation,
    OneHotLabels,
    Spectrum,
    TimeSeriesWindow,
    band_amplitude,
    build_feature_matrix,
    normalize_features,
    one_hot_encode,
    spectrum,
    time_domain_features,
)
from .hypotest import (
    DispersionResult,
    GroupLabels,
    PermanovaResult,
    PermTestResult,
    bartlett_test,
    dist_sf,
    pairwise_dispersion_table,
    permanova,
    permdisp,
    shapiro_wilk,
)
from .ordination import (
    OrdinationResult,
    PrincipalComponents,
    PrincipalCoordinates,
    pca,
    pcoa,
    scree,
)
from .pipeline import DiagnosisReport, PipelineConfig, run_pipeline
from .rng import permutation_stream, rng_for

__version__ = "0.1.0"

__all__ = [
    "BandSpec",
    "ClusterSelection",
    "DiagnosisReport",
    "DispersionResult",
    "DistanceMatrix",
    "FeatureConfig",
    "FeatureMatrix",
    "FeatureScaler",
    "GaussianMixtureModel",
    "GroupLabels",
    "KMeansCluster",
    "MachineStateSpec",
    "Observation",
    "OneHotLabels",
    "OrdinationResult",
    "PermTestResult",
    "PermanovaResult",
    "PipelineConfig",
    "PrincipalComponents",
    "PrincipalCoordinates",
    "Spectrum",
    "TimeSeriesWindow",
    "band_amplitude",
    "bartlett_test",
    "build_feature_matrix",
    "default_dataset",
    "default_state_specs",
    "dist_sf",
    "distance_matrix",
    "gmm_fit",
    "gmm_predict",
    "gower_center",
    "kmeans_fit",
    "normalize_features",
    "one_hot_encode",
    "pairwise_dispersion_table",
    "pca",
    "pcoa",
    "permanova",
    "permdisp",
    "permutation_stream",
    "recommend_k",
    "rng_for",
    "run_pipeline",
    "scree",
    "selection_curves",
    "shapiro_wilk",
    "silhouette_widths",
    "spectrum",
    "synth_dataset",
    "time_domain_features",
    "wss_curve",
]
