"""Vibration feature extraction and feature-matrix preprocessing.

Raw acceleration windows are reduced to nine time-domain statistics per
channel plus configurable spectral band amplitudes around the machine's
operating frequency. The resulting feature matrix is the substrate for
clustering and for every downstream statistical test.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    ChannelMismatchError,
    DataError,
    EmptyBandError,
    UnknownLabelError,
)

TIME_FEATURE_NAMES = (
    "mean", "median", "min", "max", "kurtosis", "skewness", "std", "rms", "range",
)


@dataclass(frozen=True)
class TimeSeriesWindow:
    """One acquisition window of a single accelerometer channel."""

    samples: np.ndarray
    sampling_rate_hz: float
    channel_id: str
    timestamp: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 4:
            raise DataError("window needs at least 4 samples (kurtosis)")
        if not np.all(np.isfinite(samples)):
            raise DataError("window samples must be finite")
        if not self.sampling_rate_hz > 0:
            raise DataError("sampling_rate_hz must be positive")


@dataclass(frozen=True)
class FeatureMatrix:
    """n samples by p named features; all entries finite."""

    values: np.ndarray
    feature_names: tuple[str, ...]
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError("feature matrix must be 2-D with n,p >= 1")
        if not np.all(np.isfinite(values)):
            raise DataError("feature matrix entries must be finite")
        if len(self.feature_names) != values.shape[1]:
            raise DataError("feature_names length must match column count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature_names must be unique")
        if len(self.sample_ids) != values.shape[0]:
            raise DataError("sample_ids length must match row count")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]


@dataclass(frozen=True)
class Spectrum:
    """One-sided amplitude spectrum, DC through Nyquist."""

    frequencies_hz: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies_hz, dtype=float)
        a = np.asarray(self.amplitudes, dtype=float)
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "amplitudes", a)
        if f.shape != a.shape or f.ndim != 1:
            raise DataError("frequencies and amplitudes must be 1-D, same length")
        if np.any(np.diff(f) <= 0):
            raise DataError("frequencies must be strictly ascending")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise DataError("amplitudes must be finite and non-negative")


@dataclass(frozen=True)
class TimeDomainFeatures:
    """The nine per-window statistics.

    ``zero_variance`` marks constant windows, for which kurtosis and
    skewness are undefined and reported as NaN.
    """

    mean: float
    median: float
    min: float
    max: float
    kurtosis: float
    skewness: float
    std: float
    rms: float
    range: float
    zero_variance: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in TIME_FEATURE_NAMES])


def time_domain_features(window: TimeSeriesWindow) -> TimeDomainFeatures:
    """Compute the nine time-domain statistics of one window.

    Kurtosis is the bias-adjusted sample excess kurtosis (0 for a
    normal population); skewness is the adjusted Fisher-Pearson
    coefficient; std uses divisor n-1. A constant window yields NaN
    for both shape statistics and sets ``zero_variance``.
    """
    x = window.samples
    n = x.size
    mean = float(np.mean(x))
    dev = x - mean
    m2 = float(np.mean(dev ** 2))
    if m2 == 0.0:
        kurt = float("nan")
        skew = float("nan")
        zero_var = True
    else:
        m3 = float(np.mean(dev ** 3))
        m4 = float(np.mean(dev ** 4))
        g1 = m3 / m2 ** 1.5
        g2 = m4 / m2 ** 2 - 3.0
        skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
        kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
        zero_var = False
    return TimeDomainFeatures(
        mean=mean,
        median=float(np.median(x)),
        min=float(np.min(x)),
        max=float(np.max(x)),
        kurtosis=kurt,
        skewness=skew,
        std=float(np.std(x, ddof=1)),
        rms=float(np.sqrt(np.mean(x ** 2))),
        range=float(np.max(x) - np.min(x)),
        zero_variance=zero_var,
    )


def _next_pow2(n: int) -> int:
    return 1 << max(n - 1, 1).bit_length()


def spectrum(window: TimeSeriesWindow, taper: str = "none") -> Spectrum:
    """One-sided amplitude spectrum of a window.

    The signal is zero-padded to the next power of two. Amplitudes are
    scaled so a pure sinusoid of amplitude A at an exact bin frequency
    reads A: interior bins get 2|X_k|/W, the DC and Nyquist bins
    |X_k|/W, where W is the taper mass (the sample count for
    ``taper="none"``). Frequency resolution is sampling_rate/N_padded.
    """
    x = window.samples
    n = x.size
    if taper == "none":
        xw = x
        w_mass = float(n)
    elif taper == "hann":
        w = np.hanning(n)
        xw = x * w
        w_mass = float(np.sum(w))
    else:
        raise DataError(f"unknown taper {taper!r}")
    n_pad = _next_pow2(n)
    spec = np.fft.rfft(xw, n=n_pad)
    amps = np.abs(spec) * (2.0 / w_mass)
    amps[0] /= 2.0
    amps[-1] /= 2.0  # n_pad is even, so the last bin is Nyquist
    freqs = np.fft.rfftfreq(n_pad, d=1.0 / window.sampling_rate_hz)
    return Spectrum(frequencies_hz=freqs, amplitudes=amps)


def band_amplitude(spec: Spectrum, center_hz: float, halfwidth_hz: float) -> float:
    """Maximum amplitude among bins within ``center +/- halfwidth``."""
    lo = center_hz - halfwidth_hz
    hi = center_hz + halfwidth_hz
    if lo < 0 or hi > spec.frequencies_hz[-1]:
        raise DataError(
            f"band [{lo}, {hi}] Hz outside spectrum range "
            f"[0, {spec.frequencies_hz[-1]}]"
        )
    mask = (spec.frequencies_hz >= lo) & (spec.frequencies_hz <= hi)
    if not np.any(mask):
        raise EmptyBandError(f"no spectrum bin in [{lo}, {hi}] Hz")
    return float(np.max(spec.amplitudes[mask]))


@dataclass(frozen=True)
class BandSpec:
    """A spectral band feature: max amplitude around a center frequency."""

    center_hz: float
    halfwidth_hz: float

    @property
    def name(self) -> str:
        return f"band_{self.center_hz:g}hz"


@dataclass(frozen=True)
class FeatureConfig:
    """Which features to extract per channel."""

    bands: tuple[BandSpec, ...] = ()
    taper: str = "none"


@dataclass(frozen=True)
class Observation:
    """One multi-channel acquisition: a window per channel, one row out."""

    sample_id: str
    windows: tuple[TimeSeriesWindow, ...]

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if not self.windows:
            raise DataError("observation needs at least one channel window")
        channels = [w.channel_id for w in self.windows]
        if len(set(channels)) != len(channels):
            raise DataError("duplicate channel_id within one observation")

    @property
    def timestamp(self) -> int:
        return self.windows[0].timestamp

    @property
    def channel_ids(self) -> frozenset[str]:
        return frozenset(w.channel_id for w in self.windows)


def build_feature_matrix(observations, config: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """Assemble the per-observation feature matrix.

    Column order is channel-major (channels sorted by id): the nine
    time-domain features, then one column per configured band. Every
    observation must supply the same channel set. Constant windows
    produce NaN shape statistics, which are replaced by 0.0 with a
    warning so the matrix stays finite.
    """
    observations = list(observations)
    if not observations:
        raise DataError("no observations")
    channels = sorted(observations[0].channel_ids)
    for obs in observations:
        if sorted(obs.channel_ids) != channels:
            raise ChannelMismatchError(
                f"observation {obs.sample_id!r} has channels "
                f"{sorted(obs.channel_ids)}, expected {channels}"
            )
    names = []
    for ch in channels:
        names.extend(f"{ch}_{feat}" for feat in TIME_FEATURE_NAMES)
        names.extend(f"{ch}_{band.name}" for band in config.bands)
    rows = []
    n_constant = 0
    for obs in observations:
        by_channel = {w.channel_id: w for w in obs.windows}
        row = []
        for ch in channels:
            window = by_channel[ch]
            tdf = time_domain_features(window)
            if tdf.zero_variance:
                n_constant += 1
            row.extend(tdf.as_array())
            if config.bands:
                spec = spectrum(window, taper=config.taper)
                row.extend(
                    band_amplitude(spec, band.center_hz, band.halfwidth_hz)
                    for band in config.bands
                )
        rows.append(row)
    values = np.asarray(rows, dtype=float)
    if n_constant:
        warnings.warn(
            f"{n_constant} constant window(s): kurtosis/skewness undefined, "
            "stored as 0.0",
            stacklevel=2,
        )
        values = np.nan_to_num(values, nan=0.0)
    return FeatureMatrix(
        values=values,
        feature_names=tuple(names),
        sample_ids=tuple(obs.sample_id for obs in observations),
    )


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Column-wise z-score or min-max scaler.

    Constant columns cannot be scaled and transform to 0.0; their
    indices are recorded in ``constant_columns_``.
    """

    def __init__(self, method: str = "zscore"):
        self.method = method

    def fit(self, X, y=None):
        X = _as_2d(X)
        if X.shape[0] < 2:
            raise DataError("scaling needs at least 2 samples")
        if self.method == "zscore":
            self.center_ = X.mean(axis=0)
            self.scale_ = X.std(axis=0, ddof=1)
        elif self.method == "minmax":
            self.center_ = X.min(axis=0)
            self.scale_ = X.max(axis=0) - X.min(axis=0)
        else:
            raise DataError(f"unknown normalization method {self.method!r}")
        self.constant_columns_ = np.flatnonzero(self.scale_ == 0.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "scale_")
        X = _as_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DataError("column count differs from fit")
        scale = np.where(self.scale_ == 0.0, 1.0, self.scale_)
        out = (X - self.center_) / scale
        if self.constant_columns_.size:
            out[:, self.constant_columns_] = 0.0
        return out


def normalize_features(fm: FeatureMatrix, method: str = "zscore") -> FeatureMatrix:
    """Scale each column; constant columns map to 0 with a warning."""
    scaler = FeatureScaler(method=method).fit(fm.values)
    if scaler.constant_columns_.size:
        flagged = [fm.feature_names[i] for i in scaler.constant_columns_]
        warnings.warn(f"constant feature column(s) mapped to 0: {flagged}", stacklevel=2)
    return FeatureMatrix(
        values=scaler.transform(fm.values),
        feature_names=fm.feature_names,
        sample_ids=fm.sample_ids,
    )


class OneHotLabels(TransformerMixin, BaseEstimator):
    """Binary indicator encoding of categorical labels.

    Column order follows ``categories`` when given, else the sorted
    unique labels seen in ``fit``.
    """

    def __init__(self, categories=None):
        self.categories = categories

    def fit(self, labels, y=None):
        if self.categories is not None:
            cats = list(self.categories)
            if len(set(cats)) != len(cats):
                raise DataError("categories must be unique")
        else:
            cats = sorted(set(labels))
        self.categories_ = tuple(cats)
        return self

    def transform(self, labels) -> np.ndarray:
        check_is_fitted(self, "categories_")
        index = {c: j for j, c in enumerate(self.categories_)}
        out = np.zeros((len(labels), len(self.categories_)))
        for i, lab in enumerate(labels):
            if lab not in index:
                raise UnknownLabelError(f"label {lab!r} not in categories")
            out[i, index[lab]] = 1.0
        return out


def one_hot_encode(labels, categories) -> np.ndarray:
    """Encode ``labels`` against an explicit ordered category list."""
    return OneHotLabels(categories=categories).fit(labels).transform(labels)


def _as_2d(X) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        X = X.values
    arr = np.array(X, dtype=float)
    if arr.ndim != 2:
        raise DataError("expected a 2-D array")
    if not np.all(np.isfinite(arr)):
        raise DataError("array entries must be finite")
    return arr
