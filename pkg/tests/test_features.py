import math
import warnings

import numpy as np
import pytest

from faultdiag.errors import (
    ChannelMismatchError,
    DataError,
    EmptyBandError,
    UnknownLabelError,
)
from faultdiag.features import (
    BandSpec,
    FeatureConfig,
    FeatureMatrix,
    FeatureScaler,
    Observation,
    OneHotLabels,
    TimeSeriesWindow,
    band_amplitude,
    build_feature_matrix,
    normalize_features,
    one_hot_encode,
    spectrum,
    time_domain_features,
)


def _window(samples, fs=2048.0, channel="x", ts=0):
    return TimeSeriesWindow(samples=np.asarray(samples, dtype=float),
                            sampling_rate_hz=fs, channel_id=channel, timestamp=ts)


def _oracle_time_features(x):
    """Naive two-pass reference for the nine statistics."""
    x = list(map(float, x))
    n = len(x)
    mean = sum(x) / n
    dev = [v - mean for v in x]
    m2 = sum(d ** 2 for d in dev) / n
    m3 = sum(d ** 3 for d in dev) / n
    m4 = sum(d ** 4 for d in dev) / n
    g1 = m3 / m2 ** 1.5
    g2 = m4 / m2 ** 2 - 3.0
    skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
    kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    srt = sorted(x)
    median = (srt[n // 2] if n % 2 else (srt[n // 2 - 1] + srt[n // 2]) / 2)
    return {
        "mean": mean,
        "median": median,
        "min": min(x),
        "max": max(x),
        "kurtosis": kurt,
        "skewness": skew,
        "std": math.sqrt(sum(d ** 2 for d in dev) / (n - 1)),
        "rms": math.sqrt(sum(v ** 2 for v in x) / n),
        "range": max(x) - min(x),
    }


class TestTimeDomainFeatures:
    def test_symmetric_sample(self):
        t = time_domain_features(_window([1, 2, 3, 4, 5]))
        assert t.mean == 3.0
        assert t.median == 3.0
        assert t.min == 1.0
        assert t.max == 5.0
        assert t.range == 4.0
        assert t.skewness == pytest.approx(0.0, abs=1e-12)

    def test_hand_rms_std(self):
        t = time_domain_features(_window([1, 2, 3, 4, 5]))
        assert t.rms == pytest.approx(math.sqrt(11.0), rel=1e-14)
        assert t.std == pytest.approx(math.sqrt(2.5), rel=1e-14)

    def test_constant_window_flags_zero_variance(self):
        t = time_domain_features(_window([7.0, 7.0, 7.0, 7.0]))
        assert t.zero_variance
        assert math.isnan(t.kurtosis) and math.isnan(t.skewness)
        assert t.std == 0.0
        assert t.range == 0.0

    def test_against_two_pass_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = int(rng.integers(4, 60))
            x = rng.normal(size=n) * rng.uniform(0.1, 10)
            got = time_domain_features(_window(x))
            want = _oracle_time_features(x)
            for name, expected in want.items():
                assert getattr(got, name) == pytest.approx(expected, rel=1e-10), name

    def test_too_short_window_rejected(self):
        with pytest.raises(DataError):
            _window([1.0, 2.0, 3.0])


class TestSpectrum:
    def test_bin_aligned_sinusoid(self):
        n, fs, f0 = 2048, 2048.0, 64.0
        x = np.sin(2 * np.pi * f0 * np.arange(n) / fs)
        spec = spectrum(_window(x, fs=fs))
        idx = int(np.argmin(np.abs(spec.frequencies_hz - f0)))
        assert spec.amplitudes[idx] == pytest.approx(1.0, abs=1e-9)
        others = np.delete(spec.amplitudes, idx)
        assert np.max(others) < 1e-9

    def test_zero_signal(self):
        spec = spectrum(_window(np.zeros(512)))
        assert np.all(spec.amplitudes == 0.0)

    def test_dc_normalization(self):
        spec = spectrum(_window(np.full(1024, 0.5)))
        assert spec.amplitudes[0] == pytest.approx(0.5, abs=1e-12)
        assert np.max(spec.amplitudes[1:]) < 1e-12

    def test_zero_padding_keeps_sinusoid_amplitude(self):
        # 1500 samples pad to 2048; bin-aligned on the padded grid
        n_pad, fs = 2048, 2048.0
        x = np.sin(2 * np.pi * 64.0 * np.arange(1500) / fs)
        spec = spectrum(_window(x, fs=fs))
        assert spec.frequencies_hz.size == n_pad // 2 + 1
        idx = int(np.argmin(np.abs(spec.frequencies_hz - 64.0)))
        assert spec.amplitudes[idx] == pytest.approx(1.0, abs=0.05)

    def test_parseval_against_direct_dft(self):
        # one-sided amplitudes, scale folded back, must reproduce the
        # signal power computed by an O(N^2) DFT
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.choice([64, 128, 256]))
            x = rng.normal(size=n)
            spec = spectrum(_window(x, fs=float(n)))
            n_pad = len(spec.amplitudes) * 2 - 2
            # direct DFT oracle power
            k = np.arange(n_pad)
            xp = np.concatenate([x, np.zeros(n_pad - n)])
            dft = np.array([np.sum(xp * np.exp(-2j * np.pi * kk * k / n_pad))
                            for kk in range(n_pad)])
            power_oracle = float(np.sum(np.abs(dft) ** 2)) / n_pad
            amps = spec.amplitudes.copy()
            mags = amps * n  # undo 2/W and 1/W scaling
            mags[1:-1] /= 2.0
            power = (mags[0] ** 2 + 2 * np.sum(mags[1:-1] ** 2)
                     + mags[-1] ** 2) / n_pad
            assert power == pytest.approx(power_oracle, rel=1e-6)

    def test_hann_taper_preserves_sinusoid_amplitude(self):
        n, fs, f0 = 2048, 2048.0, 64.0
        x = 2.5 * np.sin(2 * np.pi * f0 * np.arange(n) / fs)
        spec = spectrum(_window(x, fs=fs), taper="hann")
        idx = int(np.argmin(np.abs(spec.frequencies_hz - f0)))
        assert spec.amplitudes[idx] == pytest.approx(2.5, rel=1e-6)


class TestBandAmplitude:
    def test_sinusoid_band(self):
        n, fs = 2048, 2048.0
        x = np.sin(2 * np.pi * 64.0 * np.arange(n) / fs)
        spec = spectrum(_window(x, fs=fs))
        assert band_amplitude(spec, 64.0, 2.0) == pytest.approx(1.0, abs=1e-9)

    def test_zero_signal_band(self):
        spec = spectrum(_window(np.zeros(512), fs=512.0))
        assert band_amplitude(spec, 64.0, 5.0) == 0.0

    def test_two_tones_against_dft_oracle(self):
        n, fs = 2048, 2048.0
        t = np.arange(n) / fs
        x = 2.0 * np.sin(2 * np.pi * 26.0 * t) + 1.0 * np.sin(2 * np.pi * 52.0 * t)
        spec = spectrum(_window(x, fs=fs))
        got = band_amplitude(spec, 26.1, 1.5)
        # oracle: direct DFT at the exact bins inside the band
        bins = [25, 26, 27]
        k = np.arange(n)
        oracle = max(
            2.0 / n * abs(np.sum(x * np.exp(-2j * np.pi * b * k / n)))
            for b in bins
        )
        assert got == pytest.approx(oracle, rel=1e-12)
        assert got == pytest.approx(2.0, rel=0.05)

    def test_empty_band(self):
        spec = spectrum(_window(np.zeros(512), fs=512.0))
        # resolution 1 Hz; a sliver between bins still catches none
        with pytest.raises(EmptyBandError):
            band_amplitude(spec, 10.5, 0.2)

    def test_band_outside_range(self):
        spec = spectrum(_window(np.zeros(512), fs=512.0))
        with pytest.raises(DataError):
            band_amplitude(spec, 250.0, 10.0)


class TestBuildFeatureMatrix:
    def _obs(self, sample_id, channels=("x", "y"), n=256, fs=2048.0, rng=None):
        rng = rng or np.random.default_rng(0)
        return Observation(
            sample_id=sample_id,
            windows=tuple(_window(rng.normal(size=n), fs=fs, channel=c)
                          for c in channels),
        )

    def test_shape_two_channels_with_band(self):
        rng = np.random.default_rng(3)
        obs = [self._obs(f"s{i}", rng=rng) for i in range(2)]
        fm = build_feature_matrix(obs, FeatureConfig(bands=(BandSpec(100.0, 10.0),)))
        assert fm.values.shape == (2, 20)
        assert fm.feature_names[0] == "x_mean"
        assert fm.feature_names[9] == "x_band_100hz"

    def test_shape_single_channel_no_bands(self):
        fm = build_feature_matrix([self._obs("a", channels=("x",))])
        assert fm.values.shape == (1, 9)

    def test_channel_mismatch(self):
        obs = [self._obs("a", channels=("x", "y")),
               self._obs("b", channels=("x", "z"))]
        with pytest.raises(ChannelMismatchError):
            build_feature_matrix(obs)

    def test_constant_window_warns_and_stays_finite(self):
        obs = [Observation(sample_id="c", windows=(_window(np.ones(64)),))]
        with pytest.warns(UserWarning, match="constant"):
            fm = build_feature_matrix(obs)
        assert np.all(np.isfinite(fm.values))

    def test_imbalance_band_exceeds_normal(self):
        from faultdiag.datagen import default_state_specs, synth_dataset

        specs = {s.state: s for s in default_state_specs()}
        obs, labels = synth_dataset(
            [(specs["normal_a"], 10), (specs["imbalance"], 10)], seed=5)
        fm = build_feature_matrix(obs, FeatureConfig(bands=(BandSpec(26.1, 2.0),)))
        col = fm.column("x_band_26.1hz")
        labels = np.asarray(labels)
        assert col[labels == "imbalance"].min() >= 2.0 * col[labels == "normal_a"].max()


class TestNormalize:
    def test_zscore_hand(self):
        fm = FeatureMatrix(values=np.array([[1.0], [2.0], [3.0]]),
                           feature_names=("f",), sample_ids=("a", "b", "c"))
        out = normalize_features(fm, "zscore")
        assert np.allclose(out.values[:, 0], [-1.0, 0.0, 1.0])

    def test_minmax_hand(self):
        fm = FeatureMatrix(values=np.array([[2.0], [4.0], [6.0]]),
                           feature_names=("f",), sample_ids=("a", "b", "c"))
        out = normalize_features(fm, "minmax")
        assert np.allclose(out.values[:, 0], [0.0, 0.5, 1.0])

    def test_constant_column_warns_and_zeroes(self):
        fm = FeatureMatrix(values=np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]),
                           feature_names=("c", "f"), sample_ids=("a", "b", "c"))
        for method in ("zscore", "minmax"):
            with pytest.warns(UserWarning, match="constant"):
                out = normalize_features(fm, method)
            assert np.all(out.values[:, 0] == 0.0)

    def test_zscore_columns_standardized(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=(40, 6)) * rng.uniform(0.5, 8, size=6)
        fm = FeatureMatrix(values=values, feature_names=tuple(f"f{i}" for i in range(6)),
                           sample_ids=tuple(f"s{i}" for i in range(40)))
        out = normalize_features(fm, "zscore")
        assert np.max(np.abs(out.values.mean(axis=0))) < 1e-10
        assert np.max(np.abs(out.values.std(axis=0, ddof=1) - 1.0)) < 1e-10

    def test_scaler_roundtrip_api(self):
        X = np.array([[1.0, 10.0], [3.0, 30.0], [2.0, 50.0]])
        scaler = FeatureScaler(method="minmax").fit(X)
        out = scaler.transform(X)
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert scaler.get_params() == {"method": "minmax"}


class TestOneHot:
    def test_hand_example(self):
        out = one_hot_encode([1, 3, 2], [1, 2, 3])
        assert np.array_equal(out, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])

    def test_single(self):
        assert np.array_equal(one_hot_encode(["a"], ["a"]), [[1.0]])

    def test_row_and_column_sums(self):
        rng = np.random.default_rng(2)
        labels = rng.choice(["u", "v", "w"], size=50).tolist()
        out = one_hot_encode(labels, ["u", "v", "w"])
        assert np.all(out.sum(axis=1) == 1.0)
        for j, cat in enumerate(["u", "v", "w"]):
            assert out[:, j].sum() == labels.count(cat)

    def test_unknown_label(self):
        with pytest.raises(UnknownLabelError):
            one_hot_encode(["a", "q"], ["a", "b"])

    def test_fit_learns_sorted_categories(self):
        enc = OneHotLabels().fit(["b", "a", "b"])
        assert enc.categories_ == ("a", "b")
