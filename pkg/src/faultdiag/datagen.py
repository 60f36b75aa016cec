"""Deterministic synthetic vibration data for the six machine states.

Stands in for the (unpublished) furnace-fan recordings: each state is
a sum of harmonics of the operating frequency plus Gaussian noise.
Harmonics are phase-locked to the rotation (one random start phase per
window), as they are on a real shaft; amplitudes get a small additive
per-window jitter.

The default recipe in :func:`default_state_specs` is tuned so that

* the six states form six recoverable clusters: every running state
  carries two signature harmonics nobody else uses, which makes the
  state centroids roughly equidistant in z-scored feature space and
  puts the WSS elbow at k = 6;
* power_off is linearly separable from everything (its RMS is two
  orders of magnitude below the running states);
* imbalance at least doubles the operating-frequency band amplitude
  of either normal state and carries 1.5x the noise level, the
  injected dispersion contrast the homogeneity test must detect;
* the two normal states are exchangeable in every time-domain
  feature: same amplitude multiset, same noise and jitter, and
  harmonic sets (2, 6) vs (2.4, 4) chosen so the window-edge
  residuals (proportional to amplitude/harmonic) match exactly,
  making their within-state dispersions statistically equal.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import AliasError, DataError
from .features import Observation, TimeSeriesWindow
from .rng import rng_for

STATES = ("normal_a", "normal_b", "imbalance", "shaft_fault", "power_off", "repaired")

DEFAULT_BASE_FREQ_HZ = 26.1
DEFAULT_SAMPLING_RATE_HZ = 2048.0
DEFAULT_WINDOW_LEN = 2048

# Per-channel gain: the radial axis sees slightly more of the orbit.
CHANNEL_GAINS = MappingProxyType({"x": 1.0, "y": 0.9})

# Acquisition cadence: one observation window every 10 minutes.
OBSERVATION_PERIOD_S = 600


@dataclass(frozen=True)
class MachineStateSpec:
    """Signal recipe for one machine state.

    ``amplitudes`` maps harmonic multiples of the base frequency to
    sinusoid amplitudes in g. ``amp_jitter_sigma`` is the additive
    per-window amplitude wobble; ``dispersion_scale`` multiplies the
    noise level and is how extra within-state spread is injected.
    """

    state: str
    amplitudes: dict[float, float]
    noise_sigma: float
    base_freq_hz: float = DEFAULT_BASE_FREQ_HZ
    amp_jitter_sigma: float = 0.04
    dispersion_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", dict(self.amplitudes))
        if any(a < 0 for a in self.amplitudes.values()):
            raise DataError("harmonic amplitudes must be non-negative")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be non-negative")
        if self.state == "power_off" and any(a != 0 for a in self.amplitudes.values()):
            raise DataError("power_off must have all harmonic amplitudes 0")

    @property
    def max_frequency_hz(self) -> float:
        if not self.amplitudes:
            return 0.0
        return self.base_freq_hz * max(self.amplitudes)


# Spectral bands (multiples of the base frequency) that cover every
# signature harmonic below; the pipeline uses these as its default
# band features.
DEFAULT_BAND_MULTIPLES = (0.5, 1.0, 1.5, 2.0, 2.4, 4.0, 4.5, 6.0, 7.0, 8.0)
DEFAULT_BAND_HALFWIDTH_HZ = 2.0


def default_state_specs() -> tuple[MachineStateSpec, ...]:
    """The tuned six-state recipe; see the module docstring for the
    properties these constants guarantee."""
    return (
        MachineStateSpec("normal_a", {1.0: 0.30, 2.0: 0.55, 6.0: 0.55},
                         noise_sigma=0.15, amp_jitter_sigma=0.02),
        MachineStateSpec("normal_b", {1.0: 0.30, 2.4: 0.55, 4.0: 0.55},
                         noise_sigma=0.15, amp_jitter_sigma=0.02),
        MachineStateSpec("imbalance", {1.0: 0.90, 7.0: 0.45},
                         noise_sigma=0.15, amp_jitter_sigma=0.02,
                         dispersion_scale=1.5),
        MachineStateSpec("shaft_fault", {0.5: 0.55, 1.0: 0.30, 1.5: 0.55},
                         noise_sigma=0.16, amp_jitter_sigma=0.02),
        MachineStateSpec("power_off", {}, noise_sigma=0.0075, amp_jitter_sigma=0.0),
        MachineStateSpec("repaired", {1.0: 0.30, 4.5: 0.55, 8.0: 0.55},
                         noise_sigma=0.08, amp_jitter_sigma=0.02),
    )


def default_bands() -> tuple[tuple[float, float], ...]:
    """(center_hz, halfwidth_hz) pairs covering the default harmonics."""
    return tuple(
        (DEFAULT_BASE_FREQ_HZ * m, DEFAULT_BAND_HALFWIDTH_HZ)
        for m in DEFAULT_BAND_MULTIPLES
    )


def _synth_window(spec: MachineStateSpec, fs: float, window_len: int,
                  rng: np.random.Generator, channel_gain: float) -> np.ndarray:
    t = np.arange(window_len) / fs
    x = np.zeros(window_len)
    # Harmonics are phase-locked to the shaft: a single random rotation
    # phase per window, shared by every component.
    theta = rng.uniform(0.0, 2.0 * np.pi)
    for harmonic in sorted(spec.amplitudes):
        base_amp = spec.amplitudes[harmonic]
        if base_amp == 0.0:
            continue
        amp = max(base_amp + spec.amp_jitter_sigma * rng.standard_normal(), 0.0)
        x += amp * channel_gain * np.sin(
            harmonic * (2.0 * np.pi * spec.base_freq_hz * t + theta)
        )
    sigma = spec.noise_sigma * spec.dispersion_scale
    if sigma > 0:
        x += sigma * rng.standard_normal(window_len)
    return x


def synth_dataset(states, fs: float = DEFAULT_SAMPLING_RATE_HZ,
                  window_len: int = DEFAULT_WINDOW_LEN, seed: int = 0,
                  channels: tuple[str, ...] = ("x", "y"),
                  start_epoch_s: int = 1_500_000_000):
    """Generate windows for a list of ``(MachineStateSpec, count)`` pairs.

    Returns ``(observations, labels)``: one multi-channel observation
    per window, 10 minutes apart in timestamp, plus the ground-truth
    state labels. Window ``i`` of state ``s`` on channel ``c`` is
    generated from the stream keyed on (seed, s, i, c), so the output
    is bit-identical for a given seed no matter the generation order.
    """
    states = list(states)
    if window_len < 256:
        raise DataError("window_len must be >= 256")
    max_freq = max((spec.max_frequency_hz for spec, _ in states), default=0.0)
    if fs <= 2.0 * max_freq:
        raise AliasError(
            f"sampling rate {fs} Hz too low for harmonic content up to {max_freq} Hz"
        )
    observations = []
    labels = []
    obs_index = 0
    for state_index, (spec, count) in enumerate(states):
        for w in range(count):
            windows = []
            timestamp = start_epoch_s + obs_index * OBSERVATION_PERIOD_S
            for ch_index, channel in enumerate(channels):
                rng = rng_for(seed, state_index, w, ch_index)
                samples = _synth_window(
                    spec, fs, window_len, rng, CHANNEL_GAINS.get(channel, 1.0)
                )
                windows.append(TimeSeriesWindow(
                    samples=samples, sampling_rate_hz=fs,
                    channel_id=channel, timestamp=timestamp,
                ))
            observations.append(Observation(
                sample_id=f"{spec.state}_{w:04d}", windows=tuple(windows),
            ))
            labels.append(spec.state)
            obs_index += 1
    return observations, labels


def default_dataset(windows_per_state: int = 30, seed: int = 0,
                    fs: float = DEFAULT_SAMPLING_RATE_HZ,
                    window_len: int = DEFAULT_WINDOW_LEN):
    """Six states x ``windows_per_state`` windows with the tuned recipe."""
    states = [(spec, windows_per_state) for spec in default_state_specs()]
    return synth_dataset(states, fs=fs, window_len=window_len, seed=seed)
