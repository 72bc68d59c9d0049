"""Per-cluster feature-distribution diagnostics.

Normalized density curves of metadata features, post-arrival spectral and
amplitude features of raw traces, and S-P interval summaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .records import Dataset

DEFAULT_LOG_FLOOR = 1e-12
FREQ_BIN_HZ = 5.0


class DiagnosticsError(ValueError):
    pass


@dataclass
class DensityCurve:
    feature_name: str
    group_id: str
    grid: np.ndarray
    density: np.ndarray
    degenerate: bool = False  # all input values identical -> single-bin spike


def _shared_grid(groups: dict[str, np.ndarray], n_points: int) -> np.ndarray:
    pooled = np.concatenate(list(groups.values()))
    lo, hi = pooled.min(), pooled.max()
    margin = 0.15 * (hi - lo) if hi > lo else max(abs(lo), 1.0)
    return np.linspace(lo - margin, hi + margin, n_points)


def _spike_density(grid: np.ndarray, value: float) -> np.ndarray:
    """All mass at the grid point nearest the value, trapezoid-normalized."""
    j = int(np.abs(grid - value).argmin())
    density = np.zeros(len(grid))
    left = grid[j] - grid[j - 1] if j > 0 else 0.0
    right = grid[j + 1] - grid[j] if j < len(grid) - 1 else 0.0
    density[j] = 2.0 / (left + right)
    return density


def feature_density(values_by_group: dict[str, "np.ndarray | list"],
                    feature_name: str = "", grid=None,
                    n_points: int = 512) -> dict[str, DensityCurve]:
    """Gaussian KDE (Silverman bandwidth) per group on one shared grid,
    renormalized so the trapezoidal integral is exactly 1."""
    groups = {g: np.asarray(v, dtype=float).ravel()
              for g, v in values_by_group.items()}
    for g, v in groups.items():
        if len(v) < 2 or not np.isfinite(v).all():
            raise DiagnosticsError(f"group {g!r}: need >= 2 finite values")
    if grid is None:
        grid = _shared_grid(groups, n_points)
    grid = np.asarray(grid, dtype=float)

    curves: dict[str, DensityCurve] = {}
    for g, v in groups.items():
        if np.ptp(v) == 0.0:
            curves[g] = DensityCurve(feature_name, g, grid,
                                     _spike_density(grid, v[0]), degenerate=True)
            continue
        kde = stats.gaussian_kde(v, bw_method="silverman")
        density = kde(grid)
        area = np.trapezoid(density, grid)
        curves[g] = DensityCurve(feature_name, g, grid, density / area)
    return curves


@dataclass
class ComponentFeatures:
    frequencies: np.ndarray
    amplitudes: np.ndarray  # DFT magnitudes over the window
    log_amplitudes: np.ndarray
    max_log_amp_per_bin: dict[int, float]
    log_amps_per_bin: dict[int, np.ndarray]
    argmax_frequency_hz: float
    log_peak_amplitude: float
    undefined: bool = False  # all-zero window


@dataclass
class WindowFeatures:
    components: list[ComponentFeatures]
    truncated: bool = False


def window_features(samples: np.ndarray, p_index: int, sampling_rate_hz: float,
                    window_s: float = 10.0,
                    log_floor: float = DEFAULT_LOG_FLOOR) -> WindowFeatures:
    """Spectral and amplitude features of the post-arrival window, per
    component.  Frequency bins are half-open [5k, 5(k+1)) Hz."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] != 3:
        raise DiagnosticsError(f"expected (3, n) samples, got {samples.shape}")
    n = samples.shape[1]
    if not 0 <= p_index < n:
        raise DiagnosticsError(f"p_index {p_index} outside [0, {n})")
    win_len = int(round(window_s * sampling_rate_hz))
    truncated = p_index + win_len > n
    window = samples[:, p_index:p_index + win_len]

    freqs = np.fft.rfftfreq(window.shape[1], d=1.0 / sampling_rate_hz)
    comps = []
    for c in range(3):
        amps = np.abs(np.fft.rfft(window[c]))
        undefined = not np.any(window[c])
        log_amps = np.log10(np.maximum(amps, log_floor))
        bins = (freqs // FREQ_BIN_HZ).astype(int)
        per_bin: dict[int, np.ndarray] = {}
        for b in np.unique(bins):
            per_bin[int(b)] = log_amps[bins == b]
        max_per_bin = {b: float(v.max()) for b, v in per_bin.items()}
        peak = float(np.abs(window[c]).max())
        comps.append(ComponentFeatures(
            frequencies=freqs, amplitudes=amps, log_amplitudes=log_amps,
            max_log_amp_per_bin=max_per_bin, log_amps_per_bin=per_bin,
            argmax_frequency_hz=float(freqs[amps.argmax()]),
            log_peak_amplitude=float(np.log10(max(peak, log_floor))),
            undefined=undefined))
    return WindowFeatures(components=comps, truncated=truncated)


@dataclass
class SpIntervalSummary:
    intervals_s: list[float] = field(default_factory=list)
    n_earthquake: int = 0
    fraction_with_s: float = 0.0


def sp_intervals(dataset: Dataset) -> SpIntervalSummary:
    """S-minus-P times in seconds for waveforms carrying both labels."""
    out = SpIntervalSummary()
    for wf in dataset.earthquake_waveforms():
        out.n_earthquake += 1
        if wf.s_arrival_index is not None:
            out.intervals_s.append(
                (wf.s_arrival_index - wf.p_arrival_index) / wf.sampling_rate_hz)
    if out.n_earthquake:
        out.fraction_with_s = len(out.intervals_s) / out.n_earthquake
    return out
