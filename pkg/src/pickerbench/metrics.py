"""Summary classification metrics, cumulative RMSR, and validation-set
threshold selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import pickeval
from .records import EARTHQUAKE, NOISE


class UndefinedMetricError(ValueError):
    pass


DEFAULT_THRESHOLD_GRID = np.round(np.arange(0.01, 1.0, 0.01), 2)
DEFAULT_RMSR_GRID = np.round(np.arange(0.005, 0.3000001, 0.005), 3)


@dataclass
class AggregateCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn_noise: int = 0
    n_noise: int = 0
    residuals: list[float] = field(default_factory=list)

    def add(self, wc: pickeval.WaveformCounts):
        if wc.kind == NOISE:
            self.n_noise += 1
            if wc.clean:
                self.tn_noise += 1
            self.fp += wc.fp
        else:
            self.tp += wc.tp
            self.fp += wc.fp
            self.fn += wc.fn
            self.residuals.extend(wc.residuals)


def recall(c: AggregateCounts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("recall undefined: no labeled arrivals (TP + FN = 0)")
    return c.tp / (c.tp + c.fn)


def f1(c: AggregateCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        raise UndefinedMetricError("F1 undefined: 2TP + FP + FN = 0")
    return 2 * c.tp / denom


def noise_percent_correct(c: AggregateCounts) -> float:
    if c.n_noise == 0:
        raise UndefinedMetricError("noise percent correct undefined: no noise waveforms")
    return c.tn_noise / c.n_noise


@dataclass
class CumulativeRmsrCurve:
    grid: np.ndarray  # ascending cutoffs in (0, 0.3] seconds
    values: np.ndarray  # RMSR over |residual| <= cutoff; NaN where masked
    counts: np.ndarray
    mask: np.ndarray  # True = undefined (no residuals under the cutoff)


def cumulative_rmsr(residuals, grid=DEFAULT_RMSR_GRID) -> CumulativeRmsrCurve:
    """Root-mean-square of the residuals whose magnitude is at most each
    cutoff, masked where no residual qualifies."""
    grid = np.asarray(grid, dtype=float)
    if (np.diff(grid) <= 0).any():
        raise ValueError("grid must be strictly ascending")
    if len(grid) and (grid[0] <= 0 or grid[-1] > 0.3 + 1e-12):
        raise ValueError("grid must lie in (0, 0.3]")
    res = np.abs(np.asarray(list(residuals), dtype=float))
    values = np.full(len(grid), np.nan)
    counts = np.zeros(len(grid), dtype=int)
    for j, cutoff in enumerate(grid):
        sel = res[res <= cutoff]
        counts[j] = len(sel)
        if len(sel):
            values[j] = float(np.sqrt(np.mean(sel ** 2)))
    return CumulativeRmsrCurve(grid, values, counts, counts == 0)


@dataclass
class LabeledTrace:
    """A probability trace paired with just enough label context to score it."""

    trace: pickeval.ProbabilityTrace
    kind: str
    p_arrival_index: int | None = None
    sampling_rate_hz: float = 100.0


def score_traces(items: list[LabeledTrace], threshold: float,
                 tp_half_width_s: float = pickeval.DEFAULT_TP_HALF_WIDTH_S
                 ) -> AggregateCounts:
    agg = AggregateCounts()
    for item in items:
        picks = pickeval.extract_picks(item.trace, threshold)
        if item.kind == EARTHQUAKE:
            agg.add(pickeval.classify_picks(picks, item.p_arrival_index,
                                            item.sampling_rate_hz, tp_half_width_s,
                                            waveform_id=item.trace.waveform_id))
        else:
            agg.add(pickeval.classify_noise(picks, waveform_id=item.trace.waveform_id))
    return agg


def select_threshold(items: list[LabeledTrace],
                     threshold_grid=DEFAULT_THRESHOLD_GRID) -> float:
    """Exhaustive grid scan for the threshold maximizing
    mean(F1, noise percent correct); the lowest maximizer wins ties."""
    if not any(i.kind == EARTHQUAKE for i in items):
        raise UndefinedMetricError("threshold selection needs >= 1 earthquake waveform")
    if not any(i.kind == NOISE for i in items):
        raise UndefinedMetricError("threshold selection needs >= 1 noise waveform")
    best_t, best_obj = None, -np.inf
    for t in np.asarray(threshold_grid, dtype=float):
        agg = score_traces(items, float(t))
        obj = 0.5 * (f1(agg) + noise_percent_correct(agg))
        if obj > best_obj:
            best_t, best_obj = float(t), obj
    return best_t
