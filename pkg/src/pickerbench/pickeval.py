"""From windowed model outputs to classified picks.

Overlapping window outputs are averaged into one probability trace per
waveform, picks are the per-run argmax of samples strictly above the
threshold, and picks are classified against the labeled arrival using a
symmetric true-positive window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import EARTHQUAKE, NOISE

DEFAULT_TP_HALF_WIDTH_S = 0.3


class PickEvalError(ValueError):
    pass


@dataclass
class WindowOutput:
    waveform_id: str
    window_start_index: int
    probabilities: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.window_start_index < 0:
            raise PickEvalError(f"{self.waveform_id}: negative window offset")
        p = self.probabilities
        if p.ndim != 1 or len(p) == 0:
            raise PickEvalError(f"{self.waveform_id}: probabilities must be a 1-D vector")
        if (p < 0).any() or (p > 1).any():
            raise PickEvalError(f"{self.waveform_id}: probabilities outside [0, 1]")


@dataclass
class ProbabilityTrace:
    waveform_id: str
    values: np.ndarray
    coverage: np.ndarray  # windows covering each sample; 0 = undefined

    @property
    def defined(self) -> np.ndarray:
        return self.coverage > 0


@dataclass
class Pick:
    waveform_id: str
    sample_index: int
    probability: float
    classification: str = "unclassified"  # TP | FP | unclassified
    residual_s: float | None = None


@dataclass
class WaveformCounts:
    waveform_id: str
    kind: str
    tp: int = 0
    fp: int = 0
    fn: int = 0
    residuals: list[float] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.kind == NOISE and self.fp == 0


def aggregate_windows(windows: list[WindowOutput], n_samples: int) -> ProbabilityTrace:
    """Mean of all window outputs covering each sample.

    Samples no window touches get coverage 0 and are excluded from picking
    (there is no end-padding, so trailing tails can be uncovered).
    """
    if n_samples <= 0:
        raise PickEvalError("n_samples must be positive")
    if not windows:
        return ProbabilityTrace("", np.zeros(n_samples), np.zeros(n_samples, dtype=int))
    wid = windows[0].waveform_id
    total = np.zeros(n_samples)
    coverage = np.zeros(n_samples, dtype=int)
    for w in windows:
        if w.waveform_id != wid:
            raise PickEvalError(f"mixed waveform ids {wid!r} / {w.waveform_id!r}")
        end = w.window_start_index + len(w.probabilities)
        if end > n_samples:
            raise PickEvalError(
                f"{wid}: window [{w.window_start_index}, {end}) exceeds "
                f"n_samples={n_samples}")
        total[w.window_start_index:end] += w.probabilities
        coverage[w.window_start_index:end] += 1
    values = np.zeros(n_samples)
    defined = coverage > 0
    values[defined] = total[defined] / coverage[defined]
    return ProbabilityTrace(wid, values, coverage)


def extract_picks(trace: ProbabilityTrace, threshold: float) -> list[Pick]:
    """One pick per maximal run of defined samples strictly above threshold,
    at the run's argmax (earliest index on ties)."""
    if not 0 < threshold < 1:
        raise PickEvalError(f"threshold {threshold} outside (0, 1)")
    above = (trace.values > threshold) & trace.defined
    if not above.any():
        return []
    padded = np.concatenate(([False], above, [False])).astype(int)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    picks = []
    for s, e in zip(starts, ends):
        j = int(s + trace.values[s:e].argmax())  # argmax takes the earliest tie
        picks.append(Pick(trace.waveform_id, j, float(trace.values[j])))
    return picks


def classify_picks(picks: list[Pick], labeled_p_index: int, sampling_rate_hz: float,
                   tp_half_width_s: float = DEFAULT_TP_HALF_WIDTH_S,
                   waveform_id: str = "") -> WaveformCounts:
    """Single-TP rule for an earthquake waveform: among picks within the
    true-positive window, the one nearest the label (earlier on ties) is
    the TP; every other pick is an FP; FN = 1 when there is no TP."""
    if labeled_p_index is None:
        raise PickEvalError("earthquake waveform without a labeled arrival")
    counts = WaveformCounts(waveform_id=waveform_id, kind=EARTHQUAKE)
    half_width = tp_half_width_s * sampling_rate_hz
    candidates = [p for p in picks
                  if abs(p.sample_index - labeled_p_index) <= half_width]
    tp_pick = None
    if candidates:
        tp_pick = min(candidates,
                      key=lambda p: (abs(p.sample_index - labeled_p_index),
                                     p.sample_index))
    for p in picks:
        if p is tp_pick:
            p.classification = "TP"
            p.residual_s = (p.sample_index - labeled_p_index) / sampling_rate_hz
            counts.tp = 1
            counts.residuals.append(p.residual_s)
        else:
            p.classification = "FP"
            counts.fp += 1
    counts.fn = 1 - counts.tp
    return counts


def classify_noise(picks: list[Pick], waveform_id: str = "") -> WaveformCounts:
    """A noise waveform is clean iff the model produced zero picks."""
    for p in picks:
        p.classification = "FP"
    return WaveformCounts(waveform_id=waveform_id, kind=NOISE, fp=len(picks))


def load_window_outputs(path: str | Path) -> dict[str, list[WindowOutput]]:
    """NDJSON boundary format: {waveform_id, window_start_index, probabilities}."""
    by_wf: dict[str, list[WindowOutput]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                w = WindowOutput(obj["waveform_id"], int(obj["window_start_index"]),
                                 obj["probabilities"])
            except (json.JSONDecodeError, KeyError, PickEvalError) as exc:
                raise PickEvalError(f"{path}:{lineno}: {exc}") from None
            by_wf.setdefault(w.waveform_id, []).append(w)
    return by_wf


def save_window_outputs(windows: list[WindowOutput], path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        for w in windows:
            fh.write(json.dumps({
                "waveform_id": w.waveform_id,
                "window_start_index": w.window_start_index,
                "probabilities": [float(x) for x in w.probabilities],
            }) + "\n")
