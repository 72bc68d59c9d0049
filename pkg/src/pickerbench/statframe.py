"""Balanced two-stage nested ANOVA on a metric table.

Decomposes each metric value into grand mean, model effect, data-quantity
effect, and interaction (sum-to-zero identification), plus two nested
random terms: a cluster-set (data sampling) component and a within-set
(training) component.  Variance components come from the classical
method-of-moments mean squares; the data component may be negative and is
flagged rather than truncated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .design import MetricTable


class FitError(ValueError):
    pass


@dataclass
class VarianceEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    negative: bool = False


@dataclass
class CellStats:
    mean: float
    ci_low: float
    ci_high: float
    var_train: VarianceEstimate
    var_data: VarianceEstimate


@dataclass
class FitResult:
    metric_name: str
    grand_mean: float
    model_effects: np.ndarray  # (M,)
    quantity_effects: np.ndarray  # (A,)
    interactions: np.ndarray  # (M, A)
    cell_means: np.ndarray  # (M, A)
    cells: list[list[CellStats]]
    residuals_train: np.ndarray  # (M, A, D, I): y - per-(m,a,d) mean
    residuals_data: np.ndarray  # (M, A, D): per-set mean - cell mean
    ci_level: float

    def to_json(self) -> dict:
        def var_json(v: VarianceEstimate):
            return {"estimate": v.estimate, "ci_low": v.ci_low,
                    "ci_high": v.ci_high, "negative": v.negative}

        return {
            "metric_name": self.metric_name,
            "ci_level": self.ci_level,
            "grand_mean": self.grand_mean,
            "model_effects": self.model_effects.tolist(),
            "quantity_effects": self.quantity_effects.tolist(),
            "interactions": self.interactions.tolist(),
            "cells": [[{
                "mean": c.mean, "ci_low": c.ci_low, "ci_high": c.ci_high,
                "var_train": var_json(c.var_train), "var_data": var_json(c.var_data),
            } for c in row] for row in self.cells],
            "residuals_train": self.residuals_train.tolist(),
            "residuals_data": self.residuals_data.tolist(),
        }

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))


def _mean_squares(cell: np.ndarray) -> tuple[float, float, int, int]:
    """MS within cluster sets (training) and MS between cluster sets."""
    cell = np.asarray(cell, dtype=float)
    if cell.ndim != 2:
        raise FitError(f"cell must be D x I, got shape {cell.shape}")
    n_sets, n_inits = cell.shape
    if n_sets < 2 or n_inits < 2:
        raise FitError("variance separation needs D >= 2 and I >= 2")
    set_means = cell.mean(axis=1)
    ms_within = float(((cell - set_means[:, None]) ** 2).sum()
                      / (n_sets * (n_inits - 1)))
    ms_between = float(n_inits * ((set_means - set_means.mean()) ** 2).sum()
                       / (n_sets - 1))
    return ms_within, ms_between, n_sets, n_inits


def variance_components(cell: np.ndarray, ci_level: float = 0.90
                        ) -> tuple[VarianceEstimate, VarianceEstimate]:
    """(training variance, data variance) with confidence intervals.

    The training component gets an exact chi-square interval on its
    within-set mean square.  The data component combines two mean squares,
    so its interval uses a Satterthwaite-matched chi-square; when the point
    estimate is negative the chi-square machinery breaks down and a normal
    approximation on the mean-square difference is reported instead.
    """
    ms_within, ms_between, n_sets, n_inits = _mean_squares(cell)
    alpha = 1.0 - ci_level
    df_within = n_sets * (n_inits - 1)
    df_between = n_sets - 1

    var_train = ms_within
    lo = df_within * ms_within / stats.chi2.ppf(1 - alpha / 2, df_within)
    hi = df_within * ms_within / stats.chi2.ppf(alpha / 2, df_within)
    train = VarianceEstimate(var_train, lo, hi)

    var_data = (ms_between - ms_within) / n_inits
    se = np.sqrt(2 * ms_between ** 2 / df_between
                 + 2 * ms_within ** 2 / df_within) / n_inits
    if var_data > 0:
        df_sat = var_data ** 2 / ((ms_between / n_inits) ** 2 / df_between
                                  + (ms_within / n_inits) ** 2 / df_within)
        lo = df_sat * var_data / stats.chi2.ppf(1 - alpha / 2, df_sat)
        hi = df_sat * var_data / stats.chi2.ppf(alpha / 2, df_sat)
        data = VarianceEstimate(var_data, lo, hi, negative=False)
    else:
        z = stats.norm.ppf(1 - alpha / 2)
        data = VarianceEstimate(var_data, var_data - z * se, var_data + z * se,
                                negative=var_data < 0)
    return train, data


def cell_mean_ci(cell: np.ndarray, level: float = 0.90,
                 use_t: bool = True) -> tuple[float, float]:
    """Symmetric interval around the cell mean based on the between-set
    mean square (so data-sampling uncertainty dominates, as it should).

    Student-t with D - 1 df by default, which is exact under the Gaussian
    model; use_t=False switches to the plain z quantile.
    """
    ms_within, ms_between, n_sets, n_inits = _mean_squares(cell)
    mean = float(np.mean(cell))
    alpha = 1.0 - level
    if use_t:
        q = stats.t.ppf(1 - alpha / 2, n_sets - 1)
    else:
        q = stats.norm.ppf(1 - alpha / 2)
    half = float(q * np.sqrt(ms_between / (n_sets * n_inits)))
    return (mean - half, mean + half)


def fit(table: MetricTable, ci_level: float = 0.90, use_t: bool = True) -> FitResult:
    """Fixed effects from marginal means plus per-cell variance components."""
    design = table.design
    n_models, n_quantities = design.n_models, design.n_quantities
    for m in range(n_models):
        for a in range(n_quantities):
            if not table.cell_complete(m, a):
                raise FitError(f"cell (m={m}, a={a}) has missing values; cannot fit")

    y = table.values
    cell_means = y.mean(axis=(2, 3))
    grand = float(cell_means.mean())
    model_eff = cell_means.mean(axis=1) - grand
    quantity_eff = cell_means.mean(axis=0) - grand
    interactions = cell_means - grand - model_eff[:, None] - quantity_eff[None, :]

    set_means = y.mean(axis=3)  # (M, A, D)
    residuals_train = y - set_means[..., None]
    residuals_data = set_means - cell_means[..., None]

    cells: list[list[CellStats]] = []
    for m in range(n_models):
        row = []
        for a in range(n_quantities):
            cell = y[m, a]
            train, data = variance_components(cell, ci_level)
            lo, hi = cell_mean_ci(cell, ci_level, use_t=use_t)
            row.append(CellStats(float(cell_means[m, a]), lo, hi, train, data))
        cells.append(row)

    return FitResult(
        metric_name=table.metric_name,
        grand_mean=grand,
        model_effects=model_eff,
        quantity_effects=quantity_eff,
        interactions=interactions,
        cell_means=cell_means,
        cells=cells,
        residuals_train=residuals_train,
        residuals_data=residuals_data,
        ci_level=ci_level,
    )


def functional_fit(tables: list[MetricTable], ci_level: float = 0.90,
                   use_t: bool = True) -> list[FitResult | None]:
    """Independent fit per grid point (e.g. per cumulative-RMSR cutoff).

    A point whose table has any masked cell is skipped (None) rather than
    fitted on partial data.
    """
    results: list[FitResult | None] = []
    for table in tables:
        if table.missing_mask.any():
            results.append(None)
        else:
            results.append(fit(table, ci_level, use_t=use_t))
    return results


def qq_data(residuals) -> np.ndarray:
    """Pairs (theoretical Gaussian quantile, sorted residual) for QQ plots.

    Theoretical quantiles use plotting positions (k - 0.5)/n, scaled by the
    residuals' sample standard deviation around zero mean.
    """
    res = np.sort(np.asarray(list(residuals), dtype=float))
    n = len(res)
    if n < 3:
        raise FitError("need at least 3 residuals for a QQ plot")
    positions = (np.arange(1, n + 1) - 0.5) / n
    q = stats.norm.ppf(positions)
    # standardize the quantile points before rescaling so residuals that sit
    # exactly on Gaussian quantiles land exactly on y = x
    theoretical = q / q.std(ddof=1) * res.std(ddof=1)
    return np.column_stack([theoretical, res])
