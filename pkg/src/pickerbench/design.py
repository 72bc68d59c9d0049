"""Experiment-design enumeration and the balanced metric table."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class DesignError(ValueError):
    pass


class ModelInstanceKey(NamedTuple):
    m: int  # training approach
    a: int  # quantity-of-clusters level
    d: int  # cluster set
    i: int  # initialization


@dataclass(frozen=True)
class DesignSpec:
    n_models: int = 3
    quantity_levels: tuple[int, ...] = (1, 3, 6, 9, 12)
    n_cluster_sets: int = 12
    n_inits: int = 4

    def __post_init__(self):
        if self.n_models < 2:
            raise DesignError("need at least 2 models to compare")
        if self.n_cluster_sets < 2 or self.n_inits < 2:
            raise DesignError(
                "need >= 2 cluster sets and >= 2 initializations to separate variances")
        levels = tuple(self.quantity_levels)
        if any(b <= a for a, b in zip(levels, levels[1:])) or not levels:
            raise DesignError("quantity_levels must be non-empty and strictly increasing")
        if levels[0] < 1:
            raise DesignError("quantity levels must be positive")
        object.__setattr__(self, "quantity_levels", levels)

    @property
    def n_quantities(self) -> int:
        return len(self.quantity_levels)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_models, self.n_quantities, self.n_cluster_sets, self.n_inits)

    @property
    def n_instances(self) -> int:
        return int(np.prod(self.shape))


def enumerate_instances(design: DesignSpec) -> list[ModelInstanceKey]:
    """All instance keys in lexicographic (m, a, d, i) order."""
    return [ModelInstanceKey(*idx) for idx in itertools.product(*map(range, design.shape))]


@dataclass
class MetricTable:
    """Dense M x A x D x I table of one scalar metric, with explicit mask.

    Missing values are carried in `missing_mask`, never as sentinel numbers.
    """

    metric_name: str
    design: DesignSpec
    values: np.ndarray
    missing_mask: np.ndarray = field(default=None)  # True = missing

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.design.shape:
            raise DesignError(
                f"values shape {self.values.shape} != design shape {self.design.shape}")
        if self.missing_mask is None:
            self.missing_mask = np.zeros(self.design.shape, dtype=bool)
        else:
            self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
            if self.missing_mask.shape != self.design.shape:
                raise DesignError("missing_mask shape mismatch")

    def cell(self, m: int, a: int) -> np.ndarray:
        """The D x I block for one (model, quantity) cell."""
        return self.values[m, a]

    def cell_complete(self, m: int, a: int) -> bool:
        return not self.missing_mask[m, a].any()

    def set_value(self, key: ModelInstanceKey, value: float):
        self.values[key] = value
        self.missing_mask[key] = False

    @classmethod
    def empty(cls, metric_name: str, design: DesignSpec) -> "MetricTable":
        return cls(metric_name, design,
                   np.zeros(design.shape), np.ones(design.shape, dtype=bool))

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "m", "a", "d", "i", "value"])
            for key in enumerate_instances(self.design):
                if not self.missing_mask[key]:
                    w.writerow([self.metric_name, *key, repr(float(self.values[key]))])

    @classmethod
    def read_csv(cls, path: str | Path, design: DesignSpec) -> "MetricTable":
        table = None
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if table is None:
                    table = cls.empty(row["metric"], design)
                key = ModelInstanceKey(int(row["m"]), int(row["a"]),
                                       int(row["d"]), int(row["i"]))
                table.set_value(key, float(row["value"]))
        if table is None:
            raise DesignError(f"{path}: no metric rows")
        return table
