"""Benchmarking toolkit for seismic phase pickers: leakage-aware splits,
pick scoring, variance-component analysis, and rank probabilities."""

from .design import DesignSpec, MetricTable, ModelInstanceKey, enumerate_instances
from .records import (Dataset, SourceRecord, WaveformRecord, load_metadata,
                      save_metadata, read_trace, write_trace)
from .stratify import (ClusterModel, SplitConfig, SplitPlan, assign_cluster,
                       build_split_plan, cluster_dataset, kmeans_fit,
                       sample_cluster_sets)

__all__ = [
    "DesignSpec", "MetricTable", "ModelInstanceKey", "enumerate_instances",
    "Dataset", "SourceRecord", "WaveformRecord", "load_metadata", "save_metadata",
    "read_trace", "write_trace",
    "ClusterModel", "SplitConfig", "SplitPlan", "assign_cluster",
    "build_split_plan", "cluster_dataset", "kmeans_fit", "sample_cluster_sets",
]

__version__ = "0.1.0"
