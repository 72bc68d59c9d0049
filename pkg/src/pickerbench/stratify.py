"""Spatial stratification: seeded k-means on source locations, leakage-aware
train/validation/test splits, and randomized cluster-set training budgets.

All sampling here is a pure function of (inputs, seed).  Waveforms always
travel with their source, so no source ever straddles two splits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .design import DesignSpec
from .records import Dataset, EARTHQUAKE


class StratifyError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    # round() is banker's rounding; half-up keeps counts reproducible
    return int(math.floor(x + 0.5))


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, 2) as (lat, lon) degrees
    labels: np.ndarray  # per input point
    inertia: float
    inertia_history: list[float]
    assignment: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "inertia_history": self.inertia_history,
            "assignment": self.assignment,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterModel":
        centroids = np.asarray(obj["centroids"], dtype=float)
        return cls(k=obj["k"], centroids=centroids, labels=np.empty(0, dtype=int),
                   inertia=obj["inertia"], inertia_history=list(obj["inertia_history"]),
                   assignment={k: int(v) for k, v in obj["assignment"].items()})


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_fit(points, k: int, seed: int = 0, max_iter: int = 300,
               tol: float = 1e-6) -> ClusterModel:
    """Lloyd iteration with uniform-random distinct starting centroids.

    Distances are squared Euclidean in raw (lat, lon) degree space.  Empty
    clusters are repaired by reseeding at the point farthest from its
    current centroid.  Deterministic given the seed.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise StratifyError("need a non-empty 2-D point array")
    distinct = np.unique(pts, axis=0)
    if k > len(distinct):
        raise StratifyError(f"k={k} exceeds {len(distinct)} distinct points")
    if tol <= 0:
        raise StratifyError("tol must be positive")

    rng = np.random.default_rng(seed)
    centroids = distinct[rng.choice(len(distinct), size=k, replace=False)].copy()

    history: list[float] = []
    labels = np.zeros(len(pts), dtype=int)
    for _ in range(max_iter):
        d2 = _sq_dists(pts, centroids)
        labels = d2.argmin(axis=1)

        # repair empty clusters before scoring, so inertia stays monotone
        counts = np.bincount(labels, minlength=k)
        while (counts == 0).any():
            empty = int(np.flatnonzero(counts == 0)[0])
            worst = int(d2[np.arange(len(pts)), labels].argmax())
            centroids[empty] = pts[worst]
            d2 = _sq_dists(pts, centroids)
            labels = d2.argmin(axis=1)
            counts = np.bincount(labels, minlength=k)

        inertia = float(d2[np.arange(len(pts)), labels].sum())
        history.append(inertia)

        new_centroids = np.vstack([pts[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < tol:
            break

    d2 = _sq_dists(pts, centroids)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(pts)), labels].sum())
    history.append(inertia)
    return ClusterModel(k=k, centroids=centroids, labels=labels,
                        inertia=inertia, inertia_history=history)


def assign_cluster(model: ClusterModel, point) -> int:
    """Nearest centroid by squared Euclidean distance; ties -> lowest index."""
    p = np.asarray(point, dtype=float)
    d2 = ((model.centroids - p) ** 2).sum(axis=1)
    return int(d2.argmin())


def cluster_dataset(dataset: Dataset, k: int, seed: int = 0, max_iter: int = 300,
                    tol: float = 1e-6) -> ClusterModel:
    """Fit k-means on source locations, then map every source and noise
    waveform (via its station location) to a cluster."""
    source_ids = sorted(dataset.sources)
    pts = np.array([[dataset.sources[s].latitude, dataset.sources[s].longitude]
                    for s in source_ids])
    model = kmeans_fit(pts, k, seed=seed, max_iter=max_iter, tol=tol)
    model.assignment = {s: int(lbl) for s, lbl in zip(source_ids, model.labels)}
    for wf in dataset.noise_waveforms():
        model.assignment[wf.waveform_id] = assign_cluster(model, wf.station_coords)
    return model


@dataclass(frozen=True)
class SplitConfig:
    n_test_north: int = 4
    n_test_south: int = 4
    noise_ratio: float = 0.114
    validation_fraction: float = 0.2
    training_fraction: float = 0.8
    take_all: bool = False


@dataclass
class SplitPlan:
    test_clusters_north: list[int]
    test_clusters_south: list[int]
    training_clusters: list[int]
    validation_members: set[str]
    test_members: set[str]
    training_pool_members: dict[int, set[str]]
    training_pool_sources: dict[int, list[str]]
    training_pool_noise: dict[int, list[str]]
    validation_sources_per_cluster: int
    min_training_cluster_sources: int
    config: SplitConfig
    seed: int

    def to_json(self) -> dict:
        return {
            "test_clusters_north": self.test_clusters_north,
            "test_clusters_south": self.test_clusters_south,
            "training_clusters": self.training_clusters,
            "validation_members": sorted(self.validation_members),
            "test_members": sorted(self.test_members),
            "training_pool_members": {str(c): sorted(v)
                                      for c, v in self.training_pool_members.items()},
            "training_pool_sources": {str(c): list(v)
                                      for c, v in self.training_pool_sources.items()},
            "training_pool_noise": {str(c): list(v)
                                    for c, v in self.training_pool_noise.items()},
            "validation_sources_per_cluster": self.validation_sources_per_cluster,
            "min_training_cluster_sources": self.min_training_cluster_sources,
            "config": asdict(self.config),
            "seed": self.seed,
        }

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    @classmethod
    def from_json(cls, obj: dict) -> "SplitPlan":
        return cls(
            test_clusters_north=list(obj["test_clusters_north"]),
            test_clusters_south=list(obj["test_clusters_south"]),
            training_clusters=list(obj["training_clusters"]),
            validation_members=set(obj["validation_members"]),
            test_members=set(obj["test_members"]),
            training_pool_members={int(c): set(v)
                                   for c, v in obj["training_pool_members"].items()},
            training_pool_sources={int(c): list(v)
                                   for c, v in obj["training_pool_sources"].items()},
            training_pool_noise={int(c): list(v)
                                 for c, v in obj["training_pool_noise"].items()},
            validation_sources_per_cluster=obj["validation_sources_per_cluster"],
            min_training_cluster_sources=obj["min_training_cluster_sources"],
            config=SplitConfig(**obj["config"]),
            seed=obj["seed"],
        )

    @classmethod
    def load(cls, path: str | Path) -> "SplitPlan":
        return cls.from_json(json.loads(Path(path).read_text()))


def _sample(rng: np.random.Generator, pool: list[str], n: int, what: str,
            take_all: bool) -> list[str]:
    if n > len(pool):
        if not take_all:
            raise StratifyError(f"cannot sample {n} {what} from a pool of {len(pool)}")
        n = len(pool)
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[j] for j in sorted(idx)]


def build_split_plan(dataset: Dataset, model: ClusterModel,
                     config: SplitConfig = SplitConfig(), seed: int = 0) -> SplitPlan:
    """Latitude-ranked test clusters, balanced north/south test sources,
    fixed-per-cluster validation sampling, and per-cluster training pools."""
    if not model.assignment:
        raise StratifyError("model has no id assignment; use cluster_dataset")
    n_test = config.n_test_north + config.n_test_south
    if model.k < n_test + 1:
        raise StratifyError(f"k={model.k} leaves no training clusters")

    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    by_lat = sorted(range(model.k), key=lambda c: -model.centroids[c, 0])
    north = sorted(by_lat[:config.n_test_north])
    south = sorted(by_lat[-config.n_test_south:])
    training = sorted(set(range(model.k)) - set(north) - set(south))

    sources_by_cluster: dict[int, list[str]] = {c: [] for c in range(model.k)}
    for sid in sorted(dataset.sources):
        sources_by_cluster[model.assignment[sid]].append(sid)
    noise_by_cluster: dict[int, list[str]] = {c: [] for c in range(model.k)}
    for wf in sorted(dataset.noise_waveforms(), key=lambda w: w.waveform_id):
        noise_by_cluster[model.assignment[wf.waveform_id]].append(wf.waveform_id)
    wfs_of_source = dataset.waveforms_of_source()

    # --- test split: balance earthquake sources across the two regions
    north_pool = [s for c in north for s in sources_by_cluster[c]]
    south_pool = [s for c in south for s in sources_by_cluster[c]]
    n_take = min(len(north_pool), len(south_pool))
    chosen_north = _sample(rng, north_pool, n_take, "north test sources", False)
    chosen_south = _sample(rng, south_pool, n_take, "south test sources", False)

    test_members: set[str] = set()
    for region_sources, region_clusters in ((chosen_north, north), (chosen_south, south)):
        eq_wfs = [w for s in region_sources for w in wfs_of_source[s]]
        test_members.update(eq_wfs)
        noise_pool = [w for c in region_clusters for w in noise_by_cluster[c]]
        n_noise = _round_half_up(config.noise_ratio * len(eq_wfs))
        test_members.update(_sample(rng, noise_pool, n_noise, "test noise waveforms",
                                    config.take_all))

    # --- validation: same number of sources from every training cluster
    s_min = min(len(sources_by_cluster[c]) for c in training)
    n_val = int(math.floor(config.validation_fraction * s_min))
    validation_members: set[str] = set()
    validation_sources: dict[int, list[str]] = {}
    for c in training:
        picked = _sample(rng, sources_by_cluster[c], n_val,
                         f"validation sources in cluster {c}", False)
        validation_sources[c] = picked
        eq_wfs = [w for s in picked for w in wfs_of_source[s]]
        validation_members.update(eq_wfs)
        n_noise = _round_half_up(config.noise_ratio * len(eq_wfs))
        noise_picked = _sample(rng, noise_by_cluster[c], n_noise,
                               f"validation noise in cluster {c}", config.take_all)
        validation_members.update(noise_picked)
        noise_by_cluster[c] = [w for w in noise_by_cluster[c] if w not in set(noise_picked)]

    # --- training pools: whatever the validation split left behind
    pool_members: dict[int, set[str]] = {}
    pool_sources: dict[int, list[str]] = {}
    pool_noise: dict[int, list[str]] = {}
    for c in training:
        taken = set(validation_sources[c])
        remaining = [s for s in sources_by_cluster[c] if s not in taken]
        pool_sources[c] = remaining
        pool_noise[c] = list(noise_by_cluster[c])
        pool_members[c] = {w for s in remaining for w in wfs_of_source[s]}
        pool_members[c].update(pool_noise[c])

    return SplitPlan(
        test_clusters_north=north, test_clusters_south=south,
        training_clusters=training,
        validation_members=validation_members, test_members=test_members,
        training_pool_members=pool_members, training_pool_sources=pool_sources,
        training_pool_noise=pool_noise,
        validation_sources_per_cluster=n_val,
        min_training_cluster_sources=s_min,
        config=config, seed=seed)


@dataclass
class ClusterSet:
    quantity_index: int
    set_index: int
    cluster_ids: list[int]
    sources: dict[int, list[str]]  # cluster -> sampled source ids
    noise_waveforms: dict[int, list[str]]

    def to_json(self) -> dict:
        return {
            "quantity_index": self.quantity_index,
            "set_index": self.set_index,
            "cluster_ids": self.cluster_ids,
            "sources": {str(c): v for c, v in self.sources.items()},
            "noise_waveforms": {str(c): v for c, v in self.noise_waveforms.items()},
        }


def sample_cluster_sets(plan: SplitPlan, design: DesignSpec,
                        dataset: Dataset, seed: int = 0,
                        sources_per_cluster: int | None = None) -> list[ClusterSet]:
    """Draw the D training cluster sets for every quantity level.

    Clusters are drawn without replacement within a set; each drawn cluster
    contributes a fixed number of sources (all their waveforms) plus a
    proportional noise sample.  Each (a, d) draw uses an independently
    derived seed so sets can be generated in any order.
    """
    if sources_per_cluster is None:
        sources_per_cluster = int(math.floor(plan.config.training_fraction
                                             * plan.min_training_cluster_sources))
    for c in plan.training_clusters:
        if sources_per_cluster > len(plan.training_pool_sources[c]):
            raise StratifyError(
                f"cluster {c} pool has {len(plan.training_pool_sources[c])} sources, "
                f"need {sources_per_cluster}")
    wfs_of_source = dataset.waveforms_of_source()

    sets: list[ClusterSet] = []
    for a, quantity in enumerate(design.quantity_levels):
        if quantity > len(plan.training_clusters):
            raise StratifyError(
                f"quantity level {quantity} exceeds "
                f"{len(plan.training_clusters)} training clusters")
        for d in range(design.n_cluster_sets):
            rng = np.random.default_rng(np.random.SeedSequence([seed, a, d]))
            idx = rng.choice(len(plan.training_clusters), size=quantity, replace=False)
            cluster_ids = [plan.training_clusters[j] for j in sorted(idx)]
            sources: dict[int, list[str]] = {}
            noise: dict[int, list[str]] = {}
            for c in cluster_ids:
                picked = _sample(rng, plan.training_pool_sources[c],
                                 sources_per_cluster, "training sources", False)
                sources[c] = picked
                n_eq = sum(len(wfs_of_source[s]) for s in picked)
                n_noise = _round_half_up(plan.config.noise_ratio * n_eq)
                noise[c] = _sample(rng, plan.training_pool_noise[c], n_noise,
                                   "training noise", plan.config.take_all)
            sets.append(ClusterSet(quantity_index=a, set_index=d,
                                   cluster_ids=cluster_ids, sources=sources,
                                   noise_waveforms=noise))
    return sets
