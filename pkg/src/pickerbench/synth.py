"""Seeded synthetic generators used as ground-truth oracles.

Three generators: geo-distributed datasets with known blob membership
(exercises clustering and splitting), probability traces with controllable
error structure (exercises picking and scoring), and metric tables drawn
from the nested-effects model (exercises the statistical fit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignSpec, MetricTable
from .pickeval import ProbabilityTrace
from .records import Dataset, SourceRecord, WaveformRecord, EARTHQUAKE, NOISE


@dataclass
class SynthGeoDataset:
    dataset: Dataset
    blob_centers: np.ndarray  # (n_blobs, 2)
    membership: dict[str, int]  # source id or noise waveform id -> blob index


def gen_geo_dataset(n_clusters_true: int, sources_per_cluster: int,
                    waveforms_per_source: int = 1, spread_deg: float = 0.1,
                    seed: int = 0, centers=None, noise_ratio: float = 0.114,
                    n_samples: int = 6000,
                    sampling_rate_hz: float = 100.0) -> SynthGeoDataset:
    """Gaussian blobs of sources with co-located stations and a matching
    share of noise waveforms per blob."""
    rng = np.random.default_rng(seed)
    if centers is None:
        # blob centers spread over an Italy-sized box, well separated
        lats = np.linspace(36.0, 46.0, n_clusters_true)
        lons = 7.0 + 10.0 * rng.random(n_clusters_true)
        centers = np.column_stack([lats, lons])
        rng.shuffle(centers)
    centers = np.asarray(centers, dtype=float)
    if len(centers) != n_clusters_true:
        raise ValueError("centers length must equal n_clusters_true")

    ds = Dataset()
    membership: dict[str, int] = {}
    for b in range(n_clusters_true):
        n_eq_wfs = 0
        for s in range(sources_per_cluster):
            sid = f"src-{b:02d}-{s:05d}"
            lat, lon = centers[b] + rng.normal(0.0, spread_deg, size=2)
            lat = float(np.clip(lat, -90.0, 90.0))
            lon = float(np.clip(lon, -180.0, 180.0))
            ds.sources[sid] = SourceRecord(sid, lat, lon,
                                           depth_km=float(rng.uniform(1, 30)),
                                           magnitude=float(rng.uniform(1, 5)))
            membership[sid] = b
            for w in range(waveforms_per_source):
                wid = f"wf-{b:02d}-{s:05d}-{w:02d}"
                st_lat, st_lon = centers[b] + rng.normal(0.0, spread_deg, size=2)
                # arrivals early in the trace, like real curated waveforms
                p_idx = int(rng.integers(n_samples // 12, n_samples // 4))
                s_idx = None
                if rng.random() < 0.6:
                    s_idx = p_idx + int(rng.integers(1, max(2, n_samples // 6)))
                ds.waveforms[wid] = WaveformRecord(
                    waveform_id=wid, kind=EARTHQUAKE,
                    station_latitude=float(np.clip(st_lat, -90, 90)),
                    station_longitude=float(np.clip(st_lon, -180, 180)),
                    n_samples=n_samples, sampling_rate_hz=sampling_rate_hz,
                    source_id=sid, p_arrival_index=p_idx, s_arrival_index=s_idx)
                n_eq_wfs += 1
        # headroom over the target ratio so per-region/per-cluster noise
        # demands (rounded from larger totals) can always be met
        n_noise = int(np.ceil(noise_ratio * n_eq_wfs)) + 1
        for j in range(n_noise):
            wid = f"noise-{b:02d}-{j:05d}"
            st_lat, st_lon = centers[b] + rng.normal(0.0, spread_deg, size=2)
            ds.waveforms[wid] = WaveformRecord(
                waveform_id=wid, kind=NOISE,
                station_latitude=float(np.clip(st_lat, -90, 90)),
                station_longitude=float(np.clip(st_lon, -180, 180)),
                n_samples=n_samples, sampling_rate_hz=sampling_rate_hz)
            membership[wid] = b
    ds.validate()
    return SynthGeoDataset(ds, centers, membership)


@dataclass(frozen=True)
class SynthTraceParams:
    bump_sigma_s: float = 0.1
    bump_height: float = 0.9
    background_level: float = 0.05
    pick_error_sd_s: float = 0.0
    miss_rate: float = 0.0
    false_bump_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.bump_height <= 1.0 or not 0.0 <= self.background_level <= 1.0:
            raise ValueError("heights/levels must be in [0, 1]")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must be in [0, 1]")
        if self.bump_sigma_s < 0 or self.pick_error_sd_s < 0 or self.false_bump_rate < 0:
            raise ValueError("widths/sds/rates must be nonnegative")


def _add_bump(values: np.ndarray, center: float, sigma_samples: float, height: float):
    idx = np.arange(len(values))
    values += height * np.exp(-0.5 * ((idx - center) / sigma_samples) ** 2)


def gen_trace(waveform: WaveformRecord, params: SynthTraceParams,
              rng: np.random.Generator | None = None) -> ProbabilityTrace:
    """Background plus Gaussian bumps, clipped into [0, 1].

    Earthquake waveforms get a main bump at the label (jittered, possibly
    omitted); every trace may get Poisson-many spurious bumps.
    """
    if rng is None:
        rng = np.random.default_rng(
            np.random.SeedSequence([params.seed, _stable_id(waveform.waveform_id)]))
    n = waveform.n_samples
    rate = waveform.sampling_rate_hz
    values = np.full(n, float(params.background_level))
    sigma = params.bump_sigma_s * rate
    if waveform.kind == EARTHQUAKE and rng.random() >= params.miss_rate:
        center = waveform.p_arrival_index + rng.normal(0.0, params.pick_error_sd_s) * rate
        _add_bump(values, center, sigma, params.bump_height)
    for _ in range(rng.poisson(params.false_bump_rate)):
        _add_bump(values, rng.uniform(0, n), sigma, params.bump_height)
    np.clip(values, 0.0, 1.0, out=values)
    return ProbabilityTrace(waveform.waveform_id, values, np.ones(n, dtype=int))


def _stable_id(text: str) -> int:
    # hash() is salted per process; fold the utf-8 bytes instead
    h = 2166136261
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 16777619) & 0xFFFFFFFF
    return h


def gen_metrics(design: DesignSpec, grand_mean: float, model_effects,
                quantity_effects, interactions, var_data, var_train,
                seed: int = 0, metric_name: str = "synthetic") -> MetricTable:
    """Forward-simulate the nested-effects model into a balanced table."""
    n_models, n_quantities, n_sets, n_inits = design.shape
    mu = np.asarray(model_effects, dtype=float)
    alpha = np.asarray(quantity_effects, dtype=float)
    theta = np.zeros((n_models, n_quantities)) if interactions is None \
        else np.asarray(interactions, dtype=float)
    sd_data = np.sqrt(np.broadcast_to(np.asarray(var_data, dtype=float),
                                      (n_models, n_quantities)))
    sd_train = np.sqrt(np.broadcast_to(np.asarray(var_train, dtype=float),
                                       (n_models, n_quantities)))
    if mu.shape != (n_models,) or alpha.shape != (n_quantities,) \
            or theta.shape != (n_models, n_quantities):
        raise ValueError("effect shapes do not match the design")
    if not (np.isclose(mu.sum(), 0) and np.isclose(alpha.sum(), 0)
            and np.allclose(theta.sum(axis=0), 0) and np.allclose(theta.sum(axis=1), 0)):
        raise ValueError("effects must satisfy sum-to-zero constraints")

    rng = np.random.default_rng(seed)
    cell_means = grand_mean + mu[:, None] + alpha[None, :] + theta
    eps_data = rng.normal(size=(n_models, n_quantities, n_sets)) * sd_data[..., None]
    eps_train = rng.normal(size=design.shape) * sd_train[..., None, None]
    values = cell_means[..., None, None] + eps_data[..., None] + eps_train
    return MetricTable(metric_name, design, values)
