"""Synthetic generators: determinism, distributional checks, and the
cross-module oracle loop back through the fit."""

import numpy as np
import pytest

from pickerbench import pickeval, statframe, synth
from pickerbench.design import DesignSpec
from pickerbench.records import EARTHQUAKE, NOISE, WaveformRecord, save_metadata
from pickerbench.stratify import kmeans_fit
from pickerbench.synth import (SynthTraceParams, gen_geo_dataset, gen_metrics,
                               gen_trace)


class TestGeoDataset:
    def test_two_blob_kmeans_recovery(self):
        geo = gen_geo_dataset(2, 100, spread_deg=0.01, seed=0,
                              centers=[[40.0, 10.0], [44.0, 14.0]])
        sids = sorted(geo.dataset.sources)
        pts = np.array([[geo.dataset.sources[s].latitude,
                         geo.dataset.sources[s].longitude] for s in sids])
        model = kmeans_fit(pts, k=2, seed=1)
        truth = np.array([geo.membership[s] for s in sids])
        labels = model.labels
        # same partition up to label swap
        agreement = (labels == truth).mean()
        assert agreement in (0.0, 1.0)

    def test_single_blob(self):
        geo = gen_geo_dataset(1, 50, spread_deg=0.05, seed=1)
        pts = np.array([[s.latitude, s.longitude]
                        for s in geo.dataset.sources.values()])
        model = kmeans_fit(pts, k=1, seed=0)
        assert np.allclose(model.centroids[0], pts.mean(axis=0))

    def test_same_seed_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        save_metadata(gen_geo_dataset(3, 10, seed=7).dataset, p1)
        save_metadata(gen_geo_dataset(3, 10, seed=7).dataset, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_dataset_is_valid(self):
        geo = gen_geo_dataset(5, 20, waveforms_per_source=3, seed=2)
        geo.dataset.validate()
        assert len(geo.dataset.sources) == 100
        assert len(geo.dataset.earthquake_waveforms()) == 300
        assert len(geo.dataset.noise_waveforms()) > 0


def eq_waveform(p_index=500, n=2000):
    return WaveformRecord(waveform_id="wf", kind=EARTHQUAKE, station_latitude=0,
                          station_longitude=0, n_samples=n, source_id="s",
                          p_arrival_index=p_index)


class TestGenTrace:
    def test_noise_free_single_pick_at_label(self):
        params = SynthTraceParams(bump_height=0.9, background_level=0.05)
        trace = gen_trace(eq_waveform(), params)
        picks = pickeval.extract_picks(trace, 0.5)
        assert len(picks) == 1
        counts = pickeval.classify_picks(picks, 500, 100.0)
        assert counts.tp == 1 and counts.fp == 0
        assert counts.residuals == [pytest.approx(0.0)]

    def test_gaussian_bump_shape(self):
        params = SynthTraceParams(bump_sigma_s=0.1, bump_height=0.9,
                                  background_level=0.0)
        trace = gen_trace(eq_waveform(), params)
        # +-0.1 s (10 samples at 100 Hz) from the center: height * exp(-1/2)
        expected = 0.9 * np.exp(-0.5)
        assert trace.values[510] == pytest.approx(expected, rel=1e-6)
        assert trace.values[490] == pytest.approx(expected, rel=1e-6)
        assert trace.values[500] == pytest.approx(0.9, rel=1e-6)

    def test_values_in_unit_interval(self):
        params = SynthTraceParams(bump_height=1.0, background_level=0.3,
                                  false_bump_rate=5.0, seed=3)
        for j in range(20):
            wf = WaveformRecord(waveform_id=f"wf{j}", kind=EARTHQUAKE,
                                station_latitude=0, station_longitude=0,
                                n_samples=1000, source_id="s", p_arrival_index=400)
            trace = gen_trace(wf, params)
            assert (trace.values >= 0).all() and (trace.values <= 1).all()

    def test_miss_rate_binomial(self):
        miss = 0.2
        n = 4000
        params = SynthTraceParams(miss_rate=miss)
        rng = np.random.default_rng(4)
        missed = 0
        for _ in range(n):
            trace = gen_trace(eq_waveform(), params, rng=rng)
            picks = pickeval.extract_picks(trace, 0.5)
            counts = pickeval.classify_picks(picks, 500, 100.0)
            missed += counts.fn
        se = np.sqrt(miss * (1 - miss) / n)
        assert abs(missed / n - miss) <= 3 * se

    def test_noise_waveform_gets_background_only(self):
        wf = WaveformRecord(waveform_id="n", kind=NOISE, station_latitude=0,
                            station_longitude=0, n_samples=500)
        trace = gen_trace(wf, SynthTraceParams(background_level=0.05))
        assert np.allclose(trace.values, 0.05)

    def test_deterministic_given_seed(self):
        params = SynthTraceParams(pick_error_sd_s=0.05, false_bump_rate=1.0, seed=9)
        t1 = gen_trace(eq_waveform(), params)
        t2 = gen_trace(eq_waveform(), params)
        assert np.array_equal(t1.values, t2.values)


class TestGenMetrics:
    DESIGN = DesignSpec(n_models=3, quantity_levels=(1, 3, 6, 9, 12),
                        n_cluster_sets=12, n_inits=4)

    def effects(self):
        mu = np.array([0.02, -0.02, 0.0])
        alpha = np.linspace(-0.05, 0.05, 5)
        return 0.8, mu, alpha

    def test_zero_variance_exact_cell_means(self):
        gamma, mu, alpha = self.effects()
        table = gen_metrics(self.DESIGN, gamma, mu, alpha, None, 0.0, 0.0, seed=0)
        expected = gamma + mu[:, None] + alpha[None, :]
        assert np.allclose(table.values, expected[..., None, None])

    def test_moments_match(self):
        gamma, mu, alpha = self.effects()
        var_data, var_train = 4e-4, 1e-4
        cells = []
        for rep in range(600):
            table = gen_metrics(self.DESIGN, gamma, mu, alpha, None, var_data,
                                var_train, seed=rep)
            cells.append(table.values[0, 0])
        cells = np.array(cells)  # (reps, D, I)
        assert cells.mean() == pytest.approx(gamma + mu[0] + alpha[0], abs=3e-4)
        total_var = cells.reshape(len(cells), -1).var(axis=1, ddof=1).mean()
        assert total_var == pytest.approx(var_data * (48 - 4) / 47 + var_train,
                                          rel=0.05)

    def test_same_seed_identical(self):
        gamma, mu, alpha = self.effects()
        t1 = gen_metrics(self.DESIGN, gamma, mu, alpha, None, 4e-4, 1e-4, seed=5)
        t2 = gen_metrics(self.DESIGN, gamma, mu, alpha, None, 4e-4, 1e-4, seed=5)
        assert np.array_equal(t1.values, t2.values)

    def test_sum_to_zero_enforced(self):
        with pytest.raises(ValueError):
            gen_metrics(self.DESIGN, 0.8, np.array([0.1, 0.1, 0.1]),
                        np.zeros(5), None, 0.0, 0.0)

    def test_fit_recovers_parameters(self):
        # the central cross-module oracle: generate, fit, compare
        gamma, mu, alpha = self.effects()
        sums = {"mu": np.zeros(3), "alpha": np.zeros(5)}
        n_reps = 200
        for rep in range(n_reps):
            table = gen_metrics(self.DESIGN, gamma, mu, alpha, None, 4e-4, 1e-4,
                                seed=1000 + rep)
            r = statframe.fit(table)
            sums["mu"] += r.model_effects
            sums["alpha"] += r.quantity_effects
        assert np.allclose(sums["mu"] / n_reps, mu, atol=5e-4)
        assert np.allclose(sums["alpha"] / n_reps, alpha, atol=5e-4)
