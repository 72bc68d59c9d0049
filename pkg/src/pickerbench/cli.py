"""Command-line pipeline: chain the toolkit modules into reproducible,
plot-ready artifacts.

Every subcommand reads a JSON config, writes its outputs atomically
(temp file + rename), and exits nonzero with a machine-readable error
record on stderr when something is wrong.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import diagnostics, metrics, pickeval, ranksim, statframe, stratify, synth
from .design import DesignSpec, MetricTable
from .records import (Dataset, EARTHQUAKE, load_metadata, save_metadata)


class ConfigError(ValueError):
    pass


def _atomic_write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_json(path: Path, obj):
    _atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _require(config: dict, *fields: str):
    node = config
    trail = []
    for f in fields:
        trail.append(f)
        if not isinstance(node, dict) or f not in node:
            raise ConfigError(f"missing config field: {'.'.join(trail)}")
        node = node[f]
    return node


def _design_from_config(config: dict) -> DesignSpec:
    d = _require(config, "design")
    return DesignSpec(
        n_models=d.get("n_models", 3),
        quantity_levels=tuple(d.get("quantity_levels", (1, 3, 6, 9, 12))),
        n_cluster_sets=d.get("n_cluster_sets", 12),
        n_inits=d.get("n_inits", 4))


def _out_dir(config: dict, args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.get("out_dir", "out"))


def _seed(config: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" not in config:
        raise ConfigError("missing config field: seed")
    return int(config["seed"])


def _load_traces(path: Path) -> list[pickeval.ProbabilityTrace]:
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                traces.append(pickeval.ProbabilityTrace(
                    obj["waveform_id"], np.asarray(obj["values"], dtype=float),
                    np.asarray(obj["coverage"], dtype=int)))
    return traces


def _save_traces(traces, path: Path):
    lines = []
    for t in traces:
        lines.append(json.dumps({
            "waveform_id": t.waveform_id,
            "values": [float(v) for v in t.values],
            "coverage": [int(c) for c in t.coverage],
        }))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _labeled_traces(traces, ds: Dataset) -> list[metrics.LabeledTrace]:
    items = []
    for t in traces:
        wf = ds.waveforms.get(t.waveform_id)
        if wf is None:
            raise ConfigError(f"trace for unknown waveform {t.waveform_id!r}")
        items.append(metrics.LabeledTrace(t, wf.kind, wf.p_arrival_index,
                                          wf.sampling_rate_hz))
    return items


# --- subcommands -----------------------------------------------------------

def cmd_synth(config, args):
    out = _out_dir(config, args)
    seed = _seed(config, args)
    sc = config.get("synth", {})
    geo = synth.gen_geo_dataset(
        n_clusters_true=sc.get("n_clusters", 20),
        sources_per_cluster=sc.get("sources_per_cluster", 30),
        waveforms_per_source=sc.get("waveforms_per_source", 1),
        spread_deg=sc.get("spread_deg", 0.1),
        noise_ratio=sc.get("noise_ratio", 0.114),
        n_samples=sc.get("n_samples", 6000),
        seed=seed)
    meta_path = out / "metadata.ndjson"
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = meta_path.with_suffix(".tmp")
    save_metadata(geo.dataset, tmp)
    os.replace(tmp, meta_path)
    _atomic_json(out / "synth_truth.json", {
        "blob_centers": geo.blob_centers.tolist(),
        "membership": geo.membership})

    design = _design_from_config(config)
    mp = sc.get("metrics", {})
    n_models, n_quantities = design.n_models, design.n_quantities
    mu = mp.get("model_effects")
    if mu is None:
        mu = np.linspace(-0.02, 0.02, n_models)
        mu -= mu.mean()
    alpha = mp.get("quantity_effects")
    if alpha is None:
        alpha = np.linspace(-0.05, 0.05, n_quantities)
        alpha -= alpha.mean()
    table = synth.gen_metrics(
        design, mp.get("grand_mean", 0.8), mu, alpha, None,
        mp.get("var_data", 4e-4), mp.get("var_train", 1e-4),
        seed=seed + 1, metric_name=mp.get("metric_name", "synthetic"))
    table_path = out / "metric_table.csv"
    tmp = table_path.with_suffix(".tmp")
    table.write_csv(tmp)
    os.replace(tmp, table_path)

    if sc.get("emit_traces", False):
        tp = sc.get("trace", {})
        params = synth.SynthTraceParams(
            bump_sigma_s=tp.get("bump_sigma_s", 0.1),
            bump_height=tp.get("bump_height", 0.9),
            background_level=tp.get("background_level", 0.05),
            pick_error_sd_s=tp.get("pick_error_sd_s", 0.02),
            miss_rate=tp.get("miss_rate", 0.0),
            false_bump_rate=tp.get("false_bump_rate", 0.0),
            seed=seed + 2)
        traces = [synth.gen_trace(wf, params)
                  for wf in sorted(geo.dataset.waveforms.values(),
                                   key=lambda w: w.waveform_id)]
        _save_traces(traces, out / "traces.ndjson")
    return 0


def cmd_cluster(config, args):
    out = _out_dir(config, args)
    seed = _seed(config, args)
    ds = load_metadata(_require(config, "metadata"))
    cc = config.get("clustering", {})
    model = stratify.cluster_dataset(ds, k=_require(config, "clustering", "k"),
                                     seed=seed, max_iter=cc.get("max_iter", 300),
                                     tol=cc.get("tol", 1e-6))
    _atomic_json(out / "cluster.json", model.to_json())
    return 0


def cmd_split(config, args):
    out = _out_dir(config, args)
    seed = _seed(config, args)
    ds = load_metadata(_require(config, "metadata"))
    model = stratify.ClusterModel.from_json(
        json.loads((out / "cluster.json").read_text()))
    sc = config.get("split", {})
    plan = stratify.build_split_plan(ds, model, stratify.SplitConfig(
        n_test_north=sc.get("n_test_north", 4),
        n_test_south=sc.get("n_test_south", 4),
        noise_ratio=sc.get("noise_ratio", 0.114),
        validation_fraction=sc.get("validation_fraction", 0.2),
        training_fraction=sc.get("training_fraction", 0.8),
        take_all=sc.get("take_all", False)), seed=seed)
    _atomic_json(out / "split.json", plan.to_json())
    return 0


def cmd_sample_sets(config, args):
    out = _out_dir(config, args)
    seed = _seed(config, args)
    ds = load_metadata(_require(config, "metadata"))
    plan = stratify.SplitPlan.load(out / "split.json")
    design = _design_from_config(config)
    sets = stratify.sample_cluster_sets(plan, design, ds, seed=seed)
    _atomic_json(out / "cluster_sets.json", [s.to_json() for s in sets])
    return 0


def cmd_aggregate(config, args):
    out = _out_dir(config, args)
    ds = load_metadata(_require(config, "metadata"))
    by_wf = pickeval.load_window_outputs(_require(config, "window_outputs"))
    traces = []
    for wid in sorted(by_wf):
        wf = ds.waveforms.get(wid)
        if wf is None:
            raise ConfigError(f"window outputs reference unknown waveform {wid!r}")
        traces.append(pickeval.aggregate_windows(by_wf[wid], wf.n_samples))
    _save_traces(traces, out / "traces.ndjson")
    return 0


def cmd_pick(config, args):
    out = _out_dir(config, args)
    threshold = _require(config, "threshold")
    traces = _load_traces(out / "traces.ndjson")
    lines = []
    for t in traces:
        for p in pickeval.extract_picks(t, threshold):
            lines.append(json.dumps({
                "waveform_id": p.waveform_id, "sample_index": p.sample_index,
                "probability": p.probability}))
    _atomic_write_text(out / "picks.ndjson", "\n".join(lines) + "\n")
    return 0


def cmd_score(config, args):
    out = _out_dir(config, args)
    ds = load_metadata(_require(config, "metadata"))
    threshold = _require(config, "threshold")
    items = _labeled_traces(_load_traces(out / "traces.ndjson"), ds)
    agg = metrics.score_traces(items, threshold)
    grid = config.get("rmsr_grid")
    curve = metrics.cumulative_rmsr(
        agg.residuals, np.asarray(grid) if grid else metrics.DEFAULT_RMSR_GRID)
    _atomic_json(out / "scores.json", {
        "threshold": threshold,
        "counts": {"TP": agg.tp, "FP": agg.fp, "FN": agg.fn,
                   "TN_noise": agg.tn_noise, "n_noise": agg.n_noise},
        "recall": metrics.recall(agg),
        "f1": metrics.f1(agg),
        "noise_percent_correct": metrics.noise_percent_correct(agg),
    })
    rows = ["cutoff,value,count"]
    for cutoff, value, count in zip(curve.grid, curve.values, curve.counts):
        rows.append(f"{cutoff},{'' if np.isnan(value) else repr(float(value))},{count}")
    _atomic_write_text(out / "cumulative_rmsr.csv", "\n".join(rows) + "\n")
    return 0


def cmd_threshold(config, args):
    out = _out_dir(config, args)
    ds = load_metadata(_require(config, "metadata"))
    items = _labeled_traces(_load_traces(out / "traces.ndjson"), ds)
    grid = config.get("threshold_grid")
    t = metrics.select_threshold(
        items, np.asarray(grid) if grid else metrics.DEFAULT_THRESHOLD_GRID)
    _atomic_json(out / "threshold.json", {"threshold": t})
    return 0


def cmd_fit(config, args):
    out = _out_dir(config, args)
    design = _design_from_config(config)
    table = MetricTable.read_csv(
        config.get("metric_table", out / "metric_table.csv"), design)
    result = statframe.fit(table, ci_level=config.get("ci_level", 0.90),
                           use_t=config.get("ci_use_t", True))
    _atomic_json(out / "fit.json", result.to_json())

    rows = ["m,a,quantity,mean,ci_low,ci_high,var_train,var_train_lo,var_train_hi,"
            "var_data,var_data_lo,var_data_hi,var_data_negative"]
    for m in range(design.n_models):
        for a in range(design.n_quantities):
            c = result.cells[m][a]
            rows.append(",".join(map(str, [
                m, a, design.quantity_levels[a], c.mean, c.ci_low, c.ci_high,
                c.var_train.estimate, c.var_train.ci_low, c.var_train.ci_high,
                c.var_data.estimate, c.var_data.ci_low, c.var_data.ci_high,
                c.var_data.negative])))
    _atomic_write_text(out / "fit_cells.csv", "\n".join(rows) + "\n")

    qq_rows = ["kind,theoretical,residual"]
    for kind, res in (("train", result.residuals_train.ravel()),
                      ("data", result.residuals_data.ravel())):
        for tq, r in statframe.qq_data(res):
            qq_rows.append(f"{kind},{tq},{r}")
    _atomic_write_text(out / "qq.csv", "\n".join(qq_rows) + "\n")
    return 0


def cmd_rank(config, args):
    out = _out_dir(config, args)
    seed = _seed(config, args)
    design = _design_from_config(config)
    table = MetricTable.read_csv(
        config.get("metric_table", out / "metric_table.csv"), design)
    direction = config.get("rank_direction", ranksim.HIGHER_IS_BETTER)
    results = {}
    rows = ["quantity,model,rank,probability"]
    for a, quantity in enumerate(design.quantity_levels):
        scores = [table.values[:, a, d, :] for d in range(design.n_cluster_sets)]
        rm = ranksim.rank_probabilities(scores, direction=direction,
                                        metric_name=table.metric_name, seed=seed)
        results[str(quantity)] = rm.to_json()
        for m in range(design.n_models):
            for r in range(design.n_models):
                rows.append(f"{quantity},{m},{r},{rm.probs[m, r]}")
    _atomic_json(out / "rank.json", results)
    _atomic_write_text(out / "rank.csv", "\n".join(rows) + "\n")
    return 0


def cmd_diagnose(config, args):
    out = _out_dir(config, args)
    ds = load_metadata(_require(config, "metadata"))
    model = stratify.ClusterModel.from_json(
        json.loads((out / "cluster.json").read_text()))
    features = {
        "magnitude": {s.source_id: s.magnitude for s in ds.sources.values()
                      if s.magnitude is not None},
        "depth_km": {s.source_id: s.depth_km for s in ds.sources.values()
                     if s.depth_km is not None},
    }
    rows = ["feature,group,grid,density"]
    for name, by_source in features.items():
        groups: dict[str, list[float]] = {}
        for sid, value in by_source.items():
            groups.setdefault(str(model.assignment[sid]), []).append(value)
        groups = {g: v for g, v in groups.items() if len(v) >= 2}
        if not groups:
            continue
        for g, curve in diagnostics.feature_density(groups, feature_name=name).items():
            for x, dens in zip(curve.grid, curve.density):
                rows.append(f"{name},{g},{x},{dens}")
    _atomic_write_text(out / "feature_densities.csv", "\n".join(rows) + "\n")

    sp = diagnostics.sp_intervals(ds)
    _atomic_json(out / "sp_intervals.json", {
        "intervals_s": sp.intervals_s,
        "n_earthquake": sp.n_earthquake,
        "fraction_with_s": sp.fraction_with_s})
    return 0


def cmd_report(config, args):
    out = _out_dir(config, args)
    report = {}
    for name in ("fit", "rank", "scores", "threshold", "sp_intervals"):
        path = out / f"{name}.json"
        if path.exists():
            report[name] = json.loads(path.read_text())
    if not report:
        raise ConfigError(f"no upstream outputs found in {out}")
    design = _design_from_config(config)
    if "fit" in report:
        rows = ["model,quantity,mean,ci_low,ci_high"]
        cells = report["fit"]["cells"]
        for m, row in enumerate(cells):
            for a, c in enumerate(row):
                rows.append(f"{m},{design.quantity_levels[a]},"
                            f"{c['mean']},{c['ci_low']},{c['ci_high']}")
        _atomic_write_text(out / "learning_curves.csv", "\n".join(rows) + "\n")
    _atomic_json(out / "report.json", report)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "cluster": cmd_cluster,
    "split": cmd_split,
    "sample-sets": cmd_sample_sets,
    "aggregate": cmd_aggregate,
    "pick": cmd_pick,
    "score": cmd_score,
    "threshold": cmd_threshold,
    "fit": cmd_fit,
    "rank": cmd_rank,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pickerbench",
        description="Seismic picker benchmarking pipeline")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "bad_config", "detail": str(exc)}), file=sys.stderr)
        return 2
    try:
        code = _COMMANDS[args.subcommand](config, args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"{args.subcommand}: ok")
    return code


if __name__ == "__main__":
    sys.exit(main())
