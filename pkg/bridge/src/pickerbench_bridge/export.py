"""Export datasets and picker outputs into the toolkit's file formats.

The bridge emits exactly the formats the core toolkit reads: NDJSON
metadata under schema "picker-bench/1", and NDJSON window outputs with
{waveform_id, window_start_index, probabilities} lines.  It never imports
the toolkit itself; the byte formats are the contract.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapters import BridgeError, DatasetAdapter, Picker, resolve_filters

SCHEMA_ID = "picker-bench/1"

EARTHQUAKE = "earthquake"
NOISE = "noise"

_REQUIRED_COLUMNS = ("trace_name", "trace_category", "station_latitude_deg",
                     "station_longitude_deg", "trace_npts")


@dataclass
class ExportManifest:
    dataset: str
    version: str
    schema: str = SCHEMA_ID
    model_id: str | None = None
    filters: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)  # path -> sha256
    manifest_hash: str = ""

    def add_file(self, path: Path):
        self.files[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def finalize(self):
        joined = "".join(f"{name}:{digest}\n"
                         for name, digest in sorted(self.files.items()))
        self.manifest_hash = hashlib.sha256(joined.encode("ascii")).hexdigest()

    def save(self, path: str | Path):
        self.finalize()
        _atomic_write(Path(path), json.dumps(self.__dict__, indent=2,
                                             sort_keys=True) + "\n")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _source_line(row: dict) -> str:
    rec = {"type": "source",
           "source_id": row["source_id"],
           "latitude": float(row["source_latitude_deg"]),
           "longitude": float(row["source_longitude_deg"])}
    if row.get("source_depth_km") is not None:
        rec["depth_km"] = float(row["source_depth_km"])
    if row.get("source_magnitude") is not None:
        rec["magnitude"] = float(row["source_magnitude"])
    if row.get("source_origin_time") is not None:
        rec["origin_time"] = str(row["source_origin_time"])
    return json.dumps(rec, sort_keys=True)


def _waveform_line(row: dict) -> str:
    kind = row["trace_category"]
    rec = {"type": "waveform",
           "waveform_id": row["trace_name"],
           "kind": kind,
           "station_latitude": float(row["station_latitude_deg"]),
           "station_longitude": float(row["station_longitude_deg"]),
           "n_samples": int(row["trace_npts"]),
           "sampling_rate_hz": float(row.get("trace_sampling_rate_hz", 100.0))}
    if kind == EARTHQUAKE:
        rec["source_id"] = row["source_id"]
        # label sample indices are preserved exactly, never resampled
        rec["p_arrival_index"] = int(row["trace_p_arrival_sample"])
        if row.get("trace_s_arrival_sample") is not None:
            rec["s_arrival_index"] = int(row["trace_s_arrival_sample"])
    return json.dumps(rec, sort_keys=True)


def export_metadata(adapter: DatasetAdapter, out_path: str | Path,
                    filters: list[str] | None = None) -> ExportManifest:
    """Write the dataset's metadata as a core-schema NDJSON file.

    Earthquake rows missing a P-arrival sample cannot satisfy the schema
    and are skipped; the skip count lands in the manifest.  Row order is
    normalized (sources first, each group sorted by id) so reruns against
    the same dataset version are byte-identical.
    """
    out_path = Path(out_path)
    selected = resolve_filters(filters or [])
    sources: dict[str, str] = {}
    waveforms: dict[str, str] = {}
    skipped_missing_p = 0
    n_earthquake = n_noise = 0
    for row in adapter.metadata_rows():
        missing = [c for c in _REQUIRED_COLUMNS if row.get(c) is None]
        if missing:
            raise BridgeError(f"row {row.get('trace_name')!r}: missing "
                              f"required columns {missing}")
        if not all(pred(row) for _, pred in selected):
            continue
        kind = row["trace_category"]
        if kind == EARTHQUAKE:
            if row.get("trace_p_arrival_sample") is None:
                skipped_missing_p += 1
                continue
            if row.get("source_id") is None:
                raise BridgeError(f"earthquake row {row['trace_name']!r} "
                                  "has no source_id")
            sources[row["source_id"]] = _source_line(row)
            n_earthquake += 1
        elif kind == NOISE:
            n_noise += 1
        else:
            raise BridgeError(f"row {row['trace_name']!r}: unknown "
                              f"trace_category {kind!r}")
        wid = row["trace_name"]
        if wid in waveforms:
            raise BridgeError(f"duplicate trace_name {wid!r}")
        waveforms[wid] = _waveform_line(row)

    lines = [json.dumps({"schema": SCHEMA_ID})]
    lines += [sources[s] for s in sorted(sources)]
    lines += [waveforms[w] for w in sorted(waveforms)]
    _atomic_write(out_path, "\n".join(lines) + "\n")

    manifest = ExportManifest(dataset=adapter.name, version=adapter.version,
                              filters=[n for n, _ in selected])
    manifest.counts = {"sources": len(sources),
                       "earthquake_waveforms": n_earthquake,
                       "noise_waveforms": n_noise,
                       "lines_written": len(lines),
                       "skipped_missing_p": skipped_missing_p}
    manifest.add_file(out_path)
    return manifest


def window_offsets(n_samples: int, window_len: int, stride: int) -> range:
    """Start offsets of fully contained windows: 0, stride, 2*stride, ..."""
    if window_len <= 0 or stride <= 0:
        raise BridgeError("window length and stride must be positive")
    if window_len > n_samples:
        return range(0)
    return range(0, n_samples - window_len + 1, stride)


def export_window_outputs(picker: Picker, adapter: DatasetAdapter,
                          trace_names: list[str], out_path: str | Path,
                          window_s: float = 30.0, overlap_s: float = 28.0,
                          manifest: ExportManifest | None = None) -> ExportManifest:
    """Run the picker over sliding windows and write the boundary NDJSON.

    Windows are `window_s` long with `overlap_s` of overlap, i.e. a stride
    of window_s - overlap_s; only fully contained windows are emitted.
    """
    out_path = Path(out_path)
    stride_s = window_s - overlap_s
    if stride_s <= 0:
        raise BridgeError(f"overlap {overlap_s} s must be shorter than the "
                          f"window {window_s} s")
    rows = {row["trace_name"]: row for row in adapter.metadata_rows()}
    lines = []
    n_windows = 0
    for wid in trace_names:
        if wid not in rows:
            raise BridgeError(f"unknown trace_name {wid!r}")
        rate = float(rows[wid].get("trace_sampling_rate_hz", 100.0))
        expected = getattr(picker, "sampling_rate_hz", None)
        if expected is not None and rate != expected:
            raise BridgeError(f"{wid!r}: sampled at {rate} Hz but picker "
                              f"{picker.model_id!r} expects {expected} Hz")
        samples = np.asarray(adapter.get_waveform(wid))
        if samples.ndim != 2 or samples.shape[0] != 3:
            raise BridgeError(f"{wid!r}: expected (3, n) samples, "
                              f"got shape {samples.shape}")
        window_len = int(round(window_s * rate))
        stride = int(round(stride_s * rate))
        for off in window_offsets(samples.shape[1], window_len, stride):
            probs = np.asarray(picker(samples[:, off:off + window_len], rate),
                               dtype=float)
            if probs.shape != (window_len,):
                raise BridgeError(f"{wid!r}: picker returned shape "
                                  f"{probs.shape}, expected ({window_len},)")
            if (probs < 0).any() or (probs > 1).any():
                raise BridgeError(f"{wid!r}: picker probabilities "
                                  "outside [0, 1]")
            lines.append(json.dumps({
                "waveform_id": wid,
                "window_start_index": off,
                "probabilities": [float(x) for x in probs],
            }))
            n_windows += 1
    _atomic_write(out_path, "\n".join(lines) + ("\n" if lines else ""))

    if manifest is None:
        manifest = ExportManifest(dataset=adapter.name, version=adapter.version)
    manifest.model_id = picker.model_id
    manifest.counts.update({"window_lines_written": n_windows,
                            "windowed_waveforms": len(trace_names)})
    manifest.add_file(out_path)
    return manifest
