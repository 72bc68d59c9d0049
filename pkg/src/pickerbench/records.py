"""Domain records, dataset container, and bit-exact file I/O.

Metadata lives in newline-delimited JSON with a schema header line; raw
3-component traces live in a small binary format (see `read_trace`).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

SCHEMA_ID = "picker-bench/1"

EARTHQUAKE = "earthquake"
NOISE = "noise"

TRACE_MAGIC = b"PBT1"
N_COMPONENTS = 3  # component order: Z, N, E


class MetadataError(ValueError):
    """Raised for malformed or inconsistent metadata files."""


class TraceFormatError(ValueError):
    """Raised for malformed binary trace files."""


@dataclass(frozen=True)
class SourceRecord:
    source_id: str
    latitude: float
    longitude: float
    depth_km: float | None = None
    magnitude: float | None = None
    origin_time: str | None = None

    def __post_init__(self):
        if not self.source_id:
            raise MetadataError("source_id must be non-empty")
        if not -90.0 <= self.latitude <= 90.0:
            raise MetadataError(
                f"source {self.source_id!r}: latitude {self.latitude} out of [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise MetadataError(
                f"source {self.source_id!r}: longitude {self.longitude} out of [-180, 180]")
        if self.depth_km is not None and self.depth_km < 0:
            raise MetadataError(f"source {self.source_id!r}: negative depth_km")


@dataclass(frozen=True)
class WaveformRecord:
    waveform_id: str
    kind: str
    station_latitude: float
    station_longitude: float
    n_samples: int
    sampling_rate_hz: float = 100.0
    source_id: str | None = None
    p_arrival_index: int | None = None
    s_arrival_index: int | None = None
    trace_ref: str | None = None

    def __post_init__(self):
        wid = self.waveform_id
        if not wid:
            raise MetadataError("waveform_id must be non-empty")
        if self.kind not in (EARTHQUAKE, NOISE):
            raise MetadataError(f"waveform {wid!r}: unknown kind {self.kind!r}")
        if self.n_samples <= 0:
            raise MetadataError(f"waveform {wid!r}: n_samples must be positive")
        if self.sampling_rate_hz <= 0:
            raise MetadataError(f"waveform {wid!r}: sampling_rate_hz must be positive")
        if not -90.0 <= self.station_latitude <= 90.0:
            raise MetadataError(f"waveform {wid!r}: station_latitude out of range")
        if not -180.0 <= self.station_longitude <= 180.0:
            raise MetadataError(f"waveform {wid!r}: station_longitude out of range")
        if self.kind == EARTHQUAKE:
            if self.source_id is None:
                raise MetadataError(f"earthquake waveform {wid!r} has no source_id")
            if self.p_arrival_index is None:
                raise MetadataError(f"earthquake waveform {wid!r} has no p_arrival_index")
            if not 0 <= self.p_arrival_index < self.n_samples:
                raise MetadataError(
                    f"waveform {wid!r}: p_arrival_index {self.p_arrival_index} "
                    f"outside [0, {self.n_samples})")
            if self.s_arrival_index is not None:
                if self.s_arrival_index <= self.p_arrival_index:
                    raise MetadataError(
                        f"waveform {wid!r}: s_arrival_index must exceed p_arrival_index")
        else:
            if self.source_id is not None:
                raise MetadataError(f"noise waveform {wid!r} must not carry source_id")
            if self.p_arrival_index is not None or self.s_arrival_index is not None:
                raise MetadataError(f"noise waveform {wid!r} must not carry arrival indices")

    @property
    def station_coords(self) -> tuple[float, float]:
        return (self.station_latitude, self.station_longitude)


@dataclass
class Dataset:
    """Immutable-by-convention container with referential integrity."""

    sources: dict[str, SourceRecord] = field(default_factory=dict)
    waveforms: dict[str, WaveformRecord] = field(default_factory=dict)

    def validate(self):
        for wf in self.waveforms.values():
            if wf.kind == EARTHQUAKE and wf.source_id not in self.sources:
                raise MetadataError(
                    f"waveform {wf.waveform_id!r} references missing source "
                    f"{wf.source_id!r}")

    def earthquake_waveforms(self) -> list[WaveformRecord]:
        return [w for w in self.waveforms.values() if w.kind == EARTHQUAKE]

    def noise_waveforms(self) -> list[WaveformRecord]:
        return [w for w in self.waveforms.values() if w.kind == NOISE]

    def waveforms_of_source(self) -> dict[str, list[str]]:
        by_source: dict[str, list[str]] = {s: [] for s in self.sources}
        for wf in self.waveforms.values():
            if wf.kind == EARTHQUAKE:
                by_source[wf.source_id].append(wf.waveform_id)
        return by_source


def _record_to_json(kind: str, rec) -> str:
    d = {"type": kind}
    d.update({k: v for k, v in asdict(rec).items() if v is not None})
    return json.dumps(d, sort_keys=True)


_SOURCE_FIELDS = {"source_id", "latitude", "longitude", "depth_km", "magnitude",
                  "origin_time"}
_WAVEFORM_FIELDS = {"waveform_id", "kind", "station_latitude", "station_longitude",
                    "n_samples", "sampling_rate_hz", "source_id", "p_arrival_index",
                    "s_arrival_index", "trace_ref"}


def load_metadata(path: str | Path) -> Dataset:
    """Read an NDJSON metadata file into a validated `Dataset`.

    The first line must be the schema header; every later line is a source
    or waveform record discriminated by its "type" field.  Errors report
    the 1-based line number.
    """
    path = Path(path)
    ds = Dataset()
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return ds
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MetadataError(f"{path}:1: malformed header: {exc}") from None
    if header.get("schema") != SCHEMA_ID:
        raise MetadataError(f"{path}:1: expected schema {SCHEMA_ID!r}, "
                            f"got {header.get('schema')!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MetadataError(f"{path}:{lineno}: malformed record: {exc}") from None
        rtype = obj.pop("type", None)
        try:
            if rtype == "source":
                unknown = set(obj) - _SOURCE_FIELDS
                if unknown:
                    raise MetadataError(f"unknown source fields {sorted(unknown)}")
                rec = SourceRecord(**obj)
                if rec.source_id in ds.sources:
                    raise MetadataError(f"duplicate source_id {rec.source_id!r}")
                ds.sources[rec.source_id] = rec
            elif rtype == "waveform":
                unknown = set(obj) - _WAVEFORM_FIELDS
                if unknown:
                    raise MetadataError(f"unknown waveform fields {sorted(unknown)}")
                rec = WaveformRecord(**obj)
                if rec.waveform_id in ds.waveforms:
                    raise MetadataError(f"duplicate waveform_id {rec.waveform_id!r}")
                ds.waveforms[rec.waveform_id] = rec
            else:
                raise MetadataError(f"unknown record type {rtype!r}")
        except MetadataError as exc:
            raise MetadataError(f"{path}:{lineno}: {exc}") from None
    ds.validate()
    return ds


def save_metadata(ds: Dataset, path: str | Path):
    path = Path(path)
    lines = [json.dumps({"schema": SCHEMA_ID})]
    lines += [_record_to_json("source", s) for s in ds.sources.values()]
    lines += [_record_to_json("waveform", w) for w in ds.waveforms.values()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path: str | Path) -> np.ndarray:
    """Decode a binary trace file to a (3, n_samples) float32 array.

    Layout: b"PBT1", u32 little-endian n_samples, then 3*n_samples
    little-endian float32 in component order Z, N, E.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != TRACE_MAGIC:
        raise TraceFormatError(f"{path}: bad magic bytes {raw[:4]!r}")
    if len(raw) < 8:
        raise TraceFormatError(f"{path}: truncated header")
    (n,) = struct.unpack("<I", raw[4:8])
    expected = 8 + 4 * N_COMPONENTS * n
    if len(raw) != expected:
        raise TraceFormatError(
            f"{path}: payload length {len(raw) - 8} bytes does not match "
            f"header n_samples={n} (expected {expected - 8})")
    data = np.frombuffer(raw, dtype="<f4", offset=8)
    return data.reshape(N_COMPONENTS, n).copy()


def write_trace(samples: np.ndarray, path: str | Path):
    samples = np.asarray(samples, dtype="<f4")
    if samples.ndim != 2 or samples.shape[0] != N_COMPONENTS:
        raise TraceFormatError(f"expected shape (3, n), got {samples.shape}")
    n = samples.shape[1]
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<I", n))
        fh.write(samples.tobytes(order="C"))
