"""Adapter protocols for datasets and pickers.

The bridge talks to the outside world through two small duck-typed
interfaces so that any seisbench-style dataset or pretrained picker can be
plugged in without the bridge depending on those packages directly.
"""

from __future__ import annotations

from typing import Iterable, Protocol, runtime_checkable

import numpy as np


class BridgeError(RuntimeError):
    """Raised for adapter/contract violations during an export."""


@runtime_checkable
class DatasetAdapter(Protocol):
    """A local seismic benchmark dataset.

    `metadata_rows` yields one dict per waveform using seisbench-style
    column names:

      trace_name            unique waveform id (required)
      trace_category        "earthquake" or "noise" (required)
      station_latitude_deg  float (required)
      station_longitude_deg float (required)
      trace_npts            int (required)
      trace_sampling_rate_hz float (default 100.0)
      trace_p_arrival_sample int, earthquake rows
      trace_s_arrival_sample int, optional
      source_id             str, earthquake rows
      source_latitude_deg   float, earthquake rows
      source_longitude_deg  float, earthquake rows
      source_depth_km       float, optional
      source_magnitude      float, optional
      source_origin_time    str, optional
      trace_units           str, optional (e.g. "counts", "velocity")
      deconvolved           bool, optional
    """

    name: str
    version: str

    def metadata_rows(self) -> Iterable[dict]: ...

    def get_waveform(self, trace_name: str) -> np.ndarray:
        """Return the 3-component samples, shape (3, n), order Z, N, E."""
        ...


@runtime_checkable
class Picker(Protocol):
    """A pretrained phase picker applied to fixed-length windows.

    Calling the picker with a (3, window_len) sample block and the sampling
    rate returns a probability vector of length window_len with values in
    [0, 1].  Pickers trained at a fixed rate may expose `sampling_rate_hz`;
    the bridge refuses waveforms recorded at any other rate.
    """

    model_id: str

    def __call__(self, samples: np.ndarray, sampling_rate_hz: float) -> np.ndarray: ...


# named row filters for dataset variants (e.g. which unit convention a
# record was distributed in); selected by name in configs and manifests
FILTERS = {
    "counts": lambda row: row.get("trace_units") == "counts",
    "deconvolved-velocity": lambda row: (row.get("trace_units") == "velocity"
                                         and bool(row.get("deconvolved"))),
    "earthquake-only": lambda row: row.get("trace_category") == "earthquake",
    "noise-only": lambda row: row.get("trace_category") == "noise",
}


def resolve_filters(names: Iterable[str]):
    selected = []
    for name in names:
        if name not in FILTERS:
            raise BridgeError(f"unknown filter {name!r} "
                              f"(known: {sorted(FILTERS)})")
        selected.append((name, FILTERS[name]))
    return selected
