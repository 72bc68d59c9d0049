"""Bridge from seisbench-style datasets and pickers to pickerbench files."""

from .adapters import FILTERS, BridgeError, DatasetAdapter, Picker
from .export import (ExportManifest, export_metadata, export_window_outputs,
                     window_offsets)

__all__ = [
    "BridgeError", "DatasetAdapter", "ExportManifest", "FILTERS", "Picker",
    "export_metadata", "export_window_outputs", "window_offsets",
]
