"""Command-line entry: export-metadata and export-windows.

Config is JSON.  Datasets and pickers are loaded through dotted factory
paths ("package.module:factory") so any locally installed adapter can be
used without the bridge importing it at build time:

    {
      "adapter": {"factory": "my_adapters:load_instance", "args": {...}},
      "picker":  {"factory": "my_adapters:load_phasenet", "args": {...}},
      "out_dir": "out",
      "filters": ["counts"],
      "window_s": 30.0,
      "overlap_s": 28.0,
      "trace_names": ["..."]   // optional; defaults to every row
    }
"""

from __future__ import annotations

import argparse
import importlib
import json
import sys
from pathlib import Path

from .adapters import BridgeError
from .export import export_metadata, export_window_outputs


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad_config: {exc}") from None


def _require(config: dict, dotted: str):
    node = config
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"bad_config: missing field {dotted!r}")
        node = node[part]
    return node


def _build(spec: dict):
    module_name, _, attr = str(spec["factory"]).partition(":")
    if not attr:
        raise ConfigError("bad_config: factory must look like 'module:callable'")
    factory = getattr(importlib.import_module(module_name), attr)
    return factory(**spec.get("args", {}))


def cmd_export_metadata(config: dict, out_dir: Path) -> dict:
    adapter = _build(_require(config, "adapter"))
    manifest = export_metadata(adapter, out_dir / "metadata.ndjson",
                               filters=config.get("filters"))
    manifest.save(out_dir / "metadata_manifest.json")
    return {"written": str(out_dir / "metadata.ndjson"),
            "counts": manifest.counts}


def cmd_export_windows(config: dict, out_dir: Path) -> dict:
    adapter = _build(_require(config, "adapter"))
    picker = _build(_require(config, "picker"))
    names = config.get("trace_names")
    if names is None:
        names = sorted(row["trace_name"] for row in adapter.metadata_rows())
    manifest = export_window_outputs(
        picker, adapter, names, out_dir / "window_outputs.ndjson",
        window_s=float(config.get("window_s", 30.0)),
        overlap_s=float(config.get("overlap_s", 28.0)))
    manifest.save(out_dir / "windows_manifest.json")
    return {"written": str(out_dir / "window_outputs.ndjson"),
            "counts": manifest.counts}


_COMMANDS = {"export-metadata": cmd_export_metadata,
             "export-windows": cmd_export_windows}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pickerbench-bridge")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        out_dir = Path(args.out or _require(config, "out_dir"))
        out_dir.mkdir(parents=True, exist_ok=True)
        result = _COMMANDS[args.command](config, out_dir)
    except ConfigError as exc:
        print(json.dumps({"error": "bad_config", "detail": str(exc)}),
              file=sys.stderr)
        return 2
    except (BridgeError, OSError, KeyError, ImportError, AttributeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1
    if not args.quiet:
        print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
