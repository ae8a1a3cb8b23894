import csv
import importlib.metadata
import json
import math
import os
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..exceptions.config import ConfigError

PACKAGE_NAME = __name__.partition(".")[0]
FLOAT_FORMAT = "{:.17g}"
_FLOAT_MARKER = "__float17__"
_MARKED = re.compile(f'"{_FLOAT_MARKER}([^"]*)"')


def format_float(value: float) -> str:
    """17 significant digits: every double survives a write/read round trip."""
    if not math.isfinite(value):
        return str(value)
    return FLOAT_FORMAT.format(value)


def _mark_floats(data: Any) -> Any:
    if isinstance(data, (bool, np.bool_)):
        return bool(data)
    if isinstance(data, (float, np.floating)):
        value = float(data)
        return f"{_FLOAT_MARKER}{format_float(value)}" if math.isfinite(value) else None
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, np.ndarray):
        return _mark_floats(data.tolist())
    if isinstance(data, dict):
        return {str(key): _mark_floats(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [_mark_floats(item) for item in data]
    return data


def dumps_exact(data: Any) -> str:
    """JSON text with floats at 17 significant digits; non-finite floats become null."""
    text = json.dumps(_mark_floats(data), indent=2, sort_keys=True, ensure_ascii=False)
    return _MARKED.sub(lambda match: match.group(1), text)


def write_json(data: Any, path: Path) -> Path:
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_exact(data))
        f.write("\n")
    return path


def write_csv(rows: Sequence[Dict[str, Any]], header: Sequence[str], path: Path) -> Path:
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(row[key]) if isinstance(row[key], (float, np.floating)) else row[key] for key in header]
            )
    return path


def write_meta(path: Path, command: str, config_hash: str, seed: int) -> Path:
    """``<file>.meta.json`` sidecar; the only place a timestamp is written."""
    meta = {
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "version": package_version(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "data_file": path.name,
    }
    return write_json(meta, path.with_name(f"{path.name}.meta.json"))


def package_version() -> str:
    try:
        return get_version(package_name=get_package_name())
    except RuntimeError:
        return "0+unknown"


def load_json_file(path_file: str) -> Optional[Dict]:
    """
    Loads and parses a JSON file.

    Args:
        path_file: The path to the JSON file (including the extension).

    Returns:
        A dictionary with the JSON data.
    """
    path = Path(path_file)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"The file '{path.name}' was not found", original_error=e)
    except json.JSONDecodeError as e:
        raise ConfigError(f"The file '{path.name}' contains invalid JSON", original_error=e)


def get_package_name() -> str:
    return PACKAGE_NAME


def get_version(*, package_name: str) -> str:
    """Installed distribution version; raises ``RuntimeError`` when not installed."""
    try:
        return importlib.metadata.version(package_name)
    except importlib.metadata.PackageNotFoundError:
        raise RuntimeError(f"{package_name!r} is not installed.") from None
