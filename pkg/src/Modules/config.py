"""
Configuration layer for the sandpile toolkit

Configuração em três camadas: defaults JSON em src/data, arquivo opcional
no formato `key = value`, e flags da linha de comando (maior precedência).
"""

import json
import logging
import os
from typing import Any, Dict, Mapping, Optional

from src.Modules.errors import InputError

logger = logging.getLogger(__name__)

DEFAULTS_FILE = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'data', 'sandlab_defaults.json')
THREADS_ENV = "SANDLAB_THREADS"


def normalize_key(key: str) -> str:
    """Flag names may be written with dashes or underscores."""
    return key.strip().lstrip('-').replace('-', '_')


def load_defaults(command: str, defaults_file: str = DEFAULTS_FILE) -> Dict[str, Any]:
    """Load the `common` block merged with the block for one subcommand."""
    try:
        with open(defaults_file, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        logger.warning("Defaults file %s not found, using empty defaults", defaults_file)
        return {}
    merged = dict(data.get('common', {}))
    merged.update(data.get(command, {}))
    return {normalize_key(k): v for k, v in merged.items()}


def _coerce(text: str) -> Any:
    lowered = text.lower()
    if lowered in ('true', 'yes', 'on'):
        return True
    if lowered in ('false', 'no', 'off'):
        return False
    if lowered in ('none', 'null', ''):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def load_config_file(path: str) -> Dict[str, Any]:
    """Parse a flat UTF-8 `key = value` file; `#` starts a comment."""
    values: Dict[str, Any] = {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.readlines()
    except OSError as e:
        raise InputError(f"cannot read config file {path}: {e}") from e

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split('=', 1)
        key = normalize_key(key)
        if not key:
            raise InputError(f"{path}:{lineno}: empty key")
        values[key] = _coerce(value.strip())
    logger.debug("Loaded %d keys from %s", len(values), path)
    return values


def resolve_settings(command: str, cli_values: Mapping[str, Any],
                     config_path: Optional[str] = None,
                     defaults_file: str = DEFAULTS_FILE) -> Dict[str, Any]:
    """Merge defaults < config file < explicit CLI flags (None means unset)."""
    settings = load_defaults(command, defaults_file)
    if config_path:
        settings.update(load_config_file(config_path))
    for key, value in cli_values.items():
        if value is not None:
            settings[normalize_key(key)] = value
    return settings


def worker_count(requested: Optional[int] = None) -> int:
    """Number of worker processes, capped by SANDLAB_THREADS."""
    cap_text = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if cap_text:
        try:
            cap = max(1, int(cap_text))
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {cap_text!r}")
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))
