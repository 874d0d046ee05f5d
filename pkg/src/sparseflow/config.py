"""Layered option resolution for the CLI.

Precedence, highest first: explicit command-line flag, the key=value file
named by the SPARSEFLOW_CONFIG environment variable, fixture metadata (for
commands that operate on a fixture directory), built-in default.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import IoFailureError

ENV_VAR = "SPARSEFLOW_CONFIG"


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read a key=value file; blank lines and #-comments are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailureError(f"cannot read config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IoFailureError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def env_config() -> dict[str, str]:
    path = os.environ.get(ENV_VAR)
    if not path:
        return {}
    return parse_kv_file(path)


class Resolver:
    """Fills in unset options from config layers."""

    def __init__(self, *layers: dict[str, str]):
        # Earlier layers win.
        self.layers = [l for l in layers if l]

    def get(self, flag_value, key: str, default, cast=float):
        if flag_value is not None:
            return flag_value
        for layer in self.layers:
            if key in layer:
                return cast(layer[key])
        return default
