"""Plain-text ``key=value`` configuration files.

Blank lines and ``#`` comments are ignored. The file named by the
``NIGHTVPR_CONFIG`` environment variable is used when no path is given.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Optional

ENV_VAR = "NIGHTVPR_CONFIG"


def parse_config(text: str, source: str = "<config>") -> Dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def load_config(path: Optional[str] = None) -> Dict[str, str]:
    """Read ``path`` (or ``$NIGHTVPR_CONFIG``); no file means an empty config."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


def dump_config(values) -> str:
    return "".join(f"{k}={v}\n" for k, v in values.items())
