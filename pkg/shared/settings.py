from __future__ import annotations

import os
from pathlib import Path
from typing import Dict


# shared/ sits directly under the project root
PROJECT_ROOT: Path = Path(__file__).resolve().parents[1]

DEFAULT_CACHE_DIR: Path = PROJECT_ROOT / "var" / "cache"


def get_cache_dir(override: str | os.PathLike | None = None) -> Path:
    """Cache directory for solved fields and charge PDFs.

    Precedence: explicit override, BURST_SIM_CACHE_DIR, then var/cache under the project root.
    """
    if override:
        path = Path(override)
    else:
        path = Path(os.getenv("BURST_SIM_CACHE_DIR") or DEFAULT_CACHE_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_run_paths(out_dir: str | os.PathLike) -> Dict[str, Path]:
    """Return per-run directories and ensure they exist.

    Structure under <out_dir>/:
      - logs/
      - results/
      - plots/
    """
    base = Path(out_dir)
    paths: Dict[str, Path] = {
        "base": base,
        "logs": base / "logs",
        "results": base / "results",
        "plots": base / "plots",
    }
    for p in paths.values():
        p.mkdir(parents=True, exist_ok=True)
    return paths
