"""Naming of the JSON-header + raw float64 file pairs used for checkpoints and grids."""
from __future__ import annotations

from pathlib import Path

PAIR_SUFFIXES = (".json", ".f64")


def paired_paths(path) -> tuple[Path, Path]:
    """``(header, values)`` paths for a stem or for either member of the pair.

    Suffixes are appended rather than substituted, so stems containing dots
    (``runs/ac1.reference``) keep their full name.
    """
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in PAIR_SUFFIXES else p
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".f64")
