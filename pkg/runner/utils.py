"""Utility functions for run bookkeeping: hashing, seeding, JSON IO."""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np


def canonical_json(d: dict) -> str:
    """Convert dictionary to canonical JSON string for hashing.

    Args:
        d: Dictionary to convert

    Returns:
        Canonical JSON string with sorted keys, compact format, UTF-8
    """
    return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def compute_config_fingerprint(config_snapshot: Dict[str, Any]) -> str:
    """Compute a stable fingerprint for a configuration snapshot."""
    canonical = canonical_json(config_snapshot)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_sha256(path: Union[str, Path]) -> str:
    """SHA256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def derive_rng(seed: int, stream: int, *indices: int) -> np.random.Generator:
    """Child generator for one (stream, indices) slot of a base seed.

    All randomness in a run flows from one seed:
    SeedSequence([seed, stream, *indices]) with fixed stream ids from config.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), *[int(i) for i in indices]]))


def write_json_file(data: Dict[str, Any], path: Union[str, Path]) -> Path:
    """Write a JSON file with consistent formatting."""
    json_path = Path(path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
        f.write("\n")
    return json_path


def read_json_file(path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    """Read a JSON file if present, otherwise return None."""
    json_path = Path(path)
    if not json_path.exists():
        return None
    with open(json_path, "r", encoding="utf-8") as f:
        return json.load(f)
