"""Output plumbing shared by the CLI: CSV emission and run manifests.

Numbers are serialized with `repr`, which round-trips floats exactly, so
re-running a command with the same seed reproduces every output file
byte for byte.  Manifests carry no timestamps for the same reason.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    """Serialize one CSV cell deterministically."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # plain-float repr round-trips exactly and is stable across runs
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str],
              rows: Iterable[Sequence], comments: Sequence[str] = ()) -> Path:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_text(path: Path, text: str) -> Path:
    if not text.endswith("\n"):
        text += "\n"
    path.write_text(text)
    return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir: Path,
    tool_version: str,
    subcommand: str,
    config: dict,
    seed: int,
    outputs: Sequence[Path],
) -> Path:
    """Record what ran and what it produced.

    `config` is the fully resolved parameter snapshot: re-running the
    same subcommand with this snapshot and seed must reproduce every
    listed hash.
    """
    manifest = {
        "tool_version": tool_version,
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
        "outputs": [
            {"file": p.name, "sha256": sha256_file(p)}
            for p in sorted(outputs, key=lambda p: p.name)
        ],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
