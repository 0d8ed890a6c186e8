"""Plain-text checkpoints for policy matrices."""

from __future__ import annotations

from pathlib import Path
from typing import Tuple

import numpy as np

from ..errors import DimensionError
from .linear_policies import DacPolicy, DrcPolicy

HEADER_PREFIX = "policy"


def save_policy(policy: DacPolicy, output_path: Path) -> Path:
    """Write M row-major with a one-line header carrying kind and dimensions."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    kind = "drc" if isinstance(policy, DrcPolicy) else "dac"
    rows, cols = policy.M.shape
    header = f"{HEADER_PREFIX} kind={kind} rows={rows} cols={cols} m={policy.m}"
    np.savetxt(output_path, policy.M, fmt="%.17g", header=header)
    return output_path


def _read_header(path: Path) -> Tuple[str, int, int, int]:
    with path.open("r", encoding="utf-8") as handle:
        first = handle.readline().lstrip("#").split()
    if not first or first[0] != HEADER_PREFIX:
        raise DimensionError(f"{path} does not start with a policy header.")
    fields = dict(item.split("=", 1) for item in first[1:])
    return fields["kind"], int(fields["rows"]), int(fields["cols"]), int(fields["m"])


def load_policy(path: Path) -> DacPolicy:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Cannot locate policy checkpoint {path}.")
    kind, rows, cols, m = _read_header(path)
    M = np.loadtxt(path, ndmin=2).reshape(rows, cols)
    return DrcPolicy(M, m) if kind == "drc" else DacPolicy(M, m)
