"""Utility functions to persist run logs, summaries and trajectories."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping

import joblib
import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def save_step_log(frame: pd.DataFrame, output_path: Path) -> Path:
    """Persist a per-step frame as CSV with round-trippable floats."""
    output_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return output_path


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def format_summary(summary: Mapping[str, object]) -> str:
    return "".join(f"{key} = {format_value(value)}\n" for key, value in summary.items())


def save_summary(summary: Mapping[str, object], output_path: Path) -> Path:
    """Persist a flat ``key = value`` summary, one entry per line, in insertion order."""
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(format_summary(summary), encoding="utf-8")
    return output_path


def read_summary(path: Path) -> Dict[str, str]:
    entries = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def save_trajectory(trajectory: Mapping[str, object], output_path: Path) -> Path:
    """Dump the raw arrays behind a run so regret can be measured later."""
    output_path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump(dict(trajectory), output_path)
    return output_path


def load_trajectory(path: Path) -> dict:
    if not Path(path).exists():
        raise FileNotFoundError(f"Cannot locate trajectory file {path}.")
    return joblib.load(path)


def write_summary_section(summary_path: Path, section: str, content: str) -> Path:
    """Write ``## section`` into the report file, replacing a section of the same title.

    Other sections keep their order, so rerunning a command leaves the file unchanged.
    """
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    existing = summary_path.read_text(encoding="utf-8") if summary_path.exists() else ""
    head, *chunks = ("\n" + existing).split("\n## ")
    sections: Dict[str, str] = {}
    for chunk in chunks:
        title, _, body = chunk.partition("\n")
        sections[title.strip()] = body.strip("\n")
    sections[section] = content.strip("\n")
    text = head.strip("\n")
    blocks = [f"## {title}\n{body}\n" for title, body in sections.items()]
    summary_path.write_text(("\n".join([text + "\n"] + blocks) if text else "\n".join(blocks)), encoding="utf-8")
    return summary_path
