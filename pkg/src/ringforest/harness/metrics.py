"""Run outputs: deterministic CSV text, heatmap matrices, and the manifest.

Every file is built as text in memory so two runs can be compared
byte-for-byte without touching the filesystem.  Floats are serialized with
repr, which round-trips exactly; the manifest stores a sha256 per file plus
the scenario digest and library versions, and deliberately no wall-clock
timestamps.
"""

from __future__ import annotations

import hashlib
import io
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .scenario import Scenario, scenario_digest

Cell = Union[str, int, float]


def _cell(value: Cell) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(header: Sequence[str], rows: Sequence[Sequence[Cell]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} != header width {len(header)}")
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()


def render_matrix(matrix: Sequence[Sequence[float]]) -> str:
    """Dense numeric matrix: rows are lines, cells comma-separated."""
    lines = []
    width = len(matrix[0]) if matrix else 0
    for row in matrix:
        if len(row) != width:
            raise ValueError("ragged matrix")
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + ("\n" if lines else "")


def build_heatmap(
    samples: Sequence[tuple[int, int]], choices: int, bins: int = 20
) -> list[list[float]]:
    """Bin (packet index, chosen hop) pairs into a bins x choices count matrix."""
    matrix = [[0.0] * choices for _ in range(bins)]
    if not samples:
        return matrix
    total = samples[-1][0] + 1
    for idx, choice in samples:
        row = min(bins - 1, idx * bins // max(1, total))
        matrix[row][choice] += 1.0
    return matrix


@dataclass
class MetricsBundle:
    """All artifacts of one run, keyed by output file name."""

    scenario: Scenario
    policy: str
    files: dict[str, str] = field(default_factory=dict)
    validity: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    # structured extras for in-process consumers; never serialized
    data: dict = field(default_factory=dict)

    def add_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Cell]]) -> None:
        self.files[name] = render_csv(header, rows)

    def add_matrix(self, name: str, matrix: Sequence[Sequence[float]]) -> None:
        self.files[name] = render_matrix(matrix)

    def add_text(self, name: str, text: str) -> None:
        self.files[name] = text

    @property
    def valid(self) -> bool:
        return all(self.validity.values())

    def manifest(self) -> dict:
        from .. import __version__

        return {
            "scenario": self.scenario.model_dump(mode="json"),
            "scenario_digest": scenario_digest(self.scenario),
            "seed": self.scenario.seed,
            "policy": self.policy,
            "versions": {
                "ringforest": __version__,
                "python": platform.python_version(),
            },
            "files": {
                name: hashlib.sha256(text.encode()).hexdigest()
                for name, text in sorted(self.files.items())
            },
            "validity": dict(sorted(self.validity.items())),
            "notes": list(self.notes),
        }

    def finalize(self) -> None:
        """Freeze the manifest into the file set (idempotent)."""
        self.files.pop("manifest.json", None)
        self.files["manifest.json"] = json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: Union[str, Path]) -> list[Path]:
        if "manifest.json" not in self.files:
            self.finalize()
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in sorted(self.files.items()):
            path = root / name
            path.write_text(text)
            written.append(path)
        return written


def load_manifest(path: Union[str, Path]) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "scenario" not in data:
        raise ValueError(f"{path}: not a run manifest")
    return data


def compare_manifests(a: dict, b: dict) -> list[str]:
    """Human-readable list of metric divergences; empty means byte-identical."""
    diffs = []
    if a.get("scenario_digest") != b.get("scenario_digest"):
        diffs.append("scenario digests differ")
    fa, fb = a.get("files", {}), b.get("files", {})
    for name in sorted(set(fa) | set(fb)):
        if name == "manifest.json":
            continue
        if name not in fa:
            diffs.append(f"{name}: missing from first run")
        elif name not in fb:
            diffs.append(f"{name}: missing from second run")
        elif fa[name] != fb[name]:
            diffs.append(f"{name}: contents differ")
    return diffs


def parse_csv(text: str) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        return [], []
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]
