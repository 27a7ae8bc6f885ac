"""
Bit-stable result files.

Every CSV file starts with the comment line ``# ccs <version> seed=<seed>
config=<hash>``; JSON files carry the same information under a leading
``header`` key. Floats are written in shortest round-trip form.
"""

import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ccs import __version__
from ccs.inference import ConfidenceBand
from ccs.local_moments import IndexedSample, IndexGrid
from ccs.solvers import PrecisionField
from utils.exceptions import FileOperationError, ValidationError

logger = logging.getLogger(__name__)

OMEGA_GRID_COLUMNS = ["z", "u", "v", "value"]
SUPPORT_COLUMNS = ["u", "v", "group_norm"]
CI_COLUMNS = ["z", "u", "v", "point", "lower", "upper"]
PR_CURVE_COLUMNS = ["lambda", "precision", "recall", "f1", "hamming"]
TRACE_COLUMNS = ["solver", "iteration", "objective", "seconds"]
HAMMING_COLUMNS = ["graph_kind", "p", "C", "n", "max_degree", "lambda", "hamming", "f1"]


def format_float(value: float) -> str:
    return repr(float(value))


@dataclass(frozen=True)
class ArtifactHeader:
    seed: int
    config_hash: str
    version: str = __version__

    def line(self) -> str:
        return f"# ccs {self.version} seed={self.seed} config={self.config_hash}"

    def as_dict(self) -> Dict[str, Any]:
        return {
            "tool": "ccs",
            "version": self.version,
            "seed": self.seed,
            "config": self.config_hash,
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ArtifactWriter:
    """
    Writes every result file of one command into ``output_dir``.

    Calls happen from the command thread only, in a fixed order.
    """

    def __init__(self, output_dir: str, header: ArtifactHeader):
        self.output_dir = output_dir
        self.header = header
        self.written: List[str] = []
        try:
            os.makedirs(output_dir, exist_ok=True)
        except OSError as e:
            raise FileOperationError(
                f"Cannot create output directory: {e}", file_path=output_dir, operation="mkdir"
            )

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def write_table(self, name: str, frame: pd.DataFrame) -> str:
        """Writes ``frame`` below the header line; float columns use repr."""
        formatted = frame.copy()
        for column in formatted.columns:
            if pd.api.types.is_float_dtype(formatted[column]):
                formatted[column] = formatted[column].map(format_float)
        path = self._path(name)
        try:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(self.header.line() + "\n")
                formatted.to_csv(f, index=False, lineterminator="\n")
        except OSError as e:
            raise FileOperationError(f"Failed to write {path}: {e}", file_path=path, operation="write")
        self.written.append(path)
        logger.debug(f"Wrote {len(frame)} rows to {path}")
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        path = self._path(name)
        document = {"header": self.header.as_dict()}
        document.update(_jsonable(payload))
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(document, f, indent=2, allow_nan=False)
                f.write("\n")
        except OSError as e:
            raise FileOperationError(f"Failed to write {path}: {e}", file_path=path, operation="write")
        self.written.append(path)
        logger.debug(f"Wrote {path}")
        return path

    # ------------------------------------------------------------ tables

    def write_omega_grid(
        self, grid: IndexGrid, matrices: np.ndarray, name: str = "omega_grid.csv"
    ) -> str:
        """One row per (z, u, v) with u <= v, in lexicographic order."""
        K, p, _ = matrices.shape
        u, v = np.triu_indices(p)
        frame = pd.DataFrame(
            {
                "z": np.repeat(grid.points, u.size),
                "u": np.tile(u, K),
                "v": np.tile(v, K),
                "value": matrices[:, u, v].ravel(),
            },
            columns=OMEGA_GRID_COLUMNS,
        )
        return self.write_table(name, frame)

    def write_support(self, field: PrecisionField) -> str:
        edges = field.support.sorted()
        frame = pd.DataFrame(
            {
                "u": [u for u, _ in edges],
                "v": [v for _, v in edges],
                "group_norm": [float(field.group_norms[u, v]) for u, v in edges],
            },
            columns=SUPPORT_COLUMNS,
        )
        frame["group_norm"] = frame["group_norm"].astype(float)
        return self.write_table("support.csv", frame)

    def write_ci(self, band: ConfidenceBand) -> str:
        K, p, _ = band.point.shape
        u, v = np.triu_indices(p)
        frame = pd.DataFrame(
            {
                "z": np.repeat(band.grid.points, u.size),
                "u": np.tile(u, K),
                "v": np.tile(v, K),
                "point": band.point[:, u, v].ravel(),
                "lower": band.lower[:, u, v].ravel(),
                "upper": band.upper[:, u, v].ravel(),
            },
            columns=CI_COLUMNS,
        )
        return self.write_table("ci.csv", frame)

    def write_pr_curve(self, rows: Sequence) -> str:
        frame = pd.DataFrame(
            {
                "lambda": [row.lam for row in rows],
                "precision": [row.precision for row in rows],
                "recall": [row.recall for row in rows],
                "f1": [row.f1 for row in rows],
                "hamming": [row.hamming for row in rows],
            },
            columns=PR_CURVE_COLUMNS,
            dtype=float,
        )
        return self.write_table("pr_curve.csv", frame)

    def write_traces(self, rows: Sequence) -> str:
        frame = pd.DataFrame(
            {
                "solver": [row.solver for row in rows],
                "iteration": [int(row.iteration) for row in rows],
                "objective": [float(row.objective) for row in rows],
                "seconds": [float(row.seconds) for row in rows],
            },
            columns=TRACE_COLUMNS,
        )
        return self.write_table("traces.csv", frame)

    def write_hamming(self, rows: Sequence) -> str:
        frame = pd.DataFrame(
            {
                "graph_kind": [row.graph_kind for row in rows],
                "p": [int(row.p) for row in rows],
                "C": [float(row.C) for row in rows],
                "n": [int(row.n) for row in rows],
                "max_degree": [int(row.max_degree) for row in rows],
                "lambda": [float(row.lam) for row in rows],
                "hamming": [float(row.hamming) for row in rows],
                "f1": [float(row.f1) for row in rows],
            },
            columns=HAMMING_COLUMNS,
        )
        return self.write_table("hamming.csv", frame)

    def write_sample(self, sample: IndexedSample, name: str = "data.csv") -> str:
        data = {"z": sample.z}
        for j, column in enumerate(sample.columns):
            data[column] = sample.x[:, j]
        return self.write_table(name, pd.DataFrame(data, columns=["z"] + list(sample.columns)))


def read_omega_grid(path: str) -> Tuple[IndexGrid, np.ndarray]:
    """
    Rebuilds the grid and the symmetric (K, p, p) matrices from omega_grid.csv.

    Raises:
        FileOperationError: File missing or unreadable
        ValidationError: Columns or row layout do not match the schema
    """
    if not os.path.isfile(path):
        raise FileOperationError(f"File not found: {path}", file_path=path, operation="read")
    try:
        frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FileOperationError(f"Failed to read {path}: {e}", file_path=path, operation="read")
    if list(frame.columns) != OMEGA_GRID_COLUMNS:
        raise ValidationError(
            f"{path} must have columns {OMEGA_GRID_COLUMNS}, got {list(frame.columns)}",
            field="columns",
        )

    points = np.unique(frame["z"].to_numpy(dtype=float))
    p = int(frame["v"].max()) + 1
    pairs = p * (p + 1) // 2
    if len(frame) != points.size * pairs:
        raise ValidationError(
            f"{path} holds {len(frame)} rows, expected {points.size * pairs}", field="rows"
        )
    u = frame["u"].to_numpy(dtype=int)
    v = frame["v"].to_numpy(dtype=int)
    k = np.searchsorted(points, frame["z"].to_numpy(dtype=float))
    matrices = np.zeros((points.size, p, p))
    values = frame["value"].to_numpy(dtype=float)
    matrices[k, u, v] = values
    matrices[k, v, u] = values
    return IndexGrid(points), matrices
