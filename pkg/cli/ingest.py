"""
CSV ingestion into an IndexedSample.
"""

import logging
import os

import numpy as np
import pandas as pd

from ccs.local_moments import IndexedSample
from utils.exceptions import FileOperationError, ValidationError

logger = logging.getLogger(__name__)


def _numeric_frame(frame: pd.DataFrame) -> pd.DataFrame:
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, column = (int(v[0]) for v in np.nonzero(bad))
        raise ValidationError(
            f"Non-numeric cell {frame.iat[row, column]!r} in row {row + 1}, "
            f"column '{frame.columns[column]}'",
            field=str(frame.columns[column]),
            value=frame.iat[row, column],
        )
    return numeric.astype(float)


def ingest_csv(
    path: str, z_column: str = "z", log_returns: bool = False, standardize: bool = False
) -> IndexedSample:
    """
    Reads a headed CSV file whose ``z_column`` holds the index variable and
    whose remaining columns are the observed variables.

    Args:
        path: CSV file with a header row; ``#`` lines are comments
        z_column: Name of the index column
        log_returns: Replace every variable by log(x_t / x_{t-1}), dropping the first row
        standardize: Scale every variable to mean 0 and variance 1

    Returns:
        Sample with z affinely rescaled to [0, 1]

    Raises:
        FileOperationError: File missing or unreadable
        ValidationError: Missing index column, non-numeric cell, too few rows,
            non-positive price with ``log_returns`` or constant column with
            ``standardize``
    """
    if not os.path.isfile(path):
        raise FileOperationError(f"Input file not found: {path}", file_path=path, operation="read")
    try:
        frame = pd.read_csv(path, comment="#", dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FileOperationError(f"Failed to read {path}: {e}", file_path=path, operation="read")

    if z_column not in frame.columns:
        raise ValidationError(
            f"Index column '{z_column}' not found in {path} (columns: {list(frame.columns)})",
            field="z_column",
            value=z_column,
        )
    if len(frame.columns) < 2:
        raise ValidationError(f"{path} has no variable columns besides '{z_column}'", field="x")
    if frame.empty:
        raise ValidationError(f"{path} has no data rows", field="x")

    frame = _numeric_frame(frame)
    columns = [str(c) for c in frame.columns if c != z_column]
    z = frame[z_column].to_numpy()
    x = frame[columns].to_numpy()

    if log_returns:
        if x.shape[0] < 2:
            raise ValidationError("log_returns needs at least two rows", field="log_returns")
        if np.any(x <= 0.0):
            raise ValidationError("log_returns needs strictly positive prices", field="log_returns")
        x = np.diff(np.log(x), axis=0)
        z = z[1:]

    if x.shape[0] < 2:
        after = " after taking log returns" if log_returns else ""
        raise ValidationError(
            f"{path} has {x.shape[0]} usable row(s){after}; at least 2 are needed",
            field="n",
            value=x.shape[0],
        )

    if standardize:
        scale = x.std(axis=0)
        constant = np.flatnonzero(scale <= 0.0)
        if constant.size:
            raise ValidationError(
                f"Column '{columns[constant[0]]}' is constant and cannot be standardized",
                field=columns[constant[0]],
            )
        x = (x - x.mean(axis=0)) / scale

    sample = IndexedSample.from_arrays(z, x, columns, rescale=True)
    logger.info(f"Ingested {path}: n={sample.n} rows, p={sample.p} columns {columns}")
    return sample
