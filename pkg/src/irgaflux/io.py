"""Headered CSV input and output.

Layout: one column named `y`, columns prefixed `x_` form X and columns
prefixed `z_` form Z, in file order. Any other column is a parse error.
"""

import csv
import os
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from irgaflux.exceptions import ParseError
from irgaflux.logger import logger
from irgaflux.rotation import Dataset


class LoadedData(NamedTuple):
    data: Dataset
    x_names: List[str]
    z_names: List[str]


def _classify(header: List[str], path: str) -> Tuple[int, List[int], List[int]]:
    y_cols = [i for i, name in enumerate(header) if name == "y"]
    x_cols = [i for i, name in enumerate(header) if name.startswith("x_")]
    z_cols = [i for i, name in enumerate(header) if name.startswith("z_")]
    unknown = [
        name for name in header if name != "y" and not name.startswith(("x_", "z_"))
    ]
    if len(y_cols) != 1:
        raise ParseError(f"`{path}` must have exactly one `y` column", path=path)
    if not x_cols:
        raise ParseError(f"`{path}` has no `x_` columns", path=path)
    if unknown:
        raise ParseError(f"`{path}` has unrecognized columns {unknown}", path=path)
    if len(set(header)) != len(header):
        raise ParseError(f"`{path}` has duplicated column names", path=path)
    return y_cols[0], x_cols, z_cols


def standardize_columns(M: np.ndarray) -> np.ndarray:
    """Zero mean and unit Euclidean norm per column; constant columns are only centered."""
    centered = M - M.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    norms[norms == 0.0] = 1.0
    return centered / norms


def read_dataset_csv(
    path: str,
    *,
    sigma2: Optional[float] = None,
    standardize: bool = False,
    delimiter: str = ",",
) -> LoadedData:
    """Parse a CSV file into a Dataset.

    Args:
        path:
            File to read.
        sigma2:
            Known error variance, attached to the Dataset.
        standardize:
            Center y and give every x_/z_ column zero mean and unit norm.
        delimiter:
            Field delimiter.

    Raises:
        ParseError: missing file, bad header, ragged rows or non-numeric cells.
    """
    if not os.path.exists(path):
        raise ParseError(f"Input file `{path}` does not exist", path=path)
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp, delimiter=delimiter)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise ParseError(f"`{path}` is empty", path=path) from None
        y_col, x_cols, z_cols = _classify(header, path)
        rows = []
        for line_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"`{path}` line {line_number}: {len(row)} fields, "
                    f"expected {len(header)}",
                    path=path,
                    line=line_number,
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as e:
                raise ParseError(
                    f"`{path}` line {line_number}: {e}", path=path, line=line_number
                ) from e
    if not rows:
        raise ParseError(f"`{path}` has no data rows", path=path)
    table = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(table)):
        raise ParseError(f"`{path}` contains non-finite values", path=path)
    y = table[:, y_col]
    X = table[:, x_cols]
    Z = table[:, z_cols] if z_cols else None
    if standardize:
        y = y - y.mean()
        X = standardize_columns(X)
        if Z is not None:
            Z = standardize_columns(Z)
        logger.warning("Standardized the columns of `%s` (zero mean, unit norm)", path)
    logger.info(
        "Read `%s`: n=%d, p=%d, q=%d", path, y.size, X.shape[1], 0 if Z is None else Z.shape[1]
    )
    return LoadedData(
        data=Dataset(y=y, X=X, Z=Z, sigma2=sigma2),
        x_names=[header[i] for i in x_cols],
        z_names=[header[i] for i in z_cols],
    )


def write_dataset_csv(data: Dataset, path: str) -> None:
    """Write a Dataset in the layout read by `read_dataset_csv`."""
    header = ["y"] + [f"x_{j + 1}" for j in range(data.p)]
    header += [f"z_{j + 1}" for j in range(data.q)]
    columns = [data.y[:, None], data.X]
    if data.Z is not None:
        columns.append(data.Z)
    table = np.hstack(columns)
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(header)
        writer.writerows([repr(float(v)) for v in row] for row in table)
    logger.debug("Wrote %d rows to `%s`", table.shape[0], path)
