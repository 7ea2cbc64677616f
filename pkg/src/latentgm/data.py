"""Mixed-type datasets with missing cells and their latent interval constraints."""
import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

MISSING_TOKEN = "NA"
CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Malformed data or schema input."""


@dataclass(frozen=True)
class VariableSchema:
    name: str
    kind: str
    levels: int | None = None

    def __post_init__(self):
        if self.kind == CONTINUOUS:
            if self.levels is not None:
                raise DataError(f"continuous column {self.name!r} cannot declare levels")
        elif self.kind == CATEGORICAL:
            if self.levels is None or int(self.levels) < 2:
                raise DataError(f"categorical column {self.name!r} needs levels >= 2")
            object.__setattr__(self, "levels", int(self.levels))
        else:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL

    @classmethod
    def continuous(cls, name):
        return cls(name, CONTINUOUS)

    @classmethod
    def categorical(cls, name, levels):
        return cls(name, CATEGORICAL, levels)


@dataclass(frozen=True)
class CellConstraint:
    """Closed interval ``[a, b]`` holding the latent value of one cell."""

    a: float
    b: float

    @property
    def is_point(self):
        return self.a == self.b


@dataclass(frozen=True, eq=False)
class MixedDataset:
    """An ``n x p`` table of continuous and categorical cells.

    Missing cells are ``NaN`` in ``values``; categorical cells hold level
    indices ``0 .. levels - 1`` stored as floats.
    """

    schema: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        schema = tuple(self.schema)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(schema):
            raise DataError(
                f"values shape {values.shape} does not match {len(schema)} schema columns")
        for j, var in enumerate(schema):
            col = values[:, j]
            obs = col[~np.isnan(col)]
            if not np.all(np.isfinite(obs)):
                raise DataError(f"column {var.name!r} contains non-finite values")
            if var.is_categorical:
                bad = (obs != np.round(obs)) | (obs < 0) | (obs >= var.levels)
                if np.any(bad):
                    i = int(np.flatnonzero(~np.isnan(col))[np.argmax(bad)])
                    raise DataError(
                        f"row {i}, column {var.name!r}: level {col[i]!r} not in "
                        f"0..{var.levels - 1}")
        values.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def names(self):
        return [v.name for v in self.schema]

    @property
    def missing(self):
        return np.isnan(self.values)

    @property
    def categorical_columns(self):
        return [j for j, v in enumerate(self.schema) if v.is_categorical]

    def column_index(self, name_or_index):
        if isinstance(name_or_index, (int, np.integer)):
            j = int(name_or_index)
            if not 0 <= j < self.p:
                raise DataError(f"column index {j} out of range")
            return j
        try:
            return self.names.index(name_or_index)
        except ValueError:
            raise DataError(f"unknown column {name_or_index!r}") from None

    def take(self, rows):
        return MixedDataset(self.schema, self.values[np.asarray(rows)])

    def with_values(self, values):
        return MixedDataset(self.schema, values)


def read_schema(path):
    """Parse a schema file with one ``name,kind[,levels]`` line per column."""
    schema = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [s.strip() for s in line.split(",")]
            try:
                if parts[1] == CONTINUOUS and len(parts) == 2:
                    schema.append(VariableSchema.continuous(parts[0]))
                elif parts[1] == CATEGORICAL and len(parts) == 3:
                    schema.append(VariableSchema.categorical(parts[0], int(parts[2])))
                else:
                    raise DataError(f"cannot parse {line!r}")
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not schema:
        raise DataError(f"{path}: schema declares no columns")
    names = [v.name for v in schema]
    if len(set(names)) != len(names):
        raise DataError(f"{path}: duplicate column names")
    return schema


def write_schema(schema, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for var in schema:
            if var.is_categorical:
                fh.write(f"{var.name},{var.kind},{var.levels}\n")
            else:
                fh.write(f"{var.name},{var.kind}\n")


def _parse_cell(token, var, row, col):
    if token == MISSING_TOKEN:
        return math.nan
    try:
        if var.is_categorical:
            level = int(token)
        else:
            value = float(token)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {token!r}") from None
    if var.is_categorical:
        if not 0 <= level < var.levels:
            raise DataError(
                f"row {row}, column {col!r}: level {level} not in 0..{var.levels - 1}")
        return float(level)
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {token!r}")
    return value


def load_csv(data_path, schema):
    """Load a CSV data file typed by a schema (sidecar path or sequence of columns).

    The header must name exactly the schema columns (any order); ``NA`` marks a
    missing cell. Rows are numbered from 0, excluding the header.
    """
    schema = read_schema(schema) if isinstance(schema, (str, os.PathLike)) else tuple(schema)
    by_name = {v.name: v for v in schema}
    with open(data_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{data_path}: empty file") from None
        for h in header:
            if h not in by_name:
                raise DataError(f"{data_path}: unknown column {h!r}")
        missing_cols = set(by_name) - set(header)
        if missing_cols or len(header) != len(set(header)):
            raise DataError(f"{data_path}: header does not match schema columns")
        order = [header.index(v.name) for v in schema]
        rows = []
        for i, record in enumerate(reader):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"row {i}: expected {len(header)} fields, got {len(record)}")
            rows.append([_parse_cell(record[k].strip(), var, i, var.name)
                         for k, var in zip(order, schema)])
    if not rows:
        raise DataError(f"{data_path}: zero rows")
    return MixedDataset(tuple(schema), np.array(rows, dtype=float))


def format_cell(value, var):
    if np.isnan(value):
        return MISSING_TOKEN
    if var.is_categorical:
        return str(int(value))
    return repr(float(value))


def write_csv(ds, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ds.names)
        for row in ds.values:
            writer.writerow([format_cell(x, v) for x, v in zip(row, ds.schema)])


def constraint_bounds(ds, thresholds):
    """Lower and upper latent bounds for every cell, as two ``n x p`` arrays.

    Observed continuous cells give a point, missing cells the whole line and
    an observed categorical level ``k`` the interval between thresholds ``k``
    and ``k + 1`` of its column.
    """
    values = ds.values
    lo = np.where(np.isnan(values), -np.inf, values)
    hi = lo.copy()
    hi[np.isnan(values)] = np.inf
    for j in ds.categorical_columns:
        cuts = np.asarray(thresholds[j], dtype=float)
        if cuts.shape[0] != ds.schema[j].levels + 1:
            raise DataError(f"thresholds for column {ds.schema[j].name!r} have wrong length")
        obs = ~np.isnan(values[:, j])
        k = values[obs, j].astype(int)
        lo[obs, j] = cuts[k]
        hi[obs, j] = cuts[k + 1]
    return lo, hi


def constraints_for_row(row, ds, thresholds, free=None):
    """Interval constraints for one row; column ``free`` (if given) is unbounded."""
    lo, hi = constraint_bounds(ds.take([row]), thresholds)
    if free is not None:
        lo[0, free], hi[0, free] = -np.inf, np.inf
    return [CellConstraint(float(a), float(b)) for a, b in zip(lo[0], hi[0])]


def discretize(latent, cuts):
    """Map latent values to levels: ``k`` such that ``cuts[k] < w <= cuts[k + 1]``."""
    cuts = np.asarray(cuts, dtype=float)
    return np.searchsorted(cuts[1:-1], np.asarray(latent, dtype=float), side="left")

