"""Immutable observational dataset plus CSV loading, splitting and trimming.

A unit carries a real outcome ``y``, a binary treatment receipt ``w``, a
binary assignment ``z`` and a numeric covariate row. Arrays are
normalised to fixed dtypes (float64 outcomes/covariates, int8 arms) so a
save/load round trip reproduces the dataset bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDatasetError,
    InputError,
    MissingValueError,
    SchemaError,
    SplitError,
    ValidationError,
)


def _as_binary(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} must contain only 0/1 values")
    return arr.astype(np.int8)


@dataclass(frozen=True, eq=False)
class Dataset:
    """N units with covariates, assignment z, receipt w and outcome y."""

    covariates: np.ndarray
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=np.float64)
        if cov.ndim != 2:
            raise InputError("covariates must be a 2-D array")
        n, k = cov.shape
        if n < 1 or k < 1:
            raise EmptyDatasetError("dataset needs at least one unit and one feature")
        if not np.isfinite(cov).all():
            raise ValidationError("covariates contain non-finite values")
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (n,) or not np.isfinite(y).all():
            raise ValidationError("y must be a finite length-N vector")
        z = _as_binary(np.asarray(self.z), "z")
        w = _as_binary(np.asarray(self.w), "w")
        if z.shape != (n,) or w.shape != (n,):
            raise InputError("z and w must be length-N vectors")
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != k or len(set(names)) != k:
            raise SchemaError("feature_names must be unique and match covariate columns")
        for arr in (cov, y, z, w):
            arr.setflags(write=False)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_units(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        """New dataset holding the given rows (order as given)."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise EmptyDatasetError("subset selects no rows")
        return Dataset(self.covariates[idx], self.z[idx], self.w[idx],
                       self.y[idx], self.feature_names)

    def equals(self, other: "Dataset") -> bool:
        """Exact field-wise equality, dtypes included."""
        return (
            self.feature_names == other.feature_names
            and self.covariates.dtype == other.covariates.dtype
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/validation/test row indices into one dataset."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns onto dataset roles.

    ``feature_cols=None`` means every column that is not y/w/z is a
    feature, in file order.
    """

    y_col: str = "y"
    w_col: str = "w"
    z_col: str = "z"
    feature_cols: tuple[str, ...] | None = None


def _parse_cell(raw: str, column: str, row_number: int) -> float:
    text = raw.strip() if raw is not None else ""
    if text == "":
        raise MissingValueError(
            f"blank value for column '{column}' at data row {row_number}")
    try:
        return float(text)
    except ValueError:
        raise ValidationError(
            f"non-numeric value '{text}' for column '{column}' at data row {row_number}"
        ) from None


def load_csv(path: str | Path, schema: ColumnSchema = ColumnSchema()) -> Dataset:
    """Read a UTF-8 CSV with a header row into a Dataset.

    Row numbers in error messages are 1-based over data rows (the header
    is row 0).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header row") from None
        header = [h.strip() for h in header]
        for role, col in (("y", schema.y_col), ("w", schema.w_col), ("z", schema.z_col)):
            if col not in header:
                raise SchemaError(f"{path}: missing required {role} column '{col}'")
        reserved = {schema.y_col, schema.w_col, schema.z_col}
        if schema.feature_cols is None:
            feature_cols = [c for c in header if c not in reserved]
        else:
            feature_cols = list(schema.feature_cols)
            for col in feature_cols:
                if col not in header:
                    raise SchemaError(f"{path}: missing feature column '{col}'")
        if not feature_cols:
            raise SchemaError(f"{path}: no feature columns remain")
        pos = {c: header.index(c) for c in header}
        y_rows, w_rows, z_rows, x_rows = [], [], [], []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: data row {i} has {len(row)} cells, expected {len(header)}")
            y_rows.append(_parse_cell(row[pos[schema.y_col]], schema.y_col, i))
            w_val = _parse_cell(row[pos[schema.w_col]], schema.w_col, i)
            z_val = _parse_cell(row[pos[schema.z_col]], schema.z_col, i)
            for name, val in ((schema.w_col, w_val), (schema.z_col, z_val)):
                if val not in (0.0, 1.0):
                    raise ValidationError(
                        f"{path}: column '{name}' must be 0/1 but data row {i} has {val:g}")
            w_rows.append(int(w_val))
            z_rows.append(int(z_val))
            x_rows.append([_parse_cell(row[pos[c]], c, i) for c in feature_cols])
    if not y_rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    return Dataset(
        covariates=np.asarray(x_rows, dtype=np.float64),
        z=np.asarray(z_rows, dtype=np.int8),
        w=np.asarray(w_rows, dtype=np.int8),
        y=np.asarray(y_rows, dtype=np.float64),
        feature_names=tuple(feature_cols),
    )


def save_csv(ds: Dataset, path: str | Path,
             extra_columns: dict[str, np.ndarray] | None = None) -> None:
    """Write a dataset as CSV (columns: y, w, z, features, extras).

    Floats are written with ``repr`` so a reload reproduces every bit.
    """
    path = Path(path)
    extras = extra_columns or {}
    for name, col in extras.items():
        if len(col) != ds.n_units:
            raise InputError(f"extra column '{name}' has wrong length")
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "w", "z", *ds.feature_names, *extras.keys()])
        for i in range(ds.n_units):
            row = [repr(float(ds.y[i])), int(ds.w[i]), int(ds.z[i])]
            row += [repr(float(v)) for v in ds.covariates[i]]
            row += [repr(float(extras[name][i])) for name in extras]
            writer.writerow(row)


def holdout_split(ds: Dataset | int,
                  fractions: tuple[float, float, float],
                  seed: int) -> SplitIndices:
    """Random disjoint train/validation/test partition of all rows.

    Validation and test sizes are floor(fraction * N); the remainder
    goes to train. Every declared-nonzero part must receive at least one
    unit.
    """
    n = ds if isinstance(ds, int) else ds.n_units
    f_tr, f_va, f_te = fractions
    if min(f_tr, f_va, f_te) < 0 or abs(f_tr + f_va + f_te - 1.0) > 1e-9:
        raise SplitError("fractions must be nonnegative and sum to 1")
    if f_tr <= 0:
        raise SplitError("train fraction must be positive")
    n_va = int(np.floor(f_va * n))
    n_te = int(np.floor(f_te * n))
    n_tr = n - n_va - n_te
    for name, frac, size in (("train", f_tr, n_tr), ("validation", f_va, n_va),
                             ("test", f_te, n_te)):
        if frac > 0 and size < 1:
            raise SplitError(
                f"{name} fraction {frac:g} yields no units at N={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train=np.sort(perm[:n_tr]).astype(np.int64),
        validation=np.sort(perm[n_tr:n_tr + n_va]).astype(np.int64),
        test=np.sort(perm[n_tr + n_va:]).astype(np.int64),
    )


def trim_by_propensity(ds: Dataset, e_hat: np.ndarray,
                       lo: float = 0.1, hi: float = 0.9) -> tuple[Dataset, np.ndarray]:
    """Drop units with extreme estimated propensities.

    Keeps rows with lo <= e_hat <= hi (closed bounds) and returns the
    trimmed dataset plus the kept row indices. Applying the same bounds
    to an already-trimmed dataset changes nothing.
    """
    if not (0.0 <= lo < hi <= 1.0):
        raise InputError(f"invalid trim bounds [{lo}, {hi}]")
    e = np.asarray(e_hat, dtype=np.float64)
    if e.shape != (ds.n_units,):
        raise InputError("e_hat must be a length-N vector")
    if not np.isfinite(e).all():
        raise InputError("e_hat contains non-finite values")
    kept = np.flatnonzero((e >= lo) & (e <= hi)).astype(np.int64)
    if kept.size == 0:
        raise EmptyDatasetError(
            f"no units with propensity inside [{lo}, {hi}]")
    return ds.subset(kept), kept
