"""Observed-data records, dataset container, covariate scaling, and CSV I/O.

One observation is O = (S, Z, X, Y): binary sensitive attribute (1 = advantaged
group), binary auxiliary variable, real covariate vector, binary observed
decision (1 = favourable).  All estimation routines expect covariates scaled
into the unit cube; the affine (min, max) map used for scaling is kept with the
dataset so the identical map can be replayed on prediction data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateCovariateError,
    EmptyDataError,
    ParseError,
    PositivityError,
    SchemaError,
)

_DEFAULT_BINARY = {"0": 0, "1": 1, "0.0": 0, "1.0": 1}


@dataclass(frozen=True)
class ObservationRecord:
    """A single row (s, z, x, y) with x a length-d float vector."""

    s: int
    z: int
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class CsvSchema:
    """Column-name mapping for CSV ingestion.

    ``binary_values`` optionally extends the accepted encodings of the s/z/y
    columns, e.g. ``{"white": 1, "black": 0}``.  Covariate columns must be
    numeric; categorical covariates are expected to arrive already dummy-coded.
    """

    s: str = "s"
    z: str = "z"
    y: str = "y"
    covariates: tuple[str, ...] = ()
    binary_values: dict = field(default_factory=dict)

    def binary_map(self):
        mapping = dict(_DEFAULT_BINARY)
        mapping.update({str(k): int(v) for k, v in self.binary_values.items()})
        return mapping


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of observations plus covariate metadata.

    ``scaling`` holds one (lo, hi) pair per covariate: the affine map
    x -> (x - lo) / (hi - lo) that takes raw values into [0, 1].  ``scaled``
    records whether ``x`` already lives on the unit cube.
    """

    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]
    scaling: tuple[tuple[float, float], ...]
    scaled: bool = False

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int8)
        z = np.asarray(self.z, dtype=np.int8)
        y = np.asarray(self.y, dtype=np.int8)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array (n rows, d covariates)")
        n, d = x.shape
        if not (s.shape == z.shape == y.shape == (n,)):
            raise ValueError("s, z, y must be length-n vectors matching x")
        for name, col in (("s", s), ("z", z), ("y", y)):
            if not np.isin(col, (0, 1)).all():
                raise ValueError(f"{name} must contain only 0/1 values")
        if len(self.covariate_names) != d:
            raise ValueError("covariate_names length must equal covariate dimension")
        if len(self.scaling) != d:
            raise ValueError("scaling must provide one (lo, hi) pair per covariate")
        for name, (lo, hi) in zip(self.covariate_names, self.scaling):
            if not lo < hi:
                raise DegenerateCovariateError(
                    f"covariate {name!r} has degenerate scaling bounds ({lo}, {hi})"
                )
        if not np.isfinite(x).all():
            raise ValueError("covariates must be finite (missing values are rejected)")
        if self.scaled and (x.min(initial=0.0) < -1e-12 or x.max(initial=1.0) > 1 + 1e-12):
            raise ValueError("scaled dataset has covariates outside [0, 1]")
        object.__setattr__(self, "s", _readonly(s))
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(
            self, "scaling", tuple((float(lo), float(hi)) for lo, hi in self.scaling)
        )

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def record(self, i) -> ObservationRecord:
        return ObservationRecord(int(self.s[i]), int(self.z[i]), self.x[i].copy(), int(self.y[i]))

    @property
    def records(self):
        return [self.record(i) for i in range(self.n)]

    def subset(self, idx) -> "Dataset":
        """Row-subset (or resample) preserving covariate metadata."""
        idx = np.asarray(idx)
        return Dataset(
            self.s[idx], self.z[idx], self.y[idx], self.x[idx],
            self.covariate_names, self.scaling, self.scaled,
        )


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a UTF-8, comma-delimited, headered CSV into a raw Dataset.

    Raw covariate values are retained; per-column (min, max) scaling metadata
    is computed here so that `scale_covariates` and prediction-time replay use
    identical bounds.  s/z/y cells must parse to {0, 1} under the schema's
    binary map.
    """
    path = Path(path)
    binmap = schema.binary_map()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyDataError(f"{path} has no header row")
        missing = [
            col
            for col in (schema.s, schema.z, schema.y, *schema.covariates)
            if col not in reader.fieldnames
        ]
        if missing:
            raise SchemaError(f"missing columns in {path}: {', '.join(missing)}")
        s, z, y, rows = [], [], [], []
        for i, row in enumerate(reader, start=1):
            for col, out in ((schema.s, s), (schema.z, z), (schema.y, y)):
                raw = (row[col] or "").strip()
                if raw not in binmap:
                    raise ParseError(
                        f"non-binary value {raw!r} in column {col!r} at row {i}", row=i
                    )
                out.append(binmap[raw])
            try:
                rows.append([float(row[c]) for c in schema.covariates])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"non-numeric covariate at row {i}: {exc}", row=i) from exc
    if not rows:
        raise EmptyDataError(f"{path} contains no data rows")
    x = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(x).all():
        bad = int(np.argwhere(~np.isfinite(x).all(axis=1))[0][0]) + 1
        raise ParseError(f"non-finite covariate at row {bad}", row=bad)
    scaling = compute_scaling(x, schema.covariates)
    return Dataset(s, z, y, x, tuple(schema.covariates), scaling, scaled=False)


def write_csv(data: Dataset, path, schema: CsvSchema | None = None):
    """Write a Dataset back to CSV at full (repr round-trip) precision."""
    schema = schema or CsvSchema(covariates=data.covariate_names)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.s, schema.z, schema.y, *schema.covariates])
        for i in range(data.n):
            writer.writerow(
                [int(data.s[i]), int(data.z[i]), int(data.y[i])]
                + [repr(float(v)) for v in data.x[i]]
            )


def compute_scaling(x, names):
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    constant = np.flatnonzero(~(lo < hi))
    if constant.size:
        names = tuple(names)
        bad = ", ".join(names[j] if j < len(names) else str(j) for j in constant)
        raise DegenerateCovariateError(f"constant covariate column(s): {bad}")
    return tuple((float(a), float(b)) for a, b in zip(lo, hi))


def apply_scaling(scaling, x_raw):
    """Map raw covariates into [0, 1] with the stored bounds.

    Values outside the training range are clamped; returns the scaled matrix
    and a per-row flag marking rows where clamping occurred.
    """
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=np.float64))
    lo = np.array([a for a, _ in scaling])
    hi = np.array([b for _, b in scaling])
    scaled = (x_raw - lo) / (hi - lo)
    clamped = (scaled < 0) | (scaled > 1)
    return np.clip(scaled, 0.0, 1.0), clamped.any(axis=1)


def scale_covariates(raw: Dataset) -> Dataset:
    """Return a Dataset with covariates mapped affinely into [0, 1].

    Idempotent: applying to an already-scaled dataset is the identity.
    """
    if raw.scaled:
        return raw
    x_scaled, _ = apply_scaling(raw.scaling, raw.x)
    return replace(raw, x=x_scaled, scaled=True)


def stratum_counts(data: Dataset):
    """2x2 table of counts n_sz indexed [s][z]."""
    counts = np.zeros((2, 2), dtype=np.int64)
    for s in (0, 1):
        for z in (0, 1):
            counts[s, z] = int(np.sum((data.s == s) & (data.z == z)))
    return counts


def require_positivity(data: Dataset):
    """Positivity precheck: every (s, z) stratum must be non-empty."""
    counts = stratum_counts(data)
    if (counts == 0).any():
        empty = [f"(s={s}, z={z})" for s in (0, 1) for z in (0, 1) if counts[s, z] == 0]
        raise PositivityError(f"empty stratum {', '.join(empty)}: cannot fit")
    return counts
