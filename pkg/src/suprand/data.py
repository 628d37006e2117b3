"""Tabular data model: feature schema, encoded datasets and CSV I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

RESERVED = ("__treatment", "__outcome", "__propensity", "__ite_true", "__y1", "__y0")
TARGET_MAP = {"yes": 1, "no": 0, "1": 1, "0": 0}


class DataError(ValueError):
    """Malformed input data (bad file, header, cell or invariant violation)."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "numeric"
    levels: tuple = ()

    @property
    def width(self) -> int:
        return len(self.levels) if self.kind == "categorical" else 1


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered covariate columns plus the mask of columns visible to learners."""

    columns: tuple
    observed_mask: tuple = None

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        mask = self.observed_mask
        if mask is None:
            mask = (True,) * len(cols)
        object.__setattr__(self, "observed_mask", tuple(bool(m) for m in mask))

        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if len(self.observed_mask) != len(cols):
            raise DataError("observed_mask length does not match columns")
        if not any(self.observed_mask):
            raise DataError("at least one column must be observed")
        for c in cols:
            if c.kind not in ("numeric", "categorical"):
                raise DataError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.kind == "categorical":
                if not c.levels:
                    raise DataError(f"column {c.name!r}: empty level list")
                if len(set(c.levels)) != len(c.levels):
                    raise DataError(f"column {c.name!r}: duplicate levels")

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def width(self) -> int:
        return sum(c.width for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def encoded_names(self) -> list:
        out = []
        for c in self.columns:
            if c.kind == "numeric":
                out.append(c.name)
            else:
                out.extend(f"{c.name}={lvl}" for lvl in c.levels)
        return out

    def encoded_slices(self) -> dict:
        """Map column name -> slice of its encoded block."""
        out, pos = {}, 0
        for c in self.columns:
            out[c.name] = slice(pos, pos + c.width)
            pos += c.width
        return out

    def encoded_indices(self, names: Sequence[str]) -> np.ndarray:
        slices = self.encoded_slices()
        missing = [n for n in names if n not in slices]
        if missing:
            raise DataError(f"unknown columns: {missing}")
        return np.concatenate([np.arange(slices[n].start, slices[n].stop) for n in names])

    def observed_indices(self) -> np.ndarray:
        names = [c.name for c, m in zip(self.columns, self.observed_mask) if m]
        return self.encoded_indices(names)

    def with_hidden(self, hidden: Sequence[str]) -> "FeatureSchema":
        for h in hidden:
            self.column(h)
        mask = tuple(c.name not in hidden for c in self.columns)
        return FeatureSchema(self.columns, mask)

    def to_dict(self) -> dict:
        cols = []
        for c, m in zip(self.columns, self.observed_mask):
            d = {"name": c.name, "kind": c.kind, "observed": m}
            if c.kind == "categorical":
                d["levels"] = list(c.levels)
            cols.append(d)
        return {"columns": cols}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        cols, mask = [], []
        for d in doc["columns"]:
            kind = d.get("kind", "numeric")
            levels = tuple(str(v) for v in d.get("levels", ())) if kind == "categorical" else ()
            cols.append(Column(str(d["name"]), kind, levels))
            mask.append(bool(d.get("observed", True)))
        return cls(tuple(cols), tuple(mask))

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Truth:
    """Simulated ground truth: conditional effect and both potential outcomes."""

    ite: np.ndarray
    y1: np.ndarray
    y0: np.ndarray

    def subset(self, idx) -> "Truth":
        return Truth(self.ite[idx], self.y1[idx], self.y0[idx])


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Encoded covariates with treatment, outcome and the logged propensity.

    ``propensity`` is the treatment probability e_i used in the draw of row
    i, for treated and control rows alike; control rows are weighted by
    ``1 - propensity``. ``row_ids`` identify rows of the originating table
    and key the per-row random streams.
    """

    schema: FeatureSchema
    x: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    propensity: np.ndarray
    truth: Optional[Truth] = None
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("x must be a 2-D matrix")
        n = x.shape[0]
        if x.shape[1] != self.schema.width:
            raise DataError(f"x has {x.shape[1]} columns, schema encodes {self.schema.width}")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite entries")
        object.__setattr__(self, "x", _frozen(x, np.float64))

        row_ids = np.arange(n) if self.row_ids is None else self.row_ids
        for name, val, dt in (("treatment", self.treatment, np.int64),
                              ("outcome", self.outcome, np.int64),
                              ("propensity", self.propensity, np.float64),
                              ("row_ids", row_ids, np.int64)):
            arr = _frozen(val, dt)
            if arr.shape != (n,):
                raise DataError(f"{name} must have length {n}")
            object.__setattr__(self, name, arr)

        if np.any(self.treatment < 0):
            raise DataError("treatment must be non-negative")
        if not np.all(np.isin(self.outcome, (0, 1))):
            raise DataError("outcome must be binary")
        p = self.propensity
        if not np.all((p > 0.0) & (p < 1.0)):
            raise DataError("propensities must lie strictly inside (0, 1)")

        if self.truth is not None:
            t = Truth(_frozen(self.truth.ite, np.float64),
                      _frozen(self.truth.y1, np.int64),
                      _frozen(self.truth.y0, np.int64))
            for arr in (t.ite, t.y1, t.y0):
                if arr.shape != (n,):
                    raise DataError("truth arrays must match the row count")
            realized = np.where(self.treatment > 0, t.y1, t.y0)
            if not np.array_equal(realized, self.outcome):
                raise DataError("outcome disagrees with the potential outcome of the assigned arm")
            object.__setattr__(self, "truth", t)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def treated(self) -> np.ndarray:
        return self.treatment > 0

    def observed_x(self) -> np.ndarray:
        """Encoded covariates visible to learners."""
        return self.x[:, self.schema.observed_indices()]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.schema, self.x[idx], self.treatment[idx], self.outcome[idx],
            self.propensity[idx],
            None if self.truth is None else self.truth.subset(idx),
            self.row_ids[idx],
        )

    def with_assignment(self, treatment, propensity) -> "Dataset":
        """Derived dataset with new treatment/propensity; outcome realized from truth."""
        if self.truth is None:
            raise DataError("assignment needs ground truth to realize outcomes")
        treatment = np.asarray(treatment, dtype=np.int64)
        outcome = np.where(treatment > 0, self.truth.y1, self.truth.y0)
        return replace(self, treatment=treatment, outcome=outcome, propensity=propensity)

    def with_truth(self, truth: Truth, outcome=None) -> "Dataset":
        treatment = np.zeros(self.n, dtype=np.int64)
        if outcome is None:
            outcome = truth.y0
        return replace(self, treatment=treatment, outcome=outcome,
                       propensity=np.full(self.n, 0.5), truth=truth)


def from_matrix(schema: FeatureSchema, x, outcome=None) -> Dataset:
    """Unassigned dataset: treatment 0 and placeholder propensity 0.5."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    outcome = np.zeros(n, dtype=np.int64) if outcome is None else outcome
    return Dataset(schema, x, np.zeros(n, dtype=np.int64), outcome, np.full(n, 0.5))


def one_hot_encode(schema: FeatureSchema, raw_row: Sequence) -> np.ndarray:
    """Encode one raw row; numeric cells are copied, categoricals one-hot."""
    if len(raw_row) != len(schema.columns):
        raise DataError(f"row has {len(raw_row)} cells, schema has {len(schema.columns)} columns")
    out = np.zeros(schema.width)
    pos = 0
    for col, cell in zip(schema.columns, raw_row):
        if col.kind == "numeric":
            out[pos] = _parse_float(cell, col.name)
        else:
            key = str(cell).strip()
            try:
                out[pos + col.levels.index(key)] = 1.0
            except ValueError:
                raise DataError(f"column {col.name!r}: unknown level {key!r}") from None
        pos += col.width
    return out


def _parse_float(cell, name) -> float:
    try:
        v = float(cell)
    except (TypeError, ValueError):
        raise DataError(f"column {name!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"column {name!r}: non-finite value {cell!r}")
    return v


def _parse_target(cell) -> int:
    key = str(cell).strip()
    if key not in TARGET_MAP:
        raise DataError(f"non-binary target value {key!r}")
    return TARGET_MAP[key]


def ingest_csv(path, schema: FeatureSchema, target_column: Optional[str] = None,
               delimiter: str = ",") -> Dataset:
    """Read a CSV into a Dataset.

    Plain data files carry the schema columns plus ``target_column``. Files
    written by :func:`write_csv` carry the reserved ``__`` columns instead;
    these restore treatment, propensity and ground truth when present.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None

        reserved = [h for h in header if h in RESERVED]
        features = [h for h in header if h not in RESERVED and h != target_column]
        if sorted(features) != sorted(schema.names) or len(features) != len(schema.names):
            raise DataError(f"{path}: header {features} does not match schema {schema.names}")
        if "__outcome" not in reserved:
            if target_column is None or target_column not in header:
                raise DataError(f"{path}: target column {target_column!r} not in header")
        pos = {h: i for i, h in enumerate(header)}
        feat_pos = [pos[name] for name in schema.names]

        rows, extra, target = [], {k: [] for k in reserved}, []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
            try:
                rows.append(one_hot_encode(schema, [cells[i] for i in feat_pos]))
                for k in reserved:
                    extra[k].append(_parse_float(cells[pos[k]], k))
                if "__outcome" not in reserved:
                    target.append(_parse_target(cells[pos[target_column]]))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None

    n = len(rows)
    x = np.vstack(rows) if rows else np.zeros((0, schema.width))

    def col(name, default):
        return np.asarray(extra[name]) if name in extra else default

    outcome = col("__outcome", np.asarray(target, dtype=np.int64))
    treatment = col("__treatment", np.zeros(n))
    propensity = col("__propensity", np.full(n, 0.5))
    for name, arr in (("__outcome", outcome), ("__treatment", treatment)):
        if not np.all(arr == np.round(arr)):
            raise DataError(f"{path}: {name} must hold integers")
    truth = None
    if all(k in extra for k in ("__ite_true", "__y1", "__y0")):
        truth = Truth(col("__ite_true", None), col("__y1", None).astype(np.int64),
                      col("__y0", None).astype(np.int64))
    return Dataset(schema, x, treatment.astype(np.int64), outcome.astype(np.int64),
                   propensity, truth)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def decode_row(schema: FeatureSchema, x_row) -> list:
    cells, pos = [], 0
    for col in schema.columns:
        if col.kind == "numeric":
            cells.append(_fmt(x_row[pos]))
        else:
            block = x_row[pos:pos + col.width]
            cells.append(col.levels[int(np.argmax(block))])
        pos += col.width
    return cells


def write_csv(ds: Dataset, path) -> None:
    """Write raw covariate cells plus the reserved assignment/truth columns."""
    header = list(ds.schema.names) + ["__treatment", "__outcome", "__propensity"]
    if ds.truth is not None:
        header += ["__ite_true", "__y1", "__y0"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = decode_row(ds.schema, ds.x[i])
            row += [str(int(ds.treatment[i])), str(int(ds.outcome[i])), _fmt(ds.propensity[i])]
            if ds.truth is not None:
                row += [_fmt(ds.truth.ite[i]), str(int(ds.truth.y1[i])), str(int(ds.truth.y0[i]))]
            w.writerow(row)


def split_folds(ds_or_n, k: int, seed: int) -> list:
    """Random partition of the row positions into ``k`` folds of near-equal size."""
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else ds_or_n.n
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]
