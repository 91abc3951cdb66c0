"""Feature matrix construction: min-max scaling, device one-hot, Gaussian noise.

Also holds the two on-disk matrix formats: CSV with a header row and the
binary ``RDM1`` layout (little-endian u32 rows, u32 cols, f32 row-major).
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import RadiationReading

CONTINUOUS_COLUMNS = (
    "captured_unix",
    "latitude",
    "longitude",
    "value_usv_h",
    "uploaded_unix",
)
VALUE_COLUMN = "value_usv_h"
DEVICE_PREFIX = "device:"
RDM_MAGIC = b"RDM1"


class MatrixError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise MatrixError(f"expected a 2-D matrix, got shape {values.shape}")
        if values.shape[1] != len(self.column_names):
            raise MatrixError(
                f"{values.shape[1]} columns but {len(self.column_names)} names"
            )
        if not np.all(np.isfinite(values)):
            raise MatrixError("matrix contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]

    def continuous_mask(self) -> np.ndarray:
        return np.array([not c.startswith(DEVICE_PREFIX) for c in self.column_names])

    def select_rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[idx], self.column_names)

    def select_columns(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.column_names.index(n) for n in names]
        return FeatureMatrix(self.values[:, idx], tuple(names))


@dataclass(frozen=True)
class ScalerParams:
    columns: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def to_dict(self):
        return {
            "columns": list(self.columns),
            "min": [float(v) for v in self.mins],
            "max": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["columns"]), np.asarray(d["min"], float), np.asarray(d["max"], float))


@dataclass(frozen=True)
class EncoderMap:
    devices: tuple[str, ...]

    @classmethod
    def fit(cls, device_ids) -> "EncoderMap":
        return cls(tuple(sorted(set(device_ids))))

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(DEVICE_PREFIX + d for d in self.devices)


@dataclass(frozen=True)
class NoiseConfig:
    eta: float = 0.01
    seed: int = 0
    synthetic_only: bool = False

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")


def fit_minmax(matrix: FeatureMatrix) -> ScalerParams:
    if matrix.n_rows < 1:
        raise MatrixError("cannot fit a scaler on an empty matrix")
    return ScalerParams(
        matrix.column_names,
        matrix.values.min(axis=0),
        matrix.values.max(axis=0),
    )


def apply_minmax(matrix: FeatureMatrix, params: ScalerParams) -> FeatureMatrix:
    if matrix.n_cols != len(params.columns):
        raise MatrixError(
            f"scaler fitted on {len(params.columns)} columns, matrix has {matrix.n_cols}"
        )
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (matrix.values - params.mins) / safe
    scaled[:, span <= 0] = 0.0
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return FeatureMatrix(scaled, matrix.column_names)


def inverse_minmax(matrix: FeatureMatrix, params: ScalerParams) -> FeatureMatrix:
    if matrix.n_cols != len(params.columns):
        raise MatrixError("column-count mismatch")
    raw = matrix.values * (params.maxs - params.mins) + params.mins
    return FeatureMatrix(raw, matrix.column_names)


def continuous_matrix(readings: Sequence[RadiationReading]) -> FeatureMatrix:
    """Raw (unscaled) matrix of the five continuous key features."""
    values = np.array(
        [[getattr(r, c) for c in CONTINUOUS_COLUMNS] for r in readings],
        dtype=np.float64,
    ).reshape(len(readings), len(CONTINUOUS_COLUMNS))
    return FeatureMatrix(values, CONTINUOUS_COLUMNS)


def one_hot_encode(readings: Sequence[RadiationReading], encoder: EncoderMap) -> FeatureMatrix:
    index = {d: i for i, d in enumerate(encoder.devices)}
    block = np.zeros((len(readings), len(encoder.devices)))
    for row, r in enumerate(readings):
        col = index.get(r.device_id)
        if col is not None:
            block[row, col] = 1.0
    return FeatureMatrix(block, encoder.column_names)


def hstack(*parts: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(
        np.hstack([p.values for p in parts]),
        sum((p.column_names for p in parts), ()),
    )


@dataclass(frozen=True)
class Preprocessor:
    """Fitted scaler + device encoder; turns readings into model features."""

    scaler: ScalerParams
    encoder: EncoderMap

    @classmethod
    def fit(cls, readings: Sequence[RadiationReading]) -> "Preprocessor":
        return cls(fit_minmax(continuous_matrix(readings)), EncoderMap.fit(r.device_id for r in readings))

    def transform(self, readings) -> FeatureMatrix:
        scaled = apply_minmax(continuous_matrix(readings), self.scaler)
        return hstack(scaled, one_hot_encode(readings, self.encoder))

    def raw_values(self, matrix: FeatureMatrix) -> np.ndarray:
        """Recover µSv/h readings from the scaled value column."""
        j = self.scaler.columns.index(VALUE_COLUMN)
        lo, hi = self.scaler.mins[j], self.scaler.maxs[j]
        return matrix.column(VALUE_COLUMN) * (hi - lo) + lo

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps({"scaler": self.scaler.to_dict(), "devices": list(self.encoder.devices)}, indent=2)
        )

    @classmethod
    def load(cls, path) -> "Preprocessor":
        d = json.loads(Path(path).read_text())
        return cls(ScalerParams.from_dict(d["scaler"]), EncoderMap(tuple(d["devices"])))


def inject_noise(
    matrix: FeatureMatrix,
    config: NoiseConfig,
    rows: np.ndarray | None = None,
) -> FeatureMatrix:
    """Add N(0, (eta * std_col)^2) to continuous columns.

    ``rows`` optionally restricts the perturbation to a boolean row mask;
    the column std is taken over the rows being perturbed. Perturbed
    columns are clipped back to [0, 1].
    """
    if config.eta == 0 or matrix.n_rows == 0:
        return matrix
    values = matrix.values.copy()
    if rows is None:
        rows = np.ones(matrix.n_rows, dtype=bool)
    cols = np.flatnonzero(matrix.continuous_mask())
    target = values[np.ix_(rows, cols)]
    if target.shape[0] == 0:
        return matrix
    sigma = config.eta * target.std(axis=0)
    rng = np.random.default_rng(config.seed)
    noisy = target + rng.standard_normal(target.shape) * sigma
    values[np.ix_(rows, cols)] = np.clip(noisy, 0.0, 1.0)
    return FeatureMatrix(values, matrix.column_names)


# -- matrix files -----------------------------------------------------------


def write_matrix(matrix: FeatureMatrix, path) -> None:
    path = Path(path)
    if path.suffix == ".rdm":
        n, m = matrix.values.shape
        with open(path, "wb") as fh:
            fh.write(RDM_MAGIC + struct.pack("<II", n, m))
            fh.write(matrix.values.astype("<f4").tobytes(order="C"))
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(matrix.column_names)
        for row in matrix.values.tolist():
            writer.writerow([repr(v) for v in row])


def read_matrix(path) -> FeatureMatrix:
    path = Path(path)
    if path.suffix == ".rdm":
        data = path.read_bytes()
        if data[:4] != RDM_MAGIC:
            raise MatrixError(f"{path}: bad magic {data[:4]!r}, expected {RDM_MAGIC!r}")
        if len(data) < 12:
            raise MatrixError(f"{path}: truncated header")
        n, m = struct.unpack_from("<II", data, 4)
        if len(data) != 12 + 4 * n * m:
            raise MatrixError(f"{path}: expected {12 + 4 * n * m} bytes, found {len(data)}")
        values = np.frombuffer(data, dtype="<f4", offset=12).astype(np.float64).reshape(n, m)
        return FeatureMatrix(values, tuple(f"c{j}" for j in range(m)))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return FeatureMatrix(values, tuple(header))
