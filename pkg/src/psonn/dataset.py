"""Loading, encoding, normalization and splitting of the heart-attack table.

The CSV layout follows the published Erbil medical dataset: eight feature
columns (age, gender, pulse, systolic and diastolic pressure, glucose, CK-MB,
troponin) followed by the target. Some exports carry a second, textual copy
of the target column; it is accepted and checked for agreement.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CsvFormatError, DataError

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "age",
    "gender",
    "heart_rate",
    "systolic_bp",
    "diastolic_bp",
    "glucose",
    "ck_mb",
    "troponin",
)
N_FEATURES = len(FEATURE_NAMES)

GENDER_COL = FEATURE_NAMES.index("gender")
GLUCOSE_COL = FEATURE_NAMES.index("glucose")
GLUCOSE_THRESHOLD = 120.0

# descriptive ranges from the attribute table; values outside only warn
_EXPECTED_RANGES = {
    "heart_rate": (10.0, 180.0),
    "systolic_bp": (70.0, 190.0),
    "diastolic_bp": (40.0, 100.0),
}

_GENDER_WORDS = {"male": 1, "m": 1, "1": 1, "female": 0, "f": 0, "0": 0}
_TARGET_WORDS = {"positive": 1, "1": 1, "negative": 0, "0": 0}


@dataclass(frozen=True)
class RawTable:
    header: list[str]
    rows: list[list[str]]

    def __post_init__(self):
        if not self.header:
            raise CsvFormatError("header is empty")
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise CsvFormatError(
                    f"row {i} has {len(row)} cells, header has {width}", row=i
                )


@dataclass(frozen=True)
class PatientRecord:
    age: float
    gender: int
    heart_rate: float
    systolic_bp: float
    diastolic_bp: float
    glucose_flag: int
    ck_mb: float
    troponin: float
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded feature matrix plus binary labels.

    ``features`` has shape ``(n, n_features)`` and ``labels`` shape ``(n,)``
    with values in {0, 1}. Arrays are made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64).reshape(-1)
        if x.ndim != 2:
            x = x.reshape(len(y), -1)
        if x.shape[0] != y.shape[0]:
            raise DataError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if x.shape[1] != len(self.feature_names):
            raise DataError(
                f"{x.shape[1]} feature columns but {len(self.feature_names)} names"
            )
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite feature value")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)

    def records(self) -> Iterator[PatientRecord]:
        if self.feature_names != FEATURE_NAMES:
            raise DataError("records() needs the heart-attack feature layout")
        for row, label in zip(self.features, self.labels):
            yield PatientRecord(
                float(row[0]), int(row[1]), float(row[2]), float(row[3]),
                float(row[4]), int(row[5]), float(row[6]), float(row[7]),
                int(label),
            )

    def to_raw(self) -> RawTable:
        header = [*self.feature_names, "target"]
        rows = [
            [repr(float(v)) for v in row] + [str(int(label))]
            for row, label in zip(self.features, self.labels)
        ]
        return RawTable(header, rows)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class NormalizationParams:
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if len(self.mins) != len(self.maxs):
            raise DataError("mins and maxs differ in length")
        for lo, hi in zip(self.mins, self.maxs):
            if not lo <= hi:
                raise DataError(f"min {lo} exceeds max {hi}")

    def to_dict(self) -> dict:
        return {"mins": [float(v).hex() for v in self.mins],
                "maxs": [float(v).hex() for v in self.maxs]}

    @classmethod
    def from_dict(cls, d: dict) -> NormalizationParams:
        return cls(tuple(float.fromhex(v) for v in d["mins"]),
                   tuple(float.fromhex(v) for v in d["maxs"]))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    shuffle: bool = True
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def load_csv(path: str | Path) -> RawTable:
    """Read a comma-separated file with one header row. No type coercion."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise CsvFormatError(f"{path}: file is empty") from None
            rows = []
            for i, row in enumerate(reader):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise CsvFormatError(
                        f"{path}: row {i} has {len(row)} cells, "
                        f"header has {len(header)}",
                        row=i,
                    )
                rows.append([c.strip() for c in row])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return RawTable(header, rows)


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: not numeric: {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: non-finite value {cell!r}")
    return value


def _parse_category(cell: str, words: dict, row: int, column: str) -> int:
    key = cell.strip().lower()
    if key in words:
        return words[key]
    try:
        value = float(key)
    except ValueError:
        value = None
    if value in (0.0, 1.0):
        return int(value)
    raise DataError(f"row {row}, column {column!r}: unrecognized category {cell!r}")


def encode(raw: RawTable) -> Dataset:
    """Turn a raw heart-attack table into a numeric Dataset.

    Gender maps male to 1 and female to 0, target maps positive to 1 and
    negative to 0. Glucose is binarized at > 120 mg/dl unless the column is
    already a 0/1 flag.
    """
    width = len(raw.header)
    if width not in (N_FEATURES + 1, N_FEATURES + 2):
        raise DataError(
            f"expected {N_FEATURES + 1} columns (8 features + target), got {width}"
        )
    n = len(raw.rows)
    x = np.empty((n, N_FEATURES), dtype=np.float64)
    y = np.empty(n, dtype=np.int64)
    for i, row in enumerate(raw.rows):
        for j in range(N_FEATURES):
            col = raw.header[j]
            if j == GENDER_COL:
                x[i, j] = _parse_category(row[j], _GENDER_WORDS, i, col)
            else:
                x[i, j] = _parse_float(row[j], i, col)
        y[i] = _parse_category(row[N_FEATURES], _TARGET_WORDS, i, raw.header[N_FEATURES])
        if width == N_FEATURES + 2:
            twin = _parse_category(row[-1], _TARGET_WORDS, i, raw.header[-1])
            if twin != y[i]:
                raise DataError(f"row {i}: the two target columns disagree")

    glucose = x[:, GLUCOSE_COL]
    if not np.all((glucose == 0.0) | (glucose == 1.0)):
        x[:, GLUCOSE_COL] = (glucose > GLUCOSE_THRESHOLD).astype(np.float64)

    for name, (lo, hi) in _EXPECTED_RANGES.items():
        col = x[:, FEATURE_NAMES.index(name)]
        outside = int(np.count_nonzero((col < lo) | (col > hi)))
        if outside:
            logger.warning("%d %s values outside [%g, %g]", outside, name, lo, hi)
    return Dataset(x, y, FEATURE_NAMES)


def load_dataset(path: str | Path) -> Dataset:
    return encode(load_csv(path))


def fit_normalizer(train: Dataset) -> NormalizationParams:
    if len(train) == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    mins = train.features.min(axis=0)
    maxs = train.features.max(axis=0)
    return NormalizationParams(tuple(map(float, mins)), tuple(map(float, maxs)))


def apply_normalizer(data: Dataset, params: NormalizationParams) -> Dataset:
    """Min-max scale every feature into [0, 1].

    Values outside the fitted range are clamped; a constant feature maps to 0.
    """
    if data.n_features != len(params.mins):
        raise DataError(
            f"dataset has {data.n_features} features, normalizer has {len(params.mins)}"
        )
    lo = np.asarray(params.mins)
    span = np.asarray(params.maxs) - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (data.features - lo) / safe, 0.0)
    return Dataset(np.clip(scaled, 0.0, 1.0), data.labels, data.feature_names)


def split_indices(n: int, spec: SplitSpec, labels: Sequence[int] | None = None):
    """Return ``(train_idx, test_idx)`` for ``n`` rows.

    The training fold holds ``floor(n * train_fraction)`` rows.
    """
    if n < 2:
        raise DataError(f"need at least 2 records to split, got {n}")
    n_train = int(math.floor(n * spec.train_fraction))
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        if labels is None:
            raise ValueError("stratified split needs labels")
        labels = np.asarray(labels)
        classes = np.unique(labels)
        members = {c: np.flatnonzero(labels == c) for c in classes}
        exact = {c: len(members[c]) * spec.train_fraction for c in classes}
        quota = {c: int(math.floor(exact[c])) for c in classes}
        # hand leftover slots to the largest fractional parts
        order = sorted(classes, key=lambda c: (-(exact[c] - quota[c]), c))
        for c in order[: n_train - sum(quota.values())]:
            quota[c] += 1
        train_parts, test_parts = [], []
        for c in classes:
            idx = members[c]
            if spec.shuffle:
                idx = rng.permutation(idx)
            train_parts.append(idx[: quota[c]])
            test_parts.append(idx[quota[c]:])
        train = np.concatenate(train_parts)
        test = np.concatenate(test_parts)
        if spec.shuffle:
            train, test = rng.permutation(train), rng.permutation(test)
        return train, test
    order = rng.permutation(n) if spec.shuffle else np.arange(n)
    return order[:n_train], order[n_train:]


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(len(data), spec, data.labels)
    return data.subset(train_idx), data.subset(test_idx)


def class_counts(data: Dataset) -> tuple[int, int]:
    positives = int(np.count_nonzero(data.labels == 1))
    return positives, len(data) - positives


def make_blobs(n: int = 200, seed: int = 0, n_features: int = 2,
               separation: float = 8.0) -> Dataset:
    """Two isotropic unit-variance Gaussian blobs, one per class.

    Class 1 is centered at ``separation`` along every axis, class 0 at the
    origin; half the points (rounded down) are class 0.
    """
    rng = np.random.default_rng(seed)
    n0 = n // 2
    labels = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n - n0, dtype=np.int64)]
    x = rng.standard_normal((n, n_features)) + labels[:, None] * separation
    perm = rng.permutation(n)
    names = tuple(f"x{i}" for i in range(n_features))
    return Dataset(x[perm], labels[perm], names)


def make_xor() -> Dataset:
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    return Dataset(x, np.array([0, 1, 1, 0]), ("x0", "x1"))


def write_csv(data: Dataset, path: str | Path) -> None:
    raw = data.to_raw()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(raw.header)
        writer.writerows(raw.rows)


__all__ = [
    "FEATURE_NAMES", "RawTable", "PatientRecord", "Dataset", "NormalizationParams",
    "SplitSpec", "load_csv", "encode", "load_dataset", "fit_normalizer",
    "apply_normalizer", "split", "split_indices", "class_counts", "make_blobs",
    "make_xor", "write_csv",
]
