import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt

from src.hashkit.dsdh.exceptions import DataFormatError, ShapeError
from src.hashkit.dsdh.services.numkernel import Matrix
from src.hashkit.dsdh.utils import SplitMix64

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"DSDD"
DATASET_VERSION = 1
_HEADER = np.dtype([("version", "<u4"), ("d", "<u4"), ("n", "<u4"), ("c", "<u4")])

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LabelMatrix:
    """
    Multi-hot label matrix, c x N, entries in {0, 1}.

    Every column carries at least one label; an item may belong to several
    classes.
    """

    data: Matrix

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError("Labels must be a c x N matrix", data.shape)
        bad = np.flatnonzero((data != 0.0) & (data != 1.0))
        if bad.size:
            row, col = np.unravel_index(bad[0], data.shape)
            raise DataFormatError(
                f"Label entry ({row}, {col}) is {data[row, col]!r}, expected 0 or 1"
            )
        empty = np.flatnonzero(data.sum(axis=0) == 0.0)
        if empty.size:
            raise DataFormatError(f"Item {int(empty[0])} has no label set")
        object.__setattr__(self, "data", data)

    @property
    def classes(self) -> int:
        return int(self.data.shape[0])

    @property
    def items(self) -> int:
        return int(self.data.shape[1])

    def first_class(self) -> npt.NDArray[np.int64]:
        """Index of the first set class of every item."""
        return np.argmax(self.data > 0.0, axis=0).astype(np.int64)


@dataclass(frozen=True)
class Dataset:
    """
    Feature matrix X (d x N) with its labels and item identifiers.
    """

    features: Matrix
    labels: LabelMatrix
    ids: npt.NDArray[np.uint64] = field(default_factory=lambda: np.zeros(0, np.uint64))

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ShapeError("Features must be a d x N matrix", features.shape)
        if features.shape[1] != self.labels.items:
            raise ShapeError(
                "Feature and label item counts differ",
                features.shape,
                self.labels.data.shape,
            )
        ids = np.asarray(self.ids, dtype=np.uint64)
        if ids.size == 0 and features.shape[1] > 0:
            ids = np.arange(features.shape[1], dtype=np.uint64)
        if ids.shape != (features.shape[1],):
            raise ShapeError("One id per item is required", ids.shape, features.shape)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "ids", ids)

    @property
    def dim(self) -> int:
        return int(self.features.shape[0])

    @property
    def size(self) -> int:
        return int(self.features.shape[1])

    @property
    def classes(self) -> int:
        return self.labels.classes

    def subset(self, indices: npt.ArrayLike) -> "Dataset":
        """
        Return the items at ``indices`` (ids are carried over).

        Args:
            indices (ArrayLike): Positions into this dataset.

        Returns:
            Dataset: A new dataset holding copies of the selected columns.
        """
        index = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[:, index],
            labels=LabelMatrix(self.labels.data[:, index]),
            ids=self.ids[index],
        )


class SimilarityOracle:
    """
    Pairwise similarity derived from labels: s_ij = 1 iff items i and j share
    at least one class.
    """

    def __init__(self, labels: LabelMatrix) -> None:
        self.labels = labels

    @property
    def size(self) -> int:
        return self.labels.items

    def similar(self, i: int, j: int) -> int:
        n = self.size
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"Pair ({i}, {j}) out of range for {n} items")
        data = self.labels.data
        return int(np.any((data[:, i] > 0.0) & (data[:, j] > 0.0)))

    def matrix(
        self,
        rows: Optional[npt.ArrayLike] = None,
        cols: Optional[npt.ArrayLike] = None,
    ) -> Matrix:
        """
        Dense block of the similarity matrix.

        Args:
            rows (Optional[ArrayLike]): Item indices for the rows (all when None).
            cols (Optional[ArrayLike]): Item indices for the columns (rows when None).

        Returns:
            Matrix: A {0, 1} float matrix of shape len(rows) x len(cols).
        """
        data = self.labels.data
        left = data if rows is None else data[:, np.asarray(rows, dtype=np.int64)]
        if cols is None:
            right = left
        else:
            right = data[:, np.asarray(cols, dtype=np.int64)]
        return (left.T @ right > 0.0).astype(np.float64)


def similar(oracle: SimilarityOracle, i: int, j: int) -> int:
    """
    Pairwise label s_ij for items i and j.

    Args:
        oracle (SimilarityOracle): Similarity source.
        i (int): First item index.
        j (int): Second item index.

    Returns:
        int: 1 when the items share a class, otherwise 0.
    """
    return oracle.similar(i, j)


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension affine map to zero mean and unit variance."""

    mean: npt.NDArray[np.float64]
    scale: npt.NDArray[np.float64]

    @classmethod
    def fit(cls, features: Matrix) -> "Standardizer":
        mean = features.mean(axis=1)
        scale = features.std(axis=1)
        # Constant dimensions pass through unscaled.
        scale = np.where(scale > 0.0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(mean=np.zeros(dim), scale=np.ones(dim))

    def apply(self, features: Matrix) -> Matrix:
        if features.shape[0] != self.mean.shape[0]:
            raise ShapeError(
                "Feature dimension does not match the standardizer",
                features.shape,
                self.mean.shape,
            )
        return np.ascontiguousarray(
            (features - self.mean[:, None]) / self.scale[:, None]
        )


###############################################################################
### Parsing
###############################################################################
def _read_csv_rows(path: PathLike, integer: bool) -> List[List[float]]:
    rows: List[List[float]] = []
    width: Optional[int] = None
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            values: List[float] = []
            for token in line.split(","):
                token = token.strip()
                try:
                    values.append(float(int(token)) if integer else float(token))
                except ValueError:
                    raise DataFormatError(
                        f"Cannot parse {token!r} in {path}", line=line_number
                    ) from None
            if integer and any(value not in (0.0, 1.0) for value in values):
                raise DataFormatError(
                    f"Label entries must be 0 or 1 in {path}", line=line_number
                )
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(
                    f"Expected {width} values, found {len(values)} in {path}",
                    line=line_number,
                )
            if not integer and not all(np.isfinite(values)):
                raise DataFormatError(
                    f"Non-finite feature value in {path}", line=line_number
                )
            rows.append(values)
    if not rows:
        raise DataFormatError(f"No data rows in {path}")
    return rows


def _read_binary(path: PathLike) -> Tuple[Matrix, Matrix]:
    payload = Path(path).read_bytes()
    header_size = len(DATASET_MAGIC) + _HEADER.itemsize
    if len(payload) < header_size:
        raise DataFormatError(f"Truncated header in {path}", offset=len(payload))
    if payload[:4] != DATASET_MAGIC:
        raise DataFormatError(f"Bad magic {payload[:4]!r} in {path}", offset=0)

    header = np.frombuffer(payload, dtype=_HEADER, count=1, offset=4)[0]
    version, d, n, c = (int(header[name]) for name in ("version", "d", "n", "c"))
    if version != DATASET_VERSION:
        raise DataFormatError(f"Unsupported dataset version {version}", offset=4)

    # Item-major records: n rows of d float64, then n rows of c label bytes.
    feature_record = 8 * d
    feature_bytes = n * feature_record
    available = len(payload) - header_size
    if available < feature_bytes:
        record = available // feature_record + 1 if feature_record else 1
        raise DataFormatError(
            f"Truncated feature block in {path} (declared {n} records)",
            record=record,
            offset=header_size + (record - 1) * feature_record,
        )
    label_start = header_size + feature_bytes
    available = len(payload) - label_start
    if available < n * c:
        record = available // c + 1 if c else 1
        raise DataFormatError(
            f"Truncated label block in {path} (declared {n} records)",
            record=record,
            offset=label_start + (record - 1) * c,
        )
    if available > n * c:
        raise DataFormatError(
            f"Trailing bytes in {path}", offset=label_start + n * c
        )

    features = np.frombuffer(
        payload, dtype="<f8", count=n * d, offset=header_size
    ).reshape(n, d)
    labels = np.frombuffer(
        payload, dtype=np.uint8, count=n * c, offset=label_start
    ).reshape(n, c)
    bad = np.flatnonzero(labels > 1)
    if bad.size:
        raise DataFormatError(
            f"Label byte {int(labels.flat[bad[0]])} is not 0 or 1 in {path}",
            record=int(bad[0]) // max(c, 1) + 1,
            offset=label_start + int(bad[0]),
        )
    return (
        np.ascontiguousarray(features.T, dtype=np.float64),
        np.ascontiguousarray(labels.T, dtype=np.float64),
    )


def load_dataset(
    features_path: PathLike,
    labels_path: Optional[PathLike] = None,
    format: str = "csv",
) -> Dataset:
    """
    Load a dataset from CSV files or a single binary file.

    Args:
        features_path (PathLike): CSV of d floats per item, or the binary file.
        labels_path (Optional[PathLike]): CSV of c {0, 1} ints per item.
            Ignored for the binary format, which holds both blocks.
        format (str): "csv" or "binary".

    Returns:
        Dataset: The validated dataset; ids are 0..N-1.
    """
    if format == "binary":
        features, labels = _read_binary(features_path)
    elif format == "csv":
        if labels_path is None:
            raise DataFormatError("A labels file is required for the csv format")
        feature_rows = _read_csv_rows(features_path, integer=False)
        label_rows = _read_csv_rows(labels_path, integer=True)
        if len(feature_rows) != len(label_rows):
            raise DataFormatError(
                f"Feature file has {len(feature_rows)} items, "
                f"label file has {len(label_rows)}"
            )
        features = np.array(feature_rows, dtype=np.float64).reshape(len(feature_rows), -1).T
        labels = np.array(label_rows, dtype=np.float64).reshape(len(label_rows), -1).T
    else:
        raise ValueError(f"Unknown dataset format {format!r}")

    dataset = Dataset(features=features, labels=LabelMatrix(labels))
    logger.info(
        "Loaded dataset d=%d N=%d c=%d from %s",
        dataset.dim,
        dataset.size,
        dataset.classes,
        features_path,
    )
    return dataset


def load_features(path: PathLike, format: str = "csv") -> Matrix:
    """
    Load only a feature matrix (d x N).

    Args:
        path (PathLike): CSV features file or binary dataset file.
        format (str): "csv" or "binary".

    Returns:
        Matrix: The features, one column per item.
    """
    if format == "binary":
        return _read_binary(path)[0]
    if format != "csv":
        raise ValueError(f"Unknown dataset format {format!r}")
    rows = _read_csv_rows(path, integer=False)
    return np.ascontiguousarray(np.array(rows, dtype=np.float64).reshape(len(rows), -1).T)


def load_labels(path: PathLike, format: str = "csv") -> LabelMatrix:
    """
    Load only a label matrix (c x N).

    Args:
        path (PathLike): CSV labels file or binary dataset file.
        format (str): "csv" or "binary".

    Returns:
        LabelMatrix: The validated labels.
    """
    if format == "binary":
        return LabelMatrix(_read_binary(path)[1])
    if format != "csv":
        raise ValueError(f"Unknown dataset format {format!r}")
    rows = _read_csv_rows(path, integer=True)
    return LabelMatrix(np.array(rows, dtype=np.float64).reshape(len(rows), -1).T)


def save_dataset(dataset: Dataset, path: PathLike) -> None:
    """
    Write a dataset in the binary format.

    Args:
        dataset (Dataset): The dataset to write.
        path (PathLike): Destination file.
    """
    header = np.array(
        [(DATASET_VERSION, dataset.dim, dataset.size, dataset.classes)], dtype=_HEADER
    )
    with open(path, "wb") as handle:
        handle.write(DATASET_MAGIC)
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(dataset.features.T, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(dataset.labels.data.T, dtype=np.uint8).tobytes())


###############################################################################
### Splitting
###############################################################################
def _class_members(dataset: Dataset) -> List[npt.NDArray[np.int64]]:
    first = dataset.labels.first_class()
    return [np.flatnonzero(first == k) for k in range(dataset.classes)]


def split(
    dataset: Dataset,
    queries_per_class: int,
    train_per_class: int,
    seed: int,
) -> Tuple[Dataset, Dataset]:
    """
    Draw disjoint per-class query and training samples.

    Items are grouped by their first set class.

    Args:
        dataset (Dataset): The full dataset.
        queries_per_class (int): Queries drawn from every class.
        train_per_class (int): Training items drawn from every class.
        seed (int): Seed of the SplitMix64 stream driving the draw.

    Returns:
        Tuple[Dataset, Dataset]: (train, query), each in ascending item order.
    """
    rng = SplitMix64(seed).generator()
    needed = queries_per_class + train_per_class
    query_index: List[int] = []
    train_index: List[int] = []

    for label, members in enumerate(_class_members(dataset)):
        if members.size < needed:
            raise DataFormatError(
                f"Class {label} has {members.size} items, "
                f"{needed} are needed ({queries_per_class} query + {train_per_class} train)"
            )
        chosen = rng.permutation(members)
        query_index.extend(chosen[:queries_per_class].tolist())
        train_index.extend(chosen[queries_per_class:needed].tolist())

    train = dataset.subset(np.sort(np.array(train_index, dtype=np.int64)))
    query = dataset.subset(np.sort(np.array(query_index, dtype=np.int64)))
    logger.info("Split dataset into %d train and %d query items", train.size, query.size)
    return train, query


def split_remainder(
    dataset: Dataset, queries_per_class: int, seed: int
) -> Tuple[Dataset, Dataset]:
    """
    Draw per-class queries and keep every other item for training.

    Args:
        dataset (Dataset): The full dataset.
        queries_per_class (int): Queries drawn from every class.
        seed (int): Seed of the SplitMix64 stream driving the draw.

    Returns:
        Tuple[Dataset, Dataset]: (train, query).
    """
    rng = SplitMix64(seed).generator()
    query_index: List[int] = []

    for label, members in enumerate(_class_members(dataset)):
        if members.size < queries_per_class:
            raise DataFormatError(
                f"Class {label} has {members.size} items, "
                f"{queries_per_class} queries are needed"
            )
        query_index.extend(rng.permutation(members)[:queries_per_class].tolist())

    query_mask = np.zeros(dataset.size, dtype=bool)
    query_mask[np.array(query_index, dtype=np.int64)] = True
    train = dataset.subset(np.flatnonzero(~query_mask))
    query = dataset.subset(np.flatnonzero(query_mask))
    logger.info("Split dataset into %d train and %d query items", train.size, query.size)
    return train, query


class DataService:
    """
    Dataset access bound to a file format and split protocol.

    Args:
        format (str): Dataset file format, "csv" or "binary".
        seed (int): Seed used for splitting.
    """

    def __init__(self, format: str = "csv", seed: int = 0) -> None:
        self.format = format
        self.seed = seed

    def load(
        self, features_path: PathLike, labels_path: Optional[PathLike] = None
    ) -> Dataset:
        return load_dataset(features_path, labels_path, self.format)

    def split(
        self,
        dataset: Dataset,
        queries_per_class: int,
        train_per_class: Optional[int] = None,
    ) -> Tuple[Dataset, Dataset]:
        """
        Split with the configured seed.

        Args:
            dataset (Dataset): The full dataset.
            queries_per_class (int): Queries drawn from every class.
            train_per_class (Optional[int]): Training items per class; when
                None every non-query item is used for training.

        Returns:
            Tuple[Dataset, Dataset]: (train, query).
        """
        if train_per_class is None:
            return split_remainder(dataset, queries_per_class, self.seed)
        return split(dataset, queries_per_class, train_per_class, self.seed)

    def oracle(self, dataset: Dataset) -> SimilarityOracle:
        return SimilarityOracle(dataset.labels)

    def database(
        self, train: Dataset, query: Dataset, include_queries: bool = False
    ) -> Dataset:
        """
        Items that make up the retrieval database.

        Args:
            train (Dataset): Training items (always indexed).
            query (Dataset): Query items.
            include_queries (bool): Append the queries after the training items.

        Returns:
            Dataset: The database items in insertion order.
        """
        if not include_queries:
            return train
        return Dataset(
            features=np.concatenate([train.features, query.features], axis=1),
            labels=LabelMatrix(np.concatenate([train.labels.data, query.labels.data], axis=1)),
            ids=np.concatenate([train.ids, query.ids]),
        )
