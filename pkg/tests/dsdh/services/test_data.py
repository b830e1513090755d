from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.hashkit.dsdh.exceptions import DataFormatError, ShapeError
from src.hashkit.dsdh.services.data import (
    DataService,
    Dataset,
    LabelMatrix,
    SimilarityOracle,
    Standardizer,
    load_dataset,
    load_features,
    load_labels,
    save_dataset,
    similar,
    split,
    split_remainder,
)


def _one_hot(classes: np.ndarray, c: int) -> np.ndarray:
    labels = np.zeros((c, classes.size))
    labels[classes, np.arange(classes.size)] = 1.0
    return labels


@pytest.fixture
def toy_csv(tmp_path: Path) -> tuple[Path, Path]:
    """
    Fixture writing a 4 item, 2 feature, 2 class CSV dataset.

    Args:
        tmp_path (Path): Pytest temporary directory.

    Returns:
        tuple[Path, Path]: Paths of the features and labels files.
    """
    features = tmp_path / "features.csv"
    labels = tmp_path / "labels.csv"
    features.write_text("# toy set\n1.0,2.0\n3.0,4.0\n\n-1.5,0.0\n2.5,1e-3\n")
    labels.write_text("1,0\n0,1\n1,1\n0,1\n")
    return features, labels


@pytest.fixture
def ten_classes() -> Dataset:
    """
    Fixture returning 600 items in each of 10 classes.
    """
    rng = np.random.default_rng(0)
    classes = np.repeat(np.arange(10), 600)
    return Dataset(
        features=rng.normal(size=(2, classes.size)),
        labels=LabelMatrix(_one_hot(classes, 10)),
    )


def test_load_csv(toy_csv: tuple[Path, Path]) -> None:
    """
    Test that the CSV loader yields d=2, N=4, c=2.

    Args:
        toy_csv (tuple[Path, Path]): Features and labels paths.
    """
    dataset = load_dataset(*toy_csv)

    # Assertions
    assert (dataset.dim, dataset.size, dataset.classes) == (2, 4, 2)
    assert_array_equal(dataset.features[:, 2], [-1.5, 0.0])
    assert_array_equal(dataset.labels.data[:, 2], [1.0, 1.0])
    assert_array_equal(dataset.ids, np.arange(4, dtype=np.uint64))


def test_load_features_and_labels_separately(toy_csv: tuple[Path, Path]) -> None:
    """
    Test the single-matrix loaders.

    Args:
        toy_csv (tuple[Path, Path]): Features and labels paths.
    """
    features_path, labels_path = toy_csv
    assert load_features(features_path).shape == (2, 4)
    assert load_labels(labels_path).classes == 2


def test_label_outside_zero_one_is_rejected(tmp_path: Path) -> None:
    """
    Test that a label entry of 2 fails with the line number.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    features = tmp_path / "features.csv"
    labels = tmp_path / "labels.csv"
    features.write_text("1.0\n2.0\n3.0\n")
    labels.write_text("1,0\n0,2\n1,0\n")

    with pytest.raises(DataFormatError) as error:
        load_dataset(features, labels)

    assert error.value.line == 2


def test_ragged_csv_is_rejected(tmp_path: Path) -> None:
    """
    Test that a row of the wrong width fails with its line number.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    features = tmp_path / "features.csv"
    features.write_text("1.0,2.0\n3.0\n")

    with pytest.raises(DataFormatError) as error:
        load_features(features)

    assert error.value.line == 2


def test_item_counts_must_agree(tmp_path: Path) -> None:
    """
    Test that features and labels with different item counts are rejected.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    features = tmp_path / "features.csv"
    labels = tmp_path / "labels.csv"
    features.write_text("1.0\n2.0\n")
    labels.write_text("1\n")

    with pytest.raises(DataFormatError):
        load_dataset(features, labels)


def test_item_without_label_is_rejected() -> None:
    """
    Test that every item needs at least one label.
    """
    with pytest.raises(DataFormatError):
        LabelMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_dataset_shape_mismatch() -> None:
    """
    Test that features and labels must have the same item count.
    """
    with pytest.raises(ShapeError):
        Dataset(features=np.zeros((2, 3)), labels=LabelMatrix(np.ones((1, 2))))


def test_binary_round_trip_is_bit_exact(tmp_path: Path) -> None:
    """
    Test that writing then reading a binary dataset preserves every bit.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    rng = np.random.default_rng(3)
    features = rng.normal(size=(5, 7)) * 1e6
    features[0, 0] = -0.0
    labels = _one_hot(rng.integers(0, 3, size=7), 3)
    labels[:, 0] = 1.0
    dataset = Dataset(features=features, labels=LabelMatrix(labels))
    path = tmp_path / "set.dsdd"

    save_dataset(dataset, path)
    loaded = load_dataset(path, format="binary")

    # Assertions
    assert loaded.features.tobytes() == dataset.features.tobytes()
    assert_array_equal(loaded.labels.data, dataset.labels.data)


def test_binary_truncation_names_record(tmp_path: Path) -> None:
    """
    Test that a file declaring 10 records but holding 9 fails at record 10.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    d = 3
    dataset = Dataset(
        features=np.arange(3 * 10, dtype=float).reshape(d, 10),
        labels=LabelMatrix(np.ones((1, 10))),
    )
    path = tmp_path / "set.dsdd"
    save_dataset(dataset, path)
    header_size = 4 + 16
    path.write_bytes(path.read_bytes()[: header_size + 9 * 8 * d])

    with pytest.raises(DataFormatError) as error:
        load_dataset(path, format="binary")

    assert error.value.record == 10


def test_binary_bad_magic(tmp_path: Path) -> None:
    """
    Test that a foreign file is rejected at offset 0.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    path = tmp_path / "set.dsdd"
    path.write_bytes(b"XXXX" + bytes(16))

    with pytest.raises(DataFormatError) as error:
        load_dataset(path, format="binary")

    assert error.value.offset == 0


def test_similar_examples() -> None:
    """
    Test s_ij on disjoint, single-class and overlapping label sets.
    """
    labels = LabelMatrix(
        np.array(
            [
                [1.0, 0.0, 1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 1.0],
            ]
        )
    )
    oracle = SimilarityOracle(labels)

    # Assertions
    assert similar(oracle, 0, 1) == 0
    assert similar(oracle, 0, 2) == 1
    assert similar(oracle, 1, 3) == 1
    assert similar(oracle, 3, 4) == 0
    with pytest.raises(IndexError):
        similar(oracle, 0, 5)


def test_similarity_is_symmetric_and_reflexive() -> None:
    """
    Test symmetry and reflexivity exhaustively on a random multi-label set.
    """
    rng = np.random.default_rng(11)
    data = (rng.random((4, 30)) < 0.3).astype(float)
    data[rng.integers(0, 4, size=30), np.arange(30)] = 1.0
    oracle = SimilarityOracle(LabelMatrix(data))
    dense = oracle.matrix()

    for i in range(30):
        assert oracle.similar(i, i) == 1
        for j in range(30):
            assert oracle.similar(i, j) == oracle.similar(j, i) == dense[i, j]


def test_split_sizes_and_disjointness(ten_classes: Dataset) -> None:
    """
    Test q=100, t=500 on 10 classes of 600 items.

    Args:
        ten_classes (Dataset): 6000 item dataset.
    """
    train, query = split(ten_classes, 100, 500, seed=1)

    # Assertions
    assert query.size == 1000
    assert train.size == 5000
    assert not set(train.ids.tolist()) & set(query.ids.tolist())
    assert_array_equal(query.labels.data.sum(axis=1), np.full(10, 100.0))


def test_split_is_deterministic(ten_classes: Dataset) -> None:
    """
    Test that equal seeds give identical splits and different seeds do not.

    Args:
        ten_classes (Dataset): 6000 item dataset.
    """
    first = split(ten_classes, 100, 500, seed=1)
    second = split(ten_classes, 100, 500, seed=1)
    other = split(ten_classes, 100, 500, seed=2)

    # Assertions
    assert_array_equal(first[0].ids, second[0].ids)
    assert_array_equal(first[1].ids, second[1].ids)
    assert not np.array_equal(first[1].ids, other[1].ids)


def test_split_names_short_class(ten_classes: Dataset) -> None:
    """
    Test that a class with too few items is reported by index.

    Args:
        ten_classes (Dataset): 6000 item dataset.
    """
    with pytest.raises(DataFormatError, match="Class 0 has 600 items"):
        split(ten_classes, 100, 501, seed=1)


def test_split_remainder(ten_classes: Dataset) -> None:
    """
    Test that every non-query item lands in the training set.

    Args:
        ten_classes (Dataset): 6000 item dataset.
    """
    train, query = split_remainder(ten_classes, 100, seed=4)

    # Assertions
    assert query.size == 1000
    assert train.size == 5000
    assert set(train.ids.tolist()) | set(query.ids.tolist()) == set(range(6000))


def test_data_service_database(ten_classes: Dataset) -> None:
    """
    Test that queries are appended to the database only on request.

    Args:
        ten_classes (Dataset): 6000 item dataset.
    """
    service = DataService(seed=5)
    train, query = service.split(ten_classes, 10, 50)

    # Assertions
    assert service.database(train, query) is train
    combined = service.database(train, query, include_queries=True)
    assert combined.size == train.size + query.size
    assert_array_equal(combined.ids[train.size :], query.ids)


def test_standardizer() -> None:
    """
    Test zero mean and unit variance after fitting, constant rows untouched.
    """
    rng = np.random.default_rng(9)
    features = rng.normal(loc=3.0, scale=5.0, size=(3, 200))
    features[2] = 7.0
    standardizer = Standardizer.fit(features)
    scaled = standardizer.apply(features)

    # Assertions
    assert_allclose(scaled.mean(axis=1), 0.0, atol=1e-12)
    assert_allclose(scaled[:2].std(axis=1), 1.0)
    assert_array_equal(scaled[2], 0.0)


@pytest.mark.parametrize("text", ["", "# header only\n\n# nothing else\n"])
def test_csv_without_rows_is_rejected(tmp_path: Path, text: str) -> None:
    """
    Test that an empty or comment-only CSV is a data format error.

    Args:
        tmp_path (Path): Pytest temporary directory.
        text (str): File contents.
    """
    features = tmp_path / "features.csv"
    labels = tmp_path / "labels.csv"
    features.write_text(text)
    labels.write_text(text)

    with pytest.raises(DataFormatError):
        load_features(features)
    with pytest.raises(DataFormatError):
        load_labels(labels)
    with pytest.raises(DataFormatError):
        load_dataset(features, labels)
