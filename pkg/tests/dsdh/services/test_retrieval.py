from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.hashkit.dsdh.exceptions import CodeError, DataFormatError, ShapeError
from src.hashkit.dsdh.services.retrieval import (
    CodeDatabase,
    PackedCode,
    RetrievalService,
    bit_count64,
    hamming,
    load_database,
    pack,
    pack_columns,
    rank,
    save_database,
    unpack,
    within_radius,
)


def _random_codes(rng: np.random.Generator, K: int, n: int) -> np.ndarray:
    return np.where(rng.random((K, n)) < 0.5, -1.0, 1.0)


@pytest.fixture
def small_db() -> CodeDatabase:
    """
    Fixture returning four 4-bit codes with ids 10, 11, 12, 13.
    """
    B = np.array(
        [
            [1.0, 1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0, 1.0],
            [1.0, -1.0, -1.0, 1.0],
        ]
    )
    return CodeDatabase.from_codes(B, ids=[10, 11, 12, 13])


def test_pack_examples() -> None:
    """
    Test bit placement for K = 3 and the two words of K = 65.
    """
    assert pack([1, -1, 1]).words.tolist() == [5]
    assert pack(np.ones(65)).words.tolist() == [2**64 - 1, 1]
    assert pack(-np.ones(65)).words.tolist() == [0, 0]


def test_pack_rejects_non_binary_entries() -> None:
    """
    Test that a 0 entry is reported with its index.
    """
    with pytest.raises(CodeError) as error:
        pack([1.0, -1.0, 0.0])

    assert error.value.index == 2


def test_padding_bits_must_be_zero() -> None:
    """
    Test that a code with bits set beyond K is rejected.
    """
    with pytest.raises(ValueError):
        PackedCode(3, np.array([8], dtype=np.uint64))


def test_unpack_inverts_pack() -> None:
    """
    Test unpack(pack(b)) == b for several lengths.
    """
    rng = np.random.default_rng(0)
    for K in [1, 12, 63, 64, 65, 128, 130]:
        b = _random_codes(rng, K, 1)[:, 0]
        assert_array_equal(unpack(pack(b)), b)


def test_hamming_examples() -> None:
    """
    Test distance 0 to itself and K to the complement.
    """
    a = pack([1, 1, 1, 1])

    # Assertions
    assert hamming(a, a) == 0
    assert hamming(a, pack([-1, -1, -1, -1])) == 4
    assert hamming(a, pack([1, -1, 1, 1])) == 1
    with pytest.raises(ShapeError):
        hamming(a, pack([1, 1, 1]))


@pytest.mark.parametrize("K", [12, 48, 64, 65, 128])
def test_hamming_equals_inner_product_identity(K: int) -> None:
    """
    Test popcount(a XOR b) == (K - <a, b>) / 2 on 10^4 random pairs.

    Args:
        K (int): Code length.
    """
    rng = np.random.default_rng(K)
    left = _random_codes(rng, K, 10_000)
    right = _random_codes(rng, K, 10_000)

    distances = bit_count64(pack_columns(left) ^ pack_columns(right)).sum(axis=1)
    expected = (K - np.sum(left * right, axis=0)) / 2

    assert_array_equal(distances, expected.astype(np.int64))


def test_bit_count64() -> None:
    """
    Test the popcount on edge values.
    """
    words = np.array([0, 1, 2**64 - 1, 0x8000000000000000, 0xF0F0], dtype=np.uint64)
    assert bit_count64(words).tolist() == [0, 1, 64, 1, 8]


def test_hamming_is_a_metric() -> None:
    """
    Test symmetry and the triangle inequality on random triples.
    """
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b, c = (pack(_random_codes(rng, 20, 1)[:, 0]) for _ in range(3))
        assert hamming(a, b) == hamming(b, a)
        assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


def test_rank_keeps_insertion_order_on_ties(small_db: CodeDatabase) -> None:
    """
    Test ascending distances with ties broken by insertion order.

    Args:
        small_db (CodeDatabase): Four-item database.
    """
    ranked = rank(small_db, pack([1, 1, 1, 1]))

    assert ranked == [(10, 0), (11, 1), (13, 1), (12, 4)]


def test_rank_matches_naive_sort() -> None:
    """
    Test against a sort of exact distances on 100 random codes.
    """
    rng = np.random.default_rng(2)
    B = _random_codes(rng, 16, 100)
    db = CodeDatabase.from_codes(B)
    query = _random_codes(rng, 16, 1)[:, 0]

    naive = sorted(
        ((i, int(np.sum(B[:, i] != query))) for i in range(100)), key=lambda item: item[1]
    )

    assert rank(db, pack(query)) == naive


def test_within_radius(small_db: CodeDatabase) -> None:
    """
    Test the radius filter and its bounds.

    Args:
        small_db (CodeDatabase): Four-item database.
    """
    query = pack([1, 1, 1, 1])

    # Assertions
    assert within_radius(small_db, query, 0) == [(10, 0)]
    assert within_radius(small_db, query, 2) == [(10, 0), (11, 1), (13, 1)]
    assert len(within_radius(small_db, query, 4)) == 4
    with pytest.raises(ValueError):
        within_radius(small_db, query, 5)


def test_database_rejects_duplicate_ids() -> None:
    """
    Test that ids must be unique.
    """
    with pytest.raises(ValueError):
        CodeDatabase.from_codes(np.ones((4, 2)), ids=[7, 7])


def test_database_is_read_only(small_db: CodeDatabase) -> None:
    """
    Test that the packed arrays cannot be written.

    Args:
        small_db (CodeDatabase): Four-item database.
    """
    with pytest.raises(ValueError):
        small_db.words[0, 0] = np.uint64(0)


def test_database_file_round_trip(tmp_path: Path) -> None:
    """
    Test that the code database file preserves ids and codes.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    rng = np.random.default_rng(3)
    db = CodeDatabase.from_codes(_random_codes(rng, 70, 25), ids=rng.permutation(1000)[:25])
    path = tmp_path / "codes.dsdc"

    save_database(db, path)
    loaded = load_database(path)

    # Assertions
    assert loaded == db
    assert_array_equal(loaded.codes(), db.codes())


def test_truncated_database_file(tmp_path: Path) -> None:
    """
    Test that a short file names the first missing record.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    db = CodeDatabase.from_codes(np.ones((12, 5)))
    path = tmp_path / "codes.dsdc"
    save_database(db, path)
    path.write_bytes(path.read_bytes()[:-1])

    with pytest.raises(DataFormatError) as error:
        load_database(path)

    assert error.value.record == 5


def test_service_top_matches_rank(small_db: CodeDatabase) -> None:
    """
    Test that the threaded top-n agrees with sequential ranking.

    Args:
        small_db (CodeDatabase): Four-item database.
    """
    queries = [pack([1, 1, 1, 1]), pack([-1, -1, -1, -1])]
    top = RetrievalService(threads=2).top(small_db, queries, 2)

    assert top == [rank(small_db, query)[:2] for query in queries]


def test_empty_database_codes() -> None:
    """
    Test that a database without items unpacks to a K x 0 matrix.
    """
    db = CodeDatabase.from_codes(np.zeros((12, 0)))

    # Assertions
    assert len(db) == 0
    assert db.codes().shape == (12, 0)
