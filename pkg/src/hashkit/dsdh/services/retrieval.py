"""
Bit-packed binary codes and exhaustive Hamming ranking.

A K-bit code occupies ceil(K / 64) little-endian uint64 words. Bit i (word
i // 64, position i % 64) is set when entry i is +1; bits at index >= K are
zero. For codes a and b, hamming(a, b) = popcount(a XOR b) = (K - <a, b>) / 2.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from src.hashkit.dsdh.exceptions import CodeError, DataFormatError, ShapeError
from src.hashkit.dsdh.services.numkernel import Matrix

logger = logging.getLogger(__name__)

CODES_MAGIC = b"DSDC"
CODES_VERSION = 1
_HEADER = np.dtype([("version", "<u4"), ("K", "<u4"), ("n", "<u4")])

Words = npt.NDArray[np.uint64]

_S55 = np.uint64(0x5555555555555555)
_S33 = np.uint64(0x3333333333333333)
_S0F = np.uint64(0x0F0F0F0F0F0F0F0F)
_S01 = np.uint64(0x0101010101010101)
_SHIFT = np.uint64(56)


def bit_count64(words: Words) -> npt.NDArray[np.int64]:
    """
    SWAR popcount of every uint64 in ``words``.

    Args:
        words (NDArray[np.uint64]): Any shape.

    Returns:
        NDArray[np.int64]: Set-bit counts with the same shape.
    """
    arr = np.asarray(words, dtype=np.uint64)
    arr = arr - ((arr >> np.uint64(1)) & _S55)
    arr = (arr & _S33) + ((arr >> np.uint64(2)) & _S33)
    arr = (arr + (arr >> np.uint64(4))) & _S0F
    return ((arr * _S01) >> _SHIFT).astype(np.int64)


def word_count(K: int) -> int:
    return (K + 63) // 64


def _check_codes(values: npt.NDArray[np.float64]) -> None:
    bad = np.flatnonzero((values != 1.0) & (values != -1.0))
    if bad.size:
        raise CodeError(int(bad[0]), float(values.flat[bad[0]]))


def pack_columns(B: Matrix) -> Words:
    """
    Pack every column of a K x N {-1, +1} matrix.

    Args:
        B (Matrix): Codes, one per column.

    Returns:
        NDArray[np.uint64]: N x ceil(K / 64) words.
    """
    codes = np.asarray(B, dtype=np.float64)
    if codes.ndim != 2:
        raise ShapeError("Expected a K x N code matrix", codes.shape)
    _check_codes(codes.T)
    K, n = codes.shape
    words = word_count(K)
    bits = np.zeros((n, words * 64), dtype=np.uint8)
    bits[:, :K] = codes.T > 0.0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64).reshape(n, words)


def unpack_columns(words: Words, K: int) -> Matrix:
    """
    Inverse of :func:`pack_columns`.

    Args:
        words (NDArray[np.uint64]): N x ceil(K / 64) words.
        K (int): Code length.

    Returns:
        Matrix: K x N {-1, +1} codes.
    """
    array = np.ascontiguousarray(words, dtype="<u8")
    raw = array.view(np.uint8).reshape(array.shape[0], array.shape[1] * 8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :K]
    return np.where(bits.T > 0, 1.0, -1.0)


@dataclass(frozen=True)
class PackedCode:
    """A single K-bit code."""

    K: int
    words: Words

    def __post_init__(self) -> None:
        words = np.asarray(self.words, dtype=np.uint64).ravel()
        if words.size != word_count(self.K):
            raise ShapeError("Word count does not match K", words.shape, (word_count(self.K),))
        tail = self.K % 64
        if tail and int(words[-1]) >> tail:
            raise ValueError("Padding bits beyond K must be zero")
        object.__setattr__(self, "words", words)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PackedCode):
            return NotImplemented
        return self.K == other.K and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.K, self.words.tobytes()))


def pack(b: npt.ArrayLike) -> PackedCode:
    """
    Pack a {-1, +1} vector.

    Args:
        b (ArrayLike): Length-K code.

    Returns:
        PackedCode: The packed code; padding bits are zero.
    """
    vector = np.asarray(b, dtype=np.float64).ravel()
    _check_codes(vector)
    return PackedCode(K=vector.size, words=pack_columns(vector[:, None])[0])


def unpack(code: PackedCode) -> npt.NDArray[np.float64]:
    return unpack_columns(code.words[None, :], code.K)[:, 0]


def hamming(a: PackedCode, b: PackedCode) -> int:
    """
    Number of differing bits.

    Args:
        a (PackedCode): First code.
        b (PackedCode): Second code.

    Returns:
        int: popcount(a XOR b).
    """
    if a.K != b.K:
        raise ShapeError("Code lengths differ", (a.K,), (b.K,))
    return int(bit_count64(a.words ^ b.words).sum())


class CodeDatabase:
    """
    Immutable array of packed codes with unique item ids.

    Args:
        K (int): Code length.
        ids (ArrayLike): Item ids in insertion order.
        words (NDArray[np.uint64]): N x ceil(K / 64) packed codes.
    """

    def __init__(self, K: int, ids: npt.ArrayLike, words: Words) -> None:
        self.K = int(K)
        self.ids = np.array(ids, dtype=np.uint64).ravel()
        self.words = np.array(words, dtype=np.uint64, order="C")
        if self.words.ndim != 2 or self.words.shape != (self.ids.size, word_count(self.K)):
            raise ShapeError("Code array does not match ids and K", self.words.shape, self.ids.shape)
        if np.unique(self.ids).size != self.ids.size:
            raise ValueError("Database ids must be unique")
        tail = self.K % 64
        if tail and self.ids.size and np.any(self.words[:, -1] >> np.uint64(tail)):
            raise ValueError("Padding bits beyond K must be zero")
        self.words.setflags(write=False)
        self.ids.setflags(write=False)

    @classmethod
    def from_codes(cls, B: Matrix, ids: Optional[npt.ArrayLike] = None) -> "CodeDatabase":
        """
        Build a database from a K x N {-1, +1} matrix.

        Args:
            B (Matrix): Codes, one per column.
            ids (Optional[ArrayLike]): Item ids (0..N-1 when None).

        Returns:
            CodeDatabase: The packed database.
        """
        codes = np.asarray(B, dtype=np.float64)
        if ids is None:
            ids = np.arange(codes.shape[1], dtype=np.uint64)
        return cls(codes.shape[0], ids, pack_columns(codes))

    def __len__(self) -> int:
        return int(self.ids.size)

    def code(self, position: int) -> PackedCode:
        return PackedCode(self.K, self.words[position])

    def codes(self) -> Matrix:
        return unpack_columns(self.words, self.K)

    def distances(self, query: PackedCode) -> npt.NDArray[np.int64]:
        """Hamming distance from ``query`` to every item, in insertion order."""
        if query.K != self.K:
            raise ShapeError("Query code length differs from the database", (query.K,), (self.K,))
        return bit_count64(self.words ^ query.words[None, :]).sum(axis=1)

    def rank(self, query: PackedCode) -> List[Tuple[int, int]]:
        """
        Every item ordered by ascending distance; ties keep insertion order.

        Args:
            query (PackedCode): The query code.

        Returns:
            List[Tuple[int, int]]: (id, distance) pairs.
        """
        distances = self.distances(query)
        order = np.argsort(distances, kind="stable")
        return list(zip(self.ids[order].tolist(), distances[order].tolist()))

    def within_radius(self, query: PackedCode, r: int) -> List[Tuple[int, int]]:
        """
        Items with distance <= r, in insertion order.

        Args:
            query (PackedCode): The query code.
            r (int): Hamming radius.

        Returns:
            List[Tuple[int, int]]: (id, distance) pairs.
        """
        if r > self.K:
            raise ValueError(f"Radius {r} exceeds code length {self.K}")
        distances = self.distances(query)
        hits = np.flatnonzero(distances <= r)
        return list(zip(self.ids[hits].tolist(), distances[hits].tolist()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CodeDatabase):
            return NotImplemented
        return (
            self.K == other.K
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.words, other.words)
        )

    __hash__ = None  # type: ignore[assignment]


def rank(db: CodeDatabase, query: PackedCode) -> List[Tuple[int, int]]:
    return db.rank(query)


def within_radius(db: CodeDatabase, query: PackedCode, r: int) -> List[Tuple[int, int]]:
    return db.within_radius(query, r)


def _record_dtype(K: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("words", "<u8", (word_count(K),))])


def save_database(db: CodeDatabase, path: Union[str, Path]) -> None:
    """
    Write a database in the DSDC format.

    Args:
        db (CodeDatabase): The database.
        path (Union[str, Path]): Destination file.
    """
    header = np.array([(CODES_VERSION, db.K, len(db))], dtype=_HEADER)
    records = np.zeros(len(db), dtype=_record_dtype(db.K))
    records["id"] = db.ids
    records["words"] = db.words
    with open(path, "wb") as handle:
        handle.write(CODES_MAGIC)
        handle.write(header.tobytes())
        handle.write(records.tobytes())


def load_database(path: Union[str, Path]) -> CodeDatabase:
    """
    Read a database in the DSDC format.

    Args:
        path (Union[str, Path]): Source file.

    Returns:
        CodeDatabase: The database.
    """
    payload = Path(path).read_bytes()
    header_size = len(CODES_MAGIC) + _HEADER.itemsize
    if len(payload) < header_size or payload[:4] != CODES_MAGIC:
        raise DataFormatError(f"{path} is not a code database", offset=0)
    header = np.frombuffer(payload, dtype=_HEADER, count=1, offset=4)[0]
    version, K, n = int(header["version"]), int(header["K"]), int(header["n"])
    if version != CODES_VERSION:
        raise DataFormatError(f"Unsupported code database version {version}", offset=4)
    dtype = _record_dtype(K)
    if len(payload) - header_size != n * dtype.itemsize:
        available = (len(payload) - header_size) // dtype.itemsize
        raise DataFormatError(
            f"Code database {path} declares {n} records",
            record=min(available, n) + 1,
            offset=header_size + available * dtype.itemsize,
        )
    records = np.frombuffer(payload, dtype=dtype, count=n, offset=header_size)
    words = np.asarray(records["words"], dtype=np.uint64).reshape(n, word_count(K))
    return CodeDatabase(K, np.asarray(records["id"], dtype=np.uint64), words)


class RetrievalService:
    """
    Ranking front end with an optional worker pool for many queries.

    Args:
        threads (int): Worker cap; 0 lets the executor decide.
    """

    def __init__(self, threads: int = 0) -> None:
        self.threads = threads

    def build(self, B: Matrix, ids: Optional[npt.ArrayLike] = None) -> CodeDatabase:
        return CodeDatabase.from_codes(B, ids)

    def map_queries(
        self, db: CodeDatabase, queries: Iterable[PackedCode]
    ) -> List[npt.NDArray[np.int64]]:
        """
        Distance vectors for many queries; results keep query order.

        Args:
            db (CodeDatabase): The database.
            queries (Iterable[PackedCode]): Query codes.

        Returns:
            List[NDArray[np.int64]]: One distance vector per query.
        """
        with ThreadPoolExecutor(max_workers=self.threads or None) as executor:
            return list(executor.map(db.distances, queries))

    def top(
        self, db: CodeDatabase, queries: Sequence[PackedCode], n: int
    ) -> List[List[Tuple[int, int]]]:
        """
        The first ``n`` ranked (id, distance) pairs for every query.

        Args:
            db (CodeDatabase): The database.
            queries (Sequence[PackedCode]): Query codes.
            n (int): How many neighbours to keep.

        Returns:
            List[List[Tuple[int, int]]]: Per-query ranked prefixes.
        """
        results = []
        for distances in self.map_queries(db, queries):
            order = np.argsort(distances, kind="stable")[:n]
            results.append(list(zip(db.ids[order].tolist(), distances[order].tolist())))
        return results
