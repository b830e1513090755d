"""
Trained hashing model and its binary file format.

Layout (little-endian): magic "DSDH"; ten uint32 fields (version, d,
feature_dim, K, c, hidden layer count, activation, variant, has codes, code
count); the layer widths as uint32; then float64 blocks in order: mean (d),
scale (d), every hidden layer's weight (row-major) and bias, M, n, W; and
finally, when present, the packed training codes (uint64 words).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import numpy.typing as npt

from src.hashkit.dsdh.exceptions import DataFormatError, ShapeError
from src.hashkit.dsdh.services.data import Standardizer
from src.hashkit.dsdh.services.encoder import (
    ACTIVATIONS,
    EncoderParams,
    HashLayer,
    Layer,
    forward,
)
from src.hashkit.dsdh.services.numkernel import Matrix
from src.hashkit.dsdh.services.retrieval import pack_columns, unpack_columns, word_count
from src.hashkit.dsdh.utils import sign

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"DSDH"
MODEL_VERSION = 1
VARIANTS = ("full", "A", "B", "C")
_HEADER = np.dtype(
    [
        (name, "<u4")
        for name in (
            "version",
            "d",
            "feature_dim",
            "K",
            "c",
            "hidden",
            "activation",
            "variant",
            "has_codes",
            "n_codes",
        )
    ]
)


@dataclass(frozen=True)
class HashModel:
    """Everything needed to hash new items, plus the training codes."""

    params: EncoderParams
    hash_layer: HashLayer
    W: Matrix
    standardizer: Standardizer
    variant: str = "full"
    B: Optional[Matrix] = None

    @property
    def bits(self) -> int:
        return self.hash_layer.bits

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    @property
    def classes(self) -> int:
        return int(self.W.shape[1])

    def outputs(self, features: Matrix) -> Matrix:
        """
        Continuous hash outputs h for raw (unstandardized) features.

        Args:
            features (Matrix): d x N features.

        Returns:
            Matrix: K x N outputs.
        """
        if features.shape[0] != self.input_dim:
            raise ShapeError("Feature dimension does not match the model", features.shape, (self.input_dim,))
        return forward(self.params, self.hash_layer, self.standardizer.apply(features))[1]

    def encode(self, features: Matrix) -> Matrix:
        """Binary codes sgn(h) (sgn(0) := +1), K x N."""
        return sign(self.outputs(features))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HashModel):
            return NotImplemented
        return _to_bytes(self) == _to_bytes(other)

    __hash__ = None  # type: ignore[assignment]


def _to_bytes(model: HashModel) -> bytes:
    params = model.params
    has_codes = model.B is not None
    header = np.zeros(1, dtype=_HEADER)
    header[0] = (
        MODEL_VERSION,
        params.input_dim,
        params.feature_dim,
        model.bits,
        model.classes,
        len(params.layers),
        ACTIVATIONS.index(params.activation),
        VARIANTS.index(model.variant),
        int(has_codes),
        model.B.shape[1] if model.B is not None else 0,
    )
    blocks = [
        MODEL_MAGIC,
        header.tobytes(),
        np.asarray(params.widths(), dtype="<u4").tobytes(),
        np.asarray(model.standardizer.mean, dtype="<f8").tobytes(),
        np.asarray(model.standardizer.scale, dtype="<f8").tobytes(),
    ]
    for layer in params.layers:
        blocks.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        blocks.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    blocks.append(np.ascontiguousarray(model.hash_layer.M, dtype="<f8").tobytes())
    blocks.append(np.ascontiguousarray(model.hash_layer.n, dtype="<f8").tobytes())
    blocks.append(np.ascontiguousarray(model.W, dtype="<f8").tobytes())
    if model.B is not None:
        blocks.append(np.ascontiguousarray(pack_columns(model.B), dtype="<u8").tobytes())
    return b"".join(blocks)


def save_model(model: HashModel, path: Union[str, Path]) -> None:
    """
    Write a model file.

    Args:
        model (HashModel): The model.
        path (Union[str, Path]): Destination file.
    """
    Path(path).write_bytes(_to_bytes(model))
    logger.info("Wrote model K=%d to %s", model.bits, path)


class _Reader:
    def __init__(self, payload: bytes, path: Union[str, Path]) -> None:
        self.payload = payload
        self.path = path
        self.offset = 0

    def take(self, dtype: npt.DTypeLike, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.payload):
            raise DataFormatError(f"Truncated model file {self.path}", offset=self.offset)
        values = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return values

    def floats(self, *shape: int) -> Matrix:
        count = int(np.prod(shape)) if shape else 1
        return self.take("<f8", count).astype(np.float64).reshape(shape)


def load_model(path: Union[str, Path]) -> HashModel:
    """
    Read a model file.

    Args:
        path (Union[str, Path]): Source file.

    Returns:
        HashModel: The model, bit-identical to the one saved.
    """
    payload = Path(path).read_bytes()
    if payload[:4] != MODEL_MAGIC:
        raise DataFormatError(f"{path} is not a model file", offset=0)
    reader = _Reader(payload, path)
    reader.offset = len(MODEL_MAGIC)
    fields = reader.take(_HEADER, 1)[0]
    if int(fields["version"]) != MODEL_VERSION:
        raise DataFormatError(f"Unsupported model version {int(fields['version'])}", offset=4)
    if int(fields["activation"]) >= len(ACTIVATIONS) or int(fields["variant"]) >= len(VARIANTS):
        raise DataFormatError(f"Corrupt model header in {path}", offset=4)

    d, K, c = int(fields["d"]), int(fields["K"]), int(fields["c"])
    widths = reader.take("<u4", int(fields["hidden"]) + 1).astype(int).tolist()
    if widths[0] != d or widths[-1] != int(fields["feature_dim"]):
        raise DataFormatError(f"Layer widths disagree with header in {path}", offset=4)

    standardizer = Standardizer(mean=reader.floats(d), scale=reader.floats(d))
    layers: List[Layer] = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        layers.append(Layer(weight=reader.floats(fan_out, fan_in), bias=reader.floats(fan_out)))
    params = EncoderParams(
        layers=tuple(layers),
        activation=ACTIVATIONS[int(fields["activation"])],
        input_dim=d,
    )
    hash_layer = HashLayer(M=reader.floats(widths[-1], K), n=reader.floats(K))
    W = reader.floats(K, c)

    B: Optional[Matrix] = None
    if int(fields["has_codes"]):
        n_codes = int(fields["n_codes"])
        words = reader.take("<u8", n_codes * word_count(K)).astype(np.uint64)
        B = unpack_columns(words.reshape(n_codes, word_count(K)), K)
    if reader.offset != len(payload):
        raise DataFormatError(f"Trailing bytes in model file {path}", offset=reader.offset)

    return HashModel(
        params=params,
        hash_layer=hash_layer,
        W=W,
        standardizer=standardizer,
        variant=VARIANTS[int(fields["variant"])],
        B=B,
    )
