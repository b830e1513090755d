from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.hashkit.dsdh.exceptions import DataFormatError
from src.hashkit.dsdh.services.data import Standardizer
from src.hashkit.dsdh.services.encoder import init_encoder
from src.hashkit.dsdh.services.model import HashModel, load_model, save_model
from src.hashkit.dsdh.utils import sign


def _model(seed: int, hidden: tuple[int, ...], activation: str, with_codes: bool) -> HashModel:
    rng = np.random.default_rng(seed)
    params, hash_layer = init_encoder([5, *hidden, 70], activation, rng=rng)
    return HashModel(
        params=params,
        hash_layer=hash_layer,
        W=rng.normal(size=(70, 3)),
        standardizer=Standardizer(mean=rng.normal(size=5), scale=rng.uniform(0.5, 2.0, size=5)),
        variant="C",
        B=sign(rng.normal(size=(70, 9))) if with_codes else None,
    )


@pytest.mark.parametrize(
    "hidden, activation, with_codes",
    [((8, 4), "relu", True), ((), "tanh", False), ((3,), "tanh", True)],
)
def test_model_file_round_trip(
    tmp_path: Path, hidden: tuple[int, ...], activation: str, with_codes: bool
) -> None:
    """
    Test that a saved model loads back bit-identical.

    Args:
        tmp_path (Path): Pytest temporary directory.
        hidden (tuple[int, ...]): Hidden layer widths.
        activation (str): Hidden nonlinearity.
        with_codes (bool): Whether the training codes are stored.
    """
    model = _model(0, hidden, activation, with_codes)
    path = tmp_path / "model.dsdh"

    save_model(model, path)
    loaded = load_model(path)

    # Assertions
    assert loaded == model
    assert loaded.variant == "C"
    assert loaded.params.activation == activation
    if with_codes:
        assert loaded.B is not None and model.B is not None
        assert_array_equal(loaded.B, model.B)
    else:
        assert loaded.B is None
    save_model(loaded, tmp_path / "again.dsdh")
    assert (tmp_path / "again.dsdh").read_bytes() == path.read_bytes()


def test_encode_matches_sign_of_outputs() -> None:
    """
    Test that encode is sgn of the continuous outputs.
    """
    model = _model(1, (4,), "relu", False)
    features = np.random.default_rng(2).normal(size=(5, 11))

    assert_array_equal(model.encode(features), sign(model.outputs(features)))


def test_models_with_different_weights_differ() -> None:
    """
    Test the byte-level equality.
    """
    assert _model(1, (4,), "relu", True) != _model(2, (4,), "relu", True)


def test_bad_magic_is_rejected(tmp_path: Path) -> None:
    """
    Test that a foreign file is refused.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    path = tmp_path / "model.dsdh"
    path.write_bytes(b"DSDC" + bytes(60))

    with pytest.raises(DataFormatError):
        load_model(path)


def test_truncated_model_is_rejected(tmp_path: Path) -> None:
    """
    Test that a model cut short fails with a byte offset.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    path = tmp_path / "model.dsdh"
    save_model(_model(3, (4,), "relu", True), path)
    path.write_bytes(path.read_bytes()[:-9])

    with pytest.raises(DataFormatError) as error:
        load_model(path)

    assert error.value.offset is not None
