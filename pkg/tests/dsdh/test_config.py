import os
from pathlib import Path
from unittest.mock import patch

import pytest

from src.hashkit.dsdh.config import RunConfig, load_config, parse_config_text, threads_override
from src.hashkit.dsdh.exceptions import ConfigError


def test_defaults() -> None:
    """
    Test the default trade-off weights and code length.
    """
    config = parse_config_text("")
    hp = config.hyperparams()

    # Assertions
    assert (hp.mu, hp.nu, hp.eta, hp.K) == (1.0, 0.1, 55.0, 12)
    assert config.variant == "full"
    assert config.schedule().batch_size == 32


def test_parse_values_and_comments() -> None:
    """
    Test typed values, comments and blank lines.
    """
    config = parse_config_text(
        "# run\nmu = 0.5\n\nhidden = 32,16  # two layers\nvariant = B\nstandardize = no\n"
        "steps_per_epoch = auto\n"
    )

    # Assertions
    assert config.mu == 0.5
    assert config.hidden == (32, 16)
    assert config.variant == "B"
    assert config.standardize is False
    assert config.steps_per_epoch is None


def test_hash_inside_a_value_is_kept() -> None:
    """
    Test that only whole-line and whitespace-led comments are stripped.
    """
    config = parse_config_text(
        "# paths\nfeatures_path = data/run#2/features.csv\nlabels_path = labels.csv # trailing\n"
    )

    # Assertions
    assert config.features_path == "data/run#2/features.csv"
    assert config.labels_path == "labels.csv"


def test_unknown_key_is_named() -> None:
    """
    Test that a misspelt key is rejected with its name.
    """
    with pytest.raises(ConfigError) as error:
        parse_config_text("learnig_rate = 0.1\n")

    assert error.value.key == "learnig_rate"
    assert "learnig_rate" in str(error.value)


@pytest.mark.parametrize(
    "text", ["bits = twelve\n", "variant = D\n", "mu = -1\n", "epochs\n", "format = json\n"]
)
def test_bad_values_are_rejected(text: str) -> None:
    """
    Test malformed lines and out-of-range values.

    Args:
        text (str): Configuration text.
    """
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_with_overrides_rejects_unknown_fields() -> None:
    """
    Test that programmatic overrides follow the same key check.
    """
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"learnig_rate": 0.1})
    assert RunConfig().with_overrides({"epochs": 3}).epochs == 3


def test_load_config_resolves_relative_paths(tmp_path: Path) -> None:
    """
    Test that data and model paths are taken relative to the config file.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    path = tmp_path / "run.cfg"
    path.write_text("features_path = features.csv\nmodel_path = /abs/model.dsdh\n")

    config = load_config(path, environ={})

    # Assertions
    assert config.features_path == str(tmp_path / "features.csv")
    assert config.model_path == "/abs/model.dsdh"


def test_threads_from_environment(tmp_path: Path) -> None:
    """
    Test that DSDH_THREADS caps the worker count.

    Args:
        tmp_path (Path): Pytest temporary directory.
    """
    path = tmp_path / "run.cfg"
    path.write_text("threads = 2\n")

    with patch.dict(os.environ, {"DSDH_THREADS": "3"}):
        assert load_config(path).threads == 3
    with patch.dict(os.environ, {}, clear=True):
        assert load_config(path).threads == 2


def test_bad_thread_count() -> None:
    """
    Test that a non-numeric DSDH_THREADS is a configuration error.
    """
    with pytest.raises(ConfigError):
        threads_override({"DSDH_THREADS": "many"})
    assert threads_override({}) == {}
