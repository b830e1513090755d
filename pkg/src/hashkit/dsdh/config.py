"""
Flat ``key = value`` run configuration.

One key per line; ``#`` starts a comment; blank lines are ignored. Unknown
keys are rejected. Missing keys take the defaults of :class:`RunConfig`
(mu = 1, nu = 0.1, eta = 55).
"""

import os
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from src.hashkit.dsdh.exceptions import ConfigError
from src.hashkit.dsdh.services.objective import Hyperparams
from src.hashkit.dsdh.services.solver import Schedule, Variant

THREADS_ENV = "DSDH_THREADS"


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _widths(text: str) -> Tuple[int, ...]:
    if not text.strip():
        return ()
    return tuple(int(part) for part in text.split(","))


def _optional_int(text: str) -> Optional[int]:
    return None if text.lower() in ("", "auto", "none") else int(text)


def _optional_str(text: str) -> Optional[str]:
    return text or None


def _format(text: str) -> str:
    if text not in ("csv", "binary"):
        raise ValueError(f"format must be csv or binary, got {text!r}")
    return text


def _activation(text: str) -> str:
    if text not in ("relu", "tanh"):
        raise ValueError(f"activation must be relu or tanh, got {text!r}")
    return text


def _variant(text: str) -> str:
    return Variant(text).value


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a training / encoding / evaluation run."""

    mu: float = 1.0
    nu: float = 0.1
    eta: float = 55.0
    bits: int = 12
    hidden: Tuple[int, ...] = (64, 64)
    activation: str = "relu"
    epochs: int = 50
    batch_size: int = 32
    steps_per_epoch: Optional[int] = None
    learning_rate: float = 0.01
    lr_decay: float = 0.5
    dcc_max_sweeps: int = 10
    variant: str = "full"
    seed: int = 0
    standardize: bool = True
    format: str = "csv"
    features_path: Optional[str] = None
    labels_path: Optional[str] = None
    model_path: Optional[str] = None
    threads: int = 0

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(mu=self.mu, nu=self.nu, eta=self.eta, K=self.bits)

    def schedule(self) -> Schedule:
        return Schedule(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            dcc_max_sweeps=self.dcc_max_sweeps,
            steps_per_epoch=self.steps_per_epoch,
        )

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """
        Replace fields, rejecting unknown names.

        Args:
            overrides (Dict[str, Any]): Field values; filter out None first.

        Returns:
            RunConfig: The updated configuration.
        """
        for key in overrides:
            if key not in _PARSERS:
                raise ConfigError(f"Unknown configuration key {key!r}", key=key)
        return _validated(replace(self, **overrides))


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "mu": float,
    "nu": float,
    "eta": float,
    "bits": int,
    "hidden": _widths,
    "activation": _activation,
    "epochs": int,
    "batch_size": int,
    "steps_per_epoch": _optional_int,
    "learning_rate": float,
    "lr_decay": float,
    "dcc_max_sweeps": int,
    "variant": _variant,
    "seed": int,
    "standardize": _bool,
    "format": _format,
    "features_path": _optional_str,
    "labels_path": _optional_str,
    "model_path": _optional_str,
    "threads": int,
}


def _validated(config: RunConfig) -> RunConfig:
    try:
        config.hyperparams()
        config.schedule()
    except ValueError as error:
        raise ConfigError(f"Invalid configuration: {error}") from None
    if config.threads < 0:
        raise ConfigError("threads must be >= 0", key="threads")
    return config


def parse_config_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """
    Parse configuration text.

    Args:
        text (str): ``key = value`` lines.
        base (Optional[RunConfig]): Defaults to start from.

    Returns:
        RunConfig: The parsed configuration.
    """
    values: Dict[str, Any] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        # Trailing comments need whitespace before the "#"
        line = re.split(r"\s#", line, maxsplit=1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {line_number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        parser = _PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"Line {line_number}: unknown configuration key {key!r}", key=key)
        try:
            values[key] = parser(value)
        except ValueError as error:
            raise ConfigError(f"Line {line_number}: bad value for {key!r}: {error}", key=key) from None
    return (base or RunConfig()).with_overrides(values)


def load_config(path: Union[str, Path], environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    Read a configuration file and apply ``DSDH_THREADS``.

    Relative dataset and model paths are resolved against the file's folder.

    Args:
        path (Union[str, Path]): Configuration file.
        environ (Optional[Dict[str, str]]): Environment (os.environ when None).

    Returns:
        RunConfig: The configuration.
    """
    source = Path(path)
    config = parse_config_text(source.read_text(encoding="utf-8"))
    config = config.with_overrides(threads_override(environ))

    resolved: Dict[str, Any] = {}
    for key in ("features_path", "labels_path", "model_path"):
        value = getattr(config, key)
        if value is not None and not Path(value).is_absolute():
            resolved[key] = str(source.parent / value)
    return config.with_overrides(resolved)


def threads_override(environ: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    """
    Read the worker cap from ``DSDH_THREADS`` (0 means automatic).

    Args:
        environ (Optional[Dict[str, str]]): Environment (os.environ when None).

    Returns:
        Dict[str, Any]: {"threads": n} when the variable is set, else {}.
    """
    env = os.environ if environ is None else environ
    raw = env.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return {}
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}", key=THREADS_ENV) from None
    if threads < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0, got {threads}", key=THREADS_ENV)
    return {"threads": threads}
