from typing import Optional, Sequence


class HashkitError(Exception):
    """Base class for every error raised by the hashing toolkit."""


class ShapeError(HashkitError, ValueError):
    """
    Raised when array dimensions do not agree.

    Args:
        message (str): What was being combined.
        shapes (Sequence[tuple]): The offending shapes, reported in order.
    """

    def __init__(self, message: str, *shapes: Sequence[int]) -> None:
        self.shapes = tuple(tuple(shape) for shape in shapes)
        rendered = " vs ".join(str(shape) for shape in self.shapes)
        super().__init__(f"{message}: {rendered}" if rendered else message)


class NotPositiveDefiniteError(HashkitError, ArithmeticError):
    """
    Raised when a Cholesky factorization breaks down.

    Args:
        pivot (int): Zero-based index of the first non-positive pivot.
    """

    def __init__(self, pivot: int) -> None:
        self.pivot = pivot
        super().__init__(
            f"Matrix is not positive definite: factorization failed at pivot {pivot}"
        )


class ConfigError(HashkitError):
    """
    Raised for unknown configuration keys or invalid values.

    Args:
        message (str): Description of the problem.
        key (Optional[str]): The configuration key involved.
    """

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        self.key = key
        super().__init__(message)


class DataFormatError(HashkitError):
    """
    Raised when a dataset, model or code file cannot be parsed.

    Args:
        message (str): Description of the problem.
        line (Optional[int]): One-based line number (text formats).
        offset (Optional[int]): Byte offset (binary formats).
        record (Optional[int]): One-based record number (binary formats).
    """

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        offset: Optional[int] = None,
        record: Optional[int] = None,
    ) -> None:
        self.line = line
        self.offset = offset
        self.record = record
        location = []
        if line is not None:
            location.append(f"line {line}")
        if record is not None:
            location.append(f"record {record}")
        if offset is not None:
            location.append(f"byte {offset}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


class DivergenceError(HashkitError, ArithmeticError):
    """
    Raised when training produces a non-finite objective.

    Args:
        epoch (int): Zero-based epoch in which the loss diverged.
        step (Optional[int]): Zero-based gradient step within the epoch.
    """

    def __init__(self, epoch: int, step: Optional[int] = None) -> None:
        self.epoch = epoch
        self.step = step
        where = f"epoch {epoch}" if step is None else f"epoch {epoch}, step {step}"
        super().__init__(f"Training diverged (non-finite loss) at {where}")


class CodeError(HashkitError, ValueError):
    """
    Raised when a binary code holds an entry other than -1 or +1.

    Args:
        index (int): Flat index of the first offending entry.
        value (float): The offending value.
    """

    def __init__(self, index: int, value: float) -> None:
        self.index = index
        self.value = value
        super().__init__(f"Code entry {index} is {value!r}, expected -1 or +1")
