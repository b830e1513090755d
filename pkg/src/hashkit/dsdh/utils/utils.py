from typing import Any, Dict

import numpy as np
import numpy.typing as npt


def filter_parameters(parameters: Dict[str, Any]) -> Dict[str, Any]:
    """
    Filter out the parameters that were not supplied.

    Command-line flags default to None so that only the flags a user actually
    passed override the values read from a run configuration file.

    Args:
        parameters (dict): A dictionary of candidate overrides.

    Returns:
        dict: A dictionary containing only the overrides that carry a value.
    """
    parameters = {
        key: value for key, value in parameters.items() if value is not None
    }

    return parameters


def sign(values: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """
    Elementwise sign with sgn(0) := +1.

    Args:
        values (ArrayLike): Real values.

    Returns:
        NDArray[np.float64]: An array of the same shape with entries in {-1, +1}.
    """
    array = np.asarray(values, dtype=np.float64)
    return np.where(array >= 0.0, 1.0, -1.0)
