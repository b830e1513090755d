import numpy as np
from numpy.testing import assert_array_equal

from src.hashkit.dsdh.utils import SplitMix64, filter_parameters, sign


def test_filter_parameters_drops_none() -> None:
    """
    Test that only supplied overrides survive.
    """
    parameters = {"epochs": 3, "seed": None, "variant": "A", "bits": None}
    assert filter_parameters(parameters) == {"epochs": 3, "variant": "A"}


def test_sign_maps_zero_to_plus_one() -> None:
    """
    Test sgn(0) := +1.
    """
    assert_array_equal(sign([-2.0, -0.0, 0.0, 3.5]), [-1.0, 1.0, 1.0, 1.0])


def test_splitmix_reference_value() -> None:
    """
    Test the first output of the stream seeded with 0.
    """
    assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF


def test_splitmix_generators_are_reproducible() -> None:
    """
    Test that equal seeds hand out identical generators.
    """
    first = SplitMix64(42)
    second = SplitMix64(42)
    for _ in range(3):
        assert_array_equal(first.generator().random(5), second.generator().random(5))


def test_splitmix_children_differ() -> None:
    """
    Test that successive child generators are independent streams.
    """
    stream = SplitMix64(7)
    assert not np.array_equal(stream.generator().random(5), stream.generator().random(5))
