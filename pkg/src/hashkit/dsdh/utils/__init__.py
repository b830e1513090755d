from .rng import SplitMix64
from .utils import filter_parameters, sign

__all__ = ["SplitMix64", "filter_parameters", "sign"]
