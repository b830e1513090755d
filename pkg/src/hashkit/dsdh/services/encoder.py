"""
Feedforward encoder Theta(x; theta) and the hash layer h = M^T Theta + n.

Batches are column-major in the item sense: a batch of B inputs of dimension
d is a d x B matrix, and every layer computes ``z = weight @ a + bias``.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from src.hashkit.dsdh.exceptions import ShapeError
from src.hashkit.dsdh.services.numkernel import Matrix

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class Layer:
    weight: Matrix
    bias: npt.NDArray[np.float64]

    @property
    def fan_in(self) -> int:
        return int(self.weight.shape[1])

    @property
    def fan_out(self) -> int:
        return int(self.weight.shape[0])


@dataclass(frozen=True)
class EncoderParams:
    """
    Hidden layers of the encoder; ``feature_dim`` is the width of Theta.

    With no hidden layers the encoder is the identity map and
    ``feature_dim`` equals the input dimension.
    """

    layers: Tuple[Layer, ...]
    activation: str
    input_dim: int

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation {self.activation!r}")
        width = self.input_dim
        for index, layer in enumerate(self.layers):
            if layer.fan_in != width or layer.bias.shape != (layer.fan_out,):
                raise ShapeError(
                    f"Layer {index} does not chain", (width,), layer.weight.shape
                )
            width = layer.fan_out

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].fan_out if self.layers else self.input_dim

    def widths(self) -> List[int]:
        return [self.input_dim] + [layer.fan_out for layer in self.layers]


@dataclass(frozen=True)
class HashLayer:
    """M (feature_dim x K) and bias n (K,)."""

    M: Matrix
    n: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.M.ndim != 2 or self.M.shape[1] < 1 or self.n.shape != (self.M.shape[1],):
            raise ShapeError("Hash layer shapes disagree", self.M.shape, self.n.shape)

    @property
    def bits(self) -> int:
        return int(self.M.shape[1])


@dataclass(frozen=True)
class ForwardCache:
    """Inputs to every layer and their pre-activations, kept for backward."""

    params: EncoderParams
    hash_layer: HashLayer
    activations: Tuple[Matrix, ...]
    preactivations: Tuple[Matrix, ...]

    @property
    def features(self) -> Matrix:
        return self.activations[-1]


def _activate(z: Matrix, activation: str) -> Matrix:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(z: Matrix, a: Matrix, activation: str) -> Matrix:
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def init_encoder(
    shape: Sequence[int],
    activation: str = "relu",
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[EncoderParams, HashLayer]:
    """
    Initialise encoder and hash layer.

    Weights are uniform in +/- sqrt(6 / (fan_in + fan_out)); biases are zero.

    Args:
        shape (Sequence[int]): [input_dim, hidden widths..., K]. The last
            width is the code length; two entries mean no hidden layer.
        activation (str): "relu" or "tanh".
        seed (Optional[int]): Seed for a fresh generator.
        rng (Optional[np.random.Generator]): Generator to draw from instead.

    Returns:
        Tuple[EncoderParams, HashLayer]: Freshly initialised parameters.
    """
    widths = [int(width) for width in shape]
    if len(widths) < 2:
        raise ValueError(
            f"Encoder shape needs an input width and a code length, got {widths}"
        )
    if any(width < 1 for width in widths):
        raise ValueError(f"Encoder widths must be positive, got {widths}")
    if rng is None:
        rng = np.random.default_rng(seed)

    def draw(fan_in: int, fan_out: int) -> Matrix:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    layers = tuple(
        Layer(weight=draw(fan_in, fan_out), bias=np.zeros(fan_out))
        for fan_in, fan_out in zip(widths[:-2], widths[1:-1])
    )
    params = EncoderParams(layers=layers, activation=activation, input_dim=widths[0])
    feature_dim, bits = widths[-2], widths[-1]
    hash_layer = HashLayer(M=draw(feature_dim, bits).T.copy(), n=np.zeros(bits))
    return params, hash_layer


def forward(
    params: EncoderParams, hash_layer: HashLayer, x_batch: Matrix
) -> Tuple[Matrix, Matrix, ForwardCache]:
    """
    Run the encoder and the hash layer on a batch.

    Args:
        params (EncoderParams): Encoder parameters.
        hash_layer (HashLayer): M and n.
        x_batch (Matrix): Inputs, input_dim x batch.

    Returns:
        Tuple[Matrix, Matrix, ForwardCache]: Theta features
        (feature_dim x batch), raw hash outputs h (K x batch) and the cache.
    """
    if x_batch.ndim != 2 or x_batch.shape[0] != params.input_dim:
        raise ShapeError("Input batch does not match the encoder", x_batch.shape, (params.input_dim,))
    if hash_layer.M.shape[0] != params.feature_dim:
        raise ShapeError("Hash layer does not match the encoder", hash_layer.M.shape, (params.feature_dim,))

    activations = [np.asarray(x_batch, dtype=np.float64)]
    preactivations = []
    for layer in params.layers:
        z = layer.weight @ activations[-1] + layer.bias[:, None]
        preactivations.append(z)
        activations.append(_activate(z, params.activation))

    features = activations[-1]
    h_batch = hash_layer.M.T @ features + hash_layer.n[:, None]
    cache = ForwardCache(
        params=params,
        hash_layer=hash_layer,
        activations=tuple(activations),
        preactivations=tuple(preactivations),
    )
    return features, h_batch, cache


def backward(
    cache: ForwardCache,
    dF_dh: Matrix,
    dF_dfeatures: Optional[Matrix] = None,
) -> Tuple[EncoderParams, HashLayer]:
    """
    Back-propagate dF/dh through the hash layer and the encoder.

    dF/dM = Theta (dF/dh)^T and dF/dn = sum over the batch of dF/dh;
    dF/dTheta = M dF/dh then flows through the hidden layers.

    Args:
        cache (ForwardCache): The cache returned by :func:`forward`.
        dF_dh (Matrix): Gradient with respect to h, K x batch.
        dF_dfeatures (Optional[Matrix]): Extra gradient reaching Theta
            directly (feature_dim x batch), e.g. from an auxiliary head.

    Returns:
        Tuple[EncoderParams, HashLayer]: Gradients shaped like the parameters.
    """
    hash_layer = cache.hash_layer
    batch = cache.activations[0].shape[1]
    if dF_dh.shape != (hash_layer.bits, batch):
        raise ShapeError("dF/dh does not match the forward batch", dF_dh.shape, (hash_layer.bits, batch))

    features = cache.features
    grad_hash = HashLayer(M=features @ dF_dh.T, n=dF_dh.sum(axis=1))

    delta = hash_layer.M @ dF_dh
    if dF_dfeatures is not None:
        if dF_dfeatures.shape != delta.shape:
            raise ShapeError("dF/dTheta does not match the forward batch", dF_dfeatures.shape, delta.shape)
        delta = delta + dF_dfeatures

    params = cache.params
    grads: List[Layer] = []
    for index in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[index]
        dz = delta * _activation_grad(
            cache.preactivations[index], cache.activations[index + 1], params.activation
        )
        grads.append(Layer(weight=dz @ cache.activations[index].T, bias=dz.sum(axis=1)))
        delta = layer.weight.T @ dz
    grads.reverse()

    grad_params = EncoderParams(
        layers=tuple(grads), activation=params.activation, input_dim=params.input_dim
    )
    return grad_params, grad_hash


def apply_update(
    params: EncoderParams,
    hash_layer: HashLayer,
    grad_params: EncoderParams,
    grad_hash: HashLayer,
    learning_rate: float,
) -> Tuple[EncoderParams, HashLayer]:
    """
    One plain gradient-descent update, returning new parameter objects.

    Args:
        params (EncoderParams): Current encoder parameters.
        hash_layer (HashLayer): Current hash layer.
        grad_params (EncoderParams): Encoder gradients.
        grad_hash (HashLayer): Hash layer gradients.
        learning_rate (float): Step size.

    Returns:
        Tuple[EncoderParams, HashLayer]: Updated parameters.
    """
    layers = tuple(
        Layer(
            weight=layer.weight - learning_rate * grad.weight,
            bias=layer.bias - learning_rate * grad.bias,
        )
        for layer, grad in zip(params.layers, grad_params.layers)
    )
    updated = EncoderParams(
        layers=layers, activation=params.activation, input_dim=params.input_dim
    )
    updated_hash = HashLayer(
        M=hash_layer.M - learning_rate * grad_hash.M,
        n=hash_layer.n - learning_rate * grad_hash.n,
    )
    return updated, updated_hash


class EncoderService:
    """
    Encoder construction bound to a layer shape and activation.

    Args:
        hidden (Sequence[int]): Hidden layer widths.
        bits (int): Code length K.
        activation (str): "relu" or "tanh".
    """

    def __init__(self, hidden: Sequence[int], bits: int, activation: str = "relu") -> None:
        self.hidden = tuple(hidden)
        self.bits = bits
        self.activation = activation

    def shape(self, input_dim: int) -> List[int]:
        return [input_dim, *self.hidden, self.bits]

    def init(
        self, input_dim: int, rng: np.random.Generator
    ) -> Tuple[EncoderParams, HashLayer]:
        return init_encoder(self.shape(input_dim), self.activation, rng=rng)

    def hash(
        self, params: EncoderParams, hash_layer: HashLayer, x_batch: Matrix
    ) -> Matrix:
        """Raw hash outputs h for a batch (K x batch)."""
        return forward(params, hash_layer, x_batch)[1]
