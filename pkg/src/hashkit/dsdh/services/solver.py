"""
Alternating minimization of the relaxed hashing objective.

Each epoch runs minibatch gradient descent on the encoder (B and W fixed),
then the closed-form classifier update and discrete cyclic coordinate
descent on the codes (encoder fixed). The ablation variants reuse the same
steps with parts switched off.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from src.hashkit.dsdh.exceptions import DivergenceError, ShapeError
from src.hashkit.dsdh.services.data import Dataset, SimilarityOracle, Standardizer
from src.hashkit.dsdh.services.encoder import (
    EncoderParams,
    EncoderService,
    HashLayer,
    apply_update,
    backward,
    forward,
)
from src.hashkit.dsdh.services.model import HashModel
from src.hashkit.dsdh.services.numkernel import Matrix, solve_spd
from src.hashkit.dsdh.services.objective import (
    Hyperparams,
    PairSet,
    TermBreakdown,
    classification_grads,
    classification_loss,
    dense_breakdown,
    grad_h_all,
    pairwise_grad,
    pairwise_nll,
)
from src.hashkit.dsdh.utils import SplitMix64, sign

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    """
    FULL: pairwise + classification on the codes.
    A: pairwise term only.
    B: two streams, classification head on the encoder features.
    C: classification on the continuous outputs.
    """

    FULL = "full"
    A = "A"
    B = "B"
    C = "C"


@dataclass(frozen=True)
class Schedule:
    """
    Optimizer schedule.

    ``steps_per_epoch`` of None means one pass over the training set. The
    learning rate is multiplied by ``lr_decay`` every quarter of the epochs.
    """

    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.01
    lr_decay: float = 0.5
    dcc_max_sweeps: int = 10
    steps_per_epoch: Optional[int] = None

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1 or self.dcc_max_sweeps < 1:
            raise ValueError("batch_size and dcc_max_sweeps must be at least 1")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError(f"steps_per_epoch must be at least 1, got {self.steps_per_epoch}")
        if self.learning_rate < 0.0 or not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("learning_rate must be >= 0 and lr_decay in (0, 1]")

    def learning_rate_at(self, epoch: int) -> float:
        period = max(1, self.epochs // 4)
        return self.learning_rate * self.lr_decay ** (epoch // period)

    def steps_for(self, n: int) -> int:
        if self.steps_per_epoch is not None:
            return self.steps_per_epoch
        return max(1, math.ceil(n / self.batch_size))


@dataclass(frozen=True)
class TrainState:
    """
    Everything the alternation updates.

    H holds the outputs of the last full forward pass over the training set;
    B always has entries in {-1, +1}. ``head`` is the auxiliary classifier
    over encoder features used by the two-stream variant.
    """

    params: EncoderParams
    hash_layer: HashLayer
    W: Matrix
    B: Matrix
    H: Matrix
    rng: np.random.Generator
    epoch: int = 0
    head: Optional[Matrix] = None

    def __post_init__(self) -> None:
        K = self.hash_layer.bits
        if self.B.shape != self.H.shape or self.B.shape[0] != K or self.W.shape[0] != K:
            raise ShapeError("Train state shapes disagree", self.W.shape, self.B.shape, self.H.shape)


def code_objective(B: Matrix, W: Matrix, Y: Matrix, H: Matrix, hp: Hyperparams) -> float:
    """
    The code sub-problem mu ||Y - W^T B||^2 + nu ||W||^2 + eta ||B - H||^2.

    Args:
        B (Matrix): Codes, K x N.
        W (Matrix): Classifier, K x c.
        Y (Matrix): Labels, c x N.
        H (Matrix): Continuous outputs, K x N.
        hp (Hyperparams): mu, nu and eta.

    Returns:
        float: The objective value.
    """
    residual = Y - W.T @ B
    gap = B - H
    return float(
        hp.mu * np.sum(residual * residual)
        + hp.nu * np.sum(W * W)
        + hp.eta * np.sum(gap * gap)
    )


def h_step(
    state: TrainState,
    dataset: Dataset,
    oracle: SimilarityOracle,
    hp: Hyperparams,
    schedule: Schedule,
    variant: Variant = Variant.FULL,
) -> TrainState:
    """
    Minibatch gradient descent on the encoder and hash layer.

    Pairs are all unordered pairs inside each batch. The minimized surrogate
    is (J_batch + w items_batch) / b, where J_batch is the pairwise loss of
    the batch and items_batch its per-item terms. The weight
    w = (b - 1) / (N - 1) is the share of an item's N - 1 partners present
    in the batch (at least one partner is assumed), which keeps the balance
    between pairwise and per-item terms of the full objective.
    W and B are not touched; H is refreshed over the whole training set.

    Args:
        state (TrainState): Current state.
        dataset (Dataset): Training items (already standardized).
        oracle (SimilarityOracle): Source of s_ij for the training items.
        hp (Hyperparams): mu, nu and eta.
        schedule (Schedule): Batch size, step count and learning rate.
        variant (Variant): Selects the per-item terms.

    Returns:
        TrainState: State with updated parameters and H.
    """
    X = dataset.features
    Y = dataset.labels.data
    n = dataset.size
    learning_rate = schedule.learning_rate_at(state.epoch)

    params, hash_layer, head = state.params, state.hash_layer, state.head
    order = state.rng.permutation(n)
    position = 0

    for step in range(schedule.steps_for(n)):
        # Start a fresh permutation once the current one is used up
        if position >= n:
            order = state.rng.permutation(n)
            position = 0
        index = order[position : position + schedule.batch_size]
        position += schedule.batch_size
        size = index.size
        item_weight = max(size - 1, 1) / max(n - 1, 1)

        # Forward pass and the batch's pair list
        features, h_batch, cache = forward(params, hash_layer, X[:, index])
        pairs = PairSet.within(oracle.matrix(index))
        codes = state.B[:, index]
        labels = Y[:, index]
        grad_features: Optional[Matrix] = None
        grad_head: Optional[Matrix] = None

        # Per-item terms of the variant on top of the pairwise likelihood
        if variant is Variant.C:
            gap = codes - sign(h_batch)
            items = hp.mu * classification_loss(state.W, h_batch, labels) + hp.eta * float(np.sum(gap * gap))
            grad_h = pairwise_grad(h_batch, pairs) + item_weight * hp.mu * classification_grads(
                state.W, h_batch, labels
            )[0]
        else:
            gap = codes - h_batch
            items = hp.eta * float(np.sum(gap * gap))
            grad_h = grad_h_all(h_batch, codes, pairs, hp, item_weight)

        if variant is Variant.B and head is not None:
            items += hp.mu * classification_loss(head, features, labels)
            head_features, head_weights = classification_grads(head, features, labels)
            grad_features = item_weight * hp.mu * head_features / size
            grad_head = item_weight * hp.mu * head_weights / size

        # Raise an exception if the surrogate is no longer finite
        loss = (pairwise_nll(h_batch, pairs) + item_weight * items) / size
        if not math.isfinite(loss):
            raise DivergenceError(state.epoch, step)

        # Backpropagate and take one plain gradient step
        grad_params, grad_hash = backward(cache, grad_h / size, grad_features)
        params, hash_layer = apply_update(params, hash_layer, grad_params, grad_hash, learning_rate)
        if grad_head is not None and head is not None:
            head = head - learning_rate * grad_head

    H = forward(params, hash_layer, X)[1]
    if not np.all(np.isfinite(H)):
        raise DivergenceError(state.epoch)
    return replace(state, params=params, hash_layer=hash_layer, H=H, head=head)


def w_step(
    state: TrainState, Y: Matrix, hp: Hyperparams, use_outputs: bool = False
) -> TrainState:
    """
    Closed-form classifier W = (B B^T + (nu / mu) I)^-1 B Y^T.

    Args:
        state (TrainState): Current state.
        Y (Matrix): Labels, c x N.
        hp (Hyperparams): mu must be positive.
        use_outputs (bool): Regress on H instead of B.

    Returns:
        TrainState: State with the new W.
    """
    if hp.mu <= 0.0:
        raise ValueError("The classifier update needs mu > 0")
    codes = state.H if use_outputs else state.B
    if codes.shape[1] != Y.shape[1]:
        raise ShapeError("Codes and labels differ in item count", codes.shape, Y.shape)
    gram = codes @ codes.T + (hp.nu / hp.mu) * np.eye(codes.shape[0])
    W = solve_spd(gram, codes @ Y.T)
    return replace(state, W=W)


def b_step(
    state: TrainState,
    Y: Matrix,
    hp: Hyperparams,
    max_sweeps: int = 10,
    trace: Optional[List[float]] = None,
) -> TrainState:
    """
    Discrete cyclic coordinate descent on B, one row of bits at a time.

    Row k is set to sgn(p - B_1^T W_1 w) with P = W Y + (eta / mu) H, scaled
    by mu so that mu = 0 is allowed. Sweeps stop when a full sweep changes no
    bit or after ``max_sweeps``.

    Args:
        state (TrainState): Current state.
        Y (Matrix): Labels, c x N.
        hp (Hyperparams): mu, nu and eta.
        max_sweeps (int): Upper bound on full sweeps.
        trace (Optional[List[float]]): When given, receives the code
            sub-objective before the first update and after every row update.

    Returns:
        TrainState: State with the new B.
    """
    B = state.B.copy()
    W, H = state.W, state.H
    K = B.shape[0]
    if Y.shape[1] != B.shape[1] or W.shape[1] != Y.shape[0]:
        raise ShapeError("Codes, classifier and labels disagree", B.shape, W.shape, Y.shape)

    # Fixed part of every row update
    target = hp.mu * (W @ Y) + hp.eta * H
    if trace is not None:
        trace.append(code_objective(B, W, Y, H, hp))

    for sweep in range(max_sweeps):
        changed = 0
        for k in range(K):
            # Solve row k with the other rows held fixed
            others = np.arange(K) != k
            x = sign(target[k] - hp.mu * (B[others].T @ (W[others] @ W[k])))
            changed += int(np.count_nonzero(x != B[k]))
            B[k] = x
            if trace is not None:
                trace.append(code_objective(B, W, Y, H, hp))
        logger.debug("DCC sweep %d changed %d bits", sweep, changed)
        # Stop once a full sweep leaves every bit in place
        if changed == 0:
            break
    return replace(state, B=B)


def train(
    dataset: Dataset,
    oracle: SimilarityOracle,
    hp: Hyperparams,
    schedule: Schedule,
    variant: Variant = Variant.FULL,
    seed: int = 0,
    hidden: Sequence[int] = (64, 64),
    activation: str = "relu",
    standardize: bool = True,
    history: Optional[List[TermBreakdown]] = None,
) -> HashModel:
    """
    Run the alternating minimization and return the trained model.

    Args:
        dataset (Dataset): Training items.
        oracle (SimilarityOracle): Similarity of the training items.
        hp (Hyperparams): mu, nu, eta and K.
        schedule (Schedule): Optimizer schedule.
        variant (Variant): Full method or an ablation.
        seed (int): Seed of the SplitMix64 stream.
        hidden (Sequence[int]): Hidden layer widths of the encoder.
        activation (str): "relu" or "tanh".
        standardize (bool): Standardize features with training statistics.
        history (Optional[List[TermBreakdown]]): Receives one term breakdown
            per epoch.

    Returns:
        HashModel: Encoder, hash layer, classifier and training codes.
    """
    if dataset.size == 0:
        raise ValueError("Cannot train on an empty dataset")
    variant = Variant(variant)
    stream = SplitMix64(seed)
    init_rng = stream.generator()
    shuffle_rng = stream.generator()

    standardizer = Standardizer.fit(dataset.features) if standardize else Standardizer.identity(dataset.dim)
    data = Dataset(standardizer.apply(dataset.features), dataset.labels, dataset.ids)
    Y = data.labels.data

    params, hash_layer = EncoderService(hidden, hp.K, activation).init(data.dim, init_rng)
    head = None
    if variant is Variant.B:
        bound = np.sqrt(6.0 / (params.feature_dim + data.classes))
        head = init_rng.uniform(-bound, bound, size=(params.feature_dim, data.classes))

    H = forward(params, hash_layer, data.features)[1]
    state = TrainState(
        params=params,
        hash_layer=hash_layer,
        W=np.zeros((hp.K, data.classes)),
        B=sign(H),
        H=H,
        rng=shuffle_rng,
        head=head,
    )
    logger.info(
        "Training variant=%s K=%d N=%d epochs=%d", variant.value, hp.K, data.size, schedule.epochs
    )

    similarity: Optional[Matrix] = None
    for epoch in range(schedule.epochs):
        state = replace(state, epoch=epoch)
        state = h_step(state, data, oracle, hp, schedule, variant)

        if variant is Variant.FULL:
            if hp.mu > 0.0:
                state = w_step(state, Y, hp)
            state = b_step(state, Y, hp, schedule.dcc_max_sweeps)
        else:
            if variant is Variant.C and hp.mu > 0.0:
                state = w_step(state, Y, hp, use_outputs=True)
            state = replace(state, B=sign(state.H))

        if history is not None or logger.isEnabledFor(logging.INFO):
            if similarity is None:
                similarity = oracle.matrix()
            terms = dense_breakdown(state.H, state.B, state.W, Y, similarity, hp)
            if not math.isfinite(terms.total):
                raise DivergenceError(epoch)
            logger.info(
                "epoch=%d pairwise=%.6f classification=%.6f regularizer=%.6f quantization=%.6f total=%.6f",
                epoch + 1,
                terms.pairwise,
                terms.classification,
                terms.regularizer,
                terms.quantization,
                terms.total,
            )
            if history is not None:
                history.append(terms)

    return HashModel(
        params=state.params,
        hash_layer=state.hash_layer,
        W=state.W,
        standardizer=standardizer,
        variant=variant.value,
        B=state.B,
    )


class SolverService:
    """
    Training bound to hyperparameters, schedule and encoder shape.

    Args:
        hp (Hyperparams): mu, nu, eta and K.
        schedule (Schedule): Optimizer schedule.
        variant (Variant): Full method or an ablation.
        hidden (Sequence[int]): Hidden layer widths.
        activation (str): "relu" or "tanh".
        standardize (bool): Standardize features before training.
        seed (int): Seed of the SplitMix64 stream.
    """

    def __init__(
        self,
        hp: Hyperparams,
        schedule: Schedule,
        variant: Variant = Variant.FULL,
        hidden: Sequence[int] = (64, 64),
        activation: str = "relu",
        standardize: bool = True,
        seed: int = 0,
    ) -> None:
        self.hp = hp
        self.schedule = schedule
        self.variant = Variant(variant)
        self.hidden = tuple(hidden)
        self.activation = activation
        self.standardize = standardize
        self.seed = seed

    def train(
        self, dataset: Dataset, history: Optional[List[TermBreakdown]] = None
    ) -> HashModel:
        return train(
            dataset,
            SimilarityOracle(dataset.labels),
            self.hp,
            self.schedule,
            variant=self.variant,
            seed=self.seed,
            hidden=self.hidden,
            activation=self.activation,
            standardize=self.standardize,
            history=history,
        )
