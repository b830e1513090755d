import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from src.hashkit.dsdh.exceptions import CodeError, ShapeError
from src.hashkit.dsdh.services.data import SimilarityOracle
from src.hashkit.dsdh.services.numkernel import Matrix, log1pexp, sigmoid_array
from src.hashkit.dsdh.utils import sign

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparams:
    """
    Trade-off weights of the objective and the code length.

    mu weights the classification loss, nu the classifier regulariser and eta
    the gap between continuous outputs and binary codes.
    """

    mu: float = 1.0
    nu: float = 0.1
    eta: float = 55.0
    K: int = 12

    def __post_init__(self) -> None:
        if self.mu < 0.0 or self.nu < 0.0 or self.eta < 0.0:
            raise ValueError(
                f"mu, nu and eta must be non-negative, got {self.mu}, {self.nu}, {self.eta}"
            )
        if self.mu + self.eta <= 0.0:
            raise ValueError("mu + eta must be positive")
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")


@dataclass(frozen=True)
class PairSet:
    """
    Explicit pair list (left[p], right[p], similar[p]).

    Each unordered pair is stored once unless ``symmetric`` is set, in which
    case (i, j) and (j, i) are both present with equal labels. Every stored
    entry contributes one term to the pairwise loss and a gradient to both of
    its endpoints.
    """

    left: npt.NDArray[np.int64]
    right: npt.NDArray[np.int64]
    similar: npt.NDArray[np.float64]
    symmetric: bool = False

    def __post_init__(self) -> None:
        left = np.asarray(self.left, dtype=np.int64).ravel()
        right = np.asarray(self.right, dtype=np.int64).ravel()
        similar = np.asarray(self.similar, dtype=np.float64).ravel()
        if not (left.shape == right.shape == similar.shape):
            raise ShapeError("Pair arrays differ in length", left.shape, right.shape, similar.shape)
        if np.any((similar != 0.0) & (similar != 1.0)):
            raise ValueError("Pair labels must be 0 or 1")
        if np.any(left < 0) or np.any(right < 0):
            raise IndexError("Pair indices must be non-negative")
        keys = set(zip(left.tolist(), right.tolist()))
        if len(keys) != left.size:
            raise ValueError("Duplicate pair entries")
        if self.symmetric:
            lookup = dict(zip(zip(left.tolist(), right.tolist()), similar.tolist()))
            for (i, j), s in lookup.items():
                if lookup.get((j, i)) != s:
                    raise ValueError(f"Pair ({i}, {j}) has no matching reverse entry")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "similar", similar)

    def __len__(self) -> int:
        return int(self.left.size)

    @classmethod
    def empty(cls) -> "PairSet":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_oracle(
        cls,
        oracle: SimilarityOracle,
        indices: Optional[npt.ArrayLike] = None,
        symmetric: bool = False,
    ) -> "PairSet":
        """
        All unordered pairs among ``indices`` (self-pairs excluded).

        Args:
            oracle (SimilarityOracle): Source of s_ij.
            indices (Optional[ArrayLike]): Items to pair; all items when None.
            symmetric (bool): Store both orientations of every pair.

        Returns:
            PairSet: The pair list in lexicographic order.
        """
        items = np.arange(oracle.size) if indices is None else np.asarray(indices, dtype=np.int64)
        pairs = list(combinations(items.tolist(), 2))
        if symmetric:
            pairs = sorted(pairs + [(j, i) for i, j in pairs])
        left = np.array([i for i, _ in pairs], dtype=np.int64)
        right = np.array([j for _, j in pairs], dtype=np.int64)
        data = oracle.labels.data
        similar = np.any((data[:, left] > 0.0) & (data[:, right] > 0.0), axis=0).astype(np.float64)
        return cls(left, right, similar, symmetric)

    @classmethod
    def within(cls, similarity: Matrix) -> "PairSet":
        """
        All unordered pairs of a batch, indexed by position in the batch.

        Args:
            similarity (Matrix): Dense {0, 1} similarity of the batch, b x b.

        Returns:
            PairSet: b (b - 1) / 2 pairs in lexicographic order.
        """
        size = similarity.shape[0]
        if similarity.shape != (size, size):
            raise ShapeError("Batch similarity must be square", similarity.shape)
        left, right = np.triu_indices(size, k=1)
        return cls(left, right, similarity[left, right])

    def check_range(self, n: int) -> None:
        if len(self) and (int(self.left.max()) >= n or int(self.right.max()) >= n):
            raise IndexError(f"Pair index out of range for {n} items")


@dataclass(frozen=True)
class TermBreakdown:
    """Individual terms of the relaxed objective and their sum."""

    pairwise: float
    classification: float
    regularizer: float
    quantization: float

    @property
    def total(self) -> float:
        return self.pairwise + self.classification + self.regularizer + self.quantization


def _check_codes(B: Matrix) -> None:
    bad = np.flatnonzero((B != 1.0) & (B != -1.0))
    if bad.size:
        raise CodeError(int(bad[0]), float(B.flat[bad[0]]))


def _inner_products(H: Matrix, pairs: PairSet) -> npt.NDArray[np.float64]:
    pairs.check_range(H.shape[1])
    # Psi_ij = 1/2 h_i^T h_j
    return 0.5 * np.einsum("kp,kp->p", H[:, pairs.left], H[:, pairs.right])


def pairwise_nll(H: Matrix, pairs: PairSet) -> float:
    """
    Negative log likelihood of the pair labels under sigma(Psi_ij).

    Args:
        H (Matrix): Continuous outputs (or codes), K x N.
        pairs (PairSet): The pair list.

    Returns:
        float: sum over pairs of log(1 + e^Psi) - s * Psi.
    """
    psi = _inner_products(H, pairs)
    return float(np.sum(log1pexp(psi) - pairs.similar * psi))


def classification_loss(
    W: Matrix, B: Matrix, Y: Matrix, nu_over_mu: float = 0.0
) -> float:
    """
    Squared error of the linear classifier, sum_i ||y_i - W^T b_i||^2.

    Args:
        W (Matrix): Classifier weights, K x c.
        B (Matrix): Codes (or continuous outputs), K x N.
        Y (Matrix): Labels, c x N.
        nu_over_mu (float): When positive, adds nu/mu * ||W||_F^2, giving the
            classifier sub-objective divided by mu.

    Returns:
        float: The loss value.
    """
    if W.shape[0] != B.shape[0] or W.shape[1] != Y.shape[0] or B.shape[1] != Y.shape[1]:
        raise ShapeError("Classifier shapes disagree", W.shape, B.shape, Y.shape)
    residual = Y - W.T @ B
    loss = float(np.sum(residual * residual))
    if nu_over_mu:
        loss += nu_over_mu * float(np.sum(W * W))
    return loss


def total_objective(
    H: Matrix,
    B: Matrix,
    W: Matrix,
    Y: Matrix,
    pairs: PairSet,
    hp: Hyperparams,
) -> TermBreakdown:
    """
    Relaxed objective with binary codes tied to H by the eta penalty.

    Args:
        H (Matrix): Continuous outputs, K x N.
        B (Matrix): Binary codes in {-1, +1}, K x N.
        W (Matrix): Classifier weights, K x c.
        Y (Matrix): Labels, c x N.
        pairs (PairSet): The pair list.
        hp (Hyperparams): mu, nu and eta.

    Returns:
        TermBreakdown: pairwise, mu-weighted classification, nu-weighted
        regulariser and eta-weighted quantization terms.
    """
    if H.shape != B.shape:
        raise ShapeError("H and B differ", H.shape, B.shape)
    _check_codes(B)
    gap = B - H
    return TermBreakdown(
        pairwise=pairwise_nll(H, pairs),
        classification=hp.mu * classification_loss(W, B, Y),
        regularizer=hp.nu * float(np.sum(W * W)),
        quantization=hp.eta * float(np.sum(gap * gap)),
    )


def pairwise_grad(H: Matrix, pairs: PairSet) -> Matrix:
    """
    Gradient of :func:`pairwise_nll` with respect to every column of H.

    Every stored pair (i, j) adds -1/2 (s_ij - sigma(Psi_ij)) h_j to item i
    and -1/2 (s_ij - sigma(Psi_ij)) h_i to item j.

    Args:
        H (Matrix): Continuous outputs, K x N.
        pairs (PairSet): The pair list.

    Returns:
        Matrix: The gradient columns, K x N.
    """
    psi = _inner_products(H, pairs)
    weight = -0.5 * (pairs.similar - sigmoid_array(psi))
    grad = np.zeros(H.shape, dtype=np.float64)
    np.add.at(grad.T, pairs.left, (weight * H[:, pairs.right]).T)
    np.add.at(grad.T, pairs.right, (weight * H[:, pairs.left]).T)
    return grad


def classification_grads(W: Matrix, B: Matrix, Y: Matrix) -> Tuple[Matrix, Matrix]:
    """
    Gradients of ||Y - W^T B||^2 with respect to B and to W.

    Args:
        W (Matrix): Classifier weights, K x c.
        B (Matrix): Codes, continuous outputs or features, K x N.
        Y (Matrix): Labels, c x N.

    Returns:
        Tuple[Matrix, Matrix]: -2 W R (K x N) and -2 B R^T (K x c), where
        R = Y - W^T B.
    """
    if W.shape[0] != B.shape[0] or W.shape[1] != Y.shape[0] or B.shape[1] != Y.shape[1]:
        raise ShapeError("Classifier shapes disagree", W.shape, B.shape, Y.shape)
    residual = Y - W.T @ B
    return -2.0 * (W @ residual), -2.0 * (B @ residual.T)


def grad_h_all(
    H: Matrix, B: Matrix, pairs: PairSet, hp: Hyperparams, item_weight: float = 1.0
) -> Matrix:
    """
    dF/dh for every item at once (K x N).

    Args:
        H (Matrix): Continuous outputs, K x N.
        B (Matrix): Binary codes, K x N.
        pairs (PairSet): The pair list.
        hp (Hyperparams): Uses eta.
        item_weight (float): Multiplier on the per-item eta term.

    Returns:
        Matrix: The gradient columns.
    """
    if H.shape != B.shape:
        raise ShapeError("H and B differ", H.shape, B.shape)
    return pairwise_grad(H, pairs) - 2.0 * item_weight * hp.eta * (B - H)


def grad_h(
    H: Matrix, B: Matrix, pairs: PairSet, hp: Hyperparams, i: int
) -> npt.NDArray[np.float64]:
    """
    dF/dh_i with B and W fixed.

    Args:
        H (Matrix): Continuous outputs, K x N.
        B (Matrix): Binary codes, K x N.
        pairs (PairSet): The pair list.
        hp (Hyperparams): Uses eta.
        i (int): Item index.

    Returns:
        NDArray[np.float64]: A length-K vector.
    """
    n = H.shape[1]
    if not 0 <= i < n:
        raise IndexError(f"Item {i} out of range for {n} items")
    pairs.check_range(n)
    grad = -2.0 * hp.eta * (B[:, i] - H[:, i])
    for side, other in ((pairs.left, pairs.right), (pairs.right, pairs.left)):
        mask = side == i
        if not np.any(mask):
            continue
        partners = other[mask]
        psi = 0.5 * H[:, i] @ H[:, partners]
        coeff = pairs.similar[mask] - sigmoid_array(psi)
        grad = grad - 0.5 * H[:, partners] @ coeff
    return np.asarray(grad, dtype=np.float64)


def dsdhc_objective(
    H: Matrix,
    B: Matrix,
    W: Matrix,
    Y: Matrix,
    pairs: PairSet,
    hp: Hyperparams,
) -> float:
    """
    Objective of the variant that classifies the continuous outputs.

    The classification term uses h_i and the penalty compares b_i with
    sgn(h_i) (sgn(0) := +1).

    Args:
        H (Matrix): Continuous outputs, K x N.
        B (Matrix): Binary codes, K x N.
        W (Matrix): Classifier weights, K x c.
        Y (Matrix): Labels, c x N.
        pairs (PairSet): The pair list.
        hp (Hyperparams): mu, nu and eta.

    Returns:
        float: The objective value.
    """
    if H.shape != B.shape:
        raise ShapeError("H and B differ", H.shape, B.shape)
    _check_codes(B)
    gap = B - sign(H)
    return (
        pairwise_nll(H, pairs)
        + hp.mu * classification_loss(W, H, Y)
        + hp.nu * float(np.sum(W * W))
        + hp.eta * float(np.sum(gap * gap))
    )


def dense_breakdown(
    H: Matrix,
    B: Matrix,
    W: Matrix,
    Y: Matrix,
    similarity: Matrix,
    hp: Hyperparams,
) -> TermBreakdown:
    """
    :func:`total_objective` over every unordered pair of the N items, with
    the similarity given as a dense N x N matrix.

    Args:
        H (Matrix): Continuous outputs, K x N.
        B (Matrix): Binary codes, K x N.
        W (Matrix): Classifier weights, K x c.
        Y (Matrix): Labels, c x N.
        similarity (Matrix): Dense {0, 1} similarity, N x N.
        hp (Hyperparams): mu, nu and eta.

    Returns:
        TermBreakdown: The term values.
    """
    n = H.shape[1]
    if similarity.shape != (n, n):
        raise ShapeError("Similarity does not match H", similarity.shape, H.shape)
    upper = np.triu_indices(n, k=1)
    psi = 0.5 * (H.T @ H)[upper]
    gap = B - H
    return TermBreakdown(
        pairwise=float(np.sum(log1pexp(psi) - similarity[upper] * psi)),
        classification=hp.mu * classification_loss(W, B, Y),
        regularizer=hp.nu * float(np.sum(W * W)),
        quantization=hp.eta * float(np.sum(gap * gap)),
    )
