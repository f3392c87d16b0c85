"""Orthonormal split of the design and the rotated data quantities.

Multiplying the regression by Q^T with Q = (R, S) from the QR decomposition of
X leaves a p-observation model that carries beta and an (n-p)-observation model
free of it, because S^T X = 0.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from irgaflux.exceptions import ConfigError, DimensionMismatch, RankDeficient
from irgaflux.logger import logger

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Observations of `y ~ N(X beta + eta, sigma2 I_n)`.

    Args:
        y:
            Response vector of length n.
        X:
            n x p design matrix of the parameters of interest.
        Z:
            Optional n x q nuisance feature matrix.
        sigma2:
            Known error variance; estimated downstream when None.
    """

    y: np.ndarray
    X: np.ndarray
    Z: Optional[np.ndarray] = None
    sigma2: Optional[float] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = y.shape[0]
        if n < 1:
            raise ConfigError("Dataset needs at least one observation")
        if X.ndim != 2 or X.shape[0] != n:
            raise DimensionMismatch(f"X has shape {X.shape}, expected ({n}, p)")
        if not 1 <= X.shape[1] <= n:
            raise ConfigError(f"Need 1 <= p <= n, got p={X.shape[1]}, n={n}")
        Z = self.Z
        if Z is not None:
            Z = np.asarray(Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
            if Z.ndim != 2 or Z.shape[0] != n or Z.shape[1] < 1:
                raise DimensionMismatch(f"Z has shape {Z.shape}, expected ({n}, q>=1)")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]


@dataclass(frozen=True)
class RotationSplit:
    """Orthonormal pair with span(R) = span(X) and S spanning its complement."""

    R: np.ndarray
    S: np.ndarray

    @property
    def Q(self) -> np.ndarray:  # noqa: N802
        return np.hstack([self.R, self.S])

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def p(self) -> int:
        return self.R.shape[1]


@dataclass(frozen=True)
class RotatedData:
    Ry: np.ndarray
    RX: np.ndarray
    Sy: np.ndarray
    RZ: Optional[np.ndarray] = None
    SZ: Optional[np.ndarray] = field(default=None)

    @property
    def has_nuisance_features(self) -> bool:
        return self.RZ is not None


def check_full_rank(X: np.ndarray) -> None:
    """Raise `RankDeficient` when the smallest singular value of X is
    below 1e-10 * largest * max(n, p).
    """
    n, p = X.shape
    singular_values = scipy.linalg.svdvals(X)
    largest = singular_values[0] if singular_values.size else 0.0
    smallest = singular_values[-1] if singular_values.size == p else 0.0
    if largest == 0.0 or smallest < RANK_TOLERANCE * largest * max(n, p):
        raise RankDeficient(
            f"Design matrix of shape {X.shape} is rank deficient "
            f"(singular values {smallest:.3e} / {largest:.3e}); reduce X",
            smallest=smallest,
            largest=largest,
        )


def compute_rotation(X: np.ndarray) -> RotationSplit:
    """Householder QR of X with the triangular factor's diagonal made nonnegative.

    The full n x n orthogonal factor is materialized, so S costs O(n^2) memory
    and S^T Z costs O(n^2 q).

    Raises:
        RankDeficient: X does not have full column rank.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if not 1 <= p <= n:
        raise ConfigError(f"compute_rotation needs n >= p >= 1, got shape {X.shape}")
    check_full_rank(X)

    Q, T = scipy.linalg.qr(X, mode="full")
    signs = np.sign(np.diag(T[:p]))
    signs[signs == 0] = 1.0
    Q[:, :p] *= signs
    R = np.ascontiguousarray(Q[:, :p])
    S = np.ascontiguousarray(Q[:, p:])
    logger.debug("QR rotation computed for design of shape (%d, %d)", n, p)
    return RotationSplit(R=R, S=S)


def rotate(data: Dataset, split: RotationSplit) -> RotatedData:
    """Rotated observations of both submodels.

    Raises:
        DimensionMismatch: `data` and `split` disagree on n or p.
    """
    if split.n != data.n or split.p != data.p:
        raise DimensionMismatch(
            f"Split is for (n={split.n}, p={split.p}) but data has "
            f"(n={data.n}, p={data.p})"
        )
    R, S = split.R, split.S
    RZ = SZ = None
    if data.Z is not None:
        RZ = R.T @ data.Z
        SZ = S.T @ data.Z
    return RotatedData(Ry=R.T @ data.y, RX=R.T @ data.X, Sy=S.T @ data.y, RZ=RZ, SZ=SZ)
