"""
Closed-form Bregman systems: the Euclidean potential, the log-partition
potential sum_x exp(sum_j f_j(x) theta^j + theta^(d0+1)) and the
quadratic-feature potential built on the same feature basis
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .core import ConvexPotential
from .exceptions import DomainError, InvalidArgumentError


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """
    Features f_j(x) stored as rows of a d0 x |X| matrix, with optional duals
    g^j(x) stored as rows of a (d0+1) x |X| matrix. The constant function
    plays the role of f_(d0+1)
    """

    features: np.ndarray
    duals: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1 and features.size:
            features = features[None, :]
        if features.ndim != 2 or features.shape[1] < 1:
            raise InvalidArgumentError("Features must be a d0 x |X| matrix with |X| >= 1")
        object.__setattr__(self, "features", features)

        extended = self.extended
        if np.linalg.matrix_rank(extended) < extended.shape[0]:
            raise InvalidArgumentError(
                "Features together with the constant function must be linearly independent"
            )

        if self.duals is not None:
            duals = np.asarray(self.duals, dtype=float)
            if duals.shape != extended.shape:
                raise InvalidArgumentError(
                    f"Duals must have shape {extended.shape}, got {duals.shape}"
                )
            if not np.allclose(extended @ duals.T, np.eye(extended.shape[0]), rtol=0, atol=1e-10):
                raise InvalidArgumentError("Duals are not biorthogonal to the features")
            object.__setattr__(self, "duals", duals)

    @classmethod
    def uniform(cls, sample_size: int) -> "FeatureBasis":
        """The empty basis over sample_size points"""
        return cls(np.zeros((0, sample_size)))

    @property
    def sample_size(self) -> int:
        """Number of points |X|"""
        return self.features.shape[1]

    @property
    def free_count(self) -> int:
        """Number of features d0"""
        return self.features.shape[0]

    @property
    def extended(self) -> np.ndarray:
        """Features with the all-ones row appended"""
        return np.vstack([self.features, np.ones(self.sample_size)])


class EuclideanPotential(ConvexPotential):
    """phi(theta) = |theta|^2 / 2, its own Legendre transform"""

    supports_dual_gradient = True

    def value(self, theta):
        return 0.5 * float(theta @ theta)

    def gradient(self, theta):
        return np.array(theta, dtype=float)

    def hessian(self, theta):
        return np.eye(self.dimension)

    def dual_gradient(self, eta):
        return np.array(eta, dtype=float)

    def dual_value(self, eta, settings=None):
        return 0.5 * float(eta @ eta)

    def closed_form_tail(self, head, constants):
        return np.array(constants, dtype=float)


class FeatureSystem(ConvexPotential):
    """Potential of dimension d0+1 over the exponent s(x) = sum_j f_j(x) theta^j + theta^(d0+1)"""

    def __init__(self, basis: FeatureBasis):
        super().__init__(basis.free_count + 1)
        self.basis = basis
        self._extended = basis.extended

    def exponents(self, theta):
        """s(x) for every point x"""
        return theta @ self._extended


class LogPartitionSystem(FeatureSystem):
    """
    phi(theta) = sum_x exp(s(x)). The mixture coordinates are the feature
    expectations of the unnormalized measure exp(s). Sums of exponentials are
    evaluated with logsumexp/softmax so large exponents do not overflow
    """

    def __init__(self, basis: FeatureBasis):
        super().__init__(basis)
        self.supports_dual_gradient = (
            basis.duals is not None and basis.sample_size == basis.free_count + 1
        )

    def log_value(self, theta):
        """log phi(theta), without overflow"""
        return float(logsumexp(self.exponents(theta)))

    def distribution(self, theta):
        """The normalized distribution exp(s) / phi(theta)"""
        return softmax(self.exponents(theta))

    def value(self, theta):
        return float(np.exp(self.log_value(theta)))

    def gradient(self, theta):
        return self.value(theta) * (self._extended @ self.distribution(theta))

    def hessian(self, theta):
        weights = self.value(theta) * self.distribution(theta)
        return (self._extended * weights) @ self._extended.T

    def dual_gradient(self, eta):
        measure = self.basis.duals.T @ eta
        if np.any(measure <= 0):
            raise DomainError("Mixture point does not correspond to a positive measure")
        return np.linalg.solve(self._extended.T, np.log(measure))

    def closed_form_tail(self, head, constants):
        if constants.size != 1 or head.size != self.basis.free_count:
            return None
        if constants[0] <= 0:
            raise InvalidArgumentError("The total mass of a log-partition family must be positive")
        return np.array([np.log(constants[0]) - logsumexp(head @ self.basis.features)])


class QuadraticFeatureSystem(FeatureSystem):
    """phi(theta) = sum_x s(x)^2 / 2, whose Hessian is the constant feature Gram matrix"""

    def value(self, theta):
        exponents = self.exponents(theta)
        return 0.5 * float(exponents @ exponents)

    def gradient(self, theta):
        return self._extended @ self.exponents(theta)

    def hessian(self, theta):
        return self._extended @ self._extended.T

    def closed_form_tail(self, head, constants):
        if constants.size != 1 or head.size != self.basis.free_count:
            return None
        shifted = float(np.sum(head @ self.basis.features))
        return np.array([(constants[0] - shifted) / self.basis.sample_size])


def make_euclidean_system(dimension: int) -> EuclideanPotential:
    """The Euclidean potential on R^dimension"""
    return EuclideanPotential(dimension)


def make_log_partition_system(basis: FeatureBasis) -> LogPartitionSystem:
    """The log-partition system over basis; the constraint eta_(d0+1) = 1 normalizes the measure"""
    return LogPartitionSystem(basis)


def make_quadratic_system(basis: FeatureBasis) -> QuadraticFeatureSystem:
    """The quadratic-feature system over basis"""
    return QuadraticFeatureSystem(basis)
