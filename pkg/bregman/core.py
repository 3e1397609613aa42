"""
Bregman divergence systems: potentials, the natural/mixture coordinate maps,
divergences, mixture families and the e-projection onto them.

Natural points (theta) and mixture points (eta) are plain float numpy arrays
of the system's dimension. A mixture family fixes the last k mixture
coordinates, so the first free_count natural coordinates parameterize it.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError, InvalidArgumentError
from .numerics import DEFAULT_SETTINGS, NumericSettings, damped_newton, finite_difference_hessian

logger = logging.getLogger(__name__)

NaturalPoint = np.ndarray
MixturePoint = np.ndarray


class ConvexPotential:
    """
    A strictly convex C2 potential phi. Subclasses supply value and gradient;
    the Hessian falls back to symmetrized finite differences of the gradient.
    Optional capabilities (a closed-form inverse of the gradient map, a
    closed-form constrained-coordinate solver) are advertised through the
    supports_dual_gradient flag and closed_form_tail returning an array.
    Instances are immutable after construction
    """

    supports_dual_gradient = False

    def __init__(self, dimension: int):
        if dimension < 1:
            raise InvalidArgumentError("A potential needs a positive dimension")
        self.dimension = int(dimension)

    def value(self, theta: NaturalPoint) -> float:
        """phi(theta)"""
        raise NotImplementedError

    def gradient(self, theta: NaturalPoint) -> MixturePoint:
        """The mixture point eta(theta), the gradient of phi"""
        raise NotImplementedError

    def hessian(self, theta: NaturalPoint) -> np.ndarray:
        """Hessian of phi, by default from finite differences of the gradient"""
        return finite_difference_hessian(self.gradient, theta)

    def in_domain(self, theta: NaturalPoint) -> bool:  # pylint: disable=unused-argument
        """Whether theta lies in the domain of phi; all of R^d unless overridden"""
        return True

    def dual_gradient(self, eta: MixturePoint) -> NaturalPoint:
        """Closed-form inverse of the gradient map, when supports_dual_gradient is set"""
        raise NotImplementedError

    def dual_value(self, eta: MixturePoint, settings: NumericSettings = DEFAULT_SETTINGS) -> float:
        """Legendre transform phi*(eta) = <eta, theta(eta)> - phi(theta(eta))"""
        theta = mixture_to_natural(self, eta, settings=settings)
        return float(eta @ theta - self.value(theta))

    def closed_form_tail(self, head: np.ndarray, constants: np.ndarray) -> Optional[np.ndarray]:
        """
        Natural coordinates after the first len(head) solving the family
        constraints with the head held fixed, or None when no closed form is known
        """
        return None


@dataclass(frozen=True, eq=False)
class MixtureFamily:
    """Points whose last k = len(constants) mixture coordinates equal constants"""

    free_count: int
    constants: np.ndarray

    def __post_init__(self):
        constants = np.atleast_1d(np.asarray(self.constants, dtype=float))
        object.__setattr__(self, "constants", constants)
        if self.free_count < 0:
            raise InvalidArgumentError("free_count must not be negative")
        if constants.size < 1:
            raise InvalidArgumentError("A mixture family needs at least one constraint")

    @property
    def k(self) -> int:
        """Number of fixed mixture coordinates"""
        return self.constants.size

    @property
    def dimension(self) -> int:
        """Dimension of the system the family lives in"""
        return self.free_count + self.k

    def residual(self, system: ConvexPotential, theta: NaturalPoint) -> float:
        """Largest violation of the family constraints at theta"""
        eta = natural_to_mixture(system, theta)
        return float(np.max(np.abs(eta[self.free_count :] - self.constants)))

    def contains(self, system: ConvexPotential, theta: NaturalPoint, tol: float = 1e-9) -> bool:
        """Whether theta meets the family constraints within tol"""
        return self.residual(system, theta) <= tol


def check_point(system: ConvexPotential, point) -> np.ndarray:
    """Coerce a point to a float array and verify it lies in the system's domain"""
    point = np.asarray(point, dtype=float)
    if point.shape != (system.dimension,):
        raise DomainError(
            f"Point has shape {point.shape}, system dimension is {system.dimension}"
        )
    if not np.all(np.isfinite(point)):
        raise DomainError("Point has non-finite coordinates")
    if not system.in_domain(point):
        raise DomainError("Point lies outside the potential's domain")
    return point


def check_family(system: ConvexPotential, family: MixtureFamily) -> None:
    """Reject a family whose dimension differs from the system's"""
    if family.dimension != system.dimension:
        raise InvalidArgumentError(
            f"Family has dimension {family.dimension}, system has {system.dimension}"
        )


def natural_to_mixture(system: ConvexPotential, theta: NaturalPoint) -> MixturePoint:
    """eta(theta), the gradient of phi at theta"""
    theta = check_point(system, theta)
    return np.asarray(system.gradient(theta), dtype=float)


def mixture_to_natural(
    system: ConvexPotential,
    eta: MixturePoint,
    warm_start: Optional[NaturalPoint] = None,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> NaturalPoint:
    """
    theta(eta), the inverse of the gradient map. Uses the system's closed form
    when available, otherwise minimizes phi(theta) - <eta, theta> by damped
    Newton from warm_start (zero by default)
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (system.dimension,):
        raise DomainError(f"Mixture point has shape {eta.shape}")
    if system.supports_dual_gradient:
        return np.asarray(system.dual_gradient(eta), dtype=float)

    start = np.zeros(system.dimension) if warm_start is None else warm_start
    result = damped_newton(
        value=lambda theta: system.value(theta) - eta @ theta,
        gradient=lambda theta: system.gradient(theta) - eta,
        hessian=system.hessian,
        x0=start,
        domain=system.in_domain,
        settings=settings,
    )
    return result.x


def bregman_divergence(system: ConvexPotential, theta1: NaturalPoint, theta2: NaturalPoint) -> float:
    """D(theta1 || theta2) = <grad phi(theta1), theta1 - theta2> - phi(theta1) + phi(theta2)"""
    theta1 = check_point(system, theta1)
    theta2 = check_point(system, theta2)
    eta1 = system.gradient(theta1)
    return float(eta1 @ (theta1 - theta2) - system.value(theta1) + system.value(theta2))


def dual_divergence(
    system: ConvexPotential,
    eta1: MixturePoint,
    eta2: MixturePoint,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> float:
    """
    The Bregman divergence of the Legendre transform,
    <theta(eta1), eta1 - eta2> - phi*(eta1) + phi*(eta2).
    dual_divergence(eta2, eta1) equals bregman_divergence(theta(eta1), theta(eta2))
    """
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    theta1 = mixture_to_natural(system, eta1, settings=settings)
    theta2 = mixture_to_natural(system, eta2, warm_start=theta1, settings=settings)
    dual1 = eta1 @ theta1 - system.value(theta1)
    dual2 = eta2 @ theta2 - system.value(theta2)
    return float(theta1 @ (eta1 - eta2) - dual1 + dual2)


def e_project(
    system: ConvexPotential,
    family: MixtureFamily,
    theta_bar: NaturalPoint,
    settings: NumericSettings = DEFAULT_SETTINGS,
    use_closed_form: bool = True,
) -> NaturalPoint:
    """
    argmin over the family of D(theta' || theta_bar). The first free_count
    natural coordinates are kept; the rest minimize
    phi(head, tail) - <tail, constants>, in closed form when the system
    provides one
    """
    check_family(system, family)
    theta_bar = check_point(system, theta_bar)
    free = family.free_count
    head = theta_bar[:free]
    constants = family.constants

    if use_closed_form:
        tail = system.closed_form_tail(head, constants)
        if tail is not None:
            return np.concatenate([head, np.atleast_1d(tail)])

    def join(tail):
        return np.concatenate([head, tail])

    result = damped_newton(
        value=lambda tail: system.value(join(tail)) - tail @ constants,
        gradient=lambda tail: system.gradient(join(tail))[free:] - constants,
        hessian=lambda tail: system.hessian(join(tail))[free:, free:],
        x0=theta_bar[free:],
        domain=lambda tail: system.in_domain(join(tail)),
        settings=settings,
    )
    return join(result.x)


class ComposedPotential(ConvexPotential):
    """The potential theta_bar -> phi(U theta_bar)"""

    def __init__(self, base: ConvexPotential, matrix: np.ndarray):
        super().__init__(base.dimension)
        self.base = base
        self.matrix = matrix

    def value(self, theta):
        return self.base.value(self.matrix @ theta)

    def gradient(self, theta):
        return self.matrix.T @ self.base.gradient(self.matrix @ theta)

    def hessian(self, theta):
        return self.matrix.T @ self.base.hessian(self.matrix @ theta) @ self.matrix

    def in_domain(self, theta):
        return self.base.in_domain(self.matrix @ theta)


def canonicalize(system: ConvexPotential, matrix, constants):
    """
    Reparameterize theta = U theta_bar so that a family given by general
    linear constraints on the mixture coordinates becomes the canonical one
    fixing the last len(constants) coordinates
    """
    matrix = np.asarray(matrix, dtype=float)
    constants = np.atleast_1d(np.asarray(constants, dtype=float))
    size = system.dimension
    if matrix.shape != (size, size):
        raise InvalidArgumentError(f"U must be {size}x{size}, got {matrix.shape}")
    if np.linalg.matrix_rank(matrix) < size:
        raise InvalidArgumentError("U is singular")
    family = MixtureFamily(free_count=size - constants.size, constants=constants)
    if np.array_equal(matrix, np.eye(size)):
        return system, family
    return ComposedPotential(system, matrix), family
