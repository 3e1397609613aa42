""" Shared numeric settings and the damped Newton minimizer behind every inner solve """
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ConvergenceError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NumericSettings:
    """
    Tolerances shared by the projection, Legendre inversion and mirror solves.
    Every public operation takes one of these as a keyword argument so the
    defaults can be overridden per call
    """

    newton_tolerance: float = 1e-12
    newton_max_iterations: int = 200
    # Accept a stalled Newton solve when the gradient is already this small;
    # below it the objective differences are lost in rounding
    stall_tolerance: float = 1e-8
    armijo: float = 1e-4
    min_step: float = 2.0**-50
    membership_tolerance: float = 1e-9
    difference_step: float = 1e-6


DEFAULT_SETTINGS = NumericSettings()


@dataclass(frozen=True)
class NewtonResult:
    """Outcome of a damped Newton solve"""

    x: np.ndarray
    iterations: int
    residual: float


def finite_difference_gradient(value, x, step=1e-6):
    """Central finite difference gradient of a scalar function"""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = step
        grad[i] = (value(x + shift) - value(x - shift)) / (2.0 * step)
    return grad


def finite_difference_hessian(gradient, x, step=1e-6):
    """
    Hessian synthesized from central differences of the gradient. The result
    is symmetrized since the two halves only agree up to truncation error
    """
    x = np.asarray(x, dtype=float)
    size = x.size
    hess = np.empty((size, size))
    for i in range(size):
        shift = np.zeros_like(x)
        shift[i] = step
        hess[:, i] = (gradient(x + shift) - gradient(x - shift)) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def _newton_direction(hess, grad):
    try:
        return -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        # Singular to working precision; fall back to steepest descent
        return -grad


def damped_newton(
    value: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    x0,
    domain: Optional[Callable[[np.ndarray], bool]] = None,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> NewtonResult:
    """
    Minimize a smooth convex function with Newton steps and step halving.

    A trial point is rejected while it leaves the domain or its value is not
    finite. Otherwise it is accepted on the Armijo condition, or, once the
    objective is flat to rounding, when the gradient norm shrinks. The solve
    stops when the gradient max-norm is at most settings.newton_tolerance
    """
    x = np.array(x0, dtype=float)
    if domain is not None and not domain(x):
        raise DomainError("Newton start point lies outside the domain")
    f_x = value(x)
    if not np.isfinite(f_x):
        raise DomainError("Newton start point has a non-finite objective")

    grad = gradient(x)
    residual = float(np.max(np.abs(grad))) if grad.size else 0.0
    for iteration in range(settings.newton_max_iterations + 1):
        if residual <= settings.newton_tolerance:
            return NewtonResult(x, iteration, residual)
        if iteration == settings.newton_max_iterations:
            break

        direction = _newton_direction(hessian(x), grad)
        slope = float(grad @ direction)
        if slope >= 0.0:
            direction = -grad
            slope = -float(grad @ grad)

        step = 1.0
        accepted = False
        while step >= settings.min_step:
            trial = x + step * direction
            if domain is None or domain(trial):
                f_trial = value(trial)
                if np.isfinite(f_trial):
                    if f_trial <= f_x + settings.armijo * step * slope:
                        accepted = True
                    elif abs(f_trial - f_x) <= 1e-12 * (1.0 + abs(f_x)):
                        trial_grad = gradient(trial)
                        accepted = np.max(np.abs(trial_grad)) < residual
                    if accepted:
                        break
            step *= 0.5

        if not accepted:
            if residual <= settings.stall_tolerance:
                logger.debug("Newton stalled at residual %.3e, accepting", residual)
                return NewtonResult(x, iteration, residual)
            logger.warning("Newton line search failed at residual %.3e", residual)
            raise ConvergenceError(
                "Newton line search could not make progress",
                residual=residual,
                iterations=iteration,
            )

        x = trial
        f_x = f_trial
        grad = gradient(x)
        residual = float(np.max(np.abs(grad)))

    if residual <= settings.stall_tolerance:
        return NewtonResult(x, settings.newton_max_iterations, residual)
    logger.warning(
        "Newton did not converge in %d iterations, residual %.3e",
        settings.newton_max_iterations,
        residual,
    )
    raise ConvergenceError(
        "Newton did not converge",
        residual=residual,
        iterations=settings.newton_max_iterations,
    )
