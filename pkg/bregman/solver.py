"""
The Bregman-divergence-based Arimoto-Blahut iteration, the mirror descent
baseline and the diagnostics around the gamma-condition
"""
import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import (
    ConvexPotential,
    MixtureFamily,
    bregman_divergence,
    check_family,
    e_project,
    mixture_to_natural,
    natural_to_mixture,
)
from .exceptions import BregmanError, ConvergenceError, DomainError, InvalidArgumentError
from .numerics import DEFAULT_SETTINGS, NumericSettings, damped_newton

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Objective:
    """
    The gradient-like map Omega whose pairing with eta gives the objective
    G(theta) = sum_j eta_j(theta) Omega^j(theta). mixture_omega is the same
    map written in mixture coordinates, when it is known. min_entry reports
    the smallest entry of whatever table the objective is built on, for traces
    """

    dimension: int
    omega: Callable[[np.ndarray], np.ndarray]
    mixture_omega: Optional[Callable[[np.ndarray], np.ndarray]] = None
    min_entry: Optional[Callable[[np.ndarray], float]] = None

    @classmethod
    def from_mixture(cls, system: ConvexPotential, mixture_omega, min_entry=None) -> "Objective":
        """Build Omega(theta) = mixture_omega(eta(theta))"""
        return cls(
            dimension=system.dimension,
            omega=lambda theta: mixture_omega(system.gradient(theta)),
            mixture_omega=mixture_omega,
            min_entry=min_entry,
        )


@dataclass
class SolverConfig:
    """Step size gamma and the stopping rules shared by both iterations"""

    gamma: float = 50.0
    max_iterations: int = 10000
    objective_tolerance: float = 1e-10
    trace_every: int = 1

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be positive")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be at least 1")
        if self.trace_every < 1:
            raise InvalidArgumentError("trace_every must be at least 1")


class Termination(str, enum.Enum):
    """Why an iteration stopped"""

    TOLERANCE = "tolerance"
    MAX_ITER = "max-iter"
    ERROR = "error"


@dataclass
class TraceRow:
    """One recorded iterate"""

    iteration: int
    objective: float
    constraint_residual: float
    min_entry: float
    cumulative_inner: int
    elapsed_ns: int
    theta: np.ndarray
    # Whether the step that produced this row satisfied the gamma-condition
    gamma_condition: Optional[bool] = None


@dataclass
class IterationTrace:
    """Recorded iterates of one solve"""

    rows: List[TraceRow] = field(default_factory=list)
    # Iterations whose incoming step failed the gamma-condition check
    warnings: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def append(self, row: TraceRow) -> None:
        """Record one iterate"""
        self.rows.append(row)

    @property
    def objectives(self) -> np.ndarray:
        """G at every recorded iterate"""
        return np.array([row.objective for row in self.rows])

    @property
    def thetas(self) -> List[np.ndarray]:
        """Natural coordinates of every recorded iterate"""
        return [row.theta for row in self.rows]


@dataclass
class SolveResult:
    """Final iterate of a solve together with its trace"""

    theta: np.ndarray
    eta: np.ndarray
    objective: float
    iterations: int
    termination: Termination
    trace: IterationTrace
    details: Dict[str, object] = field(default_factory=dict)


def objective_value(system: ConvexPotential, objective: Objective, theta) -> float:
    """G(theta) = sum_j eta_j(theta) Omega^j(theta)"""
    return float(natural_to_mixture(system, theta) @ objective.omega(theta))


def f_gamma(objective: Objective, gamma: float, theta) -> np.ndarray:
    """The conversion theta - Omega(theta) / gamma"""
    theta = np.asarray(theta, dtype=float)
    return theta - np.asarray(objective.omega(theta)) / gamma


def ab_step(
    system: ConvexPotential,
    family: MixtureFamily,
    objective: Objective,
    gamma: float,
    theta,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """One Arimoto-Blahut step: e-project the converted point back onto the family"""
    return e_project(system, family, f_gamma(objective, gamma, theta), settings=settings)


def d_omega(system: ConvexPotential, objective: Objective, theta, theta_prime) -> float:
    """sum_j eta_j(theta) (Omega^j(theta) - Omega^j(theta'))"""
    eta = natural_to_mixture(system, theta)
    return float(eta @ (objective.omega(theta) - objective.omega(theta_prime)))


def extended_objective(
    system: ConvexPotential, objective: Objective, gamma: float, theta, theta_prime
) -> float:
    """J(theta, theta') = gamma D(theta || theta') + sum_j eta_j(theta) Omega^j(theta')"""
    eta = natural_to_mixture(system, theta)
    return float(
        gamma * bregman_divergence(system, theta, theta_prime) + eta @ objective.omega(theta_prime)
    )


def gamma_condition_holds(
    system: ConvexPotential, objective: Objective, gamma: float, theta, theta_prime, slack: float = 1e-12
) -> bool:
    """
    d_omega(theta, theta') <= gamma D(theta || theta'), which is exactly
    J(theta, theta') >= J(theta, theta)
    """
    return d_omega(system, objective, theta, theta_prime) <= gamma * bregman_divergence(
        system, theta, theta_prime
    ) + slack


def estimate_gamma(system: ConvexPotential, objective: Objective, samples, safety: float = 1.2) -> float:
    """
    Largest sampled ratio d_omega / D over pairs with non-negligible divergence,
    scaled by a safety factor. A sampled estimate, not a certificate
    """
    ratios = []
    for theta, theta_prime in samples:
        divergence = bregman_divergence(system, theta, theta_prime)
        if divergence < 1e-12:
            continue
        ratios.append(d_omega(system, objective, theta, theta_prime) / divergence)
    if not ratios:
        raise InvalidArgumentError("Every sampled pair has a negligible divergence")
    return safety * max(0.0, max(ratios))


class _DualOracle:  # pylint: disable=too-few-public-methods
    """Caches theta(eta) for the inner mirror solve, warm-starting each inversion"""

    def __init__(self, system, family, theta_start, settings):
        self.system = system
        self.family = family
        self.settings = settings
        self.last = theta_start
        self.cache = {}

    def full(self, free_part):
        """Append the fixed family coordinates"""
        return np.concatenate([free_part, self.family.constants])

    def theta(self, free_part):
        """theta(eta) for the mixture point with the given free part"""
        key = free_part.tobytes()
        if key not in self.cache:
            theta = mixture_to_natural(
                self.system, self.full(free_part), warm_start=self.last, settings=self.settings
            )
            self.cache[key] = theta
            self.last = theta
        return self.cache[key]


def mirror_step(
    system: ConvexPotential,
    family: MixtureFamily,
    objective: Objective,
    beta: float,
    eta,
    settings: NumericSettings = DEFAULT_SETTINGS,
    warm_start=None,
) -> np.ndarray:
    """
    One mirror descent step in mixture coordinates,
    argmin over the family of <eta'_free, dG/deta_free(eta)> + D(theta(eta') || theta(eta)) / beta.
    The argmin is computed by damped Newton on the free mixture coordinates,
    inverting the gradient map at every evaluation, and never uses the
    closed-form projection
    """
    check_family(system, family)
    eta = np.asarray(eta, dtype=float)
    free = family.free_count
    theta_now = mixture_to_natural(system, eta, warm_start=warm_start, settings=settings)
    if objective.mixture_omega is not None:
        slope = np.asarray(objective.mixture_omega(eta))[:free]
    else:
        slope = np.asarray(objective.omega(theta_now))[:free]
    oracle = _DualOracle(system, family, theta_now, settings)

    def in_domain(free_part):
        try:
            oracle.theta(free_part)
        except BregmanError:
            return False
        return True

    def value(free_part):
        theta = oracle.theta(free_part)
        full = oracle.full(free_part)
        dual = full @ theta - system.value(theta)
        return float(slope @ free_part + (dual - theta_now @ full) / beta)

    def gradient(free_part):
        return slope + (oracle.theta(free_part)[:free] - theta_now[:free]) / beta

    def hessian(free_part):
        inverse = np.linalg.inv(system.hessian(oracle.theta(free_part)))
        return inverse[:free, :free] / beta

    result = damped_newton(value, gradient, hessian, eta[:free], domain=in_domain, settings=settings)
    return oracle.full(result.x)


def _run(system, family, objective, config, theta_init, step, settings, label):
    """Shared outer loop of the Arimoto-Blahut and mirror solvers"""
    check_family(system, family)
    theta = np.asarray(theta_init, dtype=float)
    residual = family.residual(system, theta)
    if residual > max(settings.membership_tolerance, 1e-7):
        raise InvalidArgumentError(
            f"Initial point is not in the mixture family (residual {residual:.3e})"
        )

    def min_entry(point):
        return float(objective.min_entry(point)) if objective.min_entry is not None else float("nan")

    started = time.perf_counter_ns()
    trace = IterationTrace()
    current = objective_value(system, objective, theta)
    trace.append(
        TraceRow(1, current, residual, min_entry(theta), 0, time.perf_counter_ns() - started, theta)
    )
    logger.info("%s: start objective %.12g, gamma %g", label, current, config.gamma)

    termination = Termination.MAX_ITER
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        try:
            theta_next = step(theta)
            following = objective_value(system, objective, theta_next)
        except (ConvergenceError, DomainError) as err:
            logger.warning("%s: step %d failed: %s", label, iterations, err)
            partial = SolveResult(
                theta=theta,
                eta=natural_to_mixture(system, theta),
                objective=current,
                iterations=iterations - 1,
                termination=Termination.ERROR,
                trace=trace,
            )
            raise ConvergenceError(
                f"{label} step {iterations} failed: {err}",
                residual=getattr(err, "residual", float("nan")),
                iterations=iterations,
                partial=partial,
            ) from err

        # J(theta_next, theta) >= G(theta_next) needs the check in this order
        condition = gamma_condition_holds(system, objective, config.gamma, theta_next, theta)
        if not condition:
            logger.warning("%s: gamma-condition failed at step %d", label, iterations)
            trace.warnings.append(iterations + 1)

        decrease = abs(current - following) / max(1.0, abs(current))
        theta, current = theta_next, following
        done = decrease < config.objective_tolerance
        if done or iterations % config.trace_every == 0 or iterations == config.max_iterations:
            trace.append(
                TraceRow(
                    iterations + 1,
                    current,
                    family.residual(system, theta),
                    min_entry(theta),
                    iterations,
                    time.perf_counter_ns() - started,
                    theta,
                    condition,
                )
            )
        logger.debug("%s: step %d objective %.15g", label, iterations, current)
        if done:
            termination = Termination.TOLERANCE
            break

    logger.info(
        "%s: %s after %d iterations, objective %.12g", label, termination.value, iterations, current
    )
    return SolveResult(
        theta=theta,
        eta=natural_to_mixture(system, theta),
        objective=current,
        iterations=iterations,
        termination=termination,
        trace=trace,
    )


def ab_solve(
    system: ConvexPotential,
    family: MixtureFamily,
    objective: Objective,
    config: SolverConfig,
    theta_init,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> SolveResult:
    """
    Iterate ab_step from a family member until the relative objective
    decrease drops below config.objective_tolerance or the iteration cap is hit
    """
    return _run(
        system,
        family,
        objective,
        config,
        theta_init,
        lambda theta: ab_step(system, family, objective, config.gamma, theta, settings=settings),
        settings,
        "arimoto-blahut",
    )


def mirror_solve(
    system: ConvexPotential,
    family: MixtureFamily,
    objective: Objective,
    config: SolverConfig,
    theta_init,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> SolveResult:
    """Mirror descent with beta = 1 / gamma, traced in natural coordinates like ab_solve"""
    beta = 1.0 / config.gamma

    def step(theta):
        eta = natural_to_mixture(system, theta)
        eta_next = mirror_step(system, family, objective, beta, eta, settings=settings, warm_start=theta)
        return mixture_to_natural(system, eta_next, warm_start=theta, settings=settings)

    return _run(system, family, objective, config, theta_init, step, settings, "mirror-descent")
