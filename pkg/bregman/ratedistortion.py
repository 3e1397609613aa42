"""
Rate-distortion problems: construction of the mixture coordinates of the
distortion-constrained joint tables, the clipped objective and its Omega map,
the minimization-free Arimoto-Blahut solver, and the em-algorithm baselines.

Tables are indexed source-row-first: joint[x, y] and w[x, y] = W(y|x).
Entropic quantities are in nats.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import entr, logsumexp, rel_entr, softmax

from .core import MixtureFamily, e_project, mixture_to_natural
from .exceptions import BregmanError, ConvergenceError, InvalidArgumentError
from .numerics import DEFAULT_SETTINGS, NumericSettings, damped_newton
from .potentials import FeatureBasis, LogPartitionSystem, make_log_partition_system
from .solver import (
    IterationTrace,
    Objective,
    SolveResult,
    SolverConfig,
    Termination,
    TraceRow,
    ab_solve,
    mirror_solve,
)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-4


def check_distribution(probs, name="distribution", tol=1e-12) -> np.ndarray:
    """Coerce probs to a probability vector, rejecting negative entries and bad sums"""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty vector")
    if np.any(probs < 0):
        raise InvalidArgumentError(f"{name} entries must be non-negative")
    if abs(probs.sum() - 1.0) > tol:
        raise InvalidArgumentError(f"{name} must sum to 1")
    return probs


def check_conditional(w, tol=1e-12) -> np.ndarray:
    """Coerce w to a matrix whose rows are probability vectors"""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise InvalidArgumentError("A conditional distribution must be a matrix")
    if np.any(w < 0):
        raise InvalidArgumentError("Conditional distribution entries must be non-negative")
    if np.any(np.abs(w.sum(axis=1) - 1.0) > tol):
        raise InvalidArgumentError("Every row of a conditional distribution must sum to 1")
    return w


def distortion_range(p_x, distortion):
    """Smallest and largest expected distortion any conditional distribution achieves"""
    return float(p_x @ distortion.min(axis=1)), float(p_x @ distortion.max(axis=1))


@dataclass(frozen=True, eq=False)
class RdProblem:
    """
    Source distribution P_X, distortion matrix R (rows x, columns y) and the
    distortion level c. Source symbols must have positive probability, the
    last row must distinguish its last two columns, and c must lie strictly
    inside the achievable range
    """

    p_x: np.ndarray
    distortion: np.ndarray
    level: float

    def __post_init__(self):
        p_x = check_distribution(self.p_x, "p_x")
        if np.any(p_x <= 0):
            raise InvalidArgumentError("p_x entries must be positive", field="p_x")
        distortion = np.asarray(self.distortion, dtype=float)
        if distortion.ndim != 2 or distortion.shape[0] != p_x.size:
            raise InvalidArgumentError(
                "distortion must have one row per source symbol", field="distortion"
            )
        if distortion.shape[1] < 2:
            raise InvalidArgumentError(
                "distortion must have at least two columns", field="distortion"
            )
        if not np.all(np.isfinite(distortion)):
            raise InvalidArgumentError("distortion entries must be finite", field="distortion")
        if distortion[-1, -1] == distortion[-1, -2]:
            raise InvalidArgumentError(
                "The last two entries of the last distortion row must differ",
                field="distortion",
            )
        low, high = distortion_range(p_x, distortion)
        if not low < self.level < high:
            raise InvalidArgumentError(
                f"c must lie strictly between {low:.12g} and {high:.12g}", field="c"
            )
        object.__setattr__(self, "p_x", p_x)
        object.__setattr__(self, "distortion", distortion)
        object.__setattr__(self, "level", float(self.level))

    @property
    def d1(self) -> int:
        """Source alphabet size"""
        return self.distortion.shape[0]

    @property
    def d2(self) -> int:
        """Reproduction alphabet size"""
        return self.distortion.shape[1]

    @property
    def d0(self) -> int:
        """Number of free cells, d1 (d2 - 1) - 1"""
        return self.d1 * (self.d2 - 1) - 1


@dataclass(frozen=True, eq=False)
class RdBasis:
    """
    Indicator features of the free cells and their duals, both d0 x (d1*d2)
    over the flattened table, plus the constant part of every constrained
    joint table
    """

    cells: tuple
    features: np.ndarray
    duals: np.ndarray
    offset: np.ndarray

    @property
    def d0(self) -> int:
        """Number of free cells"""
        return len(self.cells)


def build_rd_basis(problem: RdProblem) -> RdBasis:
    """
    Free cells are (x, y) with y < d2-1 except (d1-1, d2-2). Every dual moves
    mass from its cell to the last column of the same row and rebalances the
    last row so the expected distortion is unchanged
    """
    d1, d2 = problem.d1, problem.d2
    dist = problem.distortion
    denominator = dist[d1 - 1, d2 - 2] - dist[d1 - 1, d2 - 1]
    if denominator == 0:
        raise InvalidArgumentError("The last two entries of the last distortion row must differ")

    cells = [(x, y) for x in range(d1 - 1) for y in range(d2 - 1)]
    cells += [(d1 - 1, y) for y in range(d2 - 2)]

    balance = np.zeros((d1, d2))
    balance[d1 - 1, d2 - 2] = 1.0
    balance[d1 - 1, d2 - 1] = -1.0

    features = np.zeros((len(cells), d1 * d2))
    duals = np.zeros((len(cells), d1 * d2))
    for index, (x, y) in enumerate(cells):
        features[index, x * d2 + y] = 1.0
        dual = np.zeros((d1, d2))
        dual[x, y] += 1.0
        dual[x, d2 - 1] -= 1.0
        dual -= (dist[x, y] - dist[x, d2 - 1]) / denominator * balance
        duals[index] = dual.ravel()

    offset = np.zeros((d1, d2))
    offset[:, d2 - 1] = problem.p_x
    offset += (problem.level - problem.p_x @ dist[:, d2 - 1]) / denominator * balance

    basis = RdBasis(tuple(cells), features, duals, offset)
    _check_basis(problem, basis)
    return basis


def _check_basis(problem, basis):
    d1, d2 = problem.d1, problem.d2
    if not np.allclose(basis.features @ basis.duals.T, np.eye(basis.d0), rtol=0, atol=1e-10):
        raise InvalidArgumentError("Rate-distortion duals are not biorthogonal")
    tables = basis.duals.reshape(-1, d1, d2)
    if basis.d0 and (
        np.max(np.abs(np.tensordot(tables, problem.distortion, axes=2))) > 1e-10
        or np.max(np.abs(tables.sum(axis=2))) > 1e-10
    ):
        raise InvalidArgumentError("Rate-distortion duals do not preserve the constraints")


def joint_from_eta(problem: RdProblem, basis: RdBasis, eta) -> np.ndarray:
    """
    The joint table with free cells eta. Row sums equal P_X and the expected
    distortion equals c for every eta, including ones that give negative entries
    """
    eta = np.asarray(eta, dtype=float)
    return (eta @ basis.duals).reshape(problem.d1, problem.d2) + basis.offset


def eta_from_joint(basis: RdBasis, joint) -> np.ndarray:
    """The free cells of a joint table"""
    return basis.features @ np.asarray(joint, dtype=float).ravel()


def conditional_from_joint(problem: RdProblem, joint) -> np.ndarray:
    """W(y|x) = P(x, y) / P_X(x)"""
    return np.asarray(joint, dtype=float) / problem.p_x[:, None]


def _clipped_log(values, epsilon):
    return np.log(np.maximum(values, epsilon))


def _log_ratio(problem, joint, epsilon):
    """log(P)_+ - log P_X(x) - log(P_Y)_+, the integrand shared by the objective and Omega"""
    marginal = joint.sum(axis=0)
    return (
        _clipped_log(joint, epsilon)
        - np.log(problem.p_x)[:, None]
        - _clipped_log(marginal, epsilon)[None, :]
    )


def rd_objective(problem: RdProblem, basis: RdBasis, epsilon: float, eta) -> float:
    """
    sum P log(P)_+ - sum P_X log P_X - sum P_Y log(P_Y)_+ for P = joint_from_eta(eta).
    Equal to the mutual information whenever no entry needs clipping
    """
    joint = joint_from_eta(problem, basis, eta)
    marginal = joint.sum(axis=0)
    return float(
        np.sum(joint * _clipped_log(joint, epsilon))
        - problem.p_x @ np.log(problem.p_x)
        - marginal @ _clipped_log(marginal, epsilon)
    )


def rd_omega(problem: RdProblem, basis: RdBasis, epsilon: float, eta) -> np.ndarray:
    """
    Omega of the reduced problem as one vector of length d0+1: the first d0
    entries pair the duals with the clipped log ratio, the last one pairs the
    constant offset table with it
    """
    joint = joint_from_eta(problem, basis, eta)
    ratio = _log_ratio(problem, joint, epsilon).ravel()
    return np.append(basis.duals @ ratio, basis.offset.ravel() @ ratio)


def mutual_information(p_x, w) -> float:
    """I(X;Y) in nats for source p_x and channel w[x, y]; 0 log 0 is 0"""
    p_x = np.asarray(p_x, dtype=float)
    joint = p_x[:, None] * np.asarray(w, dtype=float)
    product = p_x[:, None] * joint.sum(axis=0)[None, :]
    return float(np.sum(rel_entr(joint, product)))


def expected_distortion(p_x, w, distortion) -> float:
    """sum_x,y P_X(x) W(y|x) R(x, y)"""
    return float(np.sum(np.asarray(p_x)[:, None] * np.asarray(w) * np.asarray(distortion)))


def kl_divergence(p, q) -> float:
    """D(p || q) in nats"""
    return float(np.sum(rel_entr(np.asarray(p, dtype=float), np.asarray(q, dtype=float))))


def m_project_product(joint) -> np.ndarray:
    """
    Product of the row and column sums. Affine on tables with fixed row sums,
    so it extends to tables with negative entries
    """
    joint = np.asarray(joint, dtype=float)
    return np.outer(joint.sum(axis=1), joint.sum(axis=0))


def binary_rate_distortion(level: float) -> float:
    """ln 2 - h(D) for a uniform binary source under Hamming distortion"""
    return float(math.log(2.0) - entr(level) - entr(1.0 - level))


# General clipped em objective


@dataclass(frozen=True, eq=False)
class ClippedDivergenceFamily:
    """
    A mixture family of tables written as eta @ duals + offset, where offset
    collects the constrained coordinates and the normalization
    """

    duals: np.ndarray
    offset: np.ndarray

    def table(self, eta) -> np.ndarray:
        """eta @ duals + offset"""
        return np.asarray(eta, dtype=float) @ self.duals + self.offset


def em_omega_general(family: ClippedDivergenceFamily, m_projection: Callable, epsilon: float, eta):
    """Omega of the clipped divergence objective; the last entry belongs to the offset"""
    table = family.table(eta)
    ratio = _clipped_log(table, epsilon) - _clipped_log(m_projection(table), epsilon)
    return np.append(family.duals @ ratio, family.offset @ ratio)


def em_objective_general(
    family: ClippedDivergenceFamily, m_projection: Callable, epsilon: float, eta
) -> float:
    """
    D(P || m_projection(P)) for P in the family, with both logarithms clipped
    at epsilon so tables with small or negative entries stay finite
    """
    eta = np.asarray(eta, dtype=float)
    omega = em_omega_general(family, m_projection, epsilon, eta)
    return float(eta @ omega[:-1] + omega[-1])


def rd_divergence_family(problem: RdProblem, basis: RdBasis):
    """The rate-distortion family and its product-of-marginals m-projection over flattened tables"""
    shape = (problem.d1, problem.d2)

    def m_projection(table):
        return m_project_product(np.reshape(table, shape)).ravel()

    return ClippedDivergenceFamily(basis.duals, basis.offset.ravel()), m_projection


# Minimization-free Arimoto-Blahut solver


def rd_system(basis: RdBasis) -> LogPartitionSystem:
    """Log-partition system over the flattened table with the free-cell indicators as features"""
    return make_log_partition_system(FeatureBasis(basis.features))


def rd_objective_for(
    problem: RdProblem, basis: RdBasis, epsilon: float, system: LogPartitionSystem
) -> Objective:
    """The reduced rate-distortion objective as an Objective on the log-partition system"""
    free = basis.d0

    def mixture_omega(eta):
        return rd_omega(problem, basis, epsilon, eta[:free])

    def min_entry(theta):
        return float(joint_from_eta(problem, basis, system.gradient(theta)[:free]).min())

    return Objective.from_mixture(system, mixture_omega, min_entry=min_entry)


def tilted_start(problem: RdProblem, settings: NumericSettings = DEFAULT_SETTINGS):
    """
    The joint table P_X(x) W(y|x) where W tilts the uniform output marginal
    just enough to meet c, which is the first em iterate. Strictly positive and
    on the constraint set. Returns the table and the Newton iterations spent
    """
    p_y = np.full(problem.d2, 1.0 / problem.d2)
    tau, iterations = _exact_tau(problem, p_y, settings)
    channel = tilted_channel(p_y, problem.distortion, tau, _choose_sign(problem, p_y, tau))
    return problem.p_x[:, None] * channel, iterations


def natural_head(problem: RdProblem, basis: RdBasis, joint) -> np.ndarray:
    """
    Free natural coordinates whose normalized distribution puts the free
    cells of joint on the free cells and spreads the rest evenly over the others
    """
    cells = eta_from_joint(basis, joint)
    rest = (1.0 - cells.sum()) / (problem.d1 * problem.d2 - basis.d0)
    if np.any(cells <= 0) or not rest > 0:
        raise InvalidArgumentError("A starting table must have positive entries")
    return np.log(cells) - np.log(rest)


def _shift_cumulative(result, offset):
    result.details["start_inner"] = offset
    for row in result.trace:
        row.cumulative_inner += offset


def _rd_solve(problem, config, epsilon, theta_init, settings, runner, label):
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    basis = build_rd_basis(problem)
    system = rd_system(basis)
    family = MixtureFamily(free_count=basis.d0, constants=[1.0])
    objective = rd_objective_for(problem, basis, epsilon, system)

    if theta_init is None:
        joint, start_inner = tilted_start(problem, settings)
        head, origin = natural_head(problem, basis, joint), "tilted"
    else:
        head, start_inner, origin = np.asarray(theta_init, dtype=float), 0, "given"
        if head.shape != (basis.d0,):
            raise InvalidArgumentError(f"Initial point must have {basis.d0} coordinates")
    start = e_project(system, family, np.append(head, 0.0), settings=settings)

    try:
        result = runner(system, family, objective, config, start, settings=settings)
    except ConvergenceError as err:
        if err.partial is not None:
            _shift_cumulative(err.partial, start_inner)
        raise
    _shift_cumulative(result, start_inner)
    joint = joint_from_eta(problem, basis, result.eta[: basis.d0])
    result.details.update(
        joint=joint,
        channel=conditional_from_joint(problem, joint),
        distortion=float(np.sum(joint * problem.distortion)),
        cumulative_inner=start_inner + result.iterations,
        start=origin,
    )

    # Below epsilon the clipped objective no longer equals the mutual information
    smallest = float(joint.min())
    if smallest < epsilon:
        result.termination = Termination.ERROR
        logger.error("%s: joint entry %.6g below epsilon %g", label, smallest, epsilon)
        raise ConvergenceError(
            f"{label} ended on a joint table with entry {smallest:.6g} below epsilon {epsilon:g}",
            residual=smallest,
            iterations=result.iterations,
            partial=result,
        )
    return result


def rd_solve_minfree(
    problem: RdProblem,
    config: SolverConfig,
    epsilon: float = DEFAULT_EPSILON,
    theta_init=None,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> SolveResult:
    """
    Arimoto-Blahut iteration on the log-partition system of the free cells.
    The projection back onto the normalized family is the closed-form log
    normalizer, so each step costs one Omega evaluation. Starts from
    tilted_start unless theta_init gives the d0 free natural coordinates,
    and raises ConvergenceError when the final joint table has an entry below epsilon
    """
    return _rd_solve(problem, config, epsilon, theta_init, settings, ab_solve, "minfree")


def rd_solve_mirror(
    problem: RdProblem,
    config: SolverConfig,
    epsilon: float = DEFAULT_EPSILON,
    theta_init=None,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> SolveResult:
    """Mirror descent with step 1/gamma on the same system, using generic inner solves"""
    return _rd_solve(problem, config, epsilon, theta_init, settings, mirror_solve, "mirror")


# em-algorithm baselines


def f_hat(p_x, p_y, distortion, level, tau):
    """
    F(tau) = sum_x P_X(x) log sum_y P_Y(y) exp(tau (c - R(x, y))) with its
    first and second derivatives, the tilted mean and variance of c - R
    """
    p_x = np.asarray(p_x, dtype=float)
    p_y = np.asarray(p_y, dtype=float)
    gap = level - np.asarray(distortion, dtype=float)
    with np.errstate(divide="ignore"):
        log_p_y = np.log(p_y)
    exponents = tau * gap + log_p_y[None, :]
    log_norm = logsumexp(exponents, axis=1)
    tilted = softmax(exponents, axis=1)
    mean = np.sum(tilted * gap, axis=1)
    variance = np.sum(tilted * gap**2, axis=1) - mean**2
    return float(p_x @ log_norm), float(p_x @ mean), float(p_x @ variance)


def tilted_channel(p_y, distortion, tau, sign):
    """W(y|x) proportional to P_Y(y) exp(sign tau R(x, y))"""
    with np.errstate(divide="ignore"):
        log_p_y = np.log(p_y)
    return softmax(sign * tau * np.asarray(distortion) + log_p_y[None, :], axis=1)


def schedule_f1(step: int) -> int:
    """5 + t"""
    return 5 + step


def schedule_f2(step: int) -> int:
    """ceil(5 + 3 ln t); the logarithm is natural"""
    return int(math.ceil(5 + 3 * math.log(step)))


def _exact_tau(problem, p_y, settings):
    def derivatives(tau):
        return f_hat(problem.p_x, p_y, problem.distortion, problem.level, tau[0])

    try:
        result = damped_newton(
            value=lambda tau: derivatives(tau)[0],
            gradient=lambda tau: np.array([derivatives(tau)[1]]),
            hessian=lambda tau: np.array([[derivatives(tau)[2]]]),
            x0=np.zeros(1),
            settings=settings,
        )
    except BregmanError as err:
        raise ConvergenceError(f"m-step multiplier solve failed: {err}") from err
    return float(result.x[0]), result.iterations


def _newton_tau(problem, p_y, count):
    tau = 0.0
    for _ in range(count):
        _, first, second = f_hat(problem.p_x, p_y, problem.distortion, problem.level, tau)
        if not second > 0:
            raise ConvergenceError("m-step Newton update hit a flat multiplier function")
        tau -= first / second
        if not math.isfinite(tau):
            raise ConvergenceError("m-step Newton update diverged")
    return tau


def _choose_sign(problem, p_y, tau):
    """The exponent sign whose tilted channel meets the distortion level"""
    misses = {}
    for sign in (-1.0, 1.0):
        channel = tilted_channel(p_y, problem.distortion, tau, sign)
        misses[sign] = abs(expected_distortion(problem.p_x, channel, problem.distortion) - problem.level)
    return -1.0 if misses[-1.0] <= misses[1.0] else 1.0


def _em_loop(problem, config, p_y_init, m_step, label, settings):
    p_y = (
        np.full(problem.d2, 1.0 / problem.d2)
        if p_y_init is None
        else check_distribution(p_y_init, "initial p_y")
    )
    if np.any(p_y <= 0):
        raise InvalidArgumentError("The initial p_y must be strictly positive")

    started = time.perf_counter_ns()
    trace = IterationTrace()
    sign = None
    cumulative = 0
    previous = None
    termination = Termination.MAX_ITER
    step = 0
    tau = 0.0
    channel = None
    current = float("nan")
    for step in range(1, config.max_iterations + 1):
        tau, inner = m_step(step, p_y)
        cumulative += inner
        if sign is None:
            sign = _choose_sign(problem, p_y, tau)
            logger.info("%s: m-step exponent sign %+d", label, int(sign))
        channel = tilted_channel(p_y, problem.distortion, tau, sign)
        p_y = problem.p_x @ channel
        current = mutual_information(problem.p_x, channel)

        done = (
            previous is not None
            and abs(previous - current) / max(1.0, abs(previous)) < config.objective_tolerance
        )
        if done or step % config.trace_every == 0 or step == config.max_iterations:
            joint = problem.p_x[:, None] * channel
            trace.append(
                TraceRow(
                    step,
                    current,
                    abs(float(np.sum(joint * problem.distortion)) - problem.level),
                    float(joint.min()),
                    cumulative,
                    time.perf_counter_ns() - started,
                    # em rows keep the m-step multiplier in place of a natural point
                    np.array([tau]),
                )
            )
        logger.debug("%s: step %d objective %.15g", label, step, current)
        if done:
            termination = Termination.TOLERANCE
            break
        previous = current

    logger.info("%s: %s after %d iterations, objective %.12g", label, termination.value, step, current)
    return _em_result(problem, channel, current, step, termination, trace, sign, tau, cumulative, settings)


def _em_result(problem, channel, objective, iterations, termination, trace, sign, tau, cumulative, settings):
    basis = build_rd_basis(problem)
    joint = problem.p_x[:, None] * channel
    eta = np.append(eta_from_joint(basis, joint), 1.0)
    try:
        theta = mixture_to_natural(rd_system(basis), eta, settings=settings)
    except BregmanError:
        theta = np.full(eta.size, np.nan)
    return SolveResult(
        theta=theta,
        eta=eta,
        objective=objective,
        iterations=iterations,
        termination=termination,
        trace=trace,
        details={
            "joint": joint,
            "channel": channel,
            "distortion": float(np.sum(joint * problem.distortion)),
            "cumulative_inner": cumulative,
            "sign": sign,
            "tau": tau,
        },
    )


def em_solve(
    problem: RdProblem,
    config: SolverConfig,
    p_y_init=None,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> SolveResult:
    """
    Alternate an exact m-step (the multiplier minimizing F by damped Newton)
    with the e-step P_Y = sum_x W(y|x) P_X(x). The trace objective is the
    mutual information of each m-step channel
    """

    def m_step(_, p_y):
        return _exact_tau(problem, p_y, settings)

    return _em_loop(problem, config, p_y_init, m_step, "em", settings)


def em_solve_newton(
    problem: RdProblem,
    config: SolverConfig,
    schedule: Callable[[int], int] = schedule_f1,
    p_y_init=None,
    settings: NumericSettings = DEFAULT_SETTINGS,
) -> SolveResult:
    """em with an m-step of exactly schedule(t) plain Newton updates from tau = 0"""

    def m_step(step, p_y):
        count = int(schedule(step))
        if count < 1:
            raise InvalidArgumentError("A schedule must give at least one inner iteration")
        return _newton_tau(problem, p_y, count), count

    return _em_loop(problem, config, p_y_init, m_step, "em-newton", settings)
