""" Glue between project settings, command options and the rate-distortion solvers """
import logging

import numpy as np
from django.conf import settings

from .numerics import NumericSettings
from .ratedistortion import (
    em_solve,
    em_solve_newton,
    rd_solve_minfree,
    rd_solve_mirror,
    schedule_f1,
    schedule_f2,
)
from .solver import SolverConfig

logger = logging.getLogger(__name__)

SCHEDULES = {"f1": schedule_f1, "f2": schedule_f2}


def numeric_settings():
    """Newton settings from the project settings"""
    return NumericSettings(
        newton_tolerance=settings.BREGMAN_NEWTON_TOLERANCE,
        newton_max_iterations=settings.BREGMAN_NEWTON_MAX_ITERATIONS,
    )


def solver_config(options):
    """SolverConfig from the gamma, max_iter and tol options"""
    return SolverConfig(
        gamma=options["gamma"],
        max_iterations=options["max_iter"],
        objective_tolerance=options["tol"],
    )


def run_algorithm(problem, algorithm, options, numeric=None):
    """Run one solver on a problem with the options of a solve or compare command"""
    numeric = numeric or numeric_settings()
    config = solver_config(options)
    logger.info("Running %s on a %dx%d problem", algorithm, problem.d1, problem.d2)
    if algorithm in ("minfree", "mirror"):
        solve = rd_solve_minfree if algorithm == "minfree" else rd_solve_mirror
        theta_init = np.zeros(problem.d0) if options.get("start") == "zero" else None
        return solve(
            problem, config, epsilon=options["epsilon"], theta_init=theta_init, settings=numeric
        )
    if algorithm == "em":
        return em_solve(problem, config, settings=numeric)
    if algorithm == "em-newton":
        schedule = SCHEDULES[options.get("schedule") or "f1"]
        return em_solve_newton(problem, config, schedule=schedule, settings=numeric)
    raise ValueError(f"Unknown algorithm {algorithm}")
