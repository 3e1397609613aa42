""" Solve a rate-distortion problem file and write a run report """
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from bregman.exceptions import BregmanError
from bregman.reports import build_report, emit_report, emit_trace, load_problem
from bregman.runs import SCHEDULES, run_algorithm
from bregman.serializers import ALGORITHMS, STARTS, format_errors
from bregman.solver import Termination

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    """
    Exits 0 when the objective tolerance was reached, 2 when the iteration
    cap was hit and 1 on invalid input or a failed solve
    """

    help = "Solve a rate-distortion problem with the minimization-free, mirror or em solvers"

    def add_arguments(self, parser):
        """Problem file, solver choice and solver options"""
        parser.add_argument("--problem", required=True, help="Problem JSON file")
        parser.add_argument("--algorithm", choices=ALGORITHMS, default="minfree")
        parser.add_argument("--gamma", type=float, default=settings.BREGMAN_DEFAULT_GAMMA)
        parser.add_argument("--epsilon", type=float, default=settings.BREGMAN_DEFAULT_EPSILON)
        parser.add_argument("--tol", type=float, default=1e-10)
        parser.add_argument("--max-iter", type=int, default=10000, dest="max_iter")
        parser.add_argument(
            "--schedule",
            choices=sorted(SCHEDULES),
            default=None,
            help="Inner Newton schedule of em-newton (default f1)",
        )
        parser.add_argument(
            "--start",
            choices=STARTS,
            default="tilted",
            help="Starting point of minfree and mirror: the tilted em start or theta = 0",
        )
        parser.add_argument("--trace", help="Write the iteration trace to this CSV file")
        parser.add_argument("--out", help="Write the report to this JSON file instead of stdout")
        parser.add_argument("--seed", type=int, default=0, help="Reserved; echoed in the report")

    def handle(self, *args, **options):
        """Solve, write the report and map the termination to an exit code"""
        algorithm = options["algorithm"]
        if algorithm == "em-newton" and options["schedule"] is None:
            options["schedule"] = "f1"
        if options["epsilon"] <= 0:
            raise CommandError("--epsilon must be positive", returncode=1)

        try:
            problem = load_problem(options["problem"])
        except OSError as err:
            raise CommandError(f"Cannot read problem file: {err}", returncode=1) from err
        except ValidationError as err:
            raise CommandError("; ".join(format_errors(err.detail)), returncode=1) from err

        try:
            result = run_algorithm(problem, algorithm, options)
        except BregmanError as err:
            partial = getattr(err, "partial", None)
            if partial is not None and options["trace"]:
                try:
                    emit_trace(partial.trace, options["trace"])
                except OSError:
                    logger.exception("Cannot write the partial trace")
            raise CommandError(f"{algorithm} failed: {err}", returncode=1) from err

        report = build_report(algorithm, options, result)
        try:
            if options["trace"]:
                emit_trace(result.trace, options["trace"])
            if options["out"]:
                with open(options["out"], "w", encoding="utf-8") as stream:
                    emit_report(report, stream)
                self.stdout.write(
                    f"{algorithm}: objective {report['objective']:.12g} nats, "
                    f"{report['termination']} after {report['iterations']} iterations"
                )
            else:
                emit_report(report, self.stdout)
        except OSError as err:
            raise CommandError(f"Cannot write output: {err}", returncode=1) from err
        except ValidationError as err:
            raise CommandError("; ".join(format_errors(err.detail)), returncode=1) from err

        if result.termination == Termination.MAX_ITER:
            raise CommandError(
                f"{algorithm} stopped at the iteration cap of {options['max_iter']}", returncode=2
            )
