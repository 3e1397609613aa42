""" Run the minimization-free solver and both em-newton schedules and write their objective gaps """
from concurrent.futures import ThreadPoolExecutor

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from bregman.exceptions import BregmanError
from bregman.reports import emit_comparison, load_problem, objective_gaps
from bregman.runs import run_algorithm
from bregman.serializers import format_errors

# Curve label -> (algorithm, schedule)
CURVES = {
    "minfree": ("minfree", None),
    "em-newton-f1": ("em-newton", "f1"),
    "em-newton-f2": ("em-newton", "f2"),
}


class Command(BaseCommand):
    """Exits 0 when every run finished and 1 on invalid input or any failed run"""

    help = "Compare convergence against cumulative inner iterations and write long-format CSV"

    def add_arguments(self, parser):
        """Problem file, output file and the options shared by all runs"""
        parser.add_argument("--problem", required=True, help="Problem JSON file")
        parser.add_argument("--out", required=True, help="Comparison CSV file")
        parser.add_argument("--gamma", type=float, default=settings.BREGMAN_DEFAULT_GAMMA)
        parser.add_argument("--epsilon", type=float, default=settings.BREGMAN_DEFAULT_EPSILON)
        parser.add_argument("--tol", type=float, default=1e-10)
        parser.add_argument("--max-iter", type=int, default=10000, dest="max_iter")

    def handle(self, *args, **options):
        """Run every curve, then write the gaps against the best final objective"""
        try:
            problem = load_problem(options["problem"])
        except OSError as err:
            raise CommandError(f"Cannot read problem file: {err}", returncode=1) from err
        except ValidationError as err:
            raise CommandError("; ".join(format_errors(err.detail)), returncode=1) from err

        def run(curve):
            algorithm, schedule = CURVES[curve]
            return run_algorithm(problem, algorithm, dict(options, schedule=schedule))

        # The three runs share no mutable state
        try:
            with ThreadPoolExecutor(max_workers=len(CURVES)) as pool:
                runs = dict(zip(CURVES, pool.map(run, CURVES)))
        except BregmanError as err:
            raise CommandError(f"Comparison failed: {err}", returncode=1) from err

        try:
            emit_comparison(objective_gaps(runs), options["out"])
        except OSError as err:
            raise CommandError(f"Cannot write output: {err}", returncode=1) from err

        for curve, result in runs.items():
            self.stdout.write(
                f"{curve}: objective {result.objective:.12g} nats, "
                f"{result.details['cumulative_inner']} inner iterations"
            )
