"""
Problem loading, run reports and trace files. Reals are written with 12
significant digits so reports and traces diff cleanly between runs
"""
import csv
import json
import logging
import math

from rest_framework.exceptions import ValidationError

from .serializers import ProblemFileSerializer, RunReportSerializer

logger = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "objective", "constraint_residual", "min_entry", "cumulative_inner", "elapsed_ns")
COMPARISON_HEADER = ("algorithm", "cumulative_inner_iterations", "objective_gap")


def round_real(value):
    """value rounded to 12 significant digits"""
    return float(f"{value:.12g}")


def format_real(value):
    """value as text with 12 significant digits"""
    return f"{value:.12g}"


def load_problem(path):
    """
    Read a problem file and return the validated RdProblem. Malformed JSON
    raises ValidationError naming the line; invalid content names the key
    """
    with open(path, encoding="utf-8") as stream:
        text = stream.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: line {err.lineno}: {err.msg}") from err
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: a problem file must hold a JSON object")
    serializer = ProblemFileSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def build_report(algorithm, options, result):
    """The report dictionary for a finished run; options echo the command flags"""
    channel = result.details["channel"]
    return {
        "algorithm": algorithm,
        "config": {
            "gamma": round_real(options["gamma"]),
            "epsilon": round_real(options["epsilon"]),
            "tol": round_real(options["tol"]),
            "max_iter": int(options["max_iter"]),
            "schedule": options.get("schedule"),
            "start": options.get("start") if algorithm in ("minfree", "mirror") else None,
            "seed": int(options.get("seed", 0)),
        },
        "objective": round_real(result.objective),
        "channel": [[round_real(entry) for entry in row] for row in channel],
        "distortion": round_real(result.details["distortion"]),
        "iterations": int(result.iterations),
        "cumulative_inner_iterations": int(result.details["cumulative_inner"]),
        "termination": result.termination.value,
    }


def emit_report(report, stream):
    """Validate a report and write it as JSON"""
    serializer = RunReportSerializer(data=report)
    serializer.is_valid(raise_exception=True)
    stream.write(json.dumps(report, indent=2) + "\n")


def parse_report(text):
    """Validate report JSON text and return its data"""
    serializer = RunReportSerializer(data=json.loads(text))
    serializer.is_valid(raise_exception=True)
    return json.loads(json.dumps(serializer.validated_data))


def _trace_value(value):
    return "nan" if value is None or math.isnan(value) else format_real(value)


def emit_trace(trace, path):
    """One CSV row per recorded step; elapsed_ns is the only non-deterministic column"""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in trace:
            writer.writerow(
                (
                    row.iteration,
                    format_real(row.objective),
                    _trace_value(row.constraint_residual),
                    _trace_value(row.min_entry),
                    row.cumulative_inner,
                    row.elapsed_ns,
                )
            )
    logger.debug("Wrote %d trace rows to %s", len(trace), path)


def objective_gaps(runs):
    """
    Long-format comparison rows (algorithm, cumulative inner iterations, gap)
    where the gap is measured against the best final objective of all runs
    """
    best = min(result.objective for result in runs.values())
    rows = []
    for algorithm, result in runs.items():
        for row in result.trace:
            rows.append((algorithm, row.cumulative_inner, row.objective - best))
    return rows


def emit_comparison(rows, path):
    """Write objective_gaps rows as CSV"""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        for algorithm, cumulative, gap in rows:
            writer.writerow((algorithm, cumulative, format_real(gap)))
