""" Serializers for rate-distortion problem files and solver run reports """
import numpy as np
from rest_framework import serializers
from rest_framework.exceptions import ValidationError

from .exceptions import InvalidArgumentError
from .ratedistortion import RdProblem

ALGORITHMS = ("minfree", "em", "em-newton", "mirror")
SCHEDULES = ("f1", "f2")
STARTS = ("tilted", "zero")
TERMINATIONS = ("tolerance", "max-iter", "error")

# Row sums of a reported channel survive rounding to 12 significant digits
# only up to a few units in the last place
REPORT_ROW_TOLERANCE = 1e-9


def format_errors(detail, prefix=""):
    """Flatten DRF error details into 'key: message' lines"""
    if isinstance(detail, dict):
        lines = []
        for key, value in detail.items():
            name = prefix if key == "non_field_errors" else f"{prefix}{key}"
            lines.extend(format_errors(value, f"{name}." if name and isinstance(value, dict) else name))
        return lines
    if isinstance(detail, list):
        lines = []
        for item in detail:
            lines.extend(format_errors(item, prefix))
        return lines
    return [f"{prefix}: {detail}" if prefix else str(detail)]


class ProblemFileSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """A rate-distortion problem: source distribution p_x, distortion rows and level c"""

    p_x = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    distortion = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), allow_empty=False),
        allow_empty=False,
    )
    c = serializers.FloatField()

    def validate_p_x(self, value):
        """Entries must be positive and sum to 1"""
        if any(entry < 0 for entry in value):
            raise ValidationError("p_x entries must be non-negative")
        if abs(sum(value) - 1.0) > 1e-12:
            raise ValidationError("p_x must sum to 1")
        if any(entry == 0 for entry in value):
            raise ValidationError("p_x entries must be positive")
        return value

    def validate_distortion(self, value):
        """Every row must have the same length"""
        if len({len(row) for row in value}) != 1:
            raise ValidationError("distortion rows must all have the same length")
        return value

    def validate(self, attrs):
        """The values must make a valid RdProblem"""
        if len(attrs["distortion"]) != len(attrs["p_x"]):
            raise ValidationError({"distortion": "distortion must have one row per entry of p_x"})
        try:
            RdProblem(np.array(attrs["p_x"]), np.array(attrs["distortion"]), attrs["c"])
        except InvalidArgumentError as err:
            raise ValidationError({err.field or "distortion": str(err)}) from err
        return attrs

    def create(self, validated_data):
        """The validated RdProblem"""
        return RdProblem(
            np.array(validated_data["p_x"]),
            np.array(validated_data["distortion"]),
            validated_data["c"],
        )


class RunConfigSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Echo of the options a run was started with"""

    gamma = serializers.FloatField()
    epsilon = serializers.FloatField()
    tol = serializers.FloatField()
    max_iter = serializers.IntegerField(min_value=1)
    schedule = serializers.ChoiceField(choices=SCHEDULES, allow_null=True)
    start = serializers.ChoiceField(choices=STARTS, allow_null=True, required=False)
    seed = serializers.IntegerField()


class RunReportSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Outcome of one solver run"""

    algorithm = serializers.ChoiceField(choices=ALGORITHMS)
    config = RunConfigSerializer()
    objective = serializers.FloatField()
    channel = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), allow_empty=False),
        allow_empty=False,
    )
    distortion = serializers.FloatField()
    iterations = serializers.IntegerField(min_value=0)
    cumulative_inner_iterations = serializers.IntegerField(min_value=0)
    termination = serializers.ChoiceField(choices=TERMINATIONS)

    def validate_channel(self, value):
        """The channel must be row-stochastic"""
        for row in value:
            if any(entry < 0 for entry in row):
                raise ValidationError("channel entries must be non-negative")
            if abs(sum(row) - 1.0) > REPORT_ROW_TOLERANCE:
                raise ValidationError("every channel row must sum to 1")
        return value
