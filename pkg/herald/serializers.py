# herald/serializers.py

from rest_framework import serializers

from .conf import get_setting
from .exceptions import InvalidPatternError
from .fock import SpatialMode
from .scheme import build_circuit, parse_signs

WORKFLOWS = ("herald", "noon-scan", "sweep-tau", "eta-scan")
FORMATS = ("json", "csv")
DETECTOR_CHOICES = ("bucket", "pnr")
SIGN_CHOICES = ("+", "-")

PATTERN_LENGTH_ERROR_MSG = "Pattern needs {expected} signs for {crystals} crystals, got {actual}."
RANGE_ORDER_ERROR_MSG = "'to' must not be smaller than 'from'."


def significant(value, digits=None):
    """Rounds a float to the configured number of significant digits."""
    digits = digits or get_setting("FLOAT_DIGITS")
    return float(f"{float(value):.{digits}g}")


class SignificantFloatField(serializers.FloatField):
    """Float output rendered with a fixed number of significant digits."""

    def to_representation(self, value):
        return significant(value)


class ProjectionSerializer(serializers.Serializer):
    """One measured mode and its polarizer outcome, e.g. ``{mode: "b1'", outcome: "+"}``."""

    mode = serializers.CharField()
    outcome = serializers.ChoiceField(choices=SIGN_CHOICES)

    def validate_mode(self, value):
        try:
            mode = SpatialMode.parse(value)
        except ValueError as e:
            raise serializers.ValidationError(str(e))
        if not mode.primed:
            raise serializers.ValidationError(f"Only primed modes are measured, got {value!r}.")
        return str(mode)


class RunConfigSerializer(serializers.Serializer):
    """
    Validates one simulator run. Keys mirror the long command-line flags;
    workflow-specific defaults are filled in by ``validate``.
    """

    workflow = serializers.ChoiceField(choices=WORKFLOWS)
    crystals = serializers.IntegerField(min_value=2, default=2)
    orders = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False, allow_empty=False)
    tau = serializers.FloatField(min_value=0.0, default=0.05)
    delta_phi = serializers.FloatField(default=0.0)
    detector = serializers.ChoiceField(choices=DETECTOR_CHOICES, default="bucket")
    detectors = serializers.ListField(
        child=serializers.ChoiceField(choices=DETECTOR_CHOICES), required=False, allow_empty=False
    )
    eta = serializers.FloatField(min_value=0.0, max_value=1.0, default=1.0)
    required_count = serializers.IntegerField(min_value=1, default=1)
    pattern = serializers.CharField(required=False, allow_blank=False, trim_whitespace=True)
    projections = ProjectionSerializer(many=True, required=False, allow_empty=False)
    points = serializers.IntegerField(min_value=16, default=128)
    grid_from = serializers.FloatField(min_value=0.0, required=False)
    grid_to = serializers.FloatField(min_value=0.0, required=False)
    steps = serializers.IntegerField(min_value=1, required=False)
    out = serializers.CharField(required=False, allow_blank=False)
    format = serializers.ChoiceField(choices=FORMATS, required=False)
    dump_state = serializers.BooleanField(default=False)
    oracle_check = serializers.BooleanField(default=False)
    threads = serializers.IntegerField(min_value=1, required=False)

    def validate(self, attrs):
        workflow = attrs["workflow"]
        n = attrs["crystals"]
        layout = build_circuit(n)

        if workflow == "noon-scan":
            measured = layout.primed_modes
            expected = len(measured)
            default_pattern = "-" + "+" * (expected - 1)
            if attrs.get("orders", [2 * n]) != [2 * n]:
                raise serializers.ValidationError({"orders": [f"noon-scan runs on the {2 * n}-pair emission only."]})
            attrs["orders"] = [2 * n]
        else:
            measured = layout.detection_modes
            expected = len(measured)
            default_pattern = "+" * expected
            if "orders" not in attrs:
                attrs["orders"] = [2 * n, 2 * n + 1] if workflow == "sweep-tau" else [2 * n]
        attrs["orders"] = sorted(set(attrs["orders"]))

        if "projections" in attrs:
            if "pattern" in attrs:
                raise serializers.ValidationError({"projections": ["Give either a pattern or projections, not both."]})
            attrs["pattern"] = self._pattern_from_projections(attrs["projections"], measured, default_pattern)
        pattern = attrs.get("pattern", default_pattern)
        if len(pattern) != expected:
            raise serializers.ValidationError(
                {
                    "pattern": [
                        PATTERN_LENGTH_ERROR_MSG.format(expected=expected, crystals=n, actual=len(pattern))
                    ]
                }
            )
        try:
            parse_signs(pattern, expected)
        except InvalidPatternError as e:
            raise serializers.ValidationError({"pattern": [str(e)]})
        if workflow == "noon-scan" and pattern.count("-") % 2 == 0:
            raise serializers.ValidationError({"pattern": ["noon-scan needs an odd number of '-' signs."]})
        attrs["pattern"] = pattern

        if workflow == "sweep-tau":
            low, high = get_setting("DEFAULT_TAU_RANGE")
            attrs.setdefault("grid_from", low)
            attrs.setdefault("grid_to", high)
            attrs.setdefault("steps", 10)
            attrs.setdefault("detectors", ["bucket", "pnr"])
        elif workflow == "eta-scan":
            attrs.setdefault("grid_from", 0.2)
            attrs.setdefault("grid_to", 1.0)
            attrs.setdefault("steps", 5)
            if attrs["grid_to"] > 1.0:
                raise serializers.ValidationError({"grid_to": ["Efficiencies must not exceed 1."]})
        if "grid_from" in attrs and "grid_to" in attrs and attrs["grid_to"] < attrs["grid_from"]:
            raise serializers.ValidationError({"grid_to": [RANGE_ORDER_ERROR_MSG]})

        attrs.setdefault("format", "csv" if workflow == "noon-scan" else "json")

        if attrs["oracle_check"]:
            if workflow != "herald":
                raise serializers.ValidationError({"oracle_check": ["The exact check is available for herald runs."]})
            lossless_pnr = attrs["detector"] == "pnr" and attrs["required_count"] == 1
            weak_bucket = attrs["detector"] == "bucket" and attrs["orders"] == [2 * n]
            if attrs["eta"] != 1.0 or not (lossless_pnr or weak_bucket):
                raise serializers.ValidationError(
                    {"oracle_check": ["The exact check covers lossless pnr(1) detection (or bucket on 2n pairs)."]}
                )
        return attrs

    def _pattern_from_projections(self, projections, measured, default_pattern):
        """Overrides the default sign of each listed mode; modes keep canonical order."""
        signs = list(default_pattern)
        position = {str(mode): i for i, mode in enumerate(measured)}
        seen = set()
        for projection in projections:
            mode = projection["mode"]
            if mode not in position:
                raise serializers.ValidationError({"projections": [f"Mode {mode} is not measured in this workflow."]})
            if mode in seen:
                raise serializers.ValidationError({"projections": [f"Mode {mode} is projected twice."]})
            seen.add(mode)
            signs[position[mode]] = projection["outcome"]
        return "".join(signs)


def config_echo(config):
    """Echo of a validated config with stable key order."""
    keys = ["workflow", "crystals", "orders", "tau", "delta_phi"]
    workflow = config["workflow"]
    if workflow in ("herald", "eta-scan"):
        keys += ["detector", "eta", "required_count"]
    if workflow == "sweep-tau":
        keys += ["detectors", "eta", "required_count"]
    keys.append("pattern")
    if workflow == "noon-scan":
        keys.append("points")
    if workflow in ("sweep-tau", "eta-scan"):
        keys += ["grid_from", "grid_to", "steps"]
    echo = {}
    for key in keys:
        value = config.get(key)
        echo[key] = significant(value) if isinstance(value, float) else value
    return echo


class HeraldResultSerializer(serializers.Serializer):
    """
    ``branches`` appears only with ``dump_state`` in the context and
    ``oracle`` only when an exact check was run.
    """

    schema = serializers.SerializerMethodField()
    config = serializers.SerializerMethodField()
    herald_probability = SignificantFloatField()
    probability_note = serializers.CharField()
    fidelity = SignificantFloatField()
    qubit_fidelity = SignificantFloatField()
    qubit_probability = SignificantFloatField()
    target_label = serializers.CharField()
    branches = serializers.SerializerMethodField()
    oracle = serializers.SerializerMethodField()

    def get_schema(self, obj):
        return get_setting("SCHEMA_VERSION")

    def get_config(self, obj):
        return self.context.get("config", obj.config)

    def get_branches(self, obj):
        digits = get_setting("FLOAT_DIGITS")
        return [
            {
                "weight": significant(branch.weight),
                "label": " ".join(str(part) for part in branch.label),
                "terms": branch.state.render_lines(digits),
            }
            for branch in obj.conditional_ensemble
        ]

    def get_oracle(self, obj):
        oracle = self.context.get("oracle")
        if oracle is None:
            return None
        return {key: significant(value) for key, value in oracle.items()}

    def to_representation(self, instance):
        data = super().to_representation(instance)
        if not self.context.get("dump_state"):
            data.pop("branches")
        if self.context.get("oracle") is None:
            data.pop("oracle")
        return data


class FitResultSerializer(serializers.Serializer):
    frequency = SignificantFloatField()
    visibility = SignificantFloatField()
    offset = SignificantFloatField()
    amplitude = SignificantFloatField()
    phase = SignificantFloatField()
    rms_residual = SignificantFloatField()
    samples = serializers.IntegerField()


class SensitivitySerializer(serializers.Serializer):
    heisenberg = SignificantFloatField()
    shot_noise = SignificantFloatField()
    ratio = SignificantFloatField()


class FringePointSerializer(serializers.Serializer):
    delta_phi = SignificantFloatField()
    probability = SignificantFloatField()

    def to_representation(self, instance):
        delta_phi, probability = instance
        return super().to_representation({"delta_phi": delta_phi, "probability": probability})


class NoonSummarySerializer(serializers.Serializer):
    """Summary of a fringe scan; ``points`` is included for JSON output only."""

    schema = serializers.SerializerMethodField()
    config = serializers.DictField()
    samples = serializers.IntegerField()
    fit = FitResultSerializer()
    sensitivity = SensitivitySerializer()
    points = FringePointSerializer(many=True, required=False)

    def get_schema(self, obj):
        return get_setting("SCHEMA_VERSION")

    def to_representation(self, instance):
        data = super().to_representation(instance)
        if not self.context.get("with_points"):
            data.pop("points", None)
        return data


class SweepRowSerializer(serializers.Serializer):
    tau = SignificantFloatField()
    detector = serializers.CharField()
    eta = SignificantFloatField()
    fidelity = SignificantFloatField()
    qubit_fidelity = SignificantFloatField()
    herald_probability = SignificantFloatField()
    qubit_probability = SignificantFloatField()


class EtaRowSerializer(serializers.Serializer):
    eta = SignificantFloatField()
    detector = serializers.CharField()
    fidelity = SignificantFloatField()
    qubit_fidelity = SignificantFloatField()
    herald_probability = SignificantFloatField()
    probability_ratio = SignificantFloatField()
