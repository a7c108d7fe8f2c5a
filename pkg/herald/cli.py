# herald/cli.py
"""
Command-line front end: ``run(argv)`` drives the ``simulate`` management
command and returns its exit code.
"""

import csv
import io
import logging
import os
import sys

import yaml
from django.core.management import execute_from_command_line
from rest_framework.renderers import JSONRenderer

logger = logging.getLogger(__name__)

CONFIG_ERROR_EXIT = 2
RUN_ERROR_EXIT = 1


# interface names accepted in config files next to the flag names
KEY_ALIASES = {"n_crystals": "crystals", "delta_phi_rad": "delta_phi"}
DETECTOR_KEYS = {"kind": "detector", "eta": "eta", "required_count": "required_count"}


class ConfigFileError(Exception):
    pass


def _set_once(data, key, value, path):
    if key in data:
        raise ConfigFileError(f"Config file {path} sets '{key}' twice.")
    data[key] = value


def normalize_config(data, path="<config>"):
    """
    Maps interface keys onto flag keys: ``n_crystals``, ``delta_phi_rad``, a
    nested ``detector: {kind, eta, required_count}`` and ``projection`` (one
    ``{mode, outcome}`` mapping) or ``projections`` (a list of them).
    """
    flat = {}
    nested_detector = None
    projections = []
    for key, value in data.items():
        key = str(key).replace("-", "_")
        if key == "detector" and isinstance(value, dict):
            nested_detector = value
        elif key == "projection":
            projections.append(value)
        elif key == "projections":
            if not isinstance(value, list):
                raise ConfigFileError(f"Config file {path}: 'projections' must be a list of mappings.")
            projections.extend(value)
        else:
            _set_once(flat, KEY_ALIASES.get(key, key), value, path)

    if nested_detector is not None:
        for key, value in nested_detector.items():
            key = str(key).replace("-", "_")
            if key not in DETECTOR_KEYS:
                raise ConfigFileError(f"Config file {path}: unknown detector key '{key}'.")
            _set_once(flat, DETECTOR_KEYS[key], value, path)
    if projections:
        flat["projections"] = projections
    return flat


def load_config_file(path):
    """Reads a YAML mapping; dashed keys are accepted for underscored flags."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle) or {}
    except OSError as e:
        raise ConfigFileError(f"Cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigFileError(f"Config file {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigFileError(f"Config file {path} must hold a mapping of keys to values.")
    return normalize_config(data, path)


def render_json(document):
    return JSONRenderer().render(document, renderer_context={"indent": 2}) + b"\n"


def render_csv(rows, fieldnames):
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: row[key] for key in fieldnames})
    return buffer.getvalue().encode("utf-8")


def emit_results(payload, out=None, stream=None):
    """Writes rendered bytes to ``out`` or to ``stream`` (stdout by default)."""
    if out:
        with open(out, "wb") as handle:
            handle.write(payload)
        logger.info(f"Wrote {len(payload)} bytes to {out}.")
        return out
    stream = stream or sys.stdout
    stream.write(payload.decode("utf-8"))
    return None


def run(argv=None):
    """``run(["herald", "--crystals", "2", ...])`` -> exit code."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "heraldsim.settings")
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        execute_from_command_line(["heraldsim", "simulate", *argv])
    except SystemExit as e:
        code = e.code
        if code is None:
            return 0
        return code if isinstance(code, int) else RUN_ERROR_EXIT
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
