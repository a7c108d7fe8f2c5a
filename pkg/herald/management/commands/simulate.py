# herald/management/commands/simulate.py

import logging
from fractions import Fraction
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from herald.cli import (
    CONFIG_ERROR_EXIT,
    RUN_ERROR_EXIT,
    ConfigFileError,
    emit_results,
    load_config_file,
    render_csv,
    render_json,
)
from herald.conf import get_setting
from herald.exceptions import HeraldSimError
from herald.optics import DetectorModel
from herald.oracle import exact_pipeline
from herald.scheme import (
    default_phi_grid,
    fit_fringe,
    noon_scan,
    run_herald,
    sensitivity_report,
    sweep_eta,
    sweep_tau,
)
from herald.serializers import (
    WORKFLOWS,
    EtaRowSerializer,
    FringePointSerializer,
    HeraldResultSerializer,
    NoonSummarySerializer,
    RunConfigSerializer,
    SweepRowSerializer,
    config_echo,
)
from herald.source import SourceConfig

logger = logging.getLogger(__name__)

INVALID_CONFIG_ERROR_MSG = "Invalid configuration: {key}: {message}"
UNEXPECTED_RUN_ERROR_MSG = "An unexpected error occurred while running the simulation."


def _int_list(text):
    return [int(part) for part in text.split(",") if part.strip()]


def _word_list(text):
    return [part.strip() for part in text.split(",") if part.strip()]


def _first_error(errors, key=None):
    """First ``(top-level key, message)`` of a nested DRF error structure."""
    if isinstance(errors, dict):
        name, value = next((k, v) for k, v in errors.items() if v)
        return _first_error(value, name if key is None else key)
    if isinstance(errors, list):
        return _first_error(next(item for item in errors if item), key)
    return key, str(errors)


class Command(BaseCommand):
    help = "Runs a heralding, interferometer or sweep simulation and writes JSON/CSV results."

    def add_arguments(self, parser):
        parser.add_argument("workflow", choices=WORKFLOWS)
        parser.add_argument("--config", help="YAML file with keys mirroring the long flags.")
        parser.add_argument("--crystals", type=int)
        parser.add_argument("--orders", type=_int_list, help="Comma-separated pair orders, e.g. 4,5.")
        parser.add_argument("--tau", type=float)
        parser.add_argument("--delta-phi", dest="delta_phi", type=float)
        parser.add_argument("--detector", help="bucket or pnr.")
        parser.add_argument("--detectors", type=_word_list, help="Comma-separated detector kinds for sweep-tau.")
        parser.add_argument("--eta", type=float)
        parser.add_argument("--required-count", dest="required_count", type=int)
        parser.add_argument("--pattern", help="One sign (+/-) per measured mode in canonical order.")
        parser.add_argument("--points", type=int)
        parser.add_argument("--from", dest="grid_from", type=float)
        parser.add_argument("--to", dest="grid_to", type=float)
        parser.add_argument("--steps", type=int)
        parser.add_argument("--out")
        parser.add_argument("--format", choices=("json", "csv"))
        parser.add_argument("--threads", type=int)
        parser.add_argument("--dump-state", dest="dump_state", action="store_true", default=None)
        parser.add_argument("--oracle-check", dest="oracle_check", action="store_true", default=None)

    def _load_config(self, options):
        raw = {}
        if options.get("config"):
            try:
                raw.update(load_config_file(options["config"]))
            except ConfigFileError as e:
                raise CommandError(str(e), returncode=CONFIG_ERROR_EXIT)
        for key in RunConfigSerializer().fields:
            if key == "workflow":
                continue
            if options.get(key) is not None:
                raw[key] = options[key]
        if options.get("pattern") is not None:
            raw.pop("projections", None)
        raw["workflow"] = options["workflow"]

        unknown = sorted(set(raw) - set(RunConfigSerializer().fields))
        if unknown:
            logger.warning(f"Rejected unknown config keys: {unknown}")
            raise CommandError(
                INVALID_CONFIG_ERROR_MSG.format(key=unknown[0], message="unknown key"),
                returncode=CONFIG_ERROR_EXIT,
            )

        serializer = RunConfigSerializer(data=raw)
        if not serializer.is_valid():
            key, message = _first_error(serializer.errors)
            logger.warning(f"Rejected configuration: {dict(serializer.errors)}")
            raise CommandError(INVALID_CONFIG_ERROR_MSG.format(key=key, message=message), returncode=CONFIG_ERROR_EXIT)
        return serializer.validated_data

    def handle(self, *args, **options):
        config = self._load_config(options)
        workflow = config["workflow"]
        logger.info(f"Starting workflow '{workflow}'.")

        try:
            if workflow == "herald":
                outputs = self._run_herald(config)
            elif workflow == "noon-scan":
                outputs = self._run_noon(config)
            elif workflow == "sweep-tau":
                outputs = self._run_sweep_tau(config)
            else:
                outputs = self._run_eta_scan(config)
            for payload, out, stream in outputs:
                emit_results(payload, out, stream)
        except HeraldSimError as e:
            logger.warning(f"Simulation failed: {e}")
            raise CommandError(str(e), returncode=RUN_ERROR_EXIT)
        except OSError as e:
            logger.error(f"Cannot write results: {e}")
            raise CommandError(f"Cannot write results: {e}", returncode=RUN_ERROR_EXIT)
        except CommandError:
            raise
        except Exception as e:
            logger.error(f"{UNEXPECTED_RUN_ERROR_MSG} {e}", exc_info=True)
            raise

        logger.info(f"Finished workflow '{workflow}'.")

    def _detector(self, config, kind=None):
        return DetectorModel(kind or config["detector"], config["eta"], config["required_count"])

    def _run_herald(self, config):
        source = SourceConfig(config["crystals"], config["delta_phi"], config["tau"], tuple(config["orders"]))
        result = run_herald(source, self._detector(config), config["pattern"])

        oracle = None
        if config["oracle_check"]:
            exact = exact_pipeline(
                config["crystals"],
                config["orders"],
                config["pattern"],
                tau=Fraction(str(config["tau"])),
            )
            exact_probability = exact.herald_probability(config["delta_phi"])
            exact_fidelity = exact.fidelity(config["delta_phi"], result.target)
            oracle = {
                "herald_probability": exact_probability,
                "fidelity": exact_fidelity,
                "max_abs_deviation": max(
                    abs(exact_probability - result.herald_probability),
                    abs(exact_fidelity - result.fidelity),
                ),
            }

        context = {"config": config_echo(config), "dump_state": config["dump_state"], "oracle": oracle}
        document = HeraldResultSerializer(result, context=context).data
        if config["format"] == "csv":
            fields = [k for k in document if k not in ("schema", "config", "branches", "oracle")]
            return [(render_csv([document], fields), config.get("out"), self.stdout)]
        return [(render_json(document), config.get("out"), self.stdout)]

    def _run_noon(self, config):
        scan = noon_scan(
            config["crystals"],
            default_phi_grid(config["points"]),
            config["pattern"],
            threads=config.get("threads"),
        )
        fit = fit_fringe(scan)
        summary = {
            "config": config_echo(config),
            "samples": len(scan),
            "fit": fit,
            "sensitivity": sensitivity_report(fit),
            "points": scan.points,
        }
        if config["format"] == "json":
            document = NoonSummarySerializer(summary, context={"with_points": True}).data
            return [(render_json(document), config.get("out"), self.stdout)]

        rows = FringePointSerializer(scan.points, many=True).data
        fringe = render_csv(rows, ["delta_phi", "probability"])
        report = render_json(NoonSummarySerializer(summary).data)
        if not config.get("out"):
            # stdout carries the CSV alone; the summary goes to stderr uncoloured
            self.stderr.style_func = None
            return [(fringe, None, self.stdout), (report, None, self.stderr)]
        out = Path(config["out"])
        summary_path = out.with_name(f"{out.stem}.summary.json")
        return [(fringe, str(out), self.stdout), (report, str(summary_path), self.stdout)]

    def _grid(self, config):
        return np.linspace(config["grid_from"], config["grid_to"], config["steps"])

    def _run_sweep_tau(self, config):
        detectors = [self._detector(config, kind) for kind in config["detectors"]]
        rows = sweep_tau(
            config["crystals"],
            self._grid(config),
            detectors,
            orders=config["orders"],
            sign_pattern=config["pattern"],
            delta_phi=config["delta_phi"],
            threads=config.get("threads"),
        )
        return [self._table(config, SweepRowSerializer(rows, many=True).data, SweepRowSerializer)]

    def _run_eta_scan(self, config):
        rows = sweep_eta(
            config["crystals"],
            self._grid(config),
            detector_kind=config["detector"],
            tau=config["tau"],
            orders=config["orders"],
            sign_pattern=config["pattern"],
            delta_phi=config["delta_phi"],
            threads=config.get("threads"),
        )
        return [self._table(config, EtaRowSerializer(rows, many=True).data, EtaRowSerializer)]

    def _table(self, config, rows, serializer_class):
        if config["format"] == "csv":
            return render_csv(rows, list(serializer_class().fields)), config.get("out"), self.stdout
        document = {
            "schema": get_setting("SCHEMA_VERSION"),
            "config": config_echo(config),
            "rows": rows,
        }
        return render_json(document), config.get("out"), self.stdout
