"""Command-line front end: ``python -m app.cli <command> [flags]``.

Exit status: 0 on success, 1 when the configuration is rejected, 2 when a numerical
step (solver, certification, contour) fails.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence, TextIO

from pydantic import ValidationError

from app.db.database import SpectrumStore
from app.db.models import ForceCurve, RunConfig, TransitionRow
from app.db.spectrum_io import format_spectrum, write_spectrum
from app.errors import CasimirError, ConfigurationError
from app.services.billiards import SHAPE_NAMES, shape_from_name, weyl_count, weyl_data
from app.services.casimir import log_grid
from app.services.force_service import ForceService
from app.services.spectrum_service import SpectrumService
from app.services.verify_service import VerifyService
from app.settings import APP_VERSION, DEFAULT_WORKERS, LOG_LEVEL, SOLVER_LAMBDA_LIMIT, cache_dir

logger = logging.getLogger(__name__)

COMMANDS = ("spectrum", "force", "transition", "verify", "asymptotes")
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"

# config-file key -> (RunConfig path, converter)
CONFIG_KEYS: dict[str, dict[str, tuple[tuple[str, ...], Any]]] = {
    "run": {
        "shape": (("shape",), str),
        "ratio": (("ratio",), float),
        "bc": (("bc",), str),
        "lambda_max": (("lambda_max",), float),
        "seed": (("seed",), int),
        "workers": (("workers",), int),
        "solver_lambda_limit": (("solver_lambda_limit",), float),
    },
    "policy": {
        "d": (("policy", "accuracy_exponent"), float),
        "accuracy_exponent": (("policy", "accuracy_exponent"), float),
        "a_min": (("policy", "a_min"), float),
    },
    "grid": {
        "a_max": (("a_max",), float),
        "points_per_decade": (("points_per_decade",), int),
        "ratios": (("ratios",), lambda text: _parse_ratios(text)),
        "fit_decades": (("fit_decades",), float),
    },
    "solver": {
        "points_per_wavelength": (("solver", "points_per_wavelength"), float),
        "basis_factor": (("solver", "basis_factor"), float),
        "window_width": (("solver", "window_width"), float),
        "tension_threshold": (("solver", "tension_threshold"), float),
        "target_accuracy": (("solver", "target_accuracy"), float),
        "scan_resolution": (("solver", "scan_resolution"), int),
        "basis": (("solver", "basis"), str),
    },
    "output": {
        "out": (("out",), str),
        "cache_dir": (("cache_dir",), str),
        "overlay": (("overlay",), lambda text: text.strip().lower() in {"1", "true", "yes", "on"}),
    },
}


def _parse_ratios(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from exc


def _set_path(values: dict[str, Any], path: tuple[str, ...], value: Any) -> None:
    target = values
    for key in path[:-1]:
        target = target.setdefault(key, {})
    target[path[-1]] = value


def read_config_file(path: str | Path) -> dict[str, Any]:
    """INI file -> nested RunConfig values. Unknown sections or keys are rejected."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc

    values: dict[str, Any] = {}
    for section in parser.sections():
        known = CONFIG_KEYS.get(section)
        if known is None:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            target, convert = known[key]
            try:
                _set_path(values, target, convert(raw))
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigurationError(f"bad value for {section}.{key}: {raw!r}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="INI file with [run], [policy], [grid], [solver], [output] sections"
    )
    common.add_argument("--shape", choices=SHAPE_NAMES)
    common.add_argument("--ratio", type=float, help="Lx/Ly for rectangles, l/r for stadiums")
    common.add_argument("--bc", choices=("D", "N", "EM"))
    common.add_argument("--lambda-max", dest="lambda_max", type=float)
    common.add_argument("--D", dest="accuracy_exponent", type=float, help="truncation exponent")
    common.add_argument("--a-min", dest="a_min", type=float)
    common.add_argument("--a-max", dest="a_max", type=float)
    common.add_argument("--points-per-decade", dest="points_per_decade", type=int)
    common.add_argument("--ratios", type=_parse_ratios, help="comma-separated l/r values")
    common.add_argument("--fit-decades", dest="fit_decades", type=float)
    common.add_argument("--overlay", action="store_true", default=None)
    common.add_argument("--out")
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="casimir-pistons", description="Casimir force between pistons of arbitrary section"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="compute and cache a spectrum")
    sub.add_parser("force", parents=[common], help="force, Weyl force and dF on a log grid")
    sub.add_parser("transition", parents=[common], help="plateau U(l/r) across stadiums")
    sub.add_parser("verify", parents=[common], help="run the self-checks")
    sub.add_parser("asymptotes", parents=[common], help="print asymptotic constants as JSON")
    return parser


FLAG_PATHS: dict[str, tuple[str, ...]] = {
    "shape": ("shape",),
    "ratio": ("ratio",),
    "bc": ("bc",),
    "lambda_max": ("lambda_max",),
    "accuracy_exponent": ("policy", "accuracy_exponent"),
    "a_min": ("policy", "a_min"),
    "a_max": ("a_max",),
    "points_per_decade": ("points_per_decade",),
    "ratios": ("ratios",),
    "fit_decades": ("fit_decades",),
    "overlay": ("overlay",),
    "out": ("out",),
    "cache_dir": ("cache_dir",),
    "seed": ("seed",),
    "workers": ("workers",),
}


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then flags."""
    values: dict[str, Any] = {
        "command": args.command,
        "workers": DEFAULT_WORKERS,
        "solver_lambda_limit": SOLVER_LAMBDA_LIMIT,
    }
    if args.config:
        for key, value in read_config_file(args.config).items():
            if isinstance(value, dict):
                values.setdefault(key, {}).update(value)
            else:
                values[key] = value
    for flag, path in FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            _set_path(values, path, value)
    config = RunConfig.model_validate(values)
    if config.solver.workers == 1 and config.workers > 1:
        config = config.model_copy(
            update={"solver": config.solver.model_copy(update={"workers": config.workers})}
        )
    return config


def _configure_logging(verbosity: int) -> None:
    base = logging.getLevelName(LOG_LEVEL)
    if not isinstance(base, int):
        base = logging.WARNING
    level = max(logging.DEBUG, base - 10 * verbosity)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _metadata(config: RunConfig, lambda_max: float) -> list[str]:
    return [
        f"# shape={config.shape} ratio={config.ratio if config.ratio is not None else ''}",
        f"# bc={config.bc}",
        f"# D={config.policy.accuracy_exponent!r} a_min={config.policy.a_min!r} "
        f"a_max={config.a_max!r} points_per_decade={config.points_per_decade}",
        f"# lambda_max={lambda_max!r}",
        f"# version={APP_VERSION}",
    ]


def format_force_csv(curve: ForceCurve, config: RunConfig) -> str:
    overlay_names = sorted(curve.points[0].overlays) if curve.points else []
    lines = _metadata(config, curve.lambda_max)
    lines.append(f"# spectrum_id={curve.spectrum_id}")
    lines.append(",".join(["a", "F", "F_weyl", "delta_F", "a_delta_F", *overlay_names]))
    for point in sorted(curve.points, key=lambda p: p.a):
        row = [point.a, point.force, point.weyl, point.delta, point.a_delta]
        row.extend(point.overlays.get(name, float("nan")) for name in overlay_names)
        lines.append(",".join(f"{value:.10e}" for value in row))
    return "\n".join(lines) + "\n"


def format_transition_csv(
    rows: Sequence[TransitionRow], config: RunConfig, jump: Optional[float]
) -> str:
    lines = _metadata(config.model_copy(update={"shape": "stadium"}), config.effective_lambda_max)
    lines.append(f"# fit_decades={config.fit_decades!r}")
    if jump is not None:
        lines.append(f"# J={jump:.10e}")
    lines.append("ratio,U,flatness")
    for row in sorted(rows, key=lambda r: r.ratio):
        lines.append(f"{row.ratio:.10e},{row.U:.10e},{row.flatness:.10e}")
    return "\n".join(lines) + "\n"


def _emit(text: str, out: Optional[Path], stdout: TextIO) -> None:
    if out is None:
        stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    logger.info("wrote %s", out)


def _services(config: RunConfig) -> tuple[SpectrumService, ForceService]:
    store = SpectrumStore(config.cache_dir or cache_dir())
    spectra = SpectrumService(store, config.solver, config.solver_lambda_limit)
    return spectra, ForceService(spectra, workers=config.workers)


def cmd_spectrum(config: RunConfig, stdout: TextIO, stderr: TextIO) -> int:
    if config.bc == "EM":
        raise ConfigurationError("spectrum takes --bc D or N")
    spectra, _ = _services(config)
    shape = shape_from_name(config.shape, config.ratio)
    lam = config.effective_lambda_max
    spectrum = spectra.get_spectrum(shape, config.bc, lam)
    if config.out is not None:
        write_spectrum(spectrum, config.out)
        logger.info("wrote %s", config.out)
    else:
        stdout.write(format_spectrum(spectrum))

    weyl = weyl_data(shape, spectrum.bc)
    report = spectra.certify(shape, spectrum)
    expected = weyl_count(weyl, lam * lam)
    print(
        f"{shape.label} bc={spectrum.bc.value} levels={len(spectrum)} total={spectrum.total} "
        f"weyl={expected:.2f} residual={spectrum.total - expected:+.2f} "
        f"certified={'yes' if report.ok else 'no'} suspects={len(report.suspects)}",
        file=stderr,
    )
    return 0


def cmd_force(config: RunConfig, stdout: TextIO, stderr: TextIO) -> int:
    _, forces = _services(config)
    shape = shape_from_name(config.shape, config.ratio)
    grid = log_grid(config.policy.a_min, config.a_max, config.points_per_decade)
    curve = forces.force_curve(
        shape, config.bc, config.policy, grid, config.effective_lambda_max, config.overlay
    )
    _emit(format_force_csv(curve, config), config.out, stdout)
    return 0


def cmd_transition(config: RunConfig, stdout: TextIO, stderr: TextIO) -> int:
    _, forces = _services(config)
    grid = log_grid(config.policy.a_min, config.a_max, config.points_per_decade)
    rows, jump = forces.transition(
        config.ratios, config.policy, grid, config.effective_lambda_max, config.fit_decades
    )
    _emit(format_transition_csv(rows, config, jump), config.out, stdout)
    for row in rows:
        if not row.plateau:
            print(f"no plateau at l/r={row.ratio:g} (flatness {row.flatness:.3g})", file=stderr)
    if jump is not None:
        print(f"J={jump:.6g}", file=stderr)
    return 0


def cmd_verify(config: RunConfig, stdout: TextIO, stderr: TextIO) -> int:
    spectra, _ = _services(config)
    report = VerifyService(spectra, seed=config.seed, workers=config.workers).run()
    for check in report.checks:
        worst = "" if check.worst is None else f" worst={check.worst:.3e}"
        status = "PASS" if check.passed else "FAIL"
        stdout.write(f"{status} {check.name}{worst} {check.detail}\n")
    return 0 if report.ok else 2


def cmd_asymptotes(config: RunConfig, stdout: TextIO, stderr: TextIO) -> int:
    _, forces = _services(config)
    shape = shape_from_name(config.shape, config.ratio)
    payload = forces.asymptotes(shape, config.bc, config.effective_lambda_max)
    payload["version"] = APP_VERSION
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", config.out, stdout)
    return 0


HANDLERS = {
    "spectrum": cmd_spectrum,
    "force": cmd_force,
    "transition": cmd_transition,
    "verify": cmd_verify,
    "asymptotes": cmd_asymptotes,
}


def main(
    argv: Optional[Sequence[str]] = None,
    stdout: Optional[TextIO] = None,
    stderr: Optional[TextIO] = None,
) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = load_run_config(args)
        return HANDLERS[config.command](config, stdout, stderr)
    except ValidationError as err:
        print(f"invalid configuration: {err}", file=stderr)
        return 1
    except CasimirError as err:
        print(f"{type(err).__name__}: {err}", file=stderr)
        windows = list(getattr(err, "windows", []) or [])
        if getattr(err, "window", None) is not None:
            windows.append(err.window)
        for lo, hi in windows:
            print(f"  window [{lo:.6g}, {hi:.6g}]", file=stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
