"""
Command handlers of the command-line front end.

Every handler takes a validated RunConfig and returns the CSV rows, the JSON
summary and whether the run passed; `run` writes both reports and maps the
outcome to the exit status.
"""
import argparse
import json
import logging
from contextlib import contextmanager
from pathlib import Path

from pydantic import BaseModel, ValidationError

from src.conf.config import settings
from src.exceptions import AlfeldError, UsageError
from src.schemas import Command, Family, Method, Pair, RunConfig, SolveReport, Tolerances
from src.services import study, verify

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='alfeld', description='Symmetric stress elements on Alfeld splits')
    parser.add_argument('command', choices=[command.value for command in Command])
    parser.add_argument('--config', type=Path, help='JSON run configuration; flags override it')
    parser.add_argument('--d', type=int)
    parser.add_argument('--k', type=int)
    parser.add_argument('--family', choices=[family.value for family in Family])
    parser.add_argument('--method', choices=[method.value for method in Method])
    parser.add_argument('--pair', choices=[pair.value for pair in Pair])
    parser.add_argument('--mu', type=float)
    parser.add_argument('--lambda', dest='lam', type=float)
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--box', type=int, help='box mesh with N subdivisions per axis on the coarsest level')
    source.add_argument('--mesh', type=Path, help='mesh file')
    parser.add_argument('--levels', type=int)
    parser.add_argument('--out', type=Path)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """
    Merges the JSON configuration with the explicit flags.

    :param args: Parsed arguments.
    :type args: argparse.Namespace
    :return: The validated configuration.
    :rtype: RunConfig
    :raises UsageError: on unreadable files or invalid settings.
    """
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read configuration {args.config}: {err}") from err
    data['command'] = args.command
    for name in ('d', 'k', 'family', 'method', 'pair', 'mu', 'levels', 'out'):
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    if args.lam is not None:
        data.pop('lam', None)
        data['lambda'] = args.lam
    if args.box is not None:
        data['mesh'] = {'box': args.box}
    elif args.mesh is not None:
        data['mesh'] = {'file': args.mesh}
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise UsageError(str(err)) from err


@contextmanager
def applied_tolerances(tolerances: Tolerances):
    """Applies tolerance overrides to the settings for the duration of a run."""
    saved = settings.model_copy()
    for name, value in tolerances.model_dump(exclude_none=True).items():
        setattr(settings, name, value)
    try:
        yield settings
    finally:
        for name in Tolerances.model_fields:
            setattr(settings, name, getattr(saved, name))


# ---------------------------------------------------------------- handlers

def validate(config: RunConfig) -> tuple[list[dict], BaseModel, bool]:
    """
    Runs the element certification suite.

    :param config: Run configuration.
    :type config: RunConfig
    :return: One row per check, the validation report and its verdict.
    :rtype: tuple
    """
    report = verify.run_validation(config.d, config.k, config.family)
    rows = [{'name': check.name, 'passed': check.passed, 'value': check.value, 'detail': check.detail}
            for check in report.checks]
    return rows, report, report.passed


def infsup(config: RunConfig) -> tuple[list[dict], BaseModel, bool]:
    """
    Discrete inf-sup constants over the mesh levels.

    The plain pair is a negative control and never fails the run.
    """
    pair = config.pair or verify.default_pair(config.family)
    report = verify.infsup_constant(study.level_meshes(config), pair, config.k)
    rows = [{'level': level, 'h': h, 'size': size, 'beta': beta}
            for level, (h, size, beta) in enumerate(zip(report.h, report.sizes, report.beta))]
    passed = pair == Pair.plain or report.bounded
    return rows, report, passed


def solve(config: RunConfig) -> tuple[list[dict], BaseModel, bool]:
    """One solve on the coarsest configured mesh."""
    mesh = study.level_meshes(config.model_copy(update={'levels': 1}))[0]
    solution, errors = study.solve_level(config, mesh)
    report = SolveReport(method=config.method, family=config.family, dofs=solution.dofs,
                         residual=solution.residual, min_pivot=solution.min_pivot, errors=errors)
    row = {'h': mesh.h, 'dofs': solution.dofs, 'residual': solution.residual, 'min_pivot': solution.min_pivot}
    row.update(errors)
    return [row], report, True


def convergence(config: RunConfig) -> tuple[list[dict], BaseModel, bool]:
    table = study.convergence_study(config)
    return study.rate_rows(table), table, True


HANDLERS = {
    Command.validate: validate,
    Command.infsup: infsup,
    Command.solve: solve,
    Command.convergence: convergence,
}


def run(config: RunConfig) -> int:
    """
    Executes a configuration and writes `<out>/<command>.csv` and `<out>/<command>.json`.

    :param config: Run configuration.
    :type config: RunConfig
    :return: Exit status: 0 pass, 1 certification or numerical failure, 2 usage.
    :rtype: int
    """
    logger.info("%s: d=%d k=%d family=%s method=%s", config.command.value, config.d, config.k,
                config.family.value, config.method.value)
    try:
        with applied_tolerances(config.tolerances):
            rows, summary, passed = HANDLERS[config.command](config)
    except UsageError as err:
        logger.error("usage: %s", err)
        return EXIT_USAGE
    except AlfeldError as err:
        logger.error("%s failed: %s", config.command.value, err)
        return EXIT_FAIL
    study.write_reports(config.out, config.command.value, rows, summary)
    if not passed:
        logger.error("%s: certification failed", config.command.value)
        return EXIT_FAIL
    return EXIT_PASS


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except UsageError as err:
        logger.error("usage: %s", err)
        return EXIT_USAGE
    return run(config)
