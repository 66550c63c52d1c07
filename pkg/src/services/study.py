"""
Convergence studies on manufactured solutions and the CSV/JSON report writers.
"""
import csv
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from src.exceptions import AlfeldError, SolverError, UsageError
from src.geometry.mesh import Mesh, read_mesh, uniform_box_mesh
from src.schemas import Family, Method, Pair, RateRow, RateTable, RunConfig
from src.solver.assembly import Solution, solve
from src.solver.elasticity import manufactured_problem
from src.solver.postprocess import error_norms, postprocess_displacement

logger = logging.getLogger(__name__)

ERROR_KEYS = ('err_sigma_L2', 'err_sigma_Hdiv', 'err_u_L2', 'err_super_1h', 'err_post_eps')

LINEAR_FAMILY_PAIRS = {
    Family.linear_phi_split: Pair.split,
    Family.linear_reduced: Pair.linear_reduced,
    Family.linear_rm: Pair.rm,
}


def default_box(d: int) -> int:
    return 2 if d == 2 else 1


def level_meshes(config: RunConfig) -> list[Mesh]:
    """
    The mesh sequence of a run: box meshes N·2^l for l < levels, or the single mesh of a file.

    :param config: Run configuration.
    :type config: RunConfig
    :return: The meshes, coarse to fine.
    :rtype: list[Mesh]
    """
    if config.mesh.file is not None:
        mesh = read_mesh(config.mesh.file)
        if mesh.dim != config.d:
            raise UsageError(f"mesh file {config.mesh.file} is {mesh.dim}d, the run is {config.d}d")
        if config.levels > 1:
            logger.warning("a mesh file gives a single level; ignoring levels=%d", config.levels)
        return [mesh]
    n = config.mesh.box or default_box(config.d)
    return [uniform_box_mesh(config.d, n * 2 ** level) for level in range(config.levels)]


def linear_pair(config: RunConfig) -> Pair:
    if config.pair is not None:
        return config.pair
    return LINEAR_FAMILY_PAIRS[config.family]


def solve_level(config: RunConfig, mesh: Mesh) -> tuple[Solution, dict]:
    """Solves the manufactured problem on one mesh and measures the errors."""
    problem = manufactured_problem(config.d, config.mu, config.lam)
    pair = linear_pair(config) if config.method == Method.linear_pair else None
    solution = solve(problem, mesh, config.method, config.k, pair)
    post = postprocess_displacement(solution) if config.method in (Method.hybrid, Method.stabilized) else None
    return solution, error_norms(solution, post=post)


def rates(previous: RateRow, row: RateRow) -> dict[str, float]:
    """log(e_{l-1}/e_l) / log(h_{l-1}/h_l) for every error present on both levels."""
    out = {}
    for key in ERROR_KEYS:
        coarse, fine = getattr(previous, key), getattr(row, key)
        if coarse and fine and row.h < previous.h:
            out[key] = float(np.log(coarse / fine) / np.log(previous.h / row.h))
    return out


def convergence_study(config: RunConfig, meshes: list[Mesh] | None = None) -> RateTable:
    """
    Runs the configured method over the mesh levels.

    :param config: Run configuration.
    :type config: RunConfig
    :param meshes: Explicit meshes; the configured sequence by default.
    :type meshes: list[Mesh]
    :return: Errors and rates per level.
    :rtype: RateTable
    """
    meshes = level_meshes(config) if meshes is None else meshes
    table = RateTable(method=config.method, family=config.family, d=config.d, k=config.k)
    for level, mesh in enumerate(meshes):
        try:
            solution, errors = solve_level(config, mesh)
        except AlfeldError as err:
            raise SolverError(f"level {level} (h={mesh.h:.4f}): {err}") from err
        row = RateRow(level=level, h=mesh.h, dofs=solution.dofs, **errors)
        if table.rows:
            row.rates = rates(table.rows[-1], row)
        table.rows.append(row)
        logger.info("level %d: h=%.4f, %d DoFs, stress L2 error %.4e, rates %s",
                    level, mesh.h, solution.dofs, row.err_sigma_L2,
                    {key: round(value, 3) for key, value in row.rates.items()})
    return table


# ---------------------------------------------------------------- reports

def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return f'{value:.10e}'
    return str(value)


def rate_rows(table: RateTable) -> list[dict]:
    """Flat CSV rows: level data, errors, then one rate column per error."""
    rows = []
    for row in table.rows:
        flat = {'level': row.level, 'h': row.h, 'dofs': row.dofs}
        flat.update({key: getattr(row, key) for key in ERROR_KEYS})
        flat.update({f'rate_{key[4:]}': row.rates.get(key) for key in ERROR_KEYS})
        rows.append(flat)
    return rows


def write_csv(rows: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0]) if rows else []
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column)) for column in columns])
    return path


def write_reports(out: Path, command: str, rows: list[dict], summary: BaseModel) -> tuple[Path, Path]:
    """
    Writes `<out>/<command>.csv` and `<out>/<command>.json`.

    :param out: Output directory.
    :type out: Path
    :param command: Command name, used as the file stem.
    :type command: str
    :param rows: CSV rows with identical keys.
    :type rows: list[dict]
    :param summary: The report serialized as JSON.
    :type summary: BaseModel
    :return: The two paths.
    :rtype: tuple
    """
    out = Path(out)
    csv_path = write_csv(rows, out / f'{command}.csv')
    json_path = out / f'{command}.json'
    json_path.write_text(summary.model_dump_json(indent=2) + '\n')
    logger.info("wrote %s and %s", csv_path, json_path)
    return csv_path, json_path
