"""Artifact writers: stage point dumps, sweeps, force tables and JSON reports."""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
from tabulate import tabulate

from vacufix.core.candidates import PipelineResult, StageSet
from vacufix.core.statics import ForceTable, SweepResult

STAGE_COLUMNS = ["x", "y", "z", "nx", "ny", "nz", "stage", "reason"]
SWEEP_COLUMNS = ["config_id", "screw_id", "press_N", "balloon_index", "force_N", "feasible"]
SIGNIFICANT_DIGITS = 6


def round_floats(value: Any, digits: int = SIGNIFICANT_DIGITS) -> Any:
    """Round every float in a JSON-like structure to ``digits`` significant digits.

    Non-finite floats become None; numpy scalars and arrays become Python types.
    """
    if isinstance(value, dict):
        return {str(k): round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return round_floats(value.tolist(), digits)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        if not math.isfinite(f):
            return None
        rounded = float(f"{f:.{digits}g}")
        return 0.0 if rounded == 0 else rounded
    return value


def write_json(data: Any, path: Path) -> Path:
    """Write ``data`` as indented JSON with 6-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(round_floats(data), indent=2) + "\n", encoding="utf-8")
    return path


def _fmt(x: float) -> str:
    return f"{float(x):.{SIGNIFICANT_DIGITS}g}"


def write_stage_csv(points: StageSet, path: Path) -> Path:
    """One row per point of the stage, reason ``kept``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(STAGE_COLUMNS)
        for p, n in zip(points.positions, points.normals):
            writer.writerow([*map(_fmt, p), *map(_fmt, n), points.stage.value, "kept"])
    return path


def write_rejections_csv(result: PipelineResult, path: Path) -> Path:
    """Every removed point with the stage that removed it and the reason."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p0 = result.stages[next(iter(result.stages))]
    row_of = {int(pid): i for i, pid in enumerate(p0.point_ids)}
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(STAGE_COLUMNS)
        for pid, (stage, reason) in sorted(result.rejections.items()):
            i = row_of[pid]
            writer.writerow(
                [*map(_fmt, p0.positions[i]), *map(_fmt, p0.normals[i]), stage.value, reason.value]
            )
    return path


def write_stage_ply(points: StageSet, path: Path) -> Path:
    """Binary little-endian PLY point cloud with normals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "\n".join(
        [
            "ply",
            "format binary_little_endian 1.0",
            f"comment vacufix stage {points.stage.value}",
            f"element vertex {len(points)}",
            "property float x",
            "property float y",
            "property float z",
            "property float nx",
            "property float ny",
            "property float nz",
            "end_header",
        ]
    )
    body = np.hstack([points.positions, points.normals]).astype("<f4")
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(body.tobytes())
    return path


def sweep_rows(config_id: str, screw_id: str, sweep: SweepResult) -> Iterable[List[str]]:
    """CSV rows (levels × balloons) of one sweep."""
    for result in sweep.results:
        for j, force in enumerate(result.forces):
            yield [
                config_id,
                screw_id,
                _fmt(result.press),
                str(j),
                _fmt(force),
                "true" if result.feasible else "false",
            ]


def write_sweeps_csv(sweeps: Sequence[tuple], path: Path) -> Path:
    """
    Write sweeps as ``config_id,screw_id,press_N,balloon_index,force_N,feasible``.

    Args:
        sweeps: (config id, screw id, SweepResult) triples in output order
        path: Destination CSV
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for config_id, screw_id, sweep in sweeps:
            writer.writerows(sweep_rows(config_id, screw_id, sweep))
    return path


def force_table_text(table: ForceTable) -> str:
    """Plain-text force table; suction entries are starred, infeasible cells marked."""
    headers = ["screw", "2P forces (N)", "2P", "3P forces (N)", "3P"]
    body = []
    for row in table.rows:
        cells: List[str] = [row.screw_id]
        for arity in ("2P", "3P"):
            result = row.results.get(arity)
            if result is None:
                cells += ["-", "-"]
                continue
            forces = ", ".join(f"{f:.2f}{'*' if f < 0 else ''}" for f in result.forces)
            cells += [forces, "ok" if result.feasible else "INFEASIBLE"]
        body.append(cells)
    title = (
        f"Balloon forces at press {table.press:g} N "
        f"(2P: {table.config_ids.get('2P') or '-'}, 3P: {table.config_ids.get('3P') or '-'}; "
        f"* = suction, limit {table.f_max:g} N)"
    )
    return title + "\n" + tabulate(body, headers=headers, tablefmt="github") + "\n"


def write_force_table(table: ForceTable, json_path: Path, text_path: Path) -> List[Path]:
    """Force table as JSON and as text."""
    data: Dict[str, Any] = {
        "press_N": table.press,
        "f_max_N": table.f_max,
        "config_ids": table.config_ids,
        "rows": table.to_records(),
    }
    write_json(data, json_path)
    text_path = Path(text_path)
    text_path.write_text(force_table_text(table), encoding="utf-8")
    return [Path(json_path), text_path]
