"""Parallel 2-D sweep of total power and detuning with resume support.

Grid points are independent work units; each finished point is persisted
immediately (write-temp-then-rename) under ``points/``, so an interrupted
sweep can resume by skipping records whose configuration fingerprint still
matches. Results are a pure function of the sweep specification, whatever
the worker count or completion order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import heatmap
from .experiment import (ExperimentConfig, config_fingerprint, config_to_dict,
                         run_experiment)
from .errors import AllPointsFailedError, RingRCError, ValidationError

POWER_RANGE_DBM = (-15.0, 25.0)
DETUNING_RANGE_GHZ = (-100.0, 100.0)

CSV_COLUMNS = ("power_dbm", "detuning_ghz", "nmse_test", "nmse_train", "status")


def _grid_values(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise ValidationError(f"grid step must be positive, got {step}")
    if stop < start:
        raise ValidationError(f"grid stop {stop} below start {start}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


@dataclass(frozen=True)
class SweepSpec:
    """Grid definition over (total power, detuning) plus run parameters."""

    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    power_start_dbm: float = -15.0
    power_stop_dbm: float = 25.0
    power_step_db: float = 5.0
    detuning_start_ghz: float = -100.0
    detuning_stop_ghz: float = 100.0
    detuning_step_ghz: float = 25.0
    workers: int = 0
    out_dir: str | None = None
    allow_extended_range: bool = False

    def __post_init__(self):
        powers = self.power_values()
        detunings = self.detuning_values()
        if not self.allow_extended_range:
            if powers[0] < POWER_RANGE_DBM[0] or powers[-1] > POWER_RANGE_DBM[1]:
                raise ValidationError(
                    f"power grid outside {POWER_RANGE_DBM} dBm; "
                    "set allow_extended_range to override")
            if (detunings[0] < DETUNING_RANGE_GHZ[0]
                    or detunings[-1] > DETUNING_RANGE_GHZ[1]):
                raise ValidationError(
                    f"detuning grid outside {DETUNING_RANGE_GHZ} GHz; "
                    "set allow_extended_range to override")
        if self.workers < 0:
            raise ValidationError("workers must be >= 0 (0 = auto)")

    def power_values(self) -> list[float]:
        return _grid_values(self.power_start_dbm, self.power_stop_dbm,
                            self.power_step_db)

    def detuning_values(self) -> list[float]:
        return _grid_values(self.detuning_start_ghz, self.detuning_stop_ghz,
                            self.detuning_step_ghz)

    def point_config(self, power_dbm: float, detuning_ghz: float) -> ExperimentConfig:
        return replace(self.base, power_dbm=power_dbm, detuning_ghz=detuning_ghz)

    def effective_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return os.cpu_count() or 1

    def to_dict(self) -> dict:
        return {
            "power_start_dbm": self.power_start_dbm,
            "power_stop_dbm": self.power_stop_dbm,
            "power_step_db": self.power_step_db,
            "detuning_start_ghz": self.detuning_start_ghz,
            "detuning_stop_ghz": self.detuning_stop_ghz,
            "detuning_step_ghz": self.detuning_step_ghz,
            "workers": self.workers,
            "allow_extended_range": self.allow_extended_range,
            "base": config_to_dict(self.base),
        }


@dataclass(frozen=True)
class PointResult:
    """Outcome of one grid point; failed points are first-class records."""

    row: int
    col: int
    power_dbm: float
    detuning_ghz: float
    status: str
    nmse_test: float = math.nan
    nmse_train: float = math.nan
    max_delta_t_k: float = math.nan
    max_delta_n_m3: float = math.nan
    mean_drop_power_w: float = math.nan
    fingerprint: str = ""
    error: str = ""
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class SweepResult:
    """Completed grid with its best point."""

    powers_dbm: tuple[float, ...]
    detunings_ghz: tuple[float, ...]
    points: tuple[PointResult, ...]
    spec: SweepSpec

    @property
    def n_failed(self) -> int:
        return sum(p.status != "ok" for p in self.points)

    def point(self, row: int, col: int) -> PointResult:
        return self.points[row * len(self.detunings_ghz) + col]


def find_best(result: SweepResult) -> tuple[float, float, float]:
    """(power_dbm, detuning_ghz, nmse_test) of the grid minimum.

    Ties break toward lower power, then lower absolute detuning.
    """
    ok = [p for p in result.points
          if p.status == "ok" and math.isfinite(p.nmse_test)]
    if not ok:
        raise AllPointsFailedError("no successful grid point")
    best = min(ok, key=lambda p: (p.nmse_test, p.power_dbm, abs(p.detuning_ghz)))
    return best.power_dbm, best.detuning_ghz, best.nmse_test


def _eval_point(task) -> dict:
    row, col, config = task
    record = {
        "row": row, "col": col,
        "power_dbm": config.power_dbm, "detuning_ghz": config.detuning_ghz,
        "fingerprint": config_fingerprint(config),
    }
    try:
        res = run_experiment(config)
    except RingRCError as exc:
        record.update(status="failed", error=str(exc))
        return record
    record.update(
        status="ok", nmse_test=res.nmse_test, nmse_train=res.nmse_train,
        max_delta_t_k=res.max_delta_t_k, max_delta_n_m3=res.max_delta_n_m3,
        mean_drop_power_w=res.mean_drop_power_w, wall_time_s=res.wall_time_s)
    return record


def _record_to_point(record: dict) -> PointResult:
    return PointResult(
        row=int(record["row"]), col=int(record["col"]),
        power_dbm=float(record["power_dbm"]),
        detuning_ghz=float(record["detuning_ghz"]),
        status=record["status"],
        nmse_test=float(record.get("nmse_test", math.nan)),
        nmse_train=float(record.get("nmse_train", math.nan)),
        max_delta_t_k=float(record.get("max_delta_t_k", math.nan)),
        max_delta_n_m3=float(record.get("max_delta_n_m3", math.nan)),
        mean_drop_power_w=float(record.get("mean_drop_power_w", math.nan)),
        fingerprint=record.get("fingerprint", ""),
        error=record.get("error", ""),
        wall_time_s=float(record.get("wall_time_s", 0.0)))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_point_record(points_dir: Path, record: dict) -> None:
    path = points_dir / f"{record['row']}_{record['col']}.record"
    _atomic_write(path, json.dumps(record, sort_keys=True))


def _load_point_record(points_dir: Path, row: int, col: int) -> dict | None:
    path = points_dir / f"{row}_{col}.record"
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError):
        return None


def _warm_kernel(base: ExperimentConfig) -> None:
    """Compile the integrator in the parent before forking workers."""
    from . import cavity
    from .pipeline import DriveWaveform

    wave = DriveWaveform(samples=np.full(4, 1e-6), step_s=base.step_s,
                         n_symbols=1, steps_per_symbol=4, chips_per_symbol=1)
    cavity.simulate(base.cavity, [0.0], [wave])


def run_sweep(spec: SweepSpec, resume: bool = False, progress=None) -> SweepResult:
    """Evaluate every grid point, in parallel, and persist each completion.

    With ``resume`` true, existing point records whose fingerprint matches
    the current configuration are reused instead of recomputed. ``progress``
    is an optional callable invoked as progress(done, total).
    """
    started = time.perf_counter()
    powers = spec.power_values()
    detunings = spec.detuning_values()

    points_dir = None
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        points_dir = out / "points"
        points_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "config.snapshot",
                      json.dumps(spec.to_dict(), sort_keys=True, indent=2) + "\n")
    elif resume:
        raise ValidationError("resume requires an output directory")

    completed: dict[tuple[int, int], dict] = {}
    pending = []
    for row, power in enumerate(powers):
        for col, detuning in enumerate(detunings):
            config = spec.point_config(power, detuning)
            fingerprint = config_fingerprint(config)
            if resume and points_dir is not None:
                record = _load_point_record(points_dir, row, col)
                if record is not None and record.get("fingerprint") == fingerprint:
                    completed[(row, col)] = record
                    continue
            pending.append((row, col, config))

    total = len(powers) * len(detunings)
    done = len(completed)
    if progress:
        progress(done, total)

    def _finish(record: dict) -> None:
        nonlocal done
        completed[(record["row"], record["col"])] = record
        if points_dir is not None:
            _write_point_record(points_dir, record)
        done += 1
        if progress:
            progress(done, total)

    workers = min(spec.effective_workers(), max(len(pending), 1))
    if pending:
        if workers == 1:
            for task in pending:
                _finish(_eval_point(task))
        else:
            _warm_kernel(spec.base)
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_eval_point, task) for task in pending]
                for future in as_completed(futures):
                    _finish(future.result())

    points = tuple(_record_to_point(completed[(row, col)])
                   for row in range(len(powers))
                   for col in range(len(detunings)))
    result = SweepResult(powers_dbm=tuple(powers),
                         detunings_ghz=tuple(detunings),
                         points=points, spec=spec)
    if spec.out_dir is not None:
        export_results(result, spec.out_dir,
                       wall_time_s=time.perf_counter() - started)
    return result


def _csv_cell(value: float) -> str:
    return repr(float(value))


def results_rows(result: SweepResult) -> list[dict]:
    """Grid rows in CSV order and CSV float precision."""
    rows = []
    for p in result.points:
        rows.append({
            "power_dbm": p.power_dbm,
            "detuning_ghz": p.detuning_ghz,
            "nmse_test": p.nmse_test,
            "nmse_train": p.nmse_train,
            "status": p.status,
        })
    return rows


def export_results(result: SweepResult, out_dir, formats=("csv", "meta", "svg"),
                   wall_time_s: float = 0.0) -> dict[str, Path]:
    """Write results.csv, result.meta, and heatmap.svg into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    if "csv" in formats:
        lines = [",".join(CSV_COLUMNS)]
        for row in results_rows(result):
            lines.append(",".join((
                _csv_cell(row["power_dbm"]), _csv_cell(row["detuning_ghz"]),
                _csv_cell(row["nmse_test"]), _csv_cell(row["nmse_train"]),
                row["status"])))
        path = out / "results.csv"
        _atomic_write(path, "\n".join(lines) + "\n")
        written["csv"] = path

    if "meta" in formats:
        try:
            best_p, best_d, best_nmse = find_best(result)
            best = {"power_dbm": best_p, "detuning_ghz": best_d,
                    "nmse_test": best_nmse}
        except AllPointsFailedError:
            best = None
        meta = {
            "spec": result.spec.to_dict(),
            "grid": {"n_powers": len(result.powers_dbm),
                     "n_detunings": len(result.detunings_ghz)},
            "best": best,
            "n_failed": result.n_failed,
            "timings": {
                "wall_time_s": round(wall_time_s, 3),
                "point_wall_time_s_total": round(
                    sum(p.wall_time_s for p in result.points), 3),
            },
        }
        path = out / "result.meta"
        _atomic_write(path, json.dumps(meta, sort_keys=True, indent=2) + "\n")
        written["meta"] = path

    if "svg" in formats:
        rows = _rows_via_csv_precision(results_rows(result))
        path = out / "heatmap.svg"
        _atomic_write(path, heatmap.render_heatmap_svg(rows))
        written["svg"] = path

    return written


def _rows_via_csv_precision(rows: list[dict]) -> list[dict]:
    """Pass floats through their CSV text form (identity for finite doubles)."""
    out = []
    for row in rows:
        out.append({
            "power_dbm": float(_csv_cell(row["power_dbm"])),
            "detuning_ghz": float(_csv_cell(row["detuning_ghz"])),
            "nmse_test": float(_csv_cell(row["nmse_test"])),
            "nmse_train": float(_csv_cell(row["nmse_train"])),
            "status": row["status"],
        })
    return out


def load_results_csv(path) -> list[dict]:
    """Parse a results.csv written by :func:`export_results`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValidationError(
                f"unexpected CSV columns {reader.fieldnames}, "
                f"expected {list(CSV_COLUMNS)}")
        rows = []
        for record in reader:
            rows.append({
                "power_dbm": float(record["power_dbm"]),
                "detuning_ghz": float(record["detuning_ghz"]),
                "nmse_test": float(record["nmse_test"]),
                "nmse_train": float(record["nmse_train"]),
                "status": record["status"],
            })
    if not rows:
        raise ValidationError(f"no data rows in {path}")
    return rows
