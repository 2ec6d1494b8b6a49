"""Command-line entry point: run, sweep, validate, plot.

Configuration comes from an optional JSON file plus flag overrides (flags
always win). Exit codes: 0 success, 1 oracle-suite failure, 2 usage or
configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .cavity import CHECK_NAMES, validate_physics
from .errors import (AllPointsFailedError, DivergenceError, RingRCError,
                     ValidationError)
from .experiment import (ArtifactRequest, ExperimentConfig, config_fingerprint,
                         config_from_dict, config_to_dict, run_experiment)
from .heatmap import render_heatmap_svg
from .sweep import SweepSpec, find_best, load_results_csv, run_sweep

_SWEEP_KEYS = ("power_start_dbm", "power_stop_dbm", "power_step_db",
               "detuning_start_ghz", "detuning_stop_ghz", "detuning_step_ghz",
               "workers", "out_dir", "allow_extended_range")

_MODE_PUMPS = {"wdm_delayed": 4, "single_no_feedback": 1, "single_feedback": 1}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config file {p} must hold a JSON object")
    return data


def _resolve_config(args) -> tuple[ExperimentConfig, dict]:
    """Defaults -> config file -> flag overrides; returns (config, sweep section)."""
    data = _load_config_file(args.config)
    sweep_data = data.pop("sweep", {})
    unknown = set(sweep_data) - set(_SWEEP_KEYS)
    if unknown:
        raise ValidationError(f"unknown sweep keys: {sorted(unknown)}")

    if args.mode is not None:
        data["mode"] = args.mode
        if args.n_pumps is None:
            data["n_pumps"] = _MODE_PUMPS[args.mode]
    if args.n_pumps is not None:
        data["n_pumps"] = args.n_pumps
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.power_dbm is not None:
        data["power_dbm"] = args.power_dbm
    if args.detuning_ghz is not None:
        data["detuning_ghz"] = args.detuning_ghz
    if args.beta is not None:
        data["bias"] = args.beta
    if args.washout is not None:
        data["washout"] = args.washout
    if args.task is not None:
        data["task"] = args.task
    if args.lag_k is not None:
        data["lag_k"] = args.lag_k
    if args.alignment is not None:
        data["alignment"] = args.alignment
    return config_from_dict(data), sweep_data


def _print_config(config: ExperimentConfig, sweep_section: dict | None) -> None:
    document = config_to_dict(config)
    if sweep_section is not None:
        document["sweep"] = sweep_section
    print(json.dumps(document, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    config, _ = _resolve_config(args)
    if args.print_config:
        _print_config(config, None)
        return 0
    artifacts = None
    if args.out is not None:
        out = Path(args.out)
        artifacts = ArtifactRequest(
            out_dir=out, trace_ports=args.trace, dump_drive=args.dump_drive,
            dump_states=args.dump_states, model_path=out / "weights.csv")
    result = run_experiment(config, artifacts)
    print(f"nmse_train={result.nmse_train:.6g}")
    print(f"nmse_test={result.nmse_test:.6g}")
    print(f"max_delta_T={result.max_delta_t_k:.4g} K  "
          f"max_delta_N={result.max_delta_n_m3:.4g} m^-3  "
          f"mean_drop_power={result.mean_drop_power_w:.4g} W")
    print(f"fingerprint={result.fingerprint}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "config": config_to_dict(config),
            "nmse_train": result.nmse_train,
            "nmse_test": result.nmse_test,
            "max_delta_t_k": result.max_delta_t_k,
            "max_delta_n_m3": result.max_delta_n_m3,
            "mean_drop_power_w": result.mean_drop_power_w,
            "fingerprint": result.fingerprint,
            "wall_time_s": round(result.wall_time_s, 3),
        }
        (out / "run_result.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return 0


def cmd_sweep(args) -> int:
    config, sweep_data = _resolve_config(args)
    if args.out is not None:
        sweep_data["out_dir"] = args.out
    if args.workers is not None:
        sweep_data["workers"] = args.workers
    if args.grid is not None:
        try:
            n_powers, n_detunings = (int(v) for v in args.grid.lower().split("x"))
            if n_powers < 1 or n_detunings < 1:
                raise ValueError
        except ValueError:
            raise ValidationError(f"--grid expects RxC, e.g. 9x9, got {args.grid!r}")
        sweep_data.update(_regrid(sweep_data, n_powers, n_detunings))
    spec = SweepSpec(base=config, **sweep_data)
    if args.print_config:
        section = {k: getattr(spec, k) for k in _SWEEP_KEYS}
        _print_config(config, section)
        return 0
    n_points = len(spec.power_values()) * len(spec.detuning_values())

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} points", end="", file=sys.stderr, flush=True)

    result = run_sweep(spec, resume=args.resume, progress=progress)
    if args.verbose:
        print(file=sys.stderr)
    if result.n_failed:
        print(f"warning: {result.n_failed} of {n_points} points failed",
              file=sys.stderr)
    power, detuning, best_nmse = find_best(result)
    print(f"best: P={power:g} dF={detuning:g} NMSE={best_nmse:.6g}")
    return 0


def cmd_validate(args) -> int:
    only = [args.check] if args.check else None
    report = validate_physics(only=only)
    print(report)
    return 0 if report.passed else 1


def cmd_plot(args) -> int:
    rows = load_results_csv(args.results_csv)
    svg = render_heatmap_svg(rows)
    Path(args.out_svg).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out_svg}")
    return 0


def _regrid(sweep_data: dict, n_powers: int, n_detunings: int) -> dict:
    """Respace the configured ranges into the requested point counts."""
    out = {}
    for prefix, count, unit in (("power", n_powers, "_dbm"),
                                ("detuning", n_detunings, "_ghz")):
        step_key = f"{prefix}_step_db" if prefix == "power" else f"{prefix}_step_ghz"
        lo = sweep_data.get(f"{prefix}_start{unit}",
                            getattr(SweepSpec, f"{prefix}_start{unit}"))
        hi = sweep_data.get(f"{prefix}_stop{unit}",
                            getattr(SweepSpec, f"{prefix}_stop{unit}"))
        if count == 1:
            mid = (lo + hi) / 2.0
            out[f"{prefix}_start{unit}"] = mid
            out[f"{prefix}_stop{unit}"] = mid
            out[step_key] = 1.0
        else:
            out[f"{prefix}_start{unit}"] = lo
            out[f"{prefix}_stop{unit}"] = hi
            out[step_key] = (hi - lo) / (count - 1)
    return out


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON configuration file")
    parser.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    parser.add_argument("--mode", choices=sorted(_MODE_PUMPS),
                        help="experiment mode override")
    parser.add_argument("--n-pumps", type=int, dest="n_pumps")
    parser.add_argument("--power-dbm", type=float, dest="power_dbm")
    parser.add_argument("--detuning-ghz", type=float, dest="detuning_ghz")
    parser.add_argument("--beta", type=float, help="input bias override")
    parser.add_argument("--washout", type=int)
    parser.add_argument("--task", choices=("narma10", "lag_recall"))
    parser.add_argument("--lag-k", type=int, dest="lag_k")
    parser.add_argument("--alignment", choices=("same", "next"))
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringrc",
        description="Microring time-delay reservoir computing simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and print its NMSE")
    _add_config_flags(p_run)
    p_run.add_argument("--trace", action="store_true",
                       help="dump the port record to <out>/ports.csv")
    p_run.add_argument("--dump-drive", action="store_true", dest="dump_drive",
                       help="dump per-pump drive waveforms as CSV")
    p_run.add_argument("--dump-states", action="store_true", dest="dump_states",
                       help="dump the feature matrix as CSV")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the power x detuning grid")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--workers", type=int, help="parallel worker processes")
    p_sweep.add_argument("--resume", action="store_true",
                         help="reuse persisted points with matching fingerprints")
    p_sweep.add_argument("--grid", metavar="RxC",
                         help="respace the ranges into R power x C detuning points")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the physics/pipeline oracle suite")
    p_val.add_argument("--check", choices=CHECK_NAMES, help="run a single check")
    p_val.set_defaults(func=cmd_validate)

    p_plot = sub.add_parser("plot", help="regenerate the heatmap SVG from a CSV")
    p_plot.add_argument("results_csv")
    p_plot.add_argument("out_svg")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DivergenceError, AllPointsFailedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RingRCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
