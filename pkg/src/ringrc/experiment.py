"""End-to-end experiment runner: configuration in, NMSE out.

One experiment = generate the task, build per-pump drives, integrate the
cavity, harvest the feature matrix, fit the readout, evaluate both splits.
Identical configurations produce bit-identical results.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import pipeline, readout
from .cavity import CavityParams, FeedbackConfig, simulate
from .errors import RingRCError, ValidationError

MODES = ("wdm_delayed", "single_no_feedback", "single_feedback")
ALIGNMENTS = ("same", "next")
TASKS = ("narma10", "lag_recall")


@dataclass(frozen=True)
class ExperimentConfig:
    """Global parameters of one reservoir run.

    ``power_dbm`` is the total average optical input power, split equally
    between the pumps; ``detuning_ghz`` is the common pump-resonance offset.
    In ``wdm_delayed`` mode pump i carries the input delayed by i symbols;
    the single-pump modes use delay 0. The feedback loop parameters apply
    only in ``single_feedback`` mode.
    """

    mode: str = "wdm_delayed"
    n_pumps: int = 4
    symbol_period_s: float = 1.0e-9
    step_s: float = 2.0e-12
    n_nodes: int = 50
    bias: float = 0.25
    ridge_lambda: float = 1e-9
    n_train: int = 3200
    n_test: int = 800
    washout: int = 0
    master_seed: int = 20859
    power_dbm: float = 10.0
    detuning_ghz: float = 25.0
    cavity: CavityParams = field(default_factory=CavityParams)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    alignment: str = "same"
    task: str = "narma10"
    lag_k: int = 2
    standardize_features: bool = False
    regularize_intercept: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.alignment not in ALIGNMENTS:
            raise ValidationError(f"alignment must be one of {ALIGNMENTS}")
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}")
        if self.mode != "wdm_delayed" and self.n_pumps != 1:
            raise ValidationError(f"{self.mode} requires n_pumps=1, got {self.n_pumps}")
        if self.n_pumps < 1:
            raise ValidationError("n_pumps must be >= 1")
        if self.n_train < 1 or self.n_test < 1 or self.washout < 0:
            raise ValidationError("split sizes must be positive, washout >= 0")
        if self.lag_k < 0:
            raise ValidationError("lag_k must be >= 0")
        pipeline.chip_timing(self.symbol_period_s, self.step_s, self.n_nodes)

    @property
    def n_symbols(self) -> int:
        """Symbols generated: washout + train + test (+1 for next-step targets)."""
        return (self.washout + self.n_train + self.n_test
                + (1 if self.alignment == "next" else 0))

    def effective_feedback(self) -> FeedbackConfig:
        """The loop is closed by the mode, not by a separate flag."""
        return replace(self.feedback, enabled=self.mode == "single_feedback")


@dataclass(frozen=True)
class ExperimentResult:
    """Errors and diagnostics of one run; wall time excluded from equality."""

    nmse_train: float
    nmse_test: float
    max_delta_t_k: float
    max_delta_n_m3: float
    mean_drop_power_w: float
    fingerprint: str
    wall_time_s: float

    def same_outcome(self, other: "ExperimentResult") -> bool:
        return (self.nmse_train == other.nmse_train
                and self.nmse_test == other.nmse_test
                and self.max_delta_t_k == other.max_delta_t_k
                and self.max_delta_n_m3 == other.max_delta_n_m3
                and self.mean_drop_power_w == other.mean_drop_power_w
                and self.fingerprint == other.fingerprint)


# Config file schema: key -> (section, dataclass field). Keys carry their
# units; values are stored verbatim (no rescaling), so a printed config
# reloads to the bit-identical configuration.
_TOP_KEYS = {
    "mode": "mode",
    "n_pumps": "n_pumps",
    "symbol_period_s": "symbol_period_s",
    "step_s": "step_s",
    "n_nodes": "n_nodes",
    "bias": "bias",
    "ridge_lambda": "ridge_lambda",
    "n_train": "n_train",
    "n_test": "n_test",
    "washout": "washout",
    "master_seed": "master_seed",
    "power_dbm": "power_dbm",
    "detuning_ghz": "detuning_ghz",
    "alignment": "alignment",
    "task": "task",
    "lag_k": "lag_k",
    "standardize_features": "standardize_features",
    "regularize_intercept": "regularize_intercept",
}
_CAVITY_KEYS = {
    "omega0_rad_per_s": "omega0",
    "tau_intrinsic_s": "tau_intrinsic",
    "tau_couple_s": "tau_couple",
    "n_si": "n_si",
    "n_g": "n_g",
    "dn_dt_per_k": "dn_dT",
    "dn_dn_m3": "dn_dN",
    "beta_tpa_m_per_w": "beta_tpa",
    "sigma_fca_m2": "sigma_fca",
    "v_tpa_m3": "v_tpa",
    "v_fca_m3": "v_fca",
    "tau_thermal_s": "tau_thermal",
    "tau_carrier_s": "tau_carrier",
    "thermal_mass_j_per_k": "thermal_mass",
    "linear_absorption_fraction": "linear_absorption_fraction",
}
_FEEDBACK_KEYS = {
    "attenuation": "attenuation",
    "phase_rad": "phase",
    "delay_s": "delay",
}


def config_to_dict(config: ExperimentConfig) -> dict:
    """Canonical JSON-ready form; the one serialization used everywhere."""
    out = {key: getattr(config, attr) for key, attr in _TOP_KEYS.items()}
    out["cavity"] = {key: getattr(config.cavity, attr)
                     for key, attr in _CAVITY_KEYS.items()}
    out["feedback"] = {key: getattr(config.feedback, attr)
                       for key, attr in _FEEDBACK_KEYS.items()}
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    """Inverse of :func:`config_to_dict`; unknown keys are rejected."""
    data = dict(data)
    cav_data = dict(data.pop("cavity", {}))
    fb_data = dict(data.pop("feedback", {}))
    for section, known in ((data, _TOP_KEYS), (cav_data, _CAVITY_KEYS),
                           (fb_data, _FEEDBACK_KEYS)):
        unknown = set(section) - set(known)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {_TOP_KEYS[k]: v for k, v in data.items()}
    cav_kwargs = {_CAVITY_KEYS[k]: v for k, v in cav_data.items()}
    fb_kwargs = {_FEEDBACK_KEYS[k]: v for k, v in fb_data.items()}
    return ExperimentConfig(cavity=CavityParams(**cav_kwargs),
                            feedback=FeedbackConfig(**fb_kwargs), **kwargs)


def config_fingerprint(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical serialized configuration."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@contextmanager
def _stage(name: str):
    """Tag escaping package errors with the pipeline stage that raised them."""
    try:
        yield
    except RingRCError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def _channels(config: ExperimentConfig) -> list[pipeline.PumpChannel]:
    detuning = 2.0 * math.pi * config.detuning_ghz * 1e9
    share = 1.0 / config.n_pumps
    channels = []
    for i in range(config.n_pumps):
        mask = pipeline.gen_mask(config.master_seed + 1 + i, config.n_nodes)
        delay = i if config.mode == "wdm_delayed" else 0
        channels.append(pipeline.PumpChannel(
            index=i, delay_symbols=delay, mask=mask,
            power_share=share, detuning=detuning))
    return channels


def _target(config: ExperimentConfig, u: pipeline.InputSequence) -> np.ndarray:
    if config.task == "narma10":
        return pipeline.gen_narma10(u).values
    return pipeline.gen_lag_recall(u, config.lag_k).values


def _features_and_targets(config: ExperimentConfig, n_symbols: int,
                          artifacts: "ArtifactRequest | None" = None):
    """Simulate the first ``n_symbols`` symbols; return rows, targets, diagnostics.

    Row r of the feature matrix belongs to absolute symbol washout + r and
    predicts the target at washout + r (+1 with next-step alignment).
    """
    with _stage("task"):
        u = pipeline.gen_input_sequence(config.master_seed, n_symbols)
        y = _target(config, u)
    channels = _channels(config)
    with _stage("drive"):
        power_w = pipeline.dbm_to_watts(config.power_dbm)
        drives = [pipeline.build_drive(u, ch, config.bias, power_w,
                                       config.symbol_period_s, config.step_s)
                  for ch in channels]
    with _stage("simulate"):
        ports = simulate(config.cavity, [ch.detuning for ch in channels],
                         drives, config.effective_feedback())
    with _stage("photodetect"):
        current = pipeline.photodetect_sum(ports)
        matrix = pipeline.sample_state_matrix(
            current, n_symbols, config.n_nodes, config.symbol_period_s,
            config.step_s, config.washout)
    if artifacts is not None:
        artifacts.dump(drives, ports, matrix)
    offset = 1 if config.alignment == "next" else 0
    rows = matrix.values
    targets = y[config.washout + offset: config.washout + offset + len(rows)]
    n = min(len(rows), len(targets))
    diagnostics = {
        "max_delta_t_k": float(ports.delta_T.max()),
        "max_delta_n_m3": float(ports.delta_N.max()),
        "mean_drop_power_w": float(current.mean()),
    }
    return rows[:n], targets[:n], diagnostics


def _standardize(train_rows: np.ndarray, other_rows: np.ndarray):
    mean = train_rows.mean(axis=0)
    scale = train_rows.std(axis=0)
    scale[scale == 0.0] = 1.0
    return (train_rows - mean) / scale, (other_rows - mean) / scale


@dataclass
class ArtifactRequest:
    """Debug dumps requested by the CLI; everything is opt-in."""

    out_dir: Path
    trace_ports: bool = False
    dump_drive: bool = False
    dump_states: bool = False
    model_path: Path | None = None

    def dump(self, drives, ports, matrix) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.trace_ports:
            ports.dump_csv(self.out_dir / "ports.csv")
        if self.dump_drive:
            for i, drive in enumerate(drives):
                pipeline.dump_drive_csv(drive, self.out_dir / f"drive_{i}.csv")
        if self.dump_states:
            pipeline.dump_state_matrix_csv(matrix, self.out_dir / "state_matrix.csv")


def run_experiment(config: ExperimentConfig,
                   artifacts: ArtifactRequest | None = None) -> ExperimentResult:
    """Full pipeline: first n_train usable symbols train, next n_test test."""
    started = time.perf_counter()
    rows, targets, diagnostics = _features_and_targets(config, config.n_symbols,
                                                       artifacts)
    need = config.n_train + config.n_test
    if len(rows) < need:
        raise ValidationError(
            f"only {len(rows)} usable symbols for {need} train+test rows")
    x_train, y_train = rows[:config.n_train], targets[:config.n_train]
    x_test = rows[config.n_train:need]
    y_test = targets[config.n_train:need]
    if config.standardize_features:
        x_train, x_test = _standardize(x_train, x_test)
    with _stage("readout"):
        model = readout.train_ridge(
            x_train, y_train, config.ridge_lambda,
            regularize_bias=config.regularize_intercept)
        nmse_train = readout.nmse(readout.predict(model, x_train), y_train)
        nmse_test = readout.nmse(readout.predict(model, x_test), y_test)
    if artifacts is not None and artifacts.model_path is not None:
        readout.save_model(model, artifacts.model_path)
    return ExperimentResult(
        nmse_train=nmse_train, nmse_test=nmse_test,
        fingerprint=config_fingerprint(config),
        wall_time_s=time.perf_counter() - started,
        **diagnostics)


def run_training_only(config: ExperimentConfig) -> float:
    """Training NMSE from a run that never generates the test split.

    Only washout + n_train (+1) symbols are simulated, so test-split
    targets cannot leak into model selection by construction.
    """
    offset = 1 if config.alignment == "next" else 0
    n_symbols = config.washout + config.n_train + offset
    rows, targets, _ = _features_and_targets(config, n_symbols)
    if len(rows) < config.n_train:
        raise ValidationError(
            f"only {len(rows)} usable symbols for {config.n_train} training rows")
    x_train, y_train = rows[:config.n_train], targets[:config.n_train]
    if config.standardize_features:
        x_train, _ = _standardize(x_train, x_train)
    model = readout.train_ridge(x_train, y_train, config.ridge_lambda,
                                regularize_bias=config.regularize_intercept)
    return readout.nmse(readout.predict(model, x_train), y_train)


@dataclass(frozen=True)
class BetaSearchResult:
    beta: float
    nmse_train: float
    evaluated: tuple[tuple[float, float], ...]
    failures: tuple[tuple[float, str], ...] = ()


def optimize_beta(config: ExperimentConfig, beta_grid) -> BetaSearchResult:
    """Pick the bias minimizing training NMSE over the given grid.

    Selection sees the training split only. Failed grid values are skipped;
    if every value fails, the aggregated error lists them all.
    """
    grid = [float(b) for b in beta_grid]
    if not grid:
        raise ValidationError("beta grid is empty")
    if any(b < 0 for b in grid):
        raise ValidationError("beta values must be >= 0")
    evaluated: list[tuple[float, float]] = []
    failures: list[tuple[float, str]] = []
    for beta in grid:
        try:
            score = run_training_only(replace(config, bias=beta))
        except RingRCError as exc:
            failures.append((beta, str(exc)))
            continue
        evaluated.append((beta, score))
    if not evaluated:
        details = "; ".join(f"beta={b:g}: {msg}" for b, msg in failures)
        raise RingRCError(f"every beta candidate failed: {details}")
    best = min(evaluated, key=lambda item: (item[1], item[0]))
    return BetaSearchResult(beta=best[0], nmse_train=best[1],
                            evaluated=tuple(evaluated),
                            failures=tuple(failures))
