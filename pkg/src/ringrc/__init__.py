"""Time-delay reservoir computing on a nonlinear silicon add-drop microring.

A deterministic numerical testbed: coupled-mode cavity dynamics with
thermo-optic and free-carrier nonlinearities, masked/delayed multi-pump
drive construction, ridge-regression readout, and parallel power/detuning
sweeps with resumable persistence.
"""

__version__ = "0.1.0"

from .cavity import (CavityParams, CavityState, FeedbackConfig, PortRecord,
                     linear_steady_state, nonlinear_shift, simulate,
                     validate_physics)
from .experiment import (BetaSearchResult, ExperimentConfig, ExperimentResult,
                         config_fingerprint, config_from_dict, config_to_dict,
                         optimize_beta, run_experiment)
from .pipeline import (DriveWaveform, InputSequence, Mask, PumpChannel,
                       StateMatrix, TaskTarget, build_drive, dbm_to_watts,
                       gen_input_sequence, gen_lag_recall, gen_mask,
                       gen_narma10, photodetect_sum, sample_state_matrix)
from .readout import (EvalReport, ReadoutModel, load_model, nmse, predict,
                      save_model, train_ridge)
from .sweep import (PointResult, SweepResult, SweepSpec, export_results,
                    find_best, load_results_csv, run_sweep)

__all__ = [
    "BetaSearchResult", "CavityParams", "CavityState", "DriveWaveform",
    "EvalReport", "ExperimentConfig", "ExperimentResult", "FeedbackConfig",
    "InputSequence", "Mask", "PointResult", "PortRecord", "PumpChannel",
    "ReadoutModel", "StateMatrix", "SweepResult", "SweepSpec", "TaskTarget",
    "build_drive", "config_fingerprint", "config_from_dict", "config_to_dict",
    "dbm_to_watts", "export_results", "find_best", "gen_input_sequence",
    "gen_lag_recall", "gen_mask", "gen_narma10", "linear_steady_state",
    "load_model", "load_results_csv", "nmse", "nonlinear_shift",
    "optimize_beta", "photodetect_sum", "predict", "run_experiment",
    "run_sweep", "sample_state_matrix", "save_model", "simulate",
    "train_ridge", "validate_physics",
]
