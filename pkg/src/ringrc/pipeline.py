"""Input task generation, masking, drive construction, and feature harvesting.

The processing chain implemented here turns a scalar symbol sequence into
per-pump optical power waveforms (mask chips + bias, delayed per pump,
normalized to a target average power) and turns simulated drop-port fields
back into the per-symbol feature matrix used by the linear readout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import prng
from .errors import TimingError, ValidationError, ReseedRequiredError


@dataclass(frozen=True)
class InputSequence:
    """Scalar task input u(n), i.i.d. uniform on [0, 0.5)."""

    values: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Mask:
    """Per-symbol chip weights, one weight per virtual node."""

    values: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PumpChannel:
    """Drive description for one optical pump.

    ``delay_symbols`` shifts this pump's copy of the input sequence into the
    past; ``power_share`` is its fraction of the total average input power;
    ``detuning`` is the pump-resonance offset in rad/s.
    """

    index: int
    delay_symbols: int
    mask: Mask
    power_share: float
    detuning: float = 0.0

    def __post_init__(self):
        if self.delay_symbols < 0:
            raise ValidationError(f"delay_symbols must be >= 0, got {self.delay_symbols}")
        if not 0.0 <= self.power_share <= 1.0:
            raise ValidationError(f"power_share must be in [0, 1], got {self.power_share}")


@dataclass(frozen=True)
class DriveWaveform:
    """Per-step optical power (W) at the solver rate.

    samples are piecewise constant over chips; ``steps_per_symbol`` must be
    divisible by the number of chips per symbol.
    """

    samples: np.ndarray
    step_s: float
    n_symbols: int
    steps_per_symbol: int
    chips_per_symbol: int

    def __post_init__(self):
        if len(self.samples) != self.n_symbols * self.steps_per_symbol:
            raise ValidationError(
                f"waveform length {len(self.samples)} != "
                f"{self.n_symbols} symbols x {self.steps_per_symbol} steps"
            )


@dataclass(frozen=True)
class StateMatrix:
    """Harvested reservoir features, one row per kept symbol.

    Row r corresponds to absolute symbol ``washout + r``; column j is the
    summed photocurrent sampled at the last solver step of chip j.
    """

    values: np.ndarray
    washout: int
    n_train: int = 0
    n_test: int = 0


@dataclass(frozen=True)
class TaskTarget:
    """Target sequence aligned to input symbols."""

    values: np.ndarray
    kind: str


def gen_input_sequence(seed: int, length: int) -> InputSequence:
    """i.i.d. uniform [0, 0.5) symbols from the SplitMix64 stream of ``seed``."""
    if length < 1:
        raise ValidationError(f"length must be positive, got {length}")
    return InputSequence(values=prng.uniform(seed, length), seed=seed)


def gen_mask(seed: int, n_nodes: int) -> Mask:
    """Chip mask of ``n_nodes`` i.i.d. uniform [0, 0.5) weights."""
    if n_nodes < 1:
        raise ValidationError(f"n_nodes must be positive, got {n_nodes}")
    return Mask(values=prng.uniform(seed, n_nodes), seed=seed)


def gen_narma10(u: InputSequence | np.ndarray) -> TaskTarget:
    """Tenth-order NARMA target.

        y(n+1) = 0.3 y(n) + 0.05 y(n) sum_{j=0..9} y(n-j)
                 + 1.5 u(n-9) u(n) + 0.1,     y(0..9) = 0

    The ten-term window is accumulated in ascending symbol order so the
    sequence is reproducible bit-for-bit. Raises ReseedRequiredError if the
    recurrence diverges (|y| > 10) for this input draw.
    """
    uv = u.values if isinstance(u, InputSequence) else np.asarray(u, dtype=np.float64)
    length = len(uv)
    if length < 11:
        raise ValidationError(f"NARMA-10 needs at least 11 symbols, got {length}")
    ul = [float(x) for x in uv]
    y = [0.0] * length
    for n in range(9, length - 1):
        window = 0.0
        for j in range(n - 9, n + 1):
            window += y[j]
        y[n + 1] = 0.3 * y[n] + 0.05 * y[n] * window + 1.5 * ul[n - 9] * ul[n] + 0.1
        if abs(y[n + 1]) > 10.0:
            raise ReseedRequiredError(
                f"NARMA-10 diverged at symbol {n + 1} (|y|={abs(y[n + 1]):.3g}); "
                "rerun with a different seed"
            )
    return TaskTarget(values=np.array(y, dtype=np.float64), kind="narma10")


def gen_lag_recall(u: InputSequence | np.ndarray, k: int) -> TaskTarget:
    """Delayed-identity target y(n) = u(n - k), zero for n < k."""
    if k < 0:
        raise ValidationError(f"lag must be >= 0, got {k}")
    uv = u.values if isinstance(u, InputSequence) else np.asarray(u, dtype=np.float64)
    y = np.zeros_like(uv)
    if k < len(uv):
        y[k:] = uv[: len(uv) - k]
    return TaskTarget(values=y, kind=f"lag_recall_{k}")


def dbm_to_watts(p_dbm: float) -> float:
    """dBm -> W (0 dBm = 1 mW)."""
    if not np.isfinite(p_dbm):
        raise ValidationError(f"power must be finite, got {p_dbm} dBm")
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watts_to_dbm(p_w: float) -> float:
    if p_w <= 0:
        raise ValidationError(f"power must be positive to express in dBm, got {p_w} W")
    return 10.0 * np.log10(p_w / 1e-3)


def chip_timing(symbol_period_s: float, step_s: float, n_nodes: int) -> tuple[int, int]:
    """(steps per symbol, steps per chip); rejects timings that do not divide."""
    if step_s <= 0 or symbol_period_s <= 0:
        raise TimingError("symbol period and step must be positive")
    ratio = symbol_period_s / step_s
    steps_per_symbol = int(round(ratio))
    if steps_per_symbol < 1 or abs(ratio - steps_per_symbol) > 1e-6:
        raise TimingError(
            f"symbol period {symbol_period_s} s is not an integer number of "
            f"{step_s} s steps (ratio {ratio})"
        )
    if steps_per_symbol % n_nodes != 0:
        raise TimingError(
            f"{steps_per_symbol} steps/symbol not divisible by {n_nodes} chips"
        )
    return steps_per_symbol, steps_per_symbol // n_nodes


def masked_chips(u: InputSequence | np.ndarray, mask: Mask,
                 delay_symbols: int, bias: float) -> np.ndarray:
    """Raw chip values u(n - delay) * m(j) + bias, shape (n_symbols, n_nodes).

    The input is zero before symbol 0, so the first ``delay_symbols`` rows
    are bias-only.
    """
    uv = u.values if isinstance(u, InputSequence) else np.asarray(u, dtype=np.float64)
    delayed = np.zeros_like(uv)
    if delay_symbols == 0:
        delayed[:] = uv
    elif delay_symbols < len(uv):
        delayed[delay_symbols:] = uv[: len(uv) - delay_symbols]
    return np.outer(delayed, mask.values) + bias


def build_drive(u: InputSequence, channel: PumpChannel, bias: float,
                total_power_w: float, symbol_period_s: float,
                step_s: float) -> DriveWaveform:
    """Drive waveform for one pump.

    The raw masked-chip sequence is scaled so the empirical mean power over
    the whole waveform equals exactly ``total_power_w * channel.power_share``.
    """
    if total_power_w < 0:
        raise ValidationError(f"total power must be >= 0, got {total_power_w} W")
    if bias < 0:
        raise ValidationError(f"bias must be >= 0, got {bias}")
    n_nodes = len(channel.mask)
    steps_per_symbol, steps_per_chip = chip_timing(symbol_period_s, step_s, n_nodes)
    chips = masked_chips(u, channel.mask, channel.delay_symbols, bias)
    raw = np.repeat(chips.ravel(), steps_per_chip)
    target = total_power_w * channel.power_share
    if target == 0.0:
        samples = np.zeros_like(raw)
    else:
        mean = raw.mean()
        if mean <= 0.0:
            raise ValidationError(
                "drive sequence has zero mean but a nonzero target power; "
                "set a positive bias or a nonzero input"
            )
        samples = raw * (target / mean)
    return DriveWaveform(
        samples=samples,
        step_s=step_s,
        n_symbols=len(u.values),
        steps_per_symbol=steps_per_symbol,
        chips_per_symbol=n_nodes,
    )


def photodetect_sum(ports) -> np.ndarray:
    """Summed square-law photocurrent of the demultiplexed drop fields.

    Unit responsivity: X(k) = sum_i |s_drop,i(k)|^2, in watts.
    """
    drop = ports.drop
    if drop.size == 0:
        raise ValidationError("empty port record")
    return np.sum(np.abs(drop) ** 2, axis=1)


def sample_state_matrix(photocurrent: np.ndarray, n_symbols: int, n_nodes: int,
                        symbol_period_s: float, step_s: float,
                        washout: int = 0) -> StateMatrix:
    """Sample-and-hold the photocurrent at the last solver step of each chip.

    Returns one row per symbol after dropping the first ``washout`` rows.
    """
    steps_per_symbol, steps_per_chip = chip_timing(symbol_period_s, step_s, n_nodes)
    expected = n_symbols * steps_per_symbol
    if len(photocurrent) != expected:
        raise ValidationError(
            f"photocurrent length {len(photocurrent)} != {expected} "
            f"({n_symbols} symbols x {steps_per_symbol} steps)"
        )
    if not 0 <= washout < n_symbols:
        raise ValidationError(f"washout {washout} out of range for {n_symbols} symbols")
    grid = photocurrent.reshape(n_symbols, n_nodes, steps_per_chip)
    return StateMatrix(values=grid[washout:, :, -1].copy(), washout=washout)


def dump_drive_csv(waveform: DriveWaveform, path) -> None:
    """One row per solver step: step, t_s, power_w."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,t_s,power_w\n")
        for k, p in enumerate(waveform.samples):
            fh.write(f"{k},{k * waveform.step_s!r},{p!r}\n")


def dump_state_matrix_csv(matrix: StateMatrix, path) -> None:
    """One row per kept symbol; columns are the per-chip samples."""
    n_nodes = matrix.values.shape[1]
    header = "symbol," + ",".join(f"node_{j}" for j in range(n_nodes))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for r, row in enumerate(matrix.values):
            cells = ",".join(repr(v) for v in row)
            fh.write(f"{matrix.washout + r},{cells}\n")
