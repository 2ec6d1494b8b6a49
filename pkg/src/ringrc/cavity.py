"""Coupled-mode model of an add-drop silicon microring with slow nonlinearities.

Each optical pump addresses its own resonance and is described by one complex
modal amplitude a_i (|a_i|^2 in joules) in that pump's rotating frame. Pumps
interact only through the shared temperature deviation, free-carrier density,
and total stored energy U = sum |a_i|^2:

    da_i/dt = [ i*(delta_i + dw_NL) - Gamma_tot/2 ] a_i + i*kappa*(s_in,i + s_add,i)
    Gamma_tot = 1/tau_intrinsic + 2/tau_couple + Gamma_TPA + Gamma_FCA
    Gamma_TPA = beta_tpa c^2 / (n_g^2 v_tpa) * U
    Gamma_FCA = sigma_fca c / n_g * delta_N
    dw_NL     = (omega0/n_si) * (dn_dT * delta_T + dn_dN * delta_N)
    d(delta_N)/dt = -delta_N/tau_carrier
                    + beta_tpa c^2 / (2 hbar omega0 n_g^2 v_fca^2) * U^2
    d(delta_T)/dt = -delta_T/tau_thermal + P_abs/thermal_mass
    P_abs = (linear_absorption_fraction/tau_intrinsic + Gamma_TPA + Gamma_FCA) * U

Port convention (kappa = sqrt(1/tau_couple), the per-port field coupling):

    s_drop,i = i*kappa*a_i
    s_thru,i = s_in,i + i*kappa*a_i

With this choice a lossless symmetric ring transfers the full input power to
the drop port on resonance and conserves energy exactly, which the built-in
oracle suite checks numerically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, prng
from .errors import DivergenceError, ValidationError

C_LIGHT = 299_792_458.0          # m/s
HBAR = 1.054_571_817e-34         # J s

# Allows tests to substitute a broken integrator for fault injection.
_integrate = _kernels.integrate


@dataclass(frozen=True)
class CavityParams:
    """Physical constants and rates of the microring model.

    All quantities in SI units. Defaults describe a strongly overcoupled
    silicon add-drop ring (loaded linewidth about 8.5 GHz, near-unity drop
    efficiency on resonance); every value is a calibration knob.

    Parameters
    ----------
    omega0 : float
        Angular resonance frequency [rad/s].
    tau_intrinsic : float
        Intrinsic photon lifetime (linear loss) [s]; may be ``inf``.
    tau_couple : float
        Per-port coupling lifetime, same for input and drop bus [s].
    n_si, n_g : float
        Silicon refractive index and group index.
    dn_dT : float
        Thermo-optic coefficient [1/K], positive.
    dn_dN : float
        Free-carrier dispersion coefficient [m^3], negative.
    beta_tpa : float
        Two-photon absorption coefficient [m/W].
    sigma_fca : float
        Free-carrier absorption cross-section [m^2].
    v_tpa, v_fca : float
        Effective nonlinear volumes [m^3].
    tau_thermal, tau_carrier : float
        Thermal relaxation time and free-carrier lifetime [s].
    thermal_mass : float
        Effective mass x specific heat [J/K].
    linear_absorption_fraction : float
        Fraction of the intrinsic linear loss dissipated as heat (the rest
        is scattered). Only affects the thermal source term.
    """

    omega0: float = 2.0 * math.pi * 193.41e12
    tau_intrinsic: float = 300e-12
    tau_couple: float = 40e-12
    n_si: float = 3.485
    n_g: float = 4.2
    dn_dT: float = 1.86e-4
    dn_dN: float = -4.2e-27
    beta_tpa: float = 8.4e-12
    sigma_fca: float = 1.45e-21
    v_tpa: float = 5e-18
    v_fca: float = 5e-18
    tau_thermal: float = 65e-9
    tau_carrier: float = 10e-9
    thermal_mass: float = 8.5e-11
    linear_absorption_fraction: float = 0.1

    def __post_init__(self):
        violations = parameter_violations(self)
        if violations:
            raise ValidationError("invalid cavity parameters: " + "; ".join(violations))

    @property
    def gamma_linear(self) -> float:
        """Total linear energy decay rate 1/tau_intrinsic + 2/tau_couple [1/s]."""
        return 1.0 / self.tau_intrinsic + 2.0 / self.tau_couple

    @property
    def kappa(self) -> float:
        """Per-port field coupling sqrt(1/tau_couple) [s^-1/2]."""
        return math.sqrt(1.0 / self.tau_couple)

    @property
    def g_tpa(self) -> float:
        """Two-photon loss rate per unit stored energy [1/(s J)]."""
        return self.beta_tpa * C_LIGHT**2 / (self.n_g**2 * self.v_tpa)

    @property
    def g_fca(self) -> float:
        """Free-carrier loss rate per unit carrier density [m^3/s]."""
        return self.sigma_fca * C_LIGHT / self.n_g

    @property
    def g_gen(self) -> float:
        """Carrier generation rate per unit stored energy squared [1/(s J^2 m^3)]."""
        return self.beta_tpa * C_LIGHT**2 / (
            2.0 * HBAR * self.omega0 * self.n_g**2 * self.v_fca**2
        )

    @property
    def shift_per_kelvin(self) -> float:
        """Resonance-shift coefficient (omega0/n_si) dn_dT [rad/(s K)]."""
        return self.omega0 / self.n_si * self.dn_dT

    @property
    def shift_per_carrier(self) -> float:
        """Resonance-shift coefficient (omega0/n_si) dn_dN [rad m^3/s]."""
        return self.omega0 / self.n_si * self.dn_dN


def parameter_violations(params: CavityParams) -> list[str]:
    """Invariant violations of a parameter set, empty when valid."""
    bad: list[str] = []
    for name in ("tau_intrinsic", "tau_couple", "tau_thermal", "tau_carrier",
                 "v_tpa", "v_fca", "thermal_mass", "omega0", "n_si", "n_g"):
        if not getattr(params, name) > 0.0:
            bad.append(f"{name} must be strictly positive")
    if not params.dn_dT > 0.0:
        bad.append("dn_dT must be positive")
    if not params.dn_dN < 0.0:
        bad.append("dn_dN must be negative")
    if params.beta_tpa < 0.0:
        bad.append("beta_tpa must be >= 0")
    if params.sigma_fca < 0.0:
        bad.append("sigma_fca must be >= 0")
    if not 0.0 <= params.linear_absorption_fraction <= 1.0:
        bad.append("linear_absorption_fraction must be in [0, 1]")
    if not bad:
        gamma = 1.0 / params.tau_intrinsic + 2.0 / params.tau_couple
        if not (math.isfinite(gamma) and gamma > 0.0):
            bad.append("total linear decay rate must be finite and positive")
    return bad


@dataclass
class CavityState:
    """Instantaneous simulator state: modal amplitudes plus slow variables."""

    a: np.ndarray
    delta_T: float = 0.0
    delta_N: float = 0.0

    @classmethod
    def zero(cls, n_pumps: int) -> "CavityState":
        return cls(a=np.zeros(n_pumps, dtype=np.complex128))

    def is_finite(self) -> bool:
        return (np.all(np.isfinite(self.a))
                and math.isfinite(self.delta_T) and math.isfinite(self.delta_N))


@dataclass(frozen=True)
class FeedbackConfig:
    """External through->add delayed feedback loop."""

    enabled: bool = False
    attenuation: float = 0.99
    phase: float = 0.0
    delay: float = 1.0e-9

    def __post_init__(self):
        if not 0.0 <= self.attenuation <= 1.0:
            raise ValidationError(f"attenuation must be in [0, 1], got {self.attenuation}")
        if self.delay < 0.0:
            raise ValidationError(f"delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class PortRecord:
    """Per-step, per-pump output fields and slow-variable traces.

    Entry k holds the state after solver step k, i.e. at time (k+1)*step_s;
    the through-port entry uses the input amplitude of the interval just
    integrated. Fields are in sqrt(W), powers |.|^2 in W.
    """

    drop: np.ndarray
    through: np.ndarray
    delta_T: np.ndarray
    delta_N: np.ndarray
    step_s: float

    @property
    def n_steps(self) -> int:
        return self.drop.shape[0]

    @property
    def n_pumps(self) -> int:
        return self.drop.shape[1]

    def times(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 1) * self.step_s

    def dump_csv(self, path) -> None:
        """Debug trace: step, t_s, per-pump drop power, delta_T, delta_N."""
        power = np.abs(self.drop) ** 2
        cols = ",".join(f"drop_power_{i}_w" for i in range(self.n_pumps))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"step,t_s,{cols},delta_T_K,delta_N_m3\n")
            for k in range(self.n_steps):
                row = ",".join(repr(v) for v in power[k])
                fh.write(f"{k},{(k + 1) * self.step_s!r},{row},"
                         f"{self.delta_T[k]!r},{self.delta_N[k]!r}\n")


def nonlinear_shift(delta_T: float, delta_N: float, params: CavityParams) -> float:
    """Resonance shift (omega0/n_si)(dn_dT*delta_T + dn_dN*delta_N) [rad/s].

    Heating red-shifts the resonance, which enters the modal equation as an
    increase of the effective pump detuning; carriers act with opposite sign.
    """
    return params.shift_per_kelvin * delta_T + params.shift_per_carrier * delta_N


def derivatives(state: CavityState, drive: np.ndarray, add_inputs: np.ndarray,
                params: CavityParams, detunings: np.ndarray) -> CavityState:
    """Time derivative of the state under the governing equations.

    ``drive`` and ``add_inputs`` are per-pump complex input fields in
    sqrt(W); ``detunings`` are per-pump pump-resonance offsets in rad/s.
    """
    if not state.is_finite():
        raise DivergenceError("non-finite state passed to derivatives")
    a = np.ascontiguousarray(state.a, dtype=np.complex128)
    m = len(a)
    drive = np.broadcast_to(np.asarray(drive, dtype=np.complex128), (m,))
    add_inputs = np.broadcast_to(np.asarray(add_inputs, dtype=np.complex128), (m,))
    dets = np.broadcast_to(np.asarray(detunings, dtype=np.float64), (m,))
    if len(drive) != m or len(dets) != m:
        raise ValidationError("drive/detuning length must match the number of pumps")
    out = np.empty(m, dtype=np.complex128)
    scratch = np.empty(m, dtype=np.float64)
    d_temp, d_carr = _kernels._derivative(
        a, state.delta_T, state.delta_N,
        np.ascontiguousarray(drive), np.ascontiguousarray(add_inputs),
        np.ascontiguousarray(dets), out, scratch,
        params.gamma_linear, params.kappa,
        params.linear_absorption_fraction / params.tau_intrinsic,
        params.g_tpa, params.g_fca, params.g_gen,
        params.shift_per_kelvin, params.shift_per_carrier,
        1.0 / params.thermal_mass, 1.0 / params.tau_thermal,
        1.0 / params.tau_carrier,
    )
    return CavityState(a=out, delta_T=d_temp, delta_N=d_carr)


def rk4_step(state: CavityState, t: float, eta: float, drive_fn,
             params: CavityParams, detunings: np.ndarray) -> CavityState:
    """One classical RK4 step of length ``eta`` starting at time ``t``.

    ``drive_fn(time)`` must return the pair (input fields, add-port fields),
    each per pump; it is sampled at t, t + eta/2, and t + eta.
    """
    if eta <= 0.0:
        raise ValidationError(f"step must be positive, got {eta}")
    m = len(state.a)
    dets = np.ascontiguousarray(np.broadcast_to(
        np.asarray(detunings, dtype=np.float64), (m,)))

    def _fields(time):
        s_in, s_add = drive_fn(time)
        s_in = np.ascontiguousarray(np.broadcast_to(
            np.asarray(s_in, dtype=np.complex128), (m,)))
        s_add = np.ascontiguousarray(np.broadcast_to(
            np.asarray(s_add, dtype=np.complex128), (m,)))
        return s_in, s_add

    in1, add1 = _fields(t)
    in2, add2 = _fields(t + 0.5 * eta)
    in4, add4 = _fields(t + eta)
    a_next, temp_next, carr_next = _kernels.rk4_step_core(
        np.ascontiguousarray(state.a, dtype=np.complex128),
        state.delta_T, state.delta_N,
        in1, add1, in2, add2, in4, add4, dets, eta,
        params.gamma_linear, params.kappa,
        params.linear_absorption_fraction / params.tau_intrinsic,
        params.g_tpa, params.g_fca, params.g_gen,
        params.shift_per_kelvin, params.shift_per_carrier,
        1.0 / params.thermal_mass, 1.0 / params.tau_thermal,
        1.0 / params.tau_carrier,
    )
    result = CavityState(a=a_next, delta_T=temp_next, delta_N=carr_next)
    if not result.is_finite():
        raise DivergenceError("RK4 step produced a non-finite state")
    return result


def linear_steady_state(params: CavityParams, detuning: float,
                        input_power: float) -> tuple[float, float, float]:
    """Steady state of the linearized single-pump model.

    Returns (stored energy [J], drop power [W], through power [W]) for a CW
    input of ``input_power`` watts at ``detuning`` rad/s from resonance:

        a = i*kappa*s_in / (Gamma_lin/2 - i*delta)
    """
    if input_power < 0.0:
        raise ValidationError(f"input power must be >= 0, got {input_power}")
    s_in = math.sqrt(input_power)
    denom = 0.5 * params.gamma_linear - 1j * detuning
    a = 1j * params.kappa * s_in / denom
    drop = 1j * params.kappa * a
    through = s_in + drop
    return float(abs(a) ** 2), float(abs(drop) ** 2), float(abs(through) ** 2)


def _divergence_guards(params: CavityParams, peak_power: float):
    p_ref = max(peak_power, 1e-3)
    u_ref = params.kappa**2 * p_ref / (0.5 * params.gamma_linear) ** 2
    guard_energy = 1e6 * u_ref
    guard_temp = 1e6 * max(p_ref * params.tau_thermal / params.thermal_mass, 1.0)
    guard_carr = 1e6 * max(params.g_gen * u_ref**2 * params.tau_carrier, 1e18)
    return guard_energy, guard_temp, guard_carr


def simulate(params: CavityParams, detunings, drives, feedback: FeedbackConfig | None = None) -> PortRecord:
    """Integrate the cavity from zero initial state over full drive waveforms.

    ``drives`` is a sequence of DriveWaveform, one per pump, sharing the same
    step and length; ``detunings`` gives each pump's offset in rad/s. When
    the feedback loop is enabled, the add-port input of pump i is

        s_add,i(t) = attenuation * exp(i*phase) * s_thru,i(t - delay)

    realized as a ring buffer of past through-port samples (zero before the
    first delayed sample exists); otherwise the add inputs are zero.
    """
    drives = list(drives)
    if not drives:
        raise ValidationError("at least one drive waveform is required")
    step = drives[0].step_s
    n_steps = len(drives[0].samples)
    for d in drives[1:]:
        if d.step_s != step or len(d.samples) != n_steps:
            raise ValidationError("all drive waveforms must share step and length")
    dets = np.ascontiguousarray(np.asarray(detunings, dtype=np.float64))
    if dets.ndim == 0:
        dets = dets.reshape(1)
    if len(dets) != len(drives):
        raise ValidationError(
            f"{len(drives)} drives but {len(dets)} detunings")

    amp = np.empty((n_steps, len(drives)), dtype=np.float64)
    for i, d in enumerate(drives):
        if np.any(d.samples < 0.0):
            raise ValidationError(f"drive {i} has negative power samples")
        amp[:, i] = np.sqrt(d.samples)

    if feedback is None:
        feedback = FeedbackConfig(enabled=False)
    use_fb = bool(feedback.enabled)
    fb_delay_steps = 0
    fb_re = fb_im = 0.0
    if use_fb:
        ratio = feedback.delay / step
        fb_delay_steps = int(round(ratio))
        if abs(ratio - fb_delay_steps) > 1e-9:
            warnings.warn(
                f"feedback delay {feedback.delay} s rounded to "
                f"{fb_delay_steps} steps of {step} s", stacklevel=2)
        gain = feedback.attenuation * np.exp(1j * feedback.phase)
        fb_re, fb_im = float(gain.real), float(gain.imag)

    peak = float(np.max(np.sum(amp**2, axis=1), initial=0.0))
    guard_energy, guard_temp, guard_carr = _divergence_guards(params, peak)

    drop, through, temp, carr, status, fail_step = _integrate(
        amp, dets, step,
        params.gamma_linear, params.kappa,
        params.linear_absorption_fraction / params.tau_intrinsic,
        params.g_tpa, params.g_fca, params.g_gen,
        params.shift_per_kelvin, params.shift_per_carrier,
        1.0 / params.thermal_mass, 1.0 / params.tau_thermal,
        1.0 / params.tau_carrier,
        use_fb, fb_re, fb_im, fb_delay_steps,
        guard_energy, guard_temp, guard_carr,
    )
    if status != _kernels.STATUS_OK:
        raise DivergenceError(
            f"state diverged at solver step {fail_step} "
            f"(t = {(fail_step + 1) * step:.3e} s)", step=fail_step)
    return PortRecord(drop=drop, through=through, delta_T=temp,
                      delta_N=carr, step_s=step)


def _cw_waveform(power_w: float, n_steps: int, step_s: float):
    from .pipeline import DriveWaveform

    return DriveWaveform(samples=np.full(n_steps, power_w, dtype=np.float64),
                         step_s=step_s, n_symbols=1, steps_per_symbol=n_steps,
                         chips_per_symbol=1)


def _linearized(params: CavityParams, lossless: bool = False) -> CavityParams:
    kwargs = dict(beta_tpa=0.0, sigma_fca=0.0, linear_absorption_fraction=0.0)
    if lossless:
        kwargs["tau_intrinsic"] = math.inf
    return replace(params, **kwargs)


def _turn_on_amplitude(params: CavityParams, detuning: float, power_w: float,
                       t: float) -> complex:
    """Analytic a(t) for the linear cavity switched on at t = 0."""
    pole = 1j * detuning - 0.5 * params.gamma_linear
    a_ss = 1j * params.kappa * math.sqrt(power_w) / (-pole)
    return a_ss * (1.0 - np.exp(pole * t))


@dataclass(frozen=True)
class PhysicsCheck:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: measured={self.measured:.3e} "
                f"tolerance={self.tolerance:.3e} {self.detail}".rstrip())


@dataclass(frozen=True)
class PhysicsReport:
    checks: tuple[PhysicsCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.checks)


CHECK_NAMES = ("parameters", "lorentzian", "rk4_order", "rk4_accuracy",
               "energy_balance", "nonnegativity")


def validate_physics(params: CavityParams | None = None, eta: float = 2e-12,
                     only=None) -> PhysicsReport:
    """Run the built-in oracle suite and report per-check results.

    Failures are reported, never raised. ``only`` restricts the run to a
    subset of CHECK_NAMES.
    """
    if params is None:
        params = CavityParams()
    selected = tuple(only) if only else CHECK_NAMES
    unknown = set(selected) - set(CHECK_NAMES)
    if unknown:
        raise ValidationError(f"unknown checks: {sorted(unknown)}")
    checks: list[PhysicsCheck] = []

    if "parameters" in selected:
        violations = parameter_violations(params)
        checks.append(PhysicsCheck(
            name="parameters", passed=not violations,
            measured=float(len(violations)), tolerance=0.0,
            detail="; ".join(violations)))
        if violations:
            # The remaining checks would integrate with nonsense rates.
            return PhysicsReport(checks=tuple(checks))

    if "lorentzian" in selected:
        power = 1e-6  # -30 dBm
        duration = 5.0 * params.tau_thermal
        n_steps = int(round(duration / eta))
        worst = 0.0
        for detuning in 2.0 * math.pi * np.linspace(-100e9, 100e9, 21):
            ports = simulate(params, [detuning], [_cw_waveform(power, n_steps, eta)])
            tail = np.abs(ports.drop[3 * n_steps // 4:, 0]) ** 2
            _, drop_ref, _ = linear_steady_state(params, detuning, power)
            worst = max(worst, abs(tail.mean() - drop_ref) / drop_ref)
        checks.append(PhysicsCheck(
            name="lorentzian", passed=worst < 1e-3, measured=worst,
            tolerance=1e-3,
            detail="steady drop power vs analytic line shape at -30 dBm"))

    if "rk4_order" in selected:
        lin = _linearized(params)
        detuning = 2.0 * math.pi * 20e9
        power = 1e-6
        horizon = 2e-9
        errors = []
        for h in (eta, eta / 2.0):
            n_steps = int(round(horizon / h))
            ports = simulate(lin, [detuning], [_cw_waveform(power, n_steps, h)])
            a_num = ports.drop[-1, 0] / (1j * lin.kappa)
            a_ref = _turn_on_amplitude(lin, detuning, power, n_steps * h)
            errors.append(abs(a_num - a_ref))
        ratio = errors[0] / errors[1] if errors[1] > 0 else math.inf
        checks.append(PhysicsCheck(
            name="rk4_order", passed=12.0 <= ratio <= 20.0, measured=ratio,
            tolerance=16.0,
            detail=f"global-error ratio when halving the step from {eta:.1e} s"))

    if "rk4_accuracy" in selected:
        lin = _linearized(params)
        detuning = 2.0 * math.pi * 100e9
        power = 1e-6
        horizon = 3e-9
        n_steps = int(round(horizon / eta))
        a_ss = abs(_turn_on_amplitude(lin, detuning, power, math.inf))
        try:
            ports = simulate(lin, [detuning], [_cw_waveform(power, n_steps, eta)])
            a_num = ports.drop[-1, 0] / (1j * lin.kappa)
            a_ref = _turn_on_amplitude(lin, detuning, power, n_steps * eta)
            rel = abs(a_num - a_ref) / a_ss
        except DivergenceError:
            rel = math.inf
        checks.append(PhysicsCheck(
            name="rk4_accuracy", passed=rel < 1e-3, measured=rel,
            tolerance=1e-3,
            detail=f"linear-cavity error at 100 GHz detuning, step {eta:.1e} s"))

    if "energy_balance" in selected:
        lossless = _linearized(params, lossless=True)
        power = 1e-6
        lifetime = 1.0 / lossless.gamma_linear
        n_steps = int(round(10.0 * lifetime / eta))
        ports = simulate(lossless, [0.0], [_cw_waveform(power, n_steps, eta)])
        out_flux = np.abs(ports.through[:, 0]) ** 2 + np.abs(ports.drop[:, 0]) ** 2
        # Include the t = 0 sample: bare input at the through port, empty ring.
        flux = np.concatenate(([power], out_flux))
        e_in = power * n_steps * eta
        e_out = np.trapezoid(flux, dx=eta)
        stored = float(np.abs(ports.drop[-1, 0]) ** 2) / lossless.kappa**2
        rel = abs(e_in - e_out - stored) / e_in
        checks.append(PhysicsCheck(
            name="energy_balance", passed=rel < 1e-4, measured=rel,
            tolerance=1e-4,
            detail="lossless linear input/output/stored energy closure"))

    if "nonnegativity" in selected:
        power = pow(10.0, 25.0 / 10.0) * 1e-3  # +25 dBm
        chips = prng.uniform(20859, 2000) + 0.25
        raw = np.repeat(chips, 10)
        samples = raw * (power / raw.mean())
        from .pipeline import DriveWaveform

        wave = DriveWaveform(samples=samples, step_s=eta, n_symbols=1,
                             steps_per_symbol=len(samples), chips_per_symbol=1)
        try:
            ports = simulate(params, [0.0], [wave])
            low = float(min(ports.delta_T.min(), ports.delta_N.min()))
        except DivergenceError:
            low = -math.inf
        checks.append(PhysicsCheck(
            name="nonnegativity", passed=low >= 0.0, measured=low,
            tolerance=0.0,
            detail="min of delta_T, delta_N during a +25 dBm drive"))

    return PhysicsReport(checks=tuple(checks))
