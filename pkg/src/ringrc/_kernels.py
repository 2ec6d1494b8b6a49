"""Jitted fixed-step RK4 integration of the multi-pump cavity equations.

One pump per addressed resonance; pumps couple only through the shared
temperature deviation, free-carrier density, and total stored energy. The
total energy is accumulated in ascending order of the per-pump energies so
that permuting pump slots cannot change the result at the bit level.

Field records use the convention: entry k holds the state after step k,
i.e. at time (k+1)*eta, with the input amplitude of the interval just
integrated. The internal feedback history is sampled at step starts.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_DIVERGED = 1


@njit(cache=True)
def _total_energy(a, scratch):
    """Sum of |a_i|^2 accumulated in ascending order (slot-permutation safe)."""
    m = a.shape[0]
    for i in range(m):
        re = a[i].real
        im = a[i].imag
        scratch[i] = re * re + im * im
    for i in range(1, m):
        v = scratch[i]
        j = i - 1
        while j >= 0 and scratch[j] > v:
            scratch[j + 1] = scratch[j]
            j -= 1
        scratch[j + 1] = v
    total = 0.0
    for i in range(m):
        total += scratch[i]
    return total


@njit(cache=True)
def _derivative(a, temp, carr, s_in, s_add, dets, out_da, scratch,
                gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc):
    """Time derivative of (a, delta_T, delta_N); returns (dT, dN)."""
    m = a.shape[0]
    energy = _total_energy(a, scratch)
    gamma_tpa = g_tpa * energy
    gamma_fca = g_fca * carr
    half_gamma = 0.5 * (gamma_lin + gamma_tpa + gamma_fca)
    shift = shift_t * temp + shift_n * carr
    for i in range(m):
        drive = s_in[i] + s_add[i]
        out_da[i] = (
            complex(-half_gamma, dets[i] + shift) * a[i]
            + complex(0.0, kappa) * drive
        )
    d_carr = -carr * inv_tau_fc + g_gen * energy * energy
    p_abs = (q_abs_lin + gamma_tpa + gamma_fca) * energy
    d_temp = -temp * inv_tau_th + p_abs * inv_c_th
    return d_temp, d_carr


@njit(cache=True)
def rk4_step_core(a, temp, carr, s_in_1, s_add_1, s_in_2, s_add_2,
                  s_in_4, s_add_4, dets, eta,
                  gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                  shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc):
    """One classical RK4 step; drive sampled at t (1), t+eta/2 (2), t+eta (4).

    Returns the updated (a, temp, carr) as freshly allocated values.
    """
    m = a.shape[0]
    scratch = np.empty(m, np.float64)
    k1 = np.empty(m, np.complex128)
    k2 = np.empty(m, np.complex128)
    k3 = np.empty(m, np.complex128)
    k4 = np.empty(m, np.complex128)
    stage = np.empty(m, np.complex128)

    t1, n1 = _derivative(a, temp, carr, s_in_1, s_add_1, dets, k1, scratch,
                         gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                         shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)
    half = 0.5 * eta
    for i in range(m):
        stage[i] = a[i] + half * k1[i]
    t2, n2 = _derivative(stage, temp + half * t1, carr + half * n1,
                         s_in_2, s_add_2, dets, k2, scratch,
                         gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                         shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)
    for i in range(m):
        stage[i] = a[i] + half * k2[i]
    t3, n3 = _derivative(stage, temp + half * t2, carr + half * n2,
                         s_in_2, s_add_2, dets, k3, scratch,
                         gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                         shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)
    for i in range(m):
        stage[i] = a[i] + eta * k3[i]
    t4, n4 = _derivative(stage, temp + eta * t3, carr + eta * n3,
                         s_in_4, s_add_4, dets, k4, scratch,
                         gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                         shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)

    sixth = eta / 6.0
    a_next = np.empty(m, np.complex128)
    for i in range(m):
        a_next[i] = a[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    temp_next = temp + sixth * (t1 + 2.0 * t2 + 2.0 * t3 + t4)
    carr_next = carr + sixth * (n1 + 2.0 * n2 + 2.0 * n3 + n4)
    return a_next, temp_next, carr_next


@njit(cache=True)
def integrate(amp, dets, eta,
              gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
              shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc,
              use_fb, fb_re, fb_im, fb_delay_steps,
              guard_energy, guard_temp, guard_carr):
    """Integrate from zero initial state over a full drive.

    amp: (K, M) real input-field amplitudes per step (sqrt of power samples).
    Returns (drop, through, temp, carr, status, fail_step); record index k
    holds the state after step k.
    """
    n_steps, m = amp.shape
    drop = np.empty((n_steps, m), np.complex128)
    through = np.empty((n_steps, m), np.complex128)
    temp_rec = np.empty(n_steps, np.float64)
    carr_rec = np.empty(n_steps, np.float64)

    if use_fb:
        thru_hist = np.zeros((n_steps + 1, m), np.complex128)
    else:
        thru_hist = np.zeros((1, m), np.complex128)
    fb_gain = complex(fb_re, fb_im)

    a = np.zeros(m, np.complex128)
    temp = 0.0
    carr = 0.0

    scratch = np.empty(m, np.float64)
    k1 = np.empty(m, np.complex128)
    k2 = np.empty(m, np.complex128)
    k3 = np.empty(m, np.complex128)
    k4 = np.empty(m, np.complex128)
    stage = np.empty(m, np.complex128)
    s_add_1 = np.zeros(m, np.complex128)
    s_add_4 = np.zeros(m, np.complex128)

    half = 0.5 * eta
    sixth = eta / 6.0
    ikappa = complex(0.0, kappa)

    for k in range(n_steps):
        if use_fb:
            for i in range(m):
                thru_hist[k, i] = amp[k, i] + ikappa * a[i]
            j1 = k - fb_delay_steps
            if j1 >= 0:
                for i in range(m):
                    s_add_1[i] = fb_gain * thru_hist[j1, i]
            else:
                for i in range(m):
                    s_add_1[i] = 0.0
            j4 = k + 1 - fb_delay_steps
            if j4 > k:
                j4 = k
            if j4 >= 0:
                for i in range(m):
                    s_add_4[i] = fb_gain * thru_hist[j4, i]
            else:
                for i in range(m):
                    s_add_4[i] = 0.0

        k_in = amp[k]
        k_next = k + 1
        if k_next >= n_steps:
            k_next = n_steps - 1
        k_in_4 = amp[k_next]

        t1, n1 = _derivative(a, temp, carr, k_in, s_add_1, dets, k1, scratch,
                             gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                             shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)
        for i in range(m):
            stage[i] = a[i] + half * k1[i]
        t2, n2 = _derivative(stage, temp + half * t1, carr + half * n1,
                             k_in, s_add_1, dets, k2, scratch,
                             gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                             shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)
        for i in range(m):
            stage[i] = a[i] + half * k2[i]
        t3, n3 = _derivative(stage, temp + half * t2, carr + half * n2,
                             k_in, s_add_1, dets, k3, scratch,
                             gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                             shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)
        for i in range(m):
            stage[i] = a[i] + eta * k3[i]
        t4, n4 = _derivative(stage, temp + eta * t3, carr + eta * n3,
                             k_in_4, s_add_4, dets, k4, scratch,
                             gamma_lin, kappa, q_abs_lin, g_tpa, g_fca, g_gen,
                             shift_t, shift_n, inv_c_th, inv_tau_th, inv_tau_fc)

        for i in range(m):
            a[i] = a[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        temp = temp + sixth * (t1 + 2.0 * t2 + 2.0 * t3 + t4)
        carr = carr + sixth * (n1 + 2.0 * n2 + 2.0 * n3 + n4)

        energy = _total_energy(a, scratch)
        if (not np.isfinite(energy) or not np.isfinite(temp)
                or not np.isfinite(carr) or energy > guard_energy
                or temp > guard_temp or carr > guard_carr):
            return drop, through, temp_rec, carr_rec, STATUS_DIVERGED, k

        for i in range(m):
            out = ikappa * a[i]
            drop[k, i] = out
            through[k, i] = amp[k, i] + out
        temp_rec[k] = temp
        carr_rec[k] = carr

    return drop, through, temp_rec, carr_rec, STATUS_OK, -1
