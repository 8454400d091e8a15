import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from cascade_qwm import analytic as A, calibration, dynamics as D, spectrum as S, units
from cascade_qwm.errors import ParameterError


def bloch_generator(Omega, gamma):
    """Column-stacked Liouvillian of H = Omega/2 sx, jump sqrt(gamma) s-, basis (|g>, |e>)."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    h = 0.5 * Omega * np.array([[0, 1], [1, 0]], dtype=complex)
    eye = np.eye(2)
    spre = lambda a: np.kron(eye, a)
    spost = lambda a: np.kron(a.T, eye)
    ldl = sm.conj().T @ sm
    return (-1j * (spre(h) - spost(h)) + gamma * np.kron(sm.conj(), sm)
            - 0.5 * gamma * (spre(ldl) + spost(ldl)))


def g2_by_regression(tau, Omega, gamma):
    # quantum regression: after a detection the emitter restarts in |g>
    L = bloch_generator(Omega, gamma)
    rho_g = np.array([1, 0, 0, 0], dtype=complex)
    rho_t = expm(L * tau) @ rho_g
    rho_ss = expm(L * 200.0 / gamma) @ rho_g
    return (rho_t[3] / rho_ss[3]).real


# --- photon statistics ---------------------------------------------------------

@pytest.mark.parametrize("Om", [0.1, 0.25, 1.0, 5.0])
def test_g2_matches_quantum_regression(Om):
    gamma = 1.3
    src = A.SourceDriveParams(Om * gamma, gamma)
    for tau in np.linspace(0, 8 / gamma, 17):
        assert A.g2(tau, src) == pytest.approx(g2_by_regression(tau, Om * gamma, gamma), abs=1e-10)


def test_g2_at_half_rabi_period():
    gamma = 1.0
    src = A.SourceDriveParams(gamma, gamma)
    tau = math.pi / math.sqrt(src.generalized_rabi_sq)
    assert A.g2(tau, src) == pytest.approx(g2_by_regression(tau, gamma, gamma), abs=1e-12)


def test_g2_limits_and_branch_continuity():
    gamma = 2.0
    for c in ("standard", "printed"):
        assert A.g2(0.0, A.SourceDriveParams(gamma, gamma), c) == 0.0
    lo = A.SourceDriveParams(gamma / 4 * (1 - 1e-9), gamma)
    hi = A.SourceDriveParams(gamma / 4 * (1 + 1e-9), gamma)
    at = A.SourceDriveParams(gamma / 4, gamma)
    for tau in (0.1, 1.0, 5.0):
        assert abs(A.g2(tau, lo) - A.g2(tau, hi)) < 1e-5
        assert abs(A.g2(tau, at) - A.g2(tau, hi)) < 1e-5


@given(st.floats(0.01, 20), st.floats(0, 40))
def test_standard_g2_bounded(om, tg):
    src = A.SourceDriveParams(om, 1.0)
    assert -1e-12 <= A.g2(tg, src) <= 2.0


def test_printed_coefficient_breaks_positivity():
    src = A.SourceDriveParams(0.25, 1.0)
    assert min(A.g2_array(np.linspace(0, 5, 101), src, "printed")) < 0


def test_weak_drive_g2_is_aperiodic_rise():
    src = A.SourceDriveParams(0.01, 1.0)
    y = A.g2_array(np.linspace(0, 30, 301), src)
    assert np.all(np.diff(y) >= -1e-15)
    assert y[-1] == pytest.approx(1.0, abs=1e-6)


def test_g2_negative_tau_rejected():
    with pytest.raises(ParameterError):
        A.g2(-1.0, A.SourceDriveParams(1.0, 1.0))


def test_antibunching_against_dense_trapezoid():
    gamma = 1.0
    src = A.SourceDriveParams(5 * gamma, gamma)
    Gamma = 5 * gamma
    t = np.linspace(0, 1 / Gamma, 1_000_001)
    ref = Gamma * np.trapezoid(A.g2_array(t, src), t) if hasattr(np, "trapezoid") else \
        Gamma * np.trapz(A.g2_array(t, src), t)
    assert A.antibunching_A(Gamma, src) == pytest.approx(ref, abs=1e-9)


# --- classical mixing ------------------------------------------------------------

def test_classical_mixing_reference_values():
    th = A.mixing_theta(0.25, 0.25)
    assert math.sin(th) == pytest.approx(2 / 3)
    assert math.tan(th) == pytest.approx(0.894427, abs=1e-6)
    assert math.tan(th / 2) == pytest.approx(0.381966, abs=1e-6)
    a = A.classical_mixing_amplitude(A.ClassicalMixInputs(0.25, 0.25, 0.5, 0, "plus"))
    b = A.classical_mixing_amplitude(A.ClassicalMixInputs(0.25, 0.25, 0.5, 1, "minus"))
    assert a == pytest.approx(0.361803, abs=1e-6)
    assert b == pytest.approx(0.052786, abs=1e-6)


@pytest.mark.parametrize("kappa", [0.05, 0.25, 2.0])
def test_single_tone_is_linear_transmission(kappa):
    # one tone: field transmission 4k / (1 + 4k) of the incident sqrt(k)
    spec = A.classical_spectrum(0.0, kappa)
    assert spec[-1] == pytest.approx(math.sqrt(kappa) * 4 * kappa / (1 + 4 * kappa), rel=1e-12)
    assert all(v == 0 for k, v in spec.items() if k != -1 and k != 1)
    assert spec[1] == 0


@given(st.floats(0.01, 3), st.integers(0, 3))
def test_equal_drives_give_mirror_spectrum(kappa, p):
    a = A.classical_mixing_amplitude(A.ClassicalMixInputs(kappa, kappa, 0.5, p, "plus"))
    b = A.classical_mixing_amplitude(A.ClassicalMixInputs(kappa, kappa, 0.5, p, "minus"))
    assert a == pytest.approx(b, rel=1e-12)


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.integers(0, 3))
def test_branch_exchange_symmetry(kp, km, p):
    a = A.classical_mixing_amplitude(A.ClassicalMixInputs(kp, km, 0.7, p, "plus"))
    b = A.classical_mixing_amplitude(A.ClassicalMixInputs(km, kp, 0.7, p, "minus"))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_printed_bracket_differs_for_unequal_drives():
    inp = A.ClassicalMixInputs(0.1, 1.0, 0.5, 1, "minus")
    assert A.classical_mixing_amplitude_printed(inp) != pytest.approx(
        A.classical_mixing_amplitude(inp), rel=0.1)


def test_classical_inputs_validation():
    with pytest.raises(ParameterError):
        A.ClassicalMixInputs(-0.1, 0.1)
    with pytest.raises(ParameterError):
        A.ClassicalMixInputs(0.1, 0.1, Gamma2_over_Gamma=0.4)
    with pytest.raises(ParameterError):
        A.ClassicalMixInputs(0.1, 0.1, branch="left")


@pytest.mark.parametrize("k", [1, -1, 3, -3, 5, -5])
def test_formula_against_bichromatic_oracle(k):
    Gamma = 1.0
    kappa = 0.25
    Om = units.rabi_from_kappa(kappa, Gamma)
    spec = S.classical_spectrum(Gamma, Gamma / 2, Om, Om, Gamma / 200)
    ref = A.classical_spectrum(kappa, kappa)[k]
    assert abs(spec[k]) / math.sqrt(Gamma) == pytest.approx(abs(ref), rel=0.01)


# --- transmission -------------------------------------------------------------

def measured_params(**kw):
    base = dict(gamma=units.mhz_to_rad(1.74), gamma_phi=units.mhz_to_rad(0.15),
                Gamma=units.mhz_to_rad(1.70), Gamma_phi=units.mhz_to_rad(0.19),
                omega_s=units.TWO_PI * 5.1e9, omega_p=units.TWO_PI * 5.1e9)
    base.update(kw)
    return A.TransmissionParams(**base)


def test_probe_transmission_on_resonance():
    tp = measured_params()
    assert abs(A.probe_transmission(tp.omega_p, tp)) == pytest.approx(0.18269, abs=5e-6)


def test_prefactor_from_detuned_peak():
    assert calibration.prefactor_from_peak(0.013, 0.1) == pytest.approx(0.13)


def test_source_line_is_lorentzian():
    tp = measured_params(prefactor=0.13)
    w = tp.omega_s + np.linspace(-5, 5, 11) * tp.gamma2
    t = A.transmission(w, False, tp)
    peak = 0.13 * tp.gamma / (2 * tp.gamma2) * tp.Cc_over_Ce
    assert abs(t[5]) == pytest.approx(peak)
    x = (tp.omega_s - w) / tp.gamma2
    assert np.allclose(np.abs(t), peak / np.sqrt(1 + x**2))


def test_weak_drive_coherence():
    s = A.steady_state_sigma_minus(1e-6, 1.0)
    assert s == pytest.approx(-1e-6, rel=1e-9)
    amp, flux = A.coherent_emission_amplitude(A.SourceDriveParams(1e-6, 1.0))
    assert flux == pytest.approx(1e-12, rel=1e-9)
    assert abs(amp) ** 2 == pytest.approx(flux, rel=1e-12)
