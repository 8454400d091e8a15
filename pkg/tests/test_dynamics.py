import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cascade_qwm import analytic, dynamics as D, quantum_core as qc, spectrum as S, units
from cascade_qwm.errors import ConvergenceError, ParameterError

from conftest import random_state

S_Z = qc.pauli_operator("sigma_z", "source")


def damped_rabi_excited(t, Omega, Gamma):
    """Closed-form excited population of a resonantly driven, radiatively damped TLS from |g>."""
    mu = math.sqrt(Omega**2 - Gamma**2 / 16)
    ss = Omega**2 / (Gamma**2 + 2 * Omega**2)
    return ss * (1 - np.exp(-0.75 * Gamma * t) * (np.cos(mu * t) + 0.75 * Gamma / mu * np.sin(mu * t)))


def device_params(**kw):
    g, G = units.mhz_to_rad(1.7), units.mhz_to_rad(1.8)
    p = D.CascadeParams(gamma=g, Gamma=G, delta_omega=units.mhz_to_rad(0.01), alpha=0.79)
    p = D.with_params(p, W=units.source_W_from_db(-10.0, g, p.eta),
                      E=units.probe_E_from_db(-10.0, G))
    return D.with_params(p, **kw)


def test_params_validation():
    with pytest.raises(ParameterError):
        D.CascadeParams(gamma=-1, Gamma=1, delta_omega=1)
    with pytest.raises(ParameterError):
        D.CascadeParams(gamma=1, Gamma=1, delta_omega=1, alpha=1.2)
    with pytest.raises(ParameterError):
        D.CascadeParams(gamma=1, Gamma=1, delta_omega=0)
    p = D.CascadeParams(gamma=2.0, Gamma=1, delta_omega=1)
    assert p.eta == pytest.approx(0.02)


def test_ground_state_is_stationary_without_drive():
    p = D.CascadeParams(gamma=1.0, Gamma=1.3, delta_omega=0.1, alpha=1.0)
    assert np.allclose(D.liouvillian_apply(qc.ground_state(), 0.3, p), 0)


def test_excited_source_decays_at_total_rate():
    p = D.CascadeParams(gamma=1.0, Gamma=1.3, delta_omega=0.1, alpha=1.0)
    rho = qc.projector(qc.ket("e_s g_p"))
    d = D.liouvillian_apply(rho, 0.0, p)
    assert abs(np.trace(d)) < 1e-15
    assert qc.expectation(S_Z, d).real == pytest.approx(-2 * (p.gamma + p.eta))


@given(st.integers(0, 2**32 - 1))
def test_trace_and_unidirectionality_identities(seed):
    rng = np.random.default_rng(seed)
    rho = random_state(rng)
    p = D.CascadeParams(gamma=rng.uniform(0.1, 3), Gamma=rng.uniform(0.1, 3),
                        delta_omega=rng.uniform(0.01, 1), alpha=rng.uniform(0, 1),
                        W=rng.normal() + 1j * rng.normal(), E=rng.normal(),
                        detuning_source=rng.normal(), detuning_probe=rng.normal(),
                        gamma_phi=rng.uniform(0, 1), Gamma_phi=rng.uniform(0, 1))
    d = D.liouvillian_apply(rho, rng.uniform(0, 10), p)
    assert abs(np.trace(d)) < 1e-12
    assert np.allclose(d, d.conj().T, atol=1e-12)
    assert np.max(np.abs(qc.partial_trace(D.cross_term(rho, p), "source"))) < 1e-15


def test_undriven_probe_decay():
    p = D.CascadeParams(gamma=1.0, Gamma=1.0, delta_omega=0.05, alpha=1.0)
    rho0 = qc.projector(qc.ket("g_s e_p"))
    res = D.integrate(rho0, p, 3.0, control=D.StepControl(safety=0.01))
    pe = np.real(res.state[1, 1] + res.state[3, 3])
    assert pe == pytest.approx(math.exp(-3.0), rel=1e-6)


def test_damped_rabi_matches_closed_form():
    Gamma, Omega = 1.0, 2.0
    p = D.CascadeParams(gamma=1.0, Gamma=Gamma, delta_omega=1e-9, alpha=0.0,
                        E=Omega / math.sqrt(2 * Gamma))
    res = D.integrate(qc.ground_state(), p, 8.0, record_every=10)
    pe = np.real(res.states[:, 1, 1] + res.states[:, 3, 3])
    assert np.max(np.abs(pe - damped_rabi_excited(res.times, Omega, Gamma))) < 1e-4


def test_rk4_is_fourth_order():
    p = D.CascadeParams(gamma=1.0, Gamma=1.5, delta_omega=0.7, alpha=0.8, W=2.0, E=0.9)
    ctrl = lambda dt: D.StepControl(safety=1.0, dt=dt)
    ref = D.integrate(qc.ground_state(), p, 4.0, control=ctrl(4.0 / 6400)).state
    errs = [np.max(np.abs(D.integrate(qc.ground_state(), p, 4.0, control=ctrl(4.0 / n)).state - ref))
            for n in (100, 200, 400)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 3.7) & (orders < 4.3)), orders


def test_step_rule_enforced():
    p = D.CascadeParams(gamma=1.0, Gamma=1.0, delta_omega=0.1)
    with pytest.raises(ParameterError, match="step rule"):
        D.integrate(qc.ground_state(), p, 1.0, control=D.StepControl(dt=0.5))


def test_trace_drift_over_fifty_lifetimes():
    p = device_params()
    res = D.integrate(qc.ground_state(), p, 50.0 / p.Gamma, record_every=1)
    drift = np.abs(np.trace(res.states, axis1=1, axis2=2) - 1)
    assert drift.max() <= 1e-9


def test_zero_drive_cycle_is_ground_state():
    p = device_params(W=0.0, E=0.0)
    traj = D.steady_cycle(p, method="harmonic", samples_per_period=64)
    assert np.max(np.abs(traj.sigma_p)) == 0 and np.max(np.abs(traj.sigma_s)) == 0


def test_source_is_blind_to_probe():
    base = device_params(gamma_phi=units.mhz_to_rad(0.3))
    sig = []
    for kw in ({}, {"E": 0.0}, {"alpha": 0.0}, {"Gamma": 3 * base.Gamma, "Gamma_phi": 1e5}):
        traj = D.steady_cycle(D.with_params(base, **kw), method="harmonic", samples_per_period=64)
        sig.append(traj.sigma_s)
    for s in sig[1:]:
        assert np.max(np.abs(s - sig[0])) < 1e-12


def test_source_coherence_matches_bloch_steady_state():
    p = device_params(E=0.0, gamma_phi=units.mhz_to_rad(0.3))
    traj = D.steady_cycle(p, method="harmonic", samples_per_period=64)
    spec = S.spectrum_of(traj, traj.sigma_s, orders=(-3, -1, 0, 1, 3), even_orders=())
    # the source tone sits at k = +1, offset by dw from the frame; in the
    # tone's own frame that is a static detuning of +dw in the H = D sz / 2 sign
    s = analytic.steady_state_sigma_minus(p.source_rabi, p.gamma + p.eta,
                                          p.detuning_source + p.delta_omega, p.gamma_phi)
    assert spec[1] == pytest.approx(s, rel=1e-10)
    assert max(abs(spec[k]) for k in (-3, -1, 0, 3)) < 1e-12 * abs(s)


def test_alpha_zero_probe_is_single_qubit():
    p = device_params(alpha=0.0)
    traj = D.steady_cycle(p, method="harmonic", samples_per_period=64)
    ref = D.single_qubit_bichromatic(p.Gamma, p.Gamma / 2, 0.0, p.probe_rabi, p.delta_omega,
                                     samples_per_period=64, method="harmonic")
    assert np.max(np.abs(traj.sigma_p - ref.sigma_p)) < 1e-12


def test_rk4_and_harmonic_cycles_agree():
    p = D.CascadeParams(gamma=1.0, Gamma=1.2, delta_omega=0.2, alpha=0.8, W=3.0, E=0.5)
    a = D.steady_cycle(p, method="rk4", samples_per_period=64)
    b = D.steady_cycle(p, method="harmonic", samples_per_period=64)
    assert a.info["cycle_residual"] <= 1e-6
    assert np.max(np.abs(a.sigma_p - b.sigma_p)) < 1e-7
    assert np.max(np.abs(a.concurrence - b.concurrence)) < 1e-6


def test_settle_budget_exhaustion_raises():
    # short period: the nominal settle time is only 20/gamma, not enough for 1e-12
    p = D.CascadeParams(gamma=1.0, Gamma=1.2, delta_omega=5.0, alpha=0.8, W=3.0, E=0.5)
    with pytest.raises(ConvergenceError) as exc:
        D.steady_cycle(p, method="rk4", samples_per_period=64,
                       control=D.StepControl(settle_budget=1.0, cycle_tol=1e-12))
    assert exc.value.residual > 0


def test_steady_cycle_preconditions():
    p = device_params()
    with pytest.raises(ParameterError):
        D.steady_cycle(p, n_periods=0)
    with pytest.raises(ParameterError):
        D.steady_cycle(p, samples_per_period=32)


def test_bichromatic_single_tone_has_no_sidebands():
    G = 1.0
    traj = D.single_qubit_bichromatic(G, G / 2, 1.3, 0.0, 0.05, method="harmonic")
    spec = S.spectrum_of(traj, traj.sigma_p, orders=(-5, -3, -1, 1, 3, 5), even_orders=())
    assert abs(spec[1]) > 0.1
    assert max(abs(spec[k]) for k in (-5, -3, -1, 3, 5)) < 1e-10
