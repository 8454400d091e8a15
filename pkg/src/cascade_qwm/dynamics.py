"""
Cascaded source -> probe master equation in the frame rotating at the mean
drive frequency.

The source drive carries the phase ``exp(+i s dw t)`` and the probe drive
``exp(-i s dw t)`` where ``s = source_detuning_sign`` (default +1: source at
omega_+, probe at omega_-). Harmonic index ``k`` of any quasi-stationary
signal therefore labels the component at ``omega_d + k dw``, so the source
tone sits at k = +1 and the probe tone at k = -1 by default.

Unidirectional coupling uses the non-Hermitian cross term

    L_sp rho = a sqrt(gamma Gamma) ([s- rho, p+] + [p-, rho s+]),

whose partial trace over the probe vanishes identically. For reference, the
Hermitian dipole-dipole exchange obtained by adding the mirrored term
``-L_ps`` is *not* part of this model.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import quantum_core as qc
from .errors import ConvergenceError, IntegrationError, InvalidStateError, ParameterError
from .periodic import PeriodicModel, commutator_map, lindblad_dissipator

S_MINUS = qc.pauli_operator("sigma_minus", "source")
S_PLUS = qc.pauli_operator("sigma_plus", "source")
S_Z = qc.pauli_operator("sigma_z", "source")
P_MINUS = qc.pauli_operator("sigma_minus", "probe")
P_PLUS = qc.pauli_operator("sigma_plus", "probe")
P_Z = qc.pauli_operator("sigma_z", "probe")

DEFAULT_ETA_RATIO = 0.01


@dataclass(frozen=True)
class CascadeParams:
    """
    Physical parameters of the cascade; all rates and detunings in rad/s.

    ``W`` and ``E`` are drive amplitudes in sqrt(photon flux) units, so the
    source Rabi frequency is ``2 sqrt(eta) |W|`` and the probe Rabi
    frequency ``sqrt(2 Gamma) |E|``. ``eta`` defaults to ``gamma / 100``.
    """

    gamma: float
    Gamma: float
    delta_omega: float
    alpha: float = 1.0
    eta: float = None
    W: complex = 0.0
    E: complex = 0.0
    detuning_source: float = 0.0
    detuning_probe: float = 0.0
    gamma_phi: float = 0.0
    Gamma_phi: float = 0.0
    source_detuning_sign: int = 1

    def __post_init__(self):
        if self.eta is None:
            object.__setattr__(self, "eta", DEFAULT_ETA_RATIO * self.gamma)
        if not self.gamma > 0 or not self.Gamma > 0:
            raise ParameterError("gamma and Gamma must be positive")
        if self.eta < 0:
            raise ParameterError("eta must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError("alpha must lie in [0, 1]")
        if not self.delta_omega > 0:
            raise ParameterError("delta_omega must be positive")
        if self.gamma_phi < 0 or self.Gamma_phi < 0:
            raise ParameterError("dephasing rates must be non-negative")
        if self.source_detuning_sign not in (1, -1):
            raise ParameterError("source_detuning_sign must be +1 or -1")
        for name in ("W", "E"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")

    @property
    def period(self):
        return 2.0 * math.pi / self.delta_omega

    @property
    def source_rabi(self):
        return 2.0 * math.sqrt(self.eta) * abs(self.W)

    @property
    def probe_rabi(self):
        return math.sqrt(2.0 * self.Gamma) * abs(self.E)

    @property
    def coupling(self):
        return self.alpha * math.sqrt(self.gamma * self.Gamma)

    @property
    def W_bar(self):
        """Source drive in units where the source steady state is -2W/(1+8W^2)."""
        return math.sqrt(self.eta) * abs(self.W) / (self.gamma + self.eta)

    @property
    def E_bar(self):
        """Probe drive in units where the probe steady state is -2E/(1+8E^2)."""
        return abs(self.E) / math.sqrt(2.0 * self.Gamma)

    def rates(self):
        """All rates entering the step-size rule."""
        return [self.gamma + self.eta, self.Gamma, self.delta_omega,
                abs(self.detuning_source), abs(self.detuning_probe),
                self.source_rabi, self.probe_rabi, self.coupling,
                self.gamma_phi, self.Gamma_phi]


@dataclass(frozen=True)
class StepControl:
    """
    Fixed-step RK4 settings.

    ``dt=None`` picks ``safety / max(rate)``; an explicit ``dt`` must obey the
    same bound. ``settle_budget`` multiplies the nominal settle time.
    """

    safety: float = 0.05
    dt: float = None
    settle_budget: float = 10.0
    cycle_tol: float = 1e-6
    check_states: bool = True

    def max_step(self, rates):
        fastest = max([r for r in rates if r > 0], default=0.0)
        bound = self.safety / fastest if fastest > 0 else math.inf
        if self.dt is None:
            return bound
        if self.dt > bound * (1 + 1e-12):
            raise ParameterError(
                f"dt={self.dt:.3e} violates the step rule dt <= {bound:.3e}")
        return self.dt


@dataclass(frozen=True)
class Trajectory:
    """
    Uniformly sampled quasi-stationary cycle(s), ``n_periods * T`` long.

    For single-qubit runs ``sigma_s`` and ``concurrence`` are ``None`` and
    ``sigma_p`` holds the qubit's ``<sigma->``.
    """

    t0: float
    period: float
    n_periods: int
    samples_per_period: int
    times: np.ndarray
    states: np.ndarray
    sigma_p: np.ndarray
    sigma_s: np.ndarray = None
    sigma_z_s: np.ndarray = None
    sigma_z_p: np.ndarray = None
    concurrence: np.ndarray = None
    method: str = "rk4"
    info: dict = field(default_factory=dict)

    @property
    def delta_omega(self):
        return 2.0 * math.pi / self.period


# --- Liouvillian -------------------------------------------------------------

def _drive_parts(params):
    """Hamiltonian pieces multiplying exp(+i dw t) (``H1``); ``H1^H`` multiplies exp(-i dw t)."""
    hs = -1j * math.sqrt(params.eta) * params.W * S_PLUS        # source: exp(+i s phi)
    hp = -1j * math.sqrt(params.Gamma / 2.0) * params.E * P_PLUS  # probe: exp(-i s phi)
    if params.source_detuning_sign > 0:
        return hs + hp.conj().T
    return hp + hs.conj().T


def _static_hamiltonian(params):
    return 0.5 * (params.detuning_source * S_Z + params.detuning_probe * P_Z)


def cross_term(rho, params):
    """Unidirectional source -> probe term ``L_sp rho``."""
    c = params.coupling
    a = S_MINUS @ rho
    b = rho @ S_PLUS
    return c * ((a @ P_PLUS - P_PLUS @ a) + (P_MINUS @ b - b @ P_MINUS))


def _static_map(params):
    ham = commutator_map(_static_hamiltonian(params))
    diss = [lindblad_dissipator(math.sqrt(params.gamma + params.eta) * S_MINUS),
            lindblad_dissipator(math.sqrt(params.Gamma) * P_MINUS)]
    if params.gamma_phi > 0:
        diss.append(lindblad_dissipator(math.sqrt(params.gamma_phi / 2.0) * S_Z))
    if params.Gamma_phi > 0:
        diss.append(lindblad_dissipator(math.sqrt(params.Gamma_phi / 2.0) * P_Z))

    def apply(rho):
        out = ham(rho) + cross_term(rho, params)
        for d in diss:
            out = out + d(rho)
        return out

    return apply


def liouvillian_apply(rho, t, params):
    """
    ``d rho / dt`` of the cascaded master equation at time ``t``.

    ``-i[H(t), rho] + D[sqrt(gamma+eta) s-] + D[sqrt(Gamma) p-] + L_sp rho``
    plus optional sigma_z dephasing channels.
    """
    rho = np.asarray(rho, dtype=complex)
    h1 = _drive_parts(params)
    e = np.exp(1j * params.delta_omega * t)
    drive = e * h1 + np.conj(e) * h1.conj().T
    return commutator_map(drive)(rho) + _static_map(params)(rho)


def cascade_model(params):
    """:class:`PeriodicModel` of the two-qubit cascade."""
    return PeriodicModel.from_maps(2, _static_map(params),
                                   commutator_map(_drive_parts(params)),
                                   params.delta_omega)


def source_model(params):
    """Standalone Bloch model of the source (rates gamma + eta), same frame."""
    sm, sz = qc.SIGMA_MINUS, qc.SIGMA_Z
    diss = [lindblad_dissipator(math.sqrt(params.gamma + params.eta) * sm)]
    if params.gamma_phi > 0:
        diss.append(lindblad_dissipator(math.sqrt(params.gamma_phi / 2.0) * sz))
    ham = commutator_map(0.5 * params.detuning_source * sz)
    h1 = -1j * math.sqrt(params.eta) * params.W * qc.SIGMA_PLUS
    if params.source_detuning_sign < 0:
        h1 = h1.conj().T

    def static(rho):
        return ham(rho) + sum(d(rho) for d in diss)

    return PeriodicModel.from_maps(1, static, commutator_map(h1), params.delta_omega)


def two_level_model(Gamma, Gamma2, drive_plus, drive_minus, delta_omega, detuning=0.0):
    """
    Single two-level system under ``H = -i (a(t) s+ - h.c.) + detuning sz / 2``.

    ``a(t) = drive_plus e^{+i phi} + drive_minus e^{-i phi}`` (Rabi frequency of
    each tone is twice its coupling). Coherences decay at ``Gamma2``.
    """
    if Gamma2 < Gamma / 2.0 - 1e-15 * Gamma:
        raise ParameterError("Gamma2 must be at least Gamma / 2")
    sm, sp_, sz = qc.SIGMA_MINUS, qc.SIGMA_PLUS, qc.SIGMA_Z
    gphi = max(0.0, Gamma2 - Gamma / 2.0)
    diss = [lindblad_dissipator(math.sqrt(Gamma) * sm)]
    if gphi > 0:
        diss.append(lindblad_dissipator(math.sqrt(gphi / 2.0) * sz))
    ham = commutator_map(0.5 * detuning * sz)
    h1 = -1j * drive_plus * sp_ + 1j * np.conj(drive_minus) * sm

    def static(rho):
        return ham(rho) + sum(d(rho) for d in diss)

    return PeriodicModel.from_maps(1, static, commutator_map(h1), delta_omega)


# --- integration -------------------------------------------------------------

@dataclass(frozen=True)
class IntegrationResult:
    state: np.ndarray
    times: np.ndarray
    states: np.ndarray


def _state_checker(n_qubits):
    def check(t, r):
        rho = qc.from_pauli_vector(r)
        try:
            qc.check_state(rho)
        except InvalidStateError as exc:
            raise IntegrationError(f"invalid state at t={t:.6e}: {exc}", time=t) from None
    return check


def integrate(rho0, params, t_end, control=None, t_start=0.0, record_every=None):
    """
    Fixed-step RK4 integration of the cascade from ``t_start`` to ``t_end``.

    Returns an :class:`IntegrationResult`; ``states`` holds dense output every
    ``record_every`` steps (only the endpoints if None).
    """
    control = control or StepControl()
    qc.check_state(rho0)
    h = control.max_step(params.rates())
    span = t_end - t_start
    if span > 0 and h < 1e-9 * span:
        raise IntegrationError(f"step size underflow (dt={h:.3e})", time=t_start)
    model = cascade_model(params)
    check = _state_checker(2) if control.check_states else None
    r_end, times, recs = model.integrate(qc.to_pauli_vector(rho0), t_start, t_end,
                                         min(h, span) if span > 0 else h,
                                         record_every=record_every, callback=check)
    states = qc.from_pauli_vector(recs)
    return IntegrationResult(state=qc.from_pauli_vector(r_end), times=times, states=states)


def _steps_per_sample(period, samples_per_period, h_max):
    need = period / (samples_per_period * h_max)
    return 1 << max(0, int(math.ceil(math.log2(max(need, 1.0)) - 1e-12)))


def settle_time(rates_slow, period):
    """Nominal settle time ``max(20 / rate, 5 T)`` over the given decay rates."""
    return max([20.0 / r for r in rates_slow] + [5.0 * period])


def _cycle_rk4(model, r0, period, n_periods, S, h_max, t_settle, control, observable):
    """Settle by whole periods, certify periodicity, sample ``n_periods`` cycles."""
    m = _steps_per_sample(period, S, h_max)
    phis = model.cycle_propagators(S, m)
    mono = phis[-1]
    n0 = int(math.ceil(t_settle / period - 1e-9))
    n_max = int(math.ceil(control.settle_budget * n0))
    r = np.array(r0, dtype=float)
    r = np.linalg.matrix_power(mono, max(n0 - 1, 0)) @ r
    prev = observable(phis[:-1] @ r)
    n_done = max(n0 - 1, 0)
    residual = np.inf
    while True:
        r = mono @ r
        n_done += 1
        cur = observable(phis[:-1] @ r)
        scale = max(np.max(np.abs(cur)), 1e-300)
        residual = np.max(np.abs(cur - prev)) / scale if np.any(cur) or np.any(prev) else 0.0
        if residual <= control.cycle_tol and n_done >= n0:
            break
        if n_done >= n_max:
            raise ConvergenceError(
                f"no periodic cycle after {n_done} periods (residual {residual:.3e})",
                residual=residual)
        prev = cur
    vecs = []
    for _ in range(n_periods):
        vecs.append(phis[:-1] @ r)
        r = mono @ r
    info = {"steps_per_period": S * m, "dt": period / (S * m),
            "settle_periods": n_done, "cycle_residual": float(residual)}
    return n_done * period, np.concatenate(vecs), info


def _cycle_harmonic(model, period, n_periods, S, t_settle, tol):
    R = model.harmonic_steady_state(tol=tol)
    n0 = int(math.ceil(t_settle / period - 1e-9))
    phases = 2.0 * math.pi * np.arange(n_periods * S) / S
    vecs = PeriodicModel.synthesize(R, phases)
    K = (R.shape[0] - 1) // 2
    info = {"harmonics": K, "harmonic_coefficients": R}
    return n0 * period, vecs, info


def steady_cycle(params, n_periods=1, samples_per_period=256, method="rk4",
                 control=None, harmonic_tol=1e-13, store_every=1):
    """
    Sample the quasi-stationary cycle of the cascade.

    ``method='rk4'`` integrates from the ground state for a whole number of
    periods (at least ``max(20/gamma, 20/Gamma, 5T)``) until ``<p->`` repeats
    to ``control.cycle_tol`` between consecutive periods, then records
    ``n_periods`` further periods. ``method='harmonic'`` solves the periodic
    steady state directly in a truncated Fourier basis.
    """
    if n_periods < 1:
        raise ParameterError("n_periods must be >= 1")
    if samples_per_period < 64:
        raise ParameterError("samples_per_period must be >= 64")
    control = control or StepControl()
    model = cascade_model(params)
    T = params.period
    t_settle = settle_time([params.gamma, params.Gamma], T)
    S = int(samples_per_period)

    def p_minus(vecs):
        return np.einsum("ij,nji->n", P_MINUS, qc.from_pauli_vector(vecs))

    if method == "rk4":
        h_max = control.max_step(params.rates())
        r0 = qc.to_pauli_vector(qc.ground_state())
        t0, vecs, info = _cycle_rk4(model, r0, T, n_periods, S, h_max, t_settle,
                                    control, p_minus)
    elif method == "harmonic":
        t0, vecs, info = _cycle_harmonic(model, T, n_periods, S, t_settle, harmonic_tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    states = qc.from_pauli_vector(vecs)
    times = t0 + T * np.arange(n_periods * S) / S
    if control.check_states:
        _check_all(states, times)
    conc = np.array([qc.concurrence(rho) for rho in states])
    traj = Trajectory(
        t0=t0, period=T, n_periods=n_periods, samples_per_period=S, times=times,
        states=states[::store_every],
        sigma_p=np.einsum("ij,nji->n", P_MINUS, states),
        sigma_s=np.einsum("ij,nji->n", S_MINUS, states),
        sigma_z_s=np.einsum("ij,nji->n", S_Z, states).real,
        sigma_z_p=np.einsum("ij,nji->n", P_Z, states).real,
        concurrence=conc, method=method, info=dict(info, params=params))
    return traj


def _check_all(states, times):
    herm = np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2))), axis=(1, 2))
    tr = np.abs(np.trace(states, axis1=1, axis2=2) - 1.0)
    lmin = np.linalg.eigvalsh(0.5 * (states + np.conj(np.swapaxes(states, 1, 2))))[:, 0]
    bad = np.nonzero((herm > qc.HERMITICITY_TOL) | (tr > qc.TRACE_TOL) | (lmin < -qc.PSD_TOL))[0]
    if bad.size:
        i = bad[0]
        raise IntegrationError(
            f"invalid state at t={times[i]:.6e} (herm {herm[i]:.1e}, trace {tr[i]:.1e}, "
            f"min eig {lmin[i]:.1e})", time=times[i])


def single_qubit_bichromatic(Gamma, Gamma2, Omega_plus, Omega_minus, delta_omega,
                             n_periods=1, samples_per_period=256, method="rk4",
                             control=None, detuning=0.0, harmonic_tol=1e-13):
    """
    Brute-force two-level response to two tones at ``omega_p +- delta_omega``.

    ``Omega_plus`` (``Omega_minus``) is the Rabi frequency of the tone at
    harmonic +1 (-1). The returned trajectory's ``sigma_p`` is ``<sigma->``.
    """
    if n_periods < 1 or samples_per_period < 64:
        raise ParameterError("need n_periods >= 1 and samples_per_period >= 64")
    control = control or StepControl()
    model = two_level_model(Gamma, Gamma2, 0.5 * Omega_plus, 0.5 * Omega_minus,
                            delta_omega, detuning)
    T = 2.0 * math.pi / delta_omega
    rates = [Gamma, Gamma2, delta_omega, abs(Omega_plus), abs(Omega_minus), abs(detuning)]
    t_settle = settle_time([Gamma], T)
    S = int(samples_per_period)

    def s_minus(vecs):
        return 0.5 * (vecs[:, 1] + 1j * vecs[:, 2])

    if method == "rk4":
        h_max = control.max_step(rates)
        r0 = qc.to_pauli_vector(np.diag([1.0, 0.0]).astype(complex))
        t0, vecs, info = _cycle_rk4(model, r0, T, n_periods, S, h_max, t_settle,
                                    control, s_minus)
    elif method == "harmonic":
        t0, vecs, info = _cycle_harmonic(model, T, n_periods, S, t_settle, harmonic_tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    states = qc.from_pauli_vector(vecs)
    times = t0 + T * np.arange(n_periods * S) / S
    return Trajectory(
        t0=t0, period=T, n_periods=n_periods, samples_per_period=S, times=times,
        states=states, sigma_p=s_minus(vecs), sigma_z_p=vecs[:, 3].copy(),
        method=method,
        info=dict(info, Gamma=Gamma, Gamma2=Gamma2, Omega_plus=Omega_plus,
                  Omega_minus=Omega_minus))


def with_params(params, **changes):
    return replace(params, **changes)
