"""
Closed-form results for driven two-level emitters.

Conventions: ``Omega`` is the resonant Rabi frequency, rates are in rad/s, and
a drive of Rabi frequency ``Omega`` on an emitter of radiative rate ``G``
corresponds to the photon flux ``Omega**2 / (2 G)``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ParameterError


@dataclass(frozen=True)
class SourceDriveParams:
    Omega: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError("gamma must be positive")
        if self.Omega < 0:
            raise ParameterError("Omega must be non-negative")

    @property
    def generalized_rabi_sq(self):
        """``Omega**2 - gamma**2 / 16`` (negative in the overdamped regime)."""
        return self.Omega**2 - self.gamma**2 / 16.0


@dataclass(frozen=True)
class TransmissionParams:
    gamma: float
    Gamma: float
    omega_s: float
    omega_p: float
    gamma_phi: float = 0.0
    Gamma_phi: float = 0.0
    Cc_over_Ce: float = 0.1
    prefactor: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "Gamma", "gamma_phi", "Gamma_phi"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")

    @property
    def gamma2(self):
        return self.gamma / 2.0 + self.gamma_phi

    @property
    def Gamma2(self):
        return self.Gamma / 2.0 + self.Gamma_phi


@dataclass(frozen=True)
class ClassicalMixInputs:
    kappa_plus: float
    kappa_minus: float
    Gamma2_over_Gamma: float = 0.5
    p: int = 0
    branch: str = "plus"

    def __post_init__(self):
        if self.kappa_plus < 0 or self.kappa_minus < 0:
            raise ParameterError("kappa must be non-negative")
        if self.Gamma2_over_Gamma < 0.5 - 1e-12:
            raise ParameterError("Gamma2/Gamma < 1/2 implies negative pure dephasing")
        if self.p < 0:
            raise ParameterError("order p must be non-negative")
        if self.branch not in ("plus", "minus"):
            raise ParameterError("branch must be 'plus' or 'minus'")


# --- photon statistics ---------------------------------------------------------

def _sinc_like(x2, tau):
    """``sin(sqrt(x2) tau) / sqrt(x2)`` continued to x2 <= 0."""
    if x2 > 0:
        w = math.sqrt(x2)
        arg = w * tau
        return math.sin(arg) / w if arg > 1e-8 else tau * (1.0 - arg * arg / 6.0)
    if x2 < 0:
        w = math.sqrt(-x2)
        arg = w * tau
        return math.sinh(arg) / w if arg > 1e-8 else tau * (1.0 + arg * arg / 6.0)
    return tau


def _cos_like(x2, tau):
    if x2 >= 0:
        return math.cos(math.sqrt(x2) * tau)
    return math.cosh(math.sqrt(-x2) * tau)


def g2(tau, src, coefficient="standard"):
    """
    Second-order correlation of resonance fluorescence.

    ``g2(tau) = 1 - exp(-3 gamma tau / 4) [cos(W tau) + c sin(W tau) / W]``
    with ``W = sqrt(Omega^2 - gamma^2 / 16)`` continued analytically below
    ``Omega = gamma / 4``. ``coefficient='standard'`` uses ``c = 3 gamma / 4``
    (the optical-Bloch result, flat at tau = 0); ``'printed'`` uses
    ``c = 3 gamma``.
    """
    if tau < 0:
        raise ParameterError("tau must be non-negative")
    c = {"standard": 0.75, "printed": 3.0}[coefficient] * src.gamma
    x2 = src.generalized_rabi_sq
    env = math.exp(-0.75 * src.gamma * tau)
    return 1.0 - env * (_cos_like(x2, tau) + c * _sinc_like(x2, tau))


def g2_array(taus, src, coefficient="standard"):
    return np.array([g2(float(t), src, coefficient) for t in np.atleast_1d(taus)])


def antibunching_A(Gamma, src, coefficient="standard", epsabs=1e-11):
    """
    Probe-bandwidth-averaged g2: ``Gamma * integral_0^{1/Gamma} g2``.

    Integrated as ``1 - Gamma * integral (1 - g2)`` with adaptive Gauss-Kronrod
    quadrature; the integrand decays on the scale 1/gamma, so wide windows
    are split at a few multiples of that scale.
    """
    if not Gamma > 0:
        raise ParameterError("Gamma must be positive")
    upper = 1.0 / Gamma
    f = lambda t: 1.0 - g2(t, src, coefficient)
    # breakpoints where the integrand still has structure
    edges = [0.0]
    for mult in (1.0, 4.0, 16.0, 64.0):
        b = mult / src.gamma
        if b < upper:
            edges.append(b)
    edges.append(upper)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=epsabs * Gamma ** -1, epsrel=1e-12, limit=400)
        total += val
    return 1.0 - Gamma * total


# --- classical two-tone mixing -----------------------------------------------

def mixing_theta(kappa_plus, kappa_minus, Gamma2_over_Gamma=0.5):
    arg = 4.0 * math.sqrt(kappa_plus * kappa_minus) / (
        Gamma2_over_Gamma + 2.0 * (kappa_minus + kappa_plus))
    if not -1e-15 <= arg <= 1.0 + 1e-12:
        raise ParameterError(f"arcsin argument {arg} outside [0, 1]")
    return math.asin(min(arg, 1.0))


def classical_mixing_amplitude(inp):
    """
    Transmitted field at order ``+-(2p+1)`` for two classical tones, in units
    of sqrt(photon flux / Gamma).

    ``sqrt(k_sc) = sqrt(k_a) d_p0 + (-1)^p / (8 sqrt(k+ k-)) tan(th) tan^p(th/2)
    (sqrt(k_b) tan(th/2) - sqrt(k_a))`` with ``a`` the selected branch, ``b``
    the other one, and ``sin(th) = 4 sqrt(k+ k-) / (G2/G + 2 (k+ + k-))``.
    The ``1 / sqrt(k+ k-)`` singularity is removed analytically, so a single
    tone gives ``sqrt(k) (1 - 1 / (2 (G2/G + 2k)))`` at p = 0 and nothing else.
    """
    kp, km = inp.kappa_plus, inp.kappa_minus
    ka, kb = (kp, km) if inp.branch == "plus" else (km, kp)
    r = inp.Gamma2_over_Gamma
    A = r + 2.0 * (kp + km)
    direct = math.sqrt(ka) if inp.p == 0 else 0.0
    if A == 0.0:
        return direct
    th = mixing_theta(kp, km, r)
    t = math.tan(0.5 * th)
    # tan(th) / (8 sqrt(k+ k-)) == 1 / (2 A cos th); finite as k+ k- -> 0
    pref = 1.0 / (2.0 * A * math.cos(th))
    return direct + (-1) ** inp.p * pref * t**inp.p * (math.sqrt(kb) * t - math.sqrt(ka))


def classical_mixing_amplitude_printed(inp):
    """Variant with the bracket ``(sqrt(k_a) tan(th/2) - sqrt(k_b))``, kept for reference."""
    kp, km = inp.kappa_plus, inp.kappa_minus
    ka, kb = (kp, km) if inp.branch == "plus" else (km, kp)
    r = inp.Gamma2_over_Gamma
    A = r + 2.0 * (kp + km)
    direct = math.sqrt(ka) if inp.p == 0 else 0.0
    th = mixing_theta(kp, km, r)
    t = math.tan(0.5 * th)
    pref = 1.0 / (2.0 * A * math.cos(th))
    return direct + (-1) ** inp.p * pref * t**inp.p * (math.sqrt(ka) * t - math.sqrt(kb))


def classical_spectrum(kappa_plus, kappa_minus, Gamma2_over_Gamma=0.5, max_order=7):
    """
    Closed-form two-tone amplitudes keyed by odd harmonic ``k``, ``|k| <= max_order``.

    Values are signed and in units of sqrt(Gamma); the tone at ``+1`` has
    strength ``kappa_plus``.
    """
    out = {}
    for p in range((max_order - 1) // 2 + 1):
        for branch, sign in (("plus", 1), ("minus", -1)):
            out[sign * (2 * p + 1)] = classical_mixing_amplitude(
                ClassicalMixInputs(kappa_plus, kappa_minus, Gamma2_over_Gamma, p, branch))
    return dict(sorted(out.items()))


# --- linear transmission -------------------------------------------------------

def source_transmission(omega, tp):
    x = (tp.omega_s - omega) / tp.gamma2
    return (tp.gamma / (2.0 * tp.gamma2)) * tp.Cc_over_Ce * (1 + 1j * x) / (1 + x * x)


def probe_transmission(omega, tp):
    x = (tp.omega_p - omega) / tp.Gamma2
    return 1.0 - (tp.Gamma / (2.0 * tp.Gamma2)) * (1 + 1j * x) / (1 + x * x)


def transmission(omega, tp_enabled, params):
    """Weak-drive cascade transmission ``prefactor * t_s * t_p``."""
    omega = np.asarray(omega, dtype=float)
    t = params.prefactor * source_transmission(omega, params)
    if tp_enabled:
        t = t * probe_transmission(omega, params)
    return t


# --- coherent emission of a driven emitter -------------------------------------

def steady_state_sigma_minus(Omega, gamma, detuning=0.0, gamma_phi=0.0):
    """
    Stationary ``<sigma->`` of a monochromatically driven two-level system.

    Frame and sign conventions follow the dynamics module: ``H = -i (a s+ - a* s-)
    + detuning sz / 2`` with ``a = Omega / 2``, coherence decay
    ``g2 = gamma/2 + gamma_phi``. Then

        <s-> = a z / (g2 + i detuning),
        z    = -gamma / (gamma + 4 |a|^2 g2 / (g2^2 + detuning^2)).
    """
    a = 0.5 * Omega
    g2_ = 0.5 * gamma + gamma_phi
    z = -gamma / (gamma + 4.0 * abs(a) ** 2 * g2_ / (g2_**2 + detuning**2))
    return a * z / (g2_ + 1j * detuning)


def coherent_emission_amplitude(src, detuning=0.0, gamma_phi=0.0):
    """
    Equivalent classical amplitude ``-i gamma <s->`` of the source's coherent
    emission and the corresponding coherent photon flux ``gamma |<s->|^2``.
    """
    s = steady_state_sigma_minus(src.Omega, src.gamma, detuning, gamma_phi)
    return -1j * src.gamma * s, src.gamma * abs(s) ** 2
