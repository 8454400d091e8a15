"""
Unit conversions shared by the CLI, sweeps and reports.

Configs quote rates as ``value / 2pi`` in MHz; internally everything is rad/s.
Drive strengths are quoted as photon-flux ratios in dB:

* probe tone: ``nu_-/Gamma = kappa_- = Omega_-^2 / (2 Gamma^2) = E^2 / Gamma``;
* source tone: ``nu_+/gamma = Omega_s^2 / (2 gamma^2)``, i.e. the flux of a
  classical tone with the source's Rabi frequency, measured against gamma.
"""

import math

import numpy as np

HBAR = 1.054571817e-34
TWO_PI = 2.0 * math.pi

DEFAULT_CARRIER_GHZ = 5.1
DEFAULT_GAIN_DB = 75.0
DEFAULT_FLOOR_DBM = -131.0


def mhz_to_rad(x):
    return np.multiply(x, TWO_PI * 1e6)


def rad_to_mhz(x):
    return np.divide(x, TWO_PI * 1e6)


def to_db(x):
    return 10.0 * np.log10(x)


def from_db(x):
    return np.power(10.0, np.divide(x, 10.0))


def source_rabi_from_db(nu_plus_over_gamma_db, gamma):
    """Source Rabi frequency for a given ``nu_+/gamma`` in dB."""
    return gamma * math.sqrt(2.0 * from_db(nu_plus_over_gamma_db))


def source_W_from_db(nu_plus_over_gamma_db, gamma, eta):
    """Amplitude ``W`` (sqrt-flux units) with ``2 sqrt(eta) W`` the source Rabi frequency."""
    return source_rabi_from_db(nu_plus_over_gamma_db, gamma) / (2.0 * math.sqrt(eta))


def probe_E_from_db(nu_minus_over_Gamma_db, Gamma):
    """Amplitude ``E`` with ``E^2 / Gamma = nu_-/Gamma``."""
    return math.sqrt(Gamma * from_db(nu_minus_over_Gamma_db))


def kappa_from_rabi(Omega, Gamma):
    return Omega**2 / (2.0 * Gamma**2)


def rabi_from_kappa(kappa, Gamma):
    return Gamma * math.sqrt(2.0 * kappa)


def flux_to_dbm(flux, carrier_ghz=DEFAULT_CARRIER_GHZ, gain_db=DEFAULT_GAIN_DB):
    """
    Photon flux (1/s) to power in dBm at the analyzer: ``hbar omega flux``
    referred to 1 mW, plus a scalar chain gain. Zero flux maps to ``-inf``.
    """
    watts = HBAR * TWO_PI * carrier_ghz * 1e9 * np.asarray(flux, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(watts / 1e-3) + gain_db


def apply_floor(dbm, floor_dbm=DEFAULT_FLOOR_DBM):
    """Clip for display only; stored data are never floored."""
    return np.maximum(dbm, floor_dbm)
