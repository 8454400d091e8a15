"""Regenerate the synthetic transmission traces used by transmission_fit.yaml."""

import os

import numpy as np

from cascade_qwm import analytic, calibration, units

HERE = os.path.dirname(os.path.abspath(__file__))

truth = analytic.TransmissionParams(
    gamma=units.mhz_to_rad(1.74), gamma_phi=units.mhz_to_rad(0.15),
    Gamma=units.mhz_to_rad(1.70), Gamma_phi=units.mhz_to_rad(0.19),
    omega_s=units.TWO_PI * 5.1e9, omega_p=units.TWO_PI * 5.1e9, prefactor=0.13)
freq = 5.1e9 + np.linspace(-6e6, 6e6, 241)
detunings = units.mhz_to_rad(np.array([0.60, -0.01, -0.51]))

if __name__ == "__main__":
    traces = calibration.synthetic_traces(truth, detunings, freq, noise=0.01, rng=20240)
    for n, tr in enumerate(traces):
        with open(os.path.join(HERE, "data", f"transmission_{n}.csv"), "w") as fh:
            fh.write(calibration.write_trace_csv(tr))
