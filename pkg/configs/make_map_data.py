"""Regenerate the synthetic mixing map used by map_fit.yaml."""

import os

import numpy as np

from cascade_qwm import dynamics, spectrum, units

HERE = os.path.dirname(os.path.abspath(__file__))

template = dynamics.CascadeParams(gamma=units.mhz_to_rad(1.7), Gamma=units.mhz_to_rad(1.8),
                                  delta_omega=units.mhz_to_rad(0.01), alpha=0.79)
axis = tuple(np.linspace(-15.0, 5.0, 7))

if __name__ == "__main__":
    m = spectrum.sweep_map(spectrum.GridSpec("drive", axis, axis), template,
                           orders=(-7, -5, -3, -1, 1, 3, 5, 7), samples_per_period=128)
    rng = np.random.default_rng(8)
    noisy = m.power_db + 3.0 + rng.normal(0.0, 0.5, m.power_db.shape)
    m = spectrum.MixingMap(m.axis1, m.axis2, m.orders, np.maximum(noisy, units.DEFAULT_FLOOR_DBM))
    with open(os.path.join(HERE, "data", "map_measured.csv"), "w") as fh:
        fh.write(m.to_csv())
