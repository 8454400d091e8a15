"""
Quantum wave mixing in a cascade of two driven two-level systems.

A coherently driven source emitter feeds a probe emitter through a
unidirectional channel; the probe's coherent sideband spectrum carries the
non-classical statistics of the source. The package provides the cascade
master equation, periodic steady-state engines, sideband extraction and
mixing maps, closed-form references, perturbative expansions, calibration
fits and a command-line front end.
"""

from .analytic import (ClassicalMixInputs, SourceDriveParams, TransmissionParams,
                       antibunching_A, classical_mixing_amplitude, g2, transmission)
from .calibration import FitResult, MeasuredTrace, fit_mixing_map, fit_transmission
from .dynamics import CascadeParams, Trajectory, liouvillian_apply, steady_cycle
from .errors import (CascadeError, ConvergenceError, FitError, FloquetSingularError,
                     IntegrationError, InvalidStateError, ParameterError)
from .perturbation import closed_form_emission, compare_with_exact, floquet_recursion
from .spectrum import (GridSpec, MixingMap, SidebandSpectrum, cascade_spectrum,
                       fourier_components, sweep_map)

__version__ = "0.1.0"
