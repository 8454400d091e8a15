"""
Linear master equations with a single-tone periodic generator.

Every model in this package has the form

    dr/dt = (G0 + e^{+i phi} G1 + e^{-i phi} conj(G1)) r,   phi = delta_omega * t,

where ``r`` is the real Pauli-coordinate vector of the density matrix (see
:func:`cascade_qwm.quantum_core.to_pauli_vector`). Component 0 is the trace and
its row in the generator is identically zero, so both engines below conserve
the trace exactly.

Two engines are provided:

* fixed-step classical RK4, either stepped vector-by-vector
  (:meth:`PeriodicModel.integrate`) or composed into one-period propagators
  (:meth:`PeriodicModel.cycle_propagators`);
* harmonic balance: the periodic steady state solved directly in a truncated
  Fourier basis (:meth:`PeriodicModel.harmonic_steady_state`).
"""

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quantum_core as qc
from .errors import FloquetSingularError


def lindblad_dissipator(jump):
    """Return ``rho -> L rho L^H - {L^H L, rho}/2`` for jump operator ``L``."""
    jump = np.asarray(jump, dtype=complex)
    jd = jump.conj().T
    jdj = jd @ jump

    def apply(rho):
        return jump @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj)

    return apply


def commutator_map(h):
    """Return ``rho -> -i [h, rho]``."""
    h = np.asarray(h, dtype=complex)

    def apply(rho):
        return -1j * (h @ rho - rho @ h)

    return apply


class PeriodicModel:
    """
    Generator of a periodically driven open system in Pauli coordinates.

    Parameters
    ----------
    n_qubits : int
    G0 : ndarray, real, (4**n, 4**n)
        Time-independent part.
    G1 : ndarray, complex, (4**n, 4**n)
        Coefficient of ``exp(+i delta_omega t)``.
    delta_omega : float
        Angular modulation frequency (rad/s); the period is ``2 pi / delta_omega``.
    """

    def __init__(self, n_qubits, G0, G1, delta_omega):
        self.n_qubits = n_qubits
        self.dim = 4**n_qubits
        self.G0 = np.array(np.real(G0), dtype=float)
        self.G1 = np.array(G1, dtype=complex)
        # trace row is zero analytically; make it exactly zero numerically
        self.G0[0, :] = 0.0
        self.G1[0, :] = 0.0
        self.Gc = 2.0 * self.G1.real      # multiplies cos(phi)
        self.Gs = -2.0 * self.G1.imag     # multiplies sin(phi)
        self.delta_omega = float(delta_omega)

    @classmethod
    def from_maps(cls, n_qubits, static_map, plus_map, delta_omega):
        """Build from operator-level maps for the static and e^{+i phi} parts."""
        G0 = qc.superoperator_matrix(static_map, n_qubits)
        G1 = qc.superoperator_matrix(plus_map, n_qubits)
        return cls(n_qubits, G0, G1, delta_omega)

    @property
    def period(self):
        return 2.0 * math.pi / self.delta_omega

    def matrix_at(self, t):
        phi = self.delta_omega * t
        return self.G0 + math.cos(phi) * self.Gc + math.sin(phi) * self.Gs

    def _matrices(self, times):
        phi = self.delta_omega * np.asarray(times)
        return (self.G0[None]
                + np.cos(phi)[:, None, None] * self.Gc[None]
                + np.sin(phi)[:, None, None] * self.Gs[None])

    # -- stepping ------------------------------------------------------------

    def rk4_step(self, r, t, h):
        a1 = self.matrix_at(t)
        a2 = self.matrix_at(t + 0.5 * h)
        a4 = self.matrix_at(t + h)
        k1 = a1 @ r
        k2 = a2 @ (r + 0.5 * h * k1)
        k3 = a2 @ (r + 0.5 * h * k2)
        k4 = a4 @ (r + h * k3)
        return r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def integrate(self, r0, t_start, t_end, h_max, record_every=None, callback=None):
        """
        Fixed-step RK4 from ``t_start`` to ``t_end``.

        The step is ``(t_end - t_start) / ceil((t_end - t_start) / h_max)``.
        With ``record_every=k`` the state is recorded every k steps (and at the
        end). ``callback(t, r)`` is invoked at each record and may raise.

        Returns
        -------
        r_end, times, records
        """
        span = t_end - t_start
        if span < 0:
            raise ValueError("t_end must not precede t_start")
        n_steps = max(1, int(math.ceil(span / h_max - 1e-9))) if span > 0 else 0
        h = span / n_steps if n_steps else 0.0
        r = np.array(r0, dtype=float)
        times, records = [t_start], [r.copy()]
        for j in range(n_steps):
            t = t_start + j * h
            r = self.rk4_step(r, t, h)
            if record_every and ((j + 1) % record_every == 0 or j + 1 == n_steps):
                t_now = t_start + (j + 1) * h
                if callback is not None:
                    callback(t_now, r)
                times.append(t_now)
                records.append(r.copy())
        if not record_every and n_steps:
            times.append(t_end)
            records.append(r.copy())
            if callback is not None:
                callback(t_end, r)
        return r, np.array(times), np.array(records)

    def step_matrices(self, t_start, h, n_steps):
        """Batched RK4 one-step propagators ``P_j`` for ``t_j = t_start + j h``."""
        t = t_start + h * np.arange(n_steps)
        a1 = self._matrices(t)
        a2 = self._matrices(t + 0.5 * h)
        a4 = self._matrices(t + h)
        eye = np.eye(self.dim)
        k1 = a1
        k2 = a2 @ (eye + 0.5 * h * k1)
        k3 = a2 @ (eye + 0.5 * h * k2)
        k4 = a4 @ (eye + h * k3)
        return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def cycle_propagators(self, samples_per_period, steps_per_sample, chunk_steps=8192):
        """
        RK4 propagators from phase 0 to each of the sample points of one period.

        ``steps_per_sample`` must be a power of two; products inside a sample
        interval are formed by pairwise (tree) reduction.

        Returns
        -------
        ndarray, shape (samples_per_period + 1, dim, dim)
            ``Phi[i]`` maps the state at ``t = 0`` (mod T) to ``t = i T / S``;
            ``Phi[S]`` is the one-period monodromy matrix.
        """
        m = int(steps_per_sample)
        if m < 1 or m & (m - 1):
            raise ValueError("steps_per_sample must be a power of two")
        S = int(samples_per_period)
        h = self.period / (S * m)
        blocks = np.empty((S, self.dim, self.dim))
        per_chunk = max(1, chunk_steps // m)
        for i0 in range(0, S, per_chunk):
            c = min(per_chunk, S - i0)
            P = self.step_matrices(i0 * m * h, h, c * m).reshape(c, m, self.dim, self.dim)
            while P.shape[1] > 1:
                P = P[:, 1::2] @ P[:, 0::2]
            blocks[i0:i0 + c] = P[:, 0]
        phis = np.empty((S + 1, self.dim, self.dim))
        phis[0] = np.eye(self.dim)
        for i in range(S):
            phis[i + 1] = blocks[i] @ phis[i]
        return phis

    # -- harmonic balance ----------------------------------------------------

    def harmonic_system(self, n_harmonics, adiabatic=False):
        """
        Sparse block-tridiagonal system for the traceless Fourier coefficients.

        Unknowns are ``x_k`` (components 1.. of ``r``) for ``k = -K..K``; the
        balance ``i k w x_k = A0 x_k + A1 x_{k-1} + conj(A1) x_{k+1} + b_k``
        is rearranged to ``M x = -b``. ``adiabatic=True`` drops the ``i k w``
        term (quasi-static limit w -> 0).
        """
        K = int(n_harmonics)
        n = self.dim - 1
        A0 = self.G0[1:, 1:]
        A1 = self.G1[1:, 1:]
        ks = np.arange(-K, K + 1)
        w = 0.0 if adiabatic else self.delta_omega
        diag = sp.kron(sp.identity(2 * K + 1), sp.csr_matrix(A0)) \
            - sp.kron(sp.diags(1j * w * ks), sp.identity(n))
        lower = sp.kron(sp.eye(2 * K + 1, k=-1), sp.csr_matrix(A1))
        upper = sp.kron(sp.eye(2 * K + 1, k=1), sp.csr_matrix(A1.conj()))
        M = (diag + lower + upper).tocsc()
        b = np.zeros((2 * K + 1, n), dtype=complex)
        b[K] = self.G0[1:, 0]
        if K >= 1:
            b[K + 1] = self.G1[1:, 0]
            b[K - 1] = self.G1[1:, 0].conj()
        return M, b.ravel()

    def harmonic_steady_state(self, n_harmonics=None, tol=1e-13, max_harmonics=4096,
                              adiabatic=False):
        """
        Periodic steady state as Fourier coefficients ``R[k]`` of ``r(t)``.

        If ``n_harmonics`` is None the truncation starts at 8 and doubles until
        the outermost two harmonics fall below ``tol`` relative to the largest.

        Returns
        -------
        R : ndarray, complex, shape (2K+1, dim)
            ``r(t) = sum_k R[k + K] exp(i k phi)``; ``R[K, 0] = 1``.
        """
        K = 8 if n_harmonics is None else int(n_harmonics)
        while True:
            M, b = self.harmonic_system(K, adiabatic=adiabatic)
            try:
                lu = spla.splu(M)
            except RuntimeError as exc:   # exactly singular factor
                raise FloquetSingularError(str(exc)) from None
            x = lu.solve(-b)
            if not np.all(np.isfinite(x)):
                raise FloquetSingularError("non-finite harmonic solution")
            # cheap conditioning probe: residual of the solve
            res = np.linalg.norm(M @ x + b) / max(np.linalg.norm(b), 1e-300)
            if res > 1e-8:
                raise FloquetSingularError(f"harmonic system ill-conditioned (residual {res:.2e})")
            X = x.reshape(2 * K + 1, self.dim - 1)
            scale = np.max(np.abs(X)) if X.size else 0.0
            tail = max(np.max(np.abs(X[:2])), np.max(np.abs(X[-2:])))
            if n_harmonics is not None or tail <= tol * max(scale, 1e-300) or scale == 0.0:
                break
            if 2 * K > max_harmonics:
                break
            K *= 2
        R = np.zeros((2 * K + 1, self.dim), dtype=complex)
        R[:, 1:] = X
        R[K, 0] = 1.0
        return R

    @staticmethod
    def synthesize(R, phases):
        """Real Pauli vectors ``r(phi)`` from harmonic coefficients."""
        K = (R.shape[0] - 1) // 2
        ks = np.arange(-K, K + 1)
        ph = np.exp(1j * np.outer(np.asarray(phases), ks))
        return (ph @ R).real
