"""
Expansion of the probe's response in powers of the unidirectional coupling.

Writing ``rho = rho_s (x) rho_p`` with the source frozen at its own
stationary state, the cross term acts on the probe as

    (d/dt - L_p) rho_p^(n) = c (s(t) [rho_p^(n-1), p+] + s*(t) [p-, rho_p^(n-1)]),

with ``c = alpha sqrt(gamma Gamma)`` and ``s(t) = <s->`` of the isolated
source. Each order is solved exactly in a truncated Fourier basis.

Dimensionless drives: ``W_bar`` belongs to the source and ``E_bar`` to the
probe, defined so that each isolated emitter has ``<sigma-> = -2x/(1+8x^2)``
on resonance (``x = W_bar`` or ``E_bar``).

Sign convention of the closed forms: they are quoted for ``-<p->`` (the
emitted amplitude), so order 0 reads ``+2 E_bar / (1 + 8 E_bar^2)``.
:meth:`PerturbativeEmission.as_expectation` converts to ``<p->``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from . import dynamics
from . import quantum_core as qc
from .errors import FloquetSingularError, ParameterError
from .periodic import PeriodicModel, commutator_map, lindblad_dissipator

ALLOWED_HARMONICS = {0: (-1,), 1: (1, -3), 2: (-1, 3, -5)}


@dataclass(frozen=True)
class DimensionlessDrives:
    W_bar: float
    E_bar: float

    def __post_init__(self):
        if self.W_bar < 0 or self.E_bar < 0:
            raise ParameterError("dimensionless drives must be non-negative")


@dataclass
class PerturbativeEmission:
    """
    Harmonic components of the order-``n`` probe coherence.

    ``convention='emitted'`` means the values are ``-<p->^(n)``;
    ``'expectation'`` means ``<p->^(n)``.
    """

    order: int
    components: dict
    convention: str = "emitted"

    def as_expectation(self):
        if self.convention == "expectation":
            return self
        return PerturbativeEmission(self.order, {k: -v for k, v in self.components.items()},
                                    "expectation")

    def get(self, k):
        return self.components.get(k, 0.0)


def drives_to_params(drives, gamma, Gamma, alpha, delta_omega, eta=None, **kw):
    """CascadeParams realising the given dimensionless drives (resonant)."""
    p = dynamics.CascadeParams(gamma=gamma, Gamma=Gamma, delta_omega=delta_omega,
                               alpha=alpha, eta=eta, **kw)
    if p.eta == 0 and drives.W_bar > 0:
        raise ParameterError("a source drive needs eta > 0")
    W = drives.W_bar * (p.gamma + p.eta) / math.sqrt(p.eta) if drives.W_bar else 0.0
    return replace(p, W=W, E=drives.E_bar * math.sqrt(2.0 * Gamma))


# --- closed forms --------------------------------------------------------------

def closed_form_emission(order, drives, alpha, gamma_over_Gamma, variant="derived"):
    """
    Closed-form probe emission at order 0, 1 or 2 (resonant drives).

    With ``D = 1 + 8 E^2`` and ``B = 1 + 8 W^2`` (bars dropped):

    * order 0: ``2E/D`` at k = -1;
    * order 1: ``a sqrt(g/G) 4W / (D^2 B)`` times ``-1`` at k = +1 and
      ``+8E^2`` at k = -3;
    * order 2 (``variant='derived'``): ``-a^2 (g/G) 64 E W^2 / (D^3 B^2)``
      times ``2`` at k = -1, ``1`` at k = +3 and ``-8E^2`` at k = -5.

    ``variant='printed'`` replaces order 2 by
    ``a^2 (g/G) 64 W / (D^4 B)`` times ``(1, 1, 8E^2)`` at ``(-1, +3, -5)``;
    it disagrees with the recursion and is kept only for reference.
    """
    if order not in (0, 1, 2):
        raise ParameterError("closed forms exist for orders 0, 1 and 2 only")
    if variant not in ("derived", "printed"):
        raise ParameterError("variant must be 'derived' or 'printed'")
    W, E = drives.W_bar, drives.E_bar
    D = 1.0 + 8.0 * E * E
    B = 1.0 + 8.0 * W * W
    if order == 0:
        comps = {-1: 2.0 * E / D}
    elif order == 1:
        a = alpha * math.sqrt(gamma_over_Gamma) * 4.0 * W / (D * D * B)
        comps = {1: -a, -3: 8.0 * E * E * a}
    elif variant == "derived":
        a = -alpha**2 * gamma_over_Gamma * 64.0 * E * W * W / (D**3 * B * B)
        comps = {-1: 2.0 * a, 3: a, -5: -8.0 * E * E * a}
    else:
        a = alpha**2 * gamma_over_Gamma * 64.0 * W / (D**4 * B)
        comps = {-1: a, 3: a, -5: 8.0 * E * E * a}
    return PerturbativeEmission(order, {k: complex(v) for k, v in comps.items()})


# --- Floquet recursion ---------------------------------------------------------

def _probe_model(params):
    """Isolated probe with its own tone, Pauli coordinates (dim 4)."""
    sm, sz = qc.SIGMA_MINUS, qc.SIGMA_Z
    diss = [lindblad_dissipator(math.sqrt(params.Gamma) * sm)]
    if params.Gamma_phi > 0:
        diss.append(lindblad_dissipator(math.sqrt(params.Gamma_phi / 2.0) * sz))
    ham = commutator_map(0.5 * params.detuning_probe * sz)
    hp = -1j * math.sqrt(params.Gamma / 2.0) * params.E * qc.SIGMA_PLUS
    h1 = hp.conj().T if params.source_detuning_sign > 0 else hp

    def static(rho):
        return ham(rho) + sum(d(rho) for d in diss)

    return PeriodicModel.from_maps(1, static, commutator_map(h1), params.delta_omega)


def _source_harmonics(params, adiabatic):
    """Harmonics of the isolated source's ``<s->``, as {k: value}."""
    R = dynamics.source_model(params).harmonic_steady_state(adiabatic=adiabatic)
    K = (R.shape[0] - 1) // 2
    s = 0.5 * (R[:, 1] + 1j * R[:, 2])
    return {k: s[k + K] for k in range(-K, K + 1) if abs(s[k + K]) > 1e-15 * max(np.abs(s).max(), 1e-300)}


def _coupling_maps():
    sp_, sm = qc.SIGMA_PLUS, qc.SIGMA_MINUS
    Ms = qc.superoperator_matrix(lambda x: x @ sp_ - sp_ @ x, 1)   # X -> [X, p+]
    Mc = qc.superoperator_matrix(lambda x: sm @ x - x @ sm, 1)     # X -> [p-, X]
    return Ms, Mc


def _shift(A, j):
    """``B[k] = A[k - j]`` along axis 0, zero-filled."""
    B = np.zeros_like(A)
    if j >= 0:
        B[j:] = A[:A.shape[0] - j]
    else:
        B[:j] = A[-j:]
    return B


def _solve_orders(model, s_harm, coupling, max_order, K, adiabatic):
    Ms, Mc = _coupling_maps()
    M, b = model.harmonic_system(K, adiabatic=adiabatic)
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        raise FloquetSingularError(f"singular Floquet system: {exc}") from None
    n = model.dim - 1
    size = 2 * K + 1
    x0 = lu.solve(-b)
    X = np.zeros((size, model.dim), dtype=complex)
    X[:, 1:] = x0.reshape(size, n)
    X[K, 0] = 1.0
    out = [X]
    for _ in range(max_order):
        prev = out[-1]
        src = np.zeros_like(prev)
        for j, sj in s_harm.items():
            # the s(t) term raises harmonics by j, the s*(t) term lowers them by j
            src += _shift(prev @ (coupling * sj * Ms).T, j)
            src += _shift(prev @ (coupling * np.conj(sj) * Mc).T, -j)
        if np.max(np.abs(src[:, 0])) > 1e-12 * max(np.max(np.abs(src)), 1e-300):
            raise FloquetSingularError("coupling source is not traceless")
        x = lu.solve(-src[:, 1:].ravel())
        if not np.all(np.isfinite(x)):
            raise FloquetSingularError("non-finite solution of the Floquet system")
        Xn = np.zeros_like(prev)
        Xn[:, 1:] = x.reshape(size, n)
        out.append(Xn)
    return out


def _sigma_minus_harmonics(X, K, keep_tol=0.0):
    s = 0.5 * (X[:, 1] + 1j * X[:, 2])
    return {k: s[k + K] for k in range(-K, K + 1) if abs(s[k + K]) > keep_tol}


def floquet_recursion(params, max_order=2, n_harmonics=None, adiabatic=False,
                      check_convergence=True, tol=1e-10):
    """
    Orders ``0..max_order`` of the probe coherence ``<p->`` by recursion.

    Parameters
    ----------
    params : CascadeParams
    max_order : int, at most 4
    n_harmonics : int, optional
        Fourier truncation ``K``; default ``4 max_order + 3``; must be at
        least ``2 max_order + 1``.
    adiabatic : bool
        Drop the ``i k dw`` terms (the quasi-static limit dw -> 0).
    check_convergence : bool
        Re-solve with ``2K`` and require agreement to ``tol`` (relative).

    Returns
    -------
    list of PerturbativeEmission, convention ``'expectation'``
    """
    if not 0 <= max_order <= 4:
        raise ParameterError("max_order must lie in 0..4")
    K = 4 * max_order + 3 if n_harmonics is None else int(n_harmonics)
    if K < 2 * max_order + 1:
        raise ParameterError("n_harmonics must be at least 2 * max_order + 1")
    model = _probe_model(params)
    s_harm = _source_harmonics(params, adiabatic)
    orders = _solve_orders(model, s_harm, params.coupling, max_order, K, adiabatic)
    if check_convergence:
        ref = _solve_orders(model, s_harm, params.coupling, max_order, 2 * K, adiabatic)
        for n, (a, b) in enumerate(zip(orders, ref)):
            sa = 0.5 * (a[:, 1] + 1j * a[:, 2])
            sb = 0.5 * (b[K:3 * K + 1, 1] + 1j * b[K:3 * K + 1, 2])
            scale = max(np.max(np.abs(sb)), 1e-300)
            if np.max(np.abs(sa - sb)) > tol * scale and scale > 1e-300:
                raise FloquetSingularError(
                    f"order {n} not converged in the harmonic truncation (K={K})")
    return [PerturbativeEmission(n, _sigma_minus_harmonics(X, K), "expectation")
            for n, X in enumerate(orders)]


def total_emission(emissions, harmonics, up_to=None):
    """Per-harmonic sum over orders ``0..up_to`` (coherent sum of amplitudes)."""
    out = {}
    for em in emissions:
        if up_to is not None and em.order > up_to:
            continue
        for k in harmonics:
            out[k] = out.get(k, 0.0) + em.get(k)
    return out


# --- comparison with the full cascade -------------------------------------------

@dataclass
class ComparisonRow:
    W_bar: float
    E_bar: float
    order: int
    harmonic: int
    re_pert: float
    im_pert: float
    re_exact: float
    im_exact: float
    concurrence_max: float


@dataclass
class ComparisonTable:
    rows: list = field(default_factory=list)
    net: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    COLUMNS = ("W_bar", "E_bar", "order", "harmonic", "re_pert", "im_pert",
               "re_exact", "im_exact", "concurrence_max")

    def to_csv(self):
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(float(getattr(r, c))) if c not in ("order", "harmonic")
                                  else str(getattr(r, c)) for c in self.COLUMNS))
        return "\n".join(lines) + "\n"


def compare_with_exact(W_grid, E_grid, gamma, Gamma, alpha, delta_omega, max_order=2,
                       harmonics=(-5, -3, -1, 1, 3, 5), source="closed_form", eta=None,
                       samples_per_period=256):
    """
    Perturbative versus full-cascade harmonics of ``<p->`` on a drive grid.

    ``order`` in each row is the highest order included in the (coherent)
    sum. ``net`` lists, per point and order, the net emission
    ``sum_k |sum_n c_k^(n)|^2`` and the incoherent alternative
    ``sum_k sum_n |c_k^(n)|^2`` next to the exact ``sum_k |c_k|^2``.
    ``source='closed_form'`` uses the closed forms (orders <= 2),
    ``'recursion'`` the Floquet recursion.
    """
    from . import spectrum

    table = ComparisonTable()
    gG = gamma / Gamma
    for Wb in W_grid:
        for Eb in E_grid:
            drives = DimensionlessDrives(float(Wb), float(Eb))
            try:
                p = drives_to_params(drives, gamma, Gamma, alpha, delta_omega, eta=eta)
                traj = dynamics.steady_cycle(p, samples_per_period=samples_per_period,
                                             method="harmonic")
                spec = spectrum.spectrum_of(traj, traj.sigma_p, orders=harmonics,
                                            even_orders=())
                if source == "closed_form":
                    ems = [closed_form_emission(n, drives, alpha, gG).as_expectation()
                           for n in range(min(max_order, 2) + 1)]
                else:
                    ems = floquet_recursion(p, max_order=max_order, adiabatic=True)
            except Exception as exc:  # noqa: BLE001 - collected per point
                table.errors.append({"W_bar": float(Wb), "E_bar": float(Eb),
                                     "error": f"{type(exc).__name__}: {exc}"})
                continue
            cmax = float(np.max(traj.concurrence))
            exact = dict(zip(spec.orders.tolist(), spec.amplitudes))
            for n in range(len(ems)):
                summed = total_emission(ems, harmonics, up_to=n)
                for k in harmonics:
                    c = complex(summed[k])
                    table.rows.append(ComparisonRow(float(Wb), float(Eb), n, k, c.real, c.imag,
                                                    exact[k].real, exact[k].imag, cmax))
                table.net.append({
                    "W_bar": float(Wb), "E_bar": float(Eb), "order": n,
                    "coherent_sum": float(sum(abs(summed[k]) ** 2 for k in harmonics)),
                    "squared_sum": float(sum(abs(e.get(k)) ** 2 for e in ems[:n + 1]
                                             for k in harmonics)),
                    "exact": float(sum(abs(exact[k]) ** 2 for k in harmonics)),
                    "concurrence_max": cmax})
    return table
