"""
Two-qubit operator algebra for the source/probe pair.

The computational basis is fixed once, here, and every other module builds
its operators through :func:`pauli_operator`::

    index 0: |g_s g_p>    index 1: |g_s e_p>
    index 2: |e_s g_p>    index 3: |e_s e_p>

i.e. the source is the left tensor factor and ``|g> = (1, 0)``.
"""

import itertools

import numpy as np

from .errors import InvalidStateError

BASIS_LABELS = ("g_s g_p", "g_s e_p", "e_s g_p", "e_s e_p")
SUBSYSTEMS = ("source", "probe")

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-9
PSD_TOL = 1e-8

# single-qubit building blocks, basis (|g>, |e>)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)   # |g><e|
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

_SINGLE = {
    "sigma_plus": SIGMA_PLUS,
    "sigma_minus": SIGMA_MINUS,
    "sigma_z": SIGMA_Z,
    "identity": IDENTITY_2,
}


def pauli_operator(which, subsystem):
    """
    Embed a single-qubit operator into the 4x4 two-qubit space.

    Parameters
    ----------
    which : {'sigma_plus', 'sigma_minus', 'sigma_z', 'identity'}
    subsystem : {'source', 'probe'}

    Returns
    -------
    numpy.ndarray
        4x4 complex matrix in the fixed basis.
    """
    try:
        op = _SINGLE[which]
    except KeyError:
        raise ValueError(f"unknown operator {which!r}") from None
    if subsystem == "source":
        return np.kron(op, IDENTITY_2)
    if subsystem == "probe":
        return np.kron(IDENTITY_2, op)
    raise ValueError(f"unknown subsystem {subsystem!r}")


def ket(label):
    """Basis ket for one of :data:`BASIS_LABELS` (or its index)."""
    idx = label if isinstance(label, int) else BASIS_LABELS.index(label)
    v = np.zeros(4, dtype=complex)
    v[idx] = 1.0
    return v


def projector(vec):
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def ground_state():
    """|g_s g_p><g_s g_p|."""
    return projector(ket(0))


def product_state(rho_s, rho_p):
    return np.kron(np.asarray(rho_s, dtype=complex), np.asarray(rho_p, dtype=complex))


def hermitian_eig(h):
    """
    Eigen-decomposition of a small Hermitian matrix.

    Backed by LAPACK's implicit-shift QR (``numpy.linalg.eigh``), which
    iterates to full double precision. The input is symmetrised first so
    that round-off asymmetry cannot leak into the eigenvectors.
    """
    h = np.asarray(h, dtype=complex)
    return np.linalg.eigh(0.5 * (h + h.conj().T))


def check_state(rho, herm_tol=HERMITICITY_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    """
    Raise :class:`InvalidStateError` unless ``rho`` is a density matrix.

    Hermiticity is measured as ``max|rho - rho^H|``, trace as ``|Tr rho - 1|``
    and positivity as the smallest eigenvalue.
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise InvalidStateError(f"not Hermitian: max|rho - rho^H| = {herm:.3e}")
    tr = abs(np.trace(rho) - 1.0)
    if tr > trace_tol:
        raise InvalidStateError(f"trace deviates from 1 by {tr:.3e}")
    lmin = hermitian_eig(rho)[0][0]
    if lmin < -psd_tol:
        raise InvalidStateError(f"not positive semidefinite: min eigenvalue {lmin:.3e}")
    return rho


def partial_trace(rho, keep):
    """
    Reduced 2x2 density matrix of ``keep`` ('source' or 'probe').
    """
    r = np.asarray(rho).reshape(2, 2, 2, 2)   # (s, p, s', p')
    if keep == "source":
        return np.einsum("ijkj->ik", r)
    if keep == "probe":
        return np.einsum("jijk->ik", r)
    raise ValueError(f"unknown subsystem {keep!r}")


_YY = np.kron(SIGMA_Y, SIGMA_Y)


def concurrence(rho, psd_tol=PSD_TOL):
    """
    Wootters concurrence of a two-qubit density matrix.

    ``C = max(0, l1 - l2 - l3 - l4)`` with ``l_i`` the decreasing square roots
    of the eigenvalues of ``rho (Y x Y) rho* (Y x Y)``; the complex
    conjugate is taken in the fixed computational basis.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"concurrence needs a 4x4 matrix, got {rho.shape}")
    check_state(rho, herm_tol=1e-9, psd_tol=psd_tol)
    rho_tilde = _YY @ rho.conj() @ _YY
    ev = np.linalg.eigvals(rho @ rho_tilde).real
    lam = np.sqrt(np.clip(ev, 0.0, None))
    lam = np.sort(lam)[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def expectation(op, rho):
    return np.trace(np.asarray(op) @ np.asarray(rho))


# --- real Pauli-product coordinates -------------------------------------------
#
# A d x d density matrix (d = 2**n) is stored as the real vector
# r_k = Tr(rho B_k), B_k running over tensor products of (I, X, Y, Z), so that
# rho = sum_k r_k B_k / d. Hermiticity is exact by construction and r_0 = Tr rho.

_PAULIS = (IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z)


def pauli_basis(n_qubits):
    """Array of shape (4**n, 2**n, 2**n) of Pauli products, identity first."""
    mats = []
    for combo in itertools.product(_PAULIS, repeat=n_qubits):
        m = np.array([[1.0 + 0j]])
        for p in combo:
            m = np.kron(m, p)
        mats.append(m)
    return np.array(mats)


_BASIS_CACHE = {}


def _basis(n_qubits):
    if n_qubits not in _BASIS_CACHE:
        _BASIS_CACHE[n_qubits] = pauli_basis(n_qubits)
    return _BASIS_CACHE[n_qubits]


def to_pauli_vector(rho):
    rho = np.asarray(rho, dtype=complex)
    n = int(round(np.log2(rho.shape[0])))
    b = _basis(n)
    return np.einsum("kij,ji->k", b, rho).real


def from_pauli_vector(r):
    r = np.asarray(r, dtype=float)
    n = int(round(np.log(r.shape[-1]) / np.log(4)))
    b = _basis(n)
    return np.tensordot(r, b, axes=([-1], [0])) / 2**n


def superoperator_matrix(lmap, n_qubits):
    """
    Matrix of a linear map ``rho -> lmap(rho)`` in Pauli coordinates.

    Returns a complex matrix ``S`` with ``r'_j = sum_k S_jk r_k``; it is real
    whenever ``lmap`` maps Hermitian matrices to Hermitian matrices.
    """
    b = _basis(n_qubits)
    d = 2**n_qubits
    out = np.empty((len(b), len(b)), dtype=complex)
    for k, bk in enumerate(b):
        img = lmap(bk)
        out[:, k] = np.einsum("jab,ba->j", b, img) / d
    return out
