"""Dense complex linear algebra and quantum-state primitives.

Everything in here works on plain ``numpy.ndarray`` objects of dtype
complex128.  Operators and density matrices for ``n`` spin-1/2 sites live
in the 2**n dimensional product space with the ordered one-site basis
{|0>, |1>} and sigma_z = |0><0| - |1><1| = diag(1, -1).  Site 1 is the
leftmost tensor factor.

Sign convention for the ladder operators: sigma_minus = |1><0| lowers the
sigma_z eigenvalue, i.e. it maps the upper-energy basis state |0> of
H = (omega/2) sigma_z onto the thermally favored state |1>.  The
stationarity test of the thermal dissipator in the dynamics test suite
pins this choice.
"""

from __future__ import annotations

import numpy as np

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = -1e-8

_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "plus": np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex),
    "minus": np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex),
}


def pauli(axis: str) -> np.ndarray:
    """Return the 2x2 Pauli or ladder operator for ``axis``.

    ``axis`` is one of ``x``, ``y``, ``z``, ``plus``, ``minus``.  A fresh
    array is returned so callers may mutate it freely.
    """
    try:
        return _PAULI[axis].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}; expected x/y/z/plus/minus") from None


def identity(n_spins: int) -> np.ndarray:
    """Identity operator on ``n_spins`` spin-1/2 sites."""
    return np.eye(2**n_spins, dtype=complex)


def embed(op: np.ndarray, site: int, total_spins: int) -> np.ndarray:
    """Embed a single-site operator at ``site`` (1-based) of ``total_spins``.

    Returns I x ... x op x ... x I with ``op`` at tensor slot ``site``;
    site 1 is the leftmost factor.
    """
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"embed expects a 2x2 operator, got shape {op.shape}")
    if not 1 <= site <= total_spins:
        raise ValueError(f"site {site} outside 1..{total_spins}")
    left = np.eye(2 ** (site - 1), dtype=complex)
    right = np.eye(2 ** (total_spins - site), dtype=complex)
    return np.kron(np.kron(left, op), right)


def kron_all(*ops: np.ndarray) -> np.ndarray:
    """Tensor product of the given operators, left to right."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def partial_trace(rho: np.ndarray, keep, total_spins: int) -> np.ndarray:
    """Reduced density matrix on the sites in ``keep`` (1-based indices).

    The kept sites appear in ascending site order in the output.  Trace is
    preserved, so a unit-trace input yields a unit-trace output.
    """
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep must be a nonempty set of site indices")
    if keep[0] < 1 or keep[-1] > total_spins:
        raise ValueError(f"keep {keep} outside 1..{total_spins}")
    rho = np.asarray(rho, dtype=complex)
    dim = 2**total_spins
    if rho.shape != (dim, dim):
        raise ValueError(f"density matrix shape {rho.shape} does not match {total_spins} spins")

    t = rho.reshape((2,) * (2 * total_spins))
    n = total_spins
    # Trace out the discarded sites from the highest index down so that
    # the axis positions of the remaining sites stay valid.
    for site in sorted(set(range(1, total_spins + 1)) - set(keep), reverse=True):
        ax = site - 1
        t = np.trace(t, axis1=ax, axis2=ax + n)
        n -= 1
    d = 2 ** len(keep)
    return np.ascontiguousarray(t.reshape(d, d))


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors)`` with real eigenvalues in
    ascending order and eigenvectors as columns.  Raises ``ValueError`` if
    the input deviates from Hermiticity by more than 1e-10 entrywise.
    """
    m = np.asarray(m, dtype=complex)
    dev = np.abs(m - m.conj().T).max()
    if dev > HERMITICITY_TOL:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs


def check_density_matrix(
    rho: np.ndarray,
    *,
    herm_tol: float = HERMITICITY_TOL,
    trace_tol: float = TRACE_TOL,
    psd_tol: float = POSITIVITY_TOL,
) -> np.ndarray:
    """Validate the density-matrix invariants and return ``rho`` unchanged.

    Checks: square, finite entries, Hermitian within ``herm_tol``, unit
    trace within ``trace_tol`` and minimum eigenvalue >= ``psd_tol``.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if not np.isfinite(rho).all():
        raise ValueError("density matrix contains non-finite entries")
    herm_dev = np.abs(rho - rho.conj().T).max()
    if herm_dev > herm_tol:
        raise ValueError(f"density matrix not Hermitian (deviation {herm_dev:.3e})")
    tr_dev = abs(rho.trace() - 1.0)
    if tr_dev > trace_tol:
        raise ValueError(f"density matrix trace off by {tr_dev:.3e}")
    min_eig = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if min_eig < psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {min_eig:.3e}")
    return rho


def ket(*bits: int) -> np.ndarray:
    """Computational-basis column vector |b1 b2 ... bn>."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    idx = 0
    for b in bits:
        idx = 2 * idx + int(b)
    v[idx] = 1.0
    return v


def plus_state() -> np.ndarray:
    """Density matrix of the maximally coherent qubit state |+><+|."""
    return np.full((2, 2), 0.5, dtype=complex)
