"""Dense complex linear algebra for small n-qubit operators and states.

Everything here works on plain numpy arrays: state vectors of length 2^n and
operators of shape (2^n, 2^n). Qubit 0 is the leftmost tensor factor, i.e. the
most significant bit of the basis-state integer. This convention is fixed
repo-wide; all bitstring/index conversions go through :func:`index_of_bits`
and :func:`bits_of_index`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

AXES = ("X", "Y", "Z")

HERMITIAN_ATOL = 1e-10
PSD_CLIP_TOL = 1e-10
LOG_SUPPORT_CUTOFF = 1e-12

PAULI_1Q = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def num_qubits(dim: int) -> int:
    """Number of qubits for a dimension that must be a power of two."""
    n = dim.bit_length() - 1
    if dim <= 0 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def index_of_bits(bits) -> int:
    """Basis-state integer of a 0/1 sequence, qubit 0 as most significant bit."""
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def bits_of_index(index: int, n: int) -> np.ndarray:
    """Inverse of :func:`index_of_bits`; returns a uint8 array of length n."""
    return np.array([(index >> (n - 1 - q)) & 1 for q in range(n)], dtype=np.uint8)


def parse_bits(s, n: int | None = None) -> np.ndarray:
    """Coerce a bitstring given as str, sequence, or array into uint8 bits."""
    if isinstance(s, str):
        bits = np.array([int(c) for c in s.strip()], dtype=np.uint8)
    else:
        bits = np.asarray(s, dtype=np.uint8)
    if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bitstring must be a flat sequence of 0/1")
    if n is not None and bits.size != n:
        raise ValueError(f"bitstring has length {bits.size}, expected {n}")
    return bits


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis on selected sites.

    ``factors`` maps qubit index to an axis in {X, Y, Z}; unlisted sites carry
    the identity. The empty map is the identity operator.
    """

    n: int
    factors: tuple = ()

    def __post_init__(self):
        items = tuple(sorted(dict(self.factors).items()))
        if self.n < 1:
            raise ValueError("need at least one qubit")
        for q, axis in items:
            if not 0 <= q < self.n:
                raise ValueError(f"qubit index {q} out of range for n={self.n}")
            if axis not in AXES:
                raise ValueError(f"unknown Pauli axis {axis!r}")
        object.__setattr__(self, "factors", items)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def label(self) -> str:
        body = dict(self.factors)
        return "".join(body.get(q, "I") for q in range(self.n))


class PauliAction:
    """Permutation-phase form of a Pauli string.

    A Pauli string has exactly one nonzero entry per column:
    P|a> = coef(a) |a XOR flip_mask>, so application to a state and traces
    against a density matrix are O(2^n) with no dense matrix.
    """

    __slots__ = ("n", "dim", "flip_mask", "perm", "coef")

    def __init__(self, p: PauliString):
        self.n = p.n
        self.dim = p.dim
        flip = 0
        sign_mask = 0
        n_y = 0
        for q, axis in p.factors:
            bit = 1 << (p.n - 1 - q)
            if axis in ("X", "Y"):
                flip |= bit
            if axis in ("Y", "Z"):
                sign_mask |= bit
            if axis == "Y":
                n_y += 1
        self.flip_mask = flip
        idx = np.arange(self.dim)
        self.perm = idx ^ flip
        parity = (np.bitwise_count(idx & sign_mask) & 1).astype(np.int8)
        coef = (1j**n_y) * np.where(parity, -1.0, 1.0)
        # Pure Z strings are real; keep a real coef array for cheaper math.
        self.coef = coef.real if n_y % 2 == 0 and flip == 0 else coef

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """P @ psi for a state (dim,) or a batch (..., dim)."""
        return (self.coef * psi)[..., self.perm]

    def expval(self, psi: np.ndarray) -> np.ndarray:
        """<psi|P|psi> per batch row; real by Hermiticity."""
        return np.einsum(
            "...i,...i->...", np.conjugate(psi), (self.coef * psi)[..., self.perm]
        ).real

    def trace_with(self, rho: np.ndarray) -> float:
        """Tr(P rho) without forming P."""
        cols = np.arange(self.dim)
        return complex(np.sum(self.coef[self.perm] * rho[self.perm, cols])).real

    def dense(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=complex)
        m[self.perm, np.arange(self.dim)] = self.coef
        return m


def pauli_matrix(p: PauliString) -> np.ndarray:
    """Dense 2^n x 2^n matrix of a Pauli string (Hermitian, unitary, involutory)."""
    return PauliAction(p).dense()


def check_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> None:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    dev = np.max(np.abs(m - m.conj().T))
    if dev > atol:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvector matrix V) with m = V diag(w) V+.
    """
    check_hermitian(m)
    w, v = np.linalg.eigh(np.asarray(m, dtype=complex))
    return w, v


def matrix_fn_hermitian(
    m: np.ndarray, fn: Callable[[np.ndarray], np.ndarray], *, psd: bool = False
) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    With ``psd=True`` the spectrum is required to be nonnegative up to
    ``PSD_CLIP_TOL``; small negatives are clipped to zero before ``fn``.
    """
    w, v = hermitian_eig(m)
    if psd:
        if w.min() < -PSD_CLIP_TOL:
            raise ValueError(
                f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})"
            )
        w = np.clip(w, 0.0, None)
    fw = np.asarray(fn(w), dtype=float)
    return (v * fw) @ v.conj().T


def matrix_exp_hermitian(m: np.ndarray) -> np.ndarray:
    return matrix_fn_hermitian(m, np.exp)


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    return matrix_fn_hermitian(m, np.sqrt, psd=True)


def matrix_log_psd(m: np.ndarray) -> np.ndarray:
    """log of a PSD matrix; eigenvalues below the support cutoff map to 0.

    The zero convention makes Tr(rho log rho) finite for rank-deficient rho
    (0 log 0 = 0). Support mismatches must be handled by the caller.
    """
    def safe_log(w):
        out = np.zeros_like(w)
        on = w > LOG_SUPPORT_CUTOFF
        out[on] = np.log(w[on])
        return out

    return matrix_fn_hermitian(m, safe_log, psd=True)


def check_state_vector(psi: np.ndarray, atol: float = 1e-10) -> None:
    psi = np.asarray(psi)
    num_qubits(psi.shape[-1])
    norm2 = float(np.sum(np.abs(psi) ** 2))
    if abs(norm2 - 1.0) > atol:
        raise ValueError(f"state vector norm^2 = {norm2} deviates from 1")


def check_density_matrix(rho: np.ndarray, atol: float = 1e-8) -> None:
    """Validate trace-1, Hermiticity, and positivity up to ``atol``."""
    check_hermitian(rho, atol=atol)
    tr = complex(np.trace(rho)).real
    if abs(tr - 1.0) > atol:
        raise ValueError(f"density matrix trace {tr} deviates from 1")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -atol:
        raise ValueError(f"density matrix has negative eigenvalue {w.min():.3e}")
