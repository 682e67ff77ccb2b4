"""Exact thermal-state computations: target generator and verification oracle."""

from __future__ import annotations

import numpy as np

from .linalg import LOG_SUPPORT_CUTOFF, hermitian_eig


def gibbs_state(hamiltonian: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """exp(-beta H) / Tr(exp(-beta H)) via eigendecomposition.

    Eigenvalues are shifted by their minimum before exponentiation so large
    weights (late-stage training) cannot overflow.
    """
    if beta <= 0:
        raise ValueError("inverse temperature must be positive")
    w, v = hermitian_eig(hamiltonian)
    boltz = np.exp(-beta * (w - w[0]))
    probs = boltz / boltz.sum()
    return (v * probs) @ v.conj().T


def log_partition(hamiltonian: np.ndarray, beta: float = 1.0) -> float:
    """log Tr(exp(-beta H)), overflow-safe."""
    w, _ = hermitian_eig(hamiltonian)
    shift = -beta * w[0]
    return float(shift + np.log(np.sum(np.exp(-beta * (w - w[0])))))


def expectation(op: np.ndarray, rho: np.ndarray) -> float:
    """Tr(op rho) for Hermitian op; the imaginary residue is discarded."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {op.shape} vs {rho.shape}")
    return float(np.einsum("ij,ji->", op, rho).real)


def exact_rank_truncation(
    rho: np.ndarray, rank: int, *, return_degenerate: bool = False
):
    """Projection of rho onto its ``rank`` largest-eigenvalue eigenvectors.

    The result is renormalized to trace 1. Ties at the cut are broken by the
    deterministic eigenvector order of :func:`hermitian_eig`; a degenerate cut
    is reported when ``return_degenerate`` is set.
    """
    dim = rho.shape[0]
    if not 1 <= rank <= dim:
        raise ValueError(f"rank {rank} out of range [1, {dim}]")
    w, v = hermitian_eig(rho)
    top = v[:, dim - rank:]
    pw = np.clip(w[dim - rank:], 0.0, None)
    total = pw.sum()
    if total <= 0:
        raise ValueError("truncated state has no probability mass")
    out = (top * (pw / total)) @ top.conj().T
    if return_degenerate:
        degenerate = rank < dim and abs(w[dim - rank] - w[dim - rank - 1]) < 1e-12
        return out, degenerate
    return out


def spectral_gaps(hamiltonian: np.ndarray, k: int = 1) -> np.ndarray:
    """First k consecutive eigenvalue differences, lowest part of the spectrum."""
    w, _ = hermitian_eig(hamiltonian)
    if not 1 <= k < w.size:
        raise ValueError(f"k={k} out of range [1, {w.size - 1}]")
    return np.diff(w[: k + 1])


def von_neumann_entropy(rho: np.ndarray) -> float:
    """-Tr(rho log rho) with the 0 log 0 = 0 convention."""
    w, _ = hermitian_eig(rho)
    w = np.clip(w, 0.0, None)
    on = w > LOG_SUPPORT_CUTOFF
    return float(-np.sum(w[on] * np.log(w[on])))
