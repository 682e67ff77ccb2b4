"""State-overlap measures used to evaluate trained models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import check_density_matrix, hermitian_eig, matrix_sqrt_psd


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Uhlmann-Jozsa fidelity Tr(sqrt(sqrt(a) b sqrt(a)))^2, clipped to [0, 1]."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    check_density_matrix(a)
    check_density_matrix(b)
    sa = matrix_sqrt_psd(a)
    inner = sa @ b @ sa
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    # sqrt amplifies eigenvalue noise (sqrt(1e-16) = 1e-8 per junk direction),
    # so drop everything below a relative floor before taking roots
    floor = max(float(w.max()), 0.0) * 1e-13
    w = np.where(w > floor, w, 0.0)
    val = float(np.sum(np.sqrt(w)) ** 2)
    return min(max(val, 0.0), 1.0)


def pure_state_fidelity(psi: np.ndarray, rho: np.ndarray) -> float:
    """Fidelity <psi|rho|psi> of a pure state against a density matrix."""
    psi = np.asarray(psi, dtype=complex)
    val = float(np.real(np.conjugate(psi) @ rho @ psi))
    return min(max(val, 0.0), 1.0)


def ground_state_fidelity(
    hamiltonian: np.ndarray,
    target: np.ndarray,
    *,
    degeneracy_atol: float = 1e-9,
    return_degenerate: bool = False,
):
    """Fidelity between the ground state of H and a target density matrix.

    A degenerate ground space is compared through its normalized projector and
    flagged when ``return_degenerate`` is set.
    """
    w, v = hermitian_eig(hamiltonian)
    tol = degeneracy_atol * max(1.0, float(np.max(np.abs(w))))
    ground = v[:, w <= w[0] + tol]
    g = ground.shape[1]
    if g == 1:
        val = pure_state_fidelity(ground[:, 0], target)
    else:
        val = fidelity(ground @ ground.conj().T / g, target)
    if return_degenerate:
        return val, g > 1
    return val


@dataclass
class FidelityReport:
    """End-of-run fidelities between the target and the trained states."""

    target_vs_variational: float
    target_vs_model: float
    target_vs_ground_state: float
    target_vs_rank_ceiling: float | None = None
    ground_space_degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "F_beta_vqe": self.target_vs_variational,
            "F_qbm": self.target_vs_model,
            "F_ground": self.target_vs_ground_state,
            "F_ceiling": self.target_vs_rank_ceiling,
            "ground_space_degenerate": self.ground_space_degenerate,
        }
