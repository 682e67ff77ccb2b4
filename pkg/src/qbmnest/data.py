"""Dataset loading, pure-state embedding, and target-state construction.

The classical file format is plain UTF-8 text: one '0'/'1' bitstring per
line, '#' starts a comment line, trailing whitespace is ignored. Duplicate
lines accumulate empirical weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gibbs import gibbs_state
from .hamiltonian import build_xxz, dense_matrix
from .linalg import bits_of_index


@dataclass
class BitstringDataset:
    """Samples of n-bit strings plus their empirical distribution."""

    n: int
    samples: np.ndarray  # (N, n) uint8

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.uint8)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.n:
            raise ValueError("samples must be an (N, n) bit array")
        if self.samples.shape[0] == 0:
            raise ValueError("dataset is empty")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    def empirical_distribution(self) -> np.ndarray:
        """Probability of every basis state, indexed by bitstring integer."""
        weights = 1 << np.arange(self.n - 1, -1, -1)
        idx = self.samples.astype(np.int64) @ weights
        counts = np.bincount(idx, minlength=1 << self.n)
        return counts / counts.sum()


class DatasetFormatError(ValueError):
    pass


def load_dataset(path) -> BitstringDataset:
    """Parse the one-bitstring-per-line text format."""
    rows = []
    n = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if set(line) - {"0", "1"}:
            raise DatasetFormatError(
                f"{path}:{lineno}: line contains characters other than 0/1"
            )
        if n is None:
            n = len(line)
        elif len(line) != n:
            raise DatasetFormatError(
                f"{path}:{lineno}: bitstring length {len(line)} != {n}"
            )
        rows.append([int(c) for c in line])
    if not rows:
        raise DatasetFormatError(f"{path}: no data lines")
    return BitstringDataset(n, np.array(rows, dtype=np.uint8))


def save_dataset(ds: BitstringDataset, path) -> None:
    lines = ["".join(map(str, row)) for row in ds.samples]
    Path(path).write_text("\n".join(lines) + "\n")


def embed_pure_state(ds: BitstringDataset) -> np.ndarray:
    """Rank-1 embedding of the empirical distribution.

    |psi> = sum_s sqrt(p(s)) |s>, returned as the projector |psi><psi|, whose
    diagonal reproduces p exactly.
    """
    amps = np.sqrt(ds.empirical_distribution())
    return np.outer(amps, amps).astype(complex)


def synth_spike_data(
    n: int,
    num_samples: int,
    rng: np.random.Generator,
    corr: float = 1.0,
    sparsity: float = 1.0,
) -> BitstringDataset:
    """Correlated binary data from a random pairwise spin-glass energy.

    Couplings are drawn normal with std ``corr`` and fields with mean
    ``sparsity * corr`` (penalizing set bits, like the minority firing events
    of spike trains) and std ``corr``. Samples follow the exact Boltzmann
    distribution by 2^n enumeration, so corr = 0 gives the uniform
    distribution and larger corr gives lower-entropy, more correlated data.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if num_samples < 1:
        raise ValueError("need at least one sample")
    fields = rng.normal(sparsity * corr, corr, size=n) if corr > 0 else np.zeros(n)
    couplings = rng.normal(0.0, corr, size=(n, n)) if corr > 0 else np.zeros((n, n))
    probs = ising_distribution(fields, couplings)
    idx = rng.choice(1 << n, size=num_samples, p=probs)
    samples = np.stack([bits_of_index(int(i), n) for i in idx])
    return BitstringDataset(n, samples)


def ising_distribution(fields: np.ndarray, couplings: np.ndarray) -> np.ndarray:
    """Exact Boltzmann distribution of a classical pairwise spin model.

    E(s) = sum_i h_i x_i + sum_{i<j} J_ij x_i x_j with x = 2s - 1; probability
    is proportional to exp(-E). Enumerates all 2^n states.
    """
    n = fields.shape[0]
    spins = np.empty((1 << n, n))
    for i in range(1 << n):
        spins[i] = 2.0 * bits_of_index(i, n) - 1.0
    upper = np.triu(couplings, k=1)
    energies = spins @ fields + np.einsum("si,ij,sj->s", spins, upper, spins)
    logp = -(energies - energies.min())
    p = np.exp(logp)
    return p / p.sum()


def make_quantum_target(
    n: int, coupling: float = -1.0, anisotropy: float = -0.5, beta: float = 1.0
) -> np.ndarray:
    """Thermal state of the open XXZ chain at inverse temperature beta."""
    return gibbs_state(dense_matrix(build_xxz(n, coupling, anisotropy)), beta)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Classical KL divergence sum p log(p/q); +inf on support violation."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    on = p > 0
    if np.any(q[on] <= 0):
        return math.inf
    return float(np.sum(p[on] * np.log(p[on] / q[on])))
