"""Parameterized Hamiltonians as weighted sums of Pauli strings.

The canonical term order defines the meaning of weight-vector indices
everywhere, including gradients: single-site fields first in qubit order with
X before Z, then two-site couplings in lexicographic (i, j) order with the
XX, YY, ZZ triple grouped per pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .linalg import PauliAction, PauliString


@dataclass(frozen=True)
class HamiltonianAnsatz:
    """H = sum_r weights[r] * terms[r], with Hermitian Pauli-string terms."""

    n: int
    terms: tuple[PauliString, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.terms),):
            raise ValueError(
                f"{len(self.terms)} terms but weight vector of shape {w.shape}"
            )
        for t in self.terms:
            if t.n != self.n:
                raise ValueError("term qubit count does not match ansatz")
        object.__setattr__(self, "weights", w)

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    def with_weights(self, weights) -> "HamiltonianAnsatz":
        return replace(self, weights=np.asarray(weights, dtype=float))


def build_qbm_ansatz(n: int) -> HamiltonianAnsatz:
    """All-to-all model ansatz: X/Z fields plus XX, YY, ZZ couplings.

    2n single-site terms and 3*n*(n-1)/2 two-site terms, weights zeroed.
    """
    if n < 2:
        raise ValueError("model ansatz needs n >= 2")
    terms = []
    for i in range(n):
        terms.append(PauliString(n, {i: "X"}))
        terms.append(PauliString(n, {i: "Z"}))
    for i in range(n):
        for j in range(i + 1, n):
            for axis in ("X", "Y", "Z"):
                terms.append(PauliString(n, {i: axis, j: axis}))
    return HamiltonianAnsatz(n, tuple(terms), np.zeros(len(terms)))


def build_xxz(n: int, coupling: float = -1.0, anisotropy: float = -0.5) -> HamiltonianAnsatz:
    """Open-chain XXZ Hamiltonian: J (XX + YY) + Delta ZZ per bond."""
    if n < 2:
        raise ValueError("chain needs n >= 2")
    terms = []
    weights = []
    for i in range(n - 1):
        for axis, w in (("X", coupling), ("Y", coupling), ("Z", anisotropy)):
            terms.append(PauliString(n, {i: axis, i + 1: axis}))
            weights.append(w)
    return HamiltonianAnsatz(n, tuple(terms), np.array(weights))


def init_weights(ansatz: HamiltonianAnsatz, rng: np.random.Generator) -> HamiltonianAnsatz:
    """Draw weights i.i.d. normal with mean 0 and std 1/sqrt(n)."""
    scale = 1.0 / np.sqrt(ansatz.n)
    return ansatz.with_weights(rng.normal(0.0, scale, size=ansatz.num_terms))


def dense_matrix(ansatz: HamiltonianAnsatz) -> np.ndarray:
    """Assemble the dense 2^n x 2^n matrix sum_r w_r P_r."""
    dim = 1 << ansatz.n
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for w, term in zip(ansatz.weights, ansatz.terms):
        if w == 0.0:
            continue
        act = PauliAction(term)
        out[act.perm, cols] += w * act.coef
    return out


def to_json(ansatz: HamiltonianAnsatz) -> str:
    doc = {
        "n": ansatz.n,
        "terms": [[[q, axis] for q, axis in t.factors] for t in ansatz.terms],
        "weights": ansatz.weights.tolist(),
    }
    return json.dumps(doc)


def from_json(text: str) -> HamiltonianAnsatz:
    doc = json.loads(text)
    terms = tuple(
        PauliString(doc["n"], {int(q): axis for q, axis in factors})
        for factors in doc["terms"]
    )
    return HamiltonianAnsatz(doc["n"], terms, np.array(doc["weights"], dtype=float))
