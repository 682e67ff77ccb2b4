"""Parameterized circuit: a checkerboard of two-qubit blocks with periodic
boundary, plus exact, finite-shot, and gradient evaluation of Pauli-sum
expectation values.

Each layer applies general two-qubit blocks on the even pairs (0,1), (2,3), ...
then on the odd pairs (1,2), (3,4), ..., (n-1,0). A block carries 15 angles
and decomposes into single-qubit Rz/Ry rotations and three CNOTs, so a depth-d
circuit on n qubits has exactly 15*d*n parameters. Rotations follow the
convention R(t) = exp(-i t P / 2).

States are dense vectors of length 2^n; batches are (B, 2^n) arrays. Gates are
applied through reshaped matmul / tensordot updates; no 2^n x 2^n operator is
ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hamiltonian import HamiltonianAnsatz
from .linalg import PauliAction, PauliString, index_of_bits, parse_bits

PARAMS_PER_BLOCK = 15

_I2 = np.eye(2, dtype=complex)
_HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
# Block-internal CNOTs; sub-qubit a is the most significant of the pair.
_CNOT_AB = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
_CNOT_BA = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)


@dataclass(frozen=True)
class GateSpec:
    """One primitive gate: kind in {rz, ry, cnot}, acting qubits, and the
    position of its angle in the parameter vector (None for CNOT)."""

    kind: str
    qubits: tuple[int, ...]
    param_index: int | None = None


@dataclass
class CircuitAnsatz:
    """Checkerboard circuit with parameter vector theta of length 15*depth*n."""

    n: int
    depth: int
    theta: np.ndarray

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError("qubit count must be even and >= 2")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.num_params,):
            raise ValueError(
                f"need {self.num_params} angles for n={self.n}, d={self.depth}; "
                f"got shape {theta.shape}"
            )
        self.theta = theta

    @property
    def num_params(self) -> int:
        return PARAMS_PER_BLOCK * self.depth * self.n

    @property
    def dim(self) -> int:
        return 1 << self.n

    def with_theta(self, theta) -> "CircuitAnsatz":
        return CircuitAnsatz(self.n, self.depth, theta)

    @classmethod
    def zero(cls, n: int, depth: int) -> "CircuitAnsatz":
        return cls(n, depth, np.zeros(PARAMS_PER_BLOCK * depth * n))

    @classmethod
    def random(cls, n: int, depth: int, rng: np.random.Generator, scale: float = 0.01):
        return cls(n, depth, rng.normal(0.0, scale, size=PARAMS_PER_BLOCK * depth * n))


def layer_layout(n: int, layer_index: int = 0) -> list[tuple[int, int]]:
    """Ordered qubit pairs of one layer: even sublayer then odd sublayer with
    wraparound. Identical for every layer index."""
    if n < 2 or n % 2:
        raise ValueError("qubit count must be even and >= 2")
    pairs = [(q, q + 1) for q in range(0, n, 2)]
    pairs += [(q, (q + 1) % n) for q in range(1, n, 2)]
    return pairs


def su4_block(a: int, b: int, params_base: int = 0) -> list[GateSpec]:
    """Gate sequence of one two-qubit block on the ordered pair (a, b).

    Angle k of the block sits at params_base + k. With all angles zero the
    three alternating CNOTs compose to a SWAP of the pair.
    """
    p = params_base
    return [
        GateSpec("rz", (a,), p + 0),
        GateSpec("rz", (b,), p + 1),
        GateSpec("ry", (a,), p + 2),
        GateSpec("ry", (b,), p + 3),
        GateSpec("rz", (a,), p + 4),
        GateSpec("rz", (b,), p + 5),
        GateSpec("cnot", (a, b)),
        GateSpec("rz", (a,), p + 6),
        GateSpec("ry", (b,), p + 7),
        GateSpec("cnot", (b, a)),
        GateSpec("ry", (b,), p + 8),
        GateSpec("cnot", (a, b)),
        GateSpec("rz", (a,), p + 9),
        GateSpec("rz", (b,), p + 10),
        GateSpec("ry", (a,), p + 11),
        GateSpec("ry", (b,), p + 12),
        GateSpec("rz", (a,), p + 13),
        GateSpec("rz", (b,), p + 14),
    ]


@lru_cache(maxsize=64)
def circuit_gates(n: int, depth: int) -> tuple[GateSpec, ...]:
    """Full flat gate list of the circuit, angle positions included."""
    gates: list[GateSpec] = []
    base = 0
    for _ in range(depth):
        for a, b in layer_layout(n):
            gates.extend(su4_block(a, b, base))
            base += PARAMS_PER_BLOCK
    return tuple(gates)


@lru_cache(maxsize=64)
def circuit_block_pairs(n: int, depth: int) -> tuple[tuple[int, int], ...]:
    pairs = []
    for _ in range(depth):
        pairs.extend(layer_layout(n))
    return tuple(pairs)


def rz_matrix(t: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])


def ry_matrix(t: float) -> np.ndarray:
    c, s = np.cos(t / 2.0), np.sin(t / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _kron_on_a(g: np.ndarray) -> np.ndarray:
    """(nb,2,2) -> (nb,4,4) acting on the block's most significant sub-qubit."""
    nb = g.shape[0]
    return np.einsum("bkl,ij->bkilj", g, _I2).reshape(nb, 4, 4)


def _kron_on_b(g: np.ndarray) -> np.ndarray:
    nb = g.shape[0]
    return np.einsum("kl,bij->bkilj", _I2, g).reshape(nb, 4, 4)


def _rz_batch(t: np.ndarray) -> np.ndarray:
    nb = t.shape[0]
    out = np.zeros((nb, 2, 2), dtype=complex)
    out[:, 0, 0] = np.exp(-0.5j * t)
    out[:, 1, 1] = np.exp(0.5j * t)
    return out


def _ry_batch(t: np.ndarray) -> np.ndarray:
    nb = t.shape[0]
    c, s = np.cos(t / 2.0), np.sin(t / 2.0)
    out = np.zeros((nb, 2, 2), dtype=complex)
    out[:, 0, 0] = c
    out[:, 0, 1] = -s
    out[:, 1, 0] = s
    out[:, 1, 1] = c
    return out


# (step position in the 18-gate block, parameter column, generator, sub-qubit)
_BLOCK_PARAM_STEPS = (
    (0, 0, "rz", "a"), (1, 1, "rz", "b"), (2, 2, "ry", "a"), (3, 3, "ry", "b"),
    (4, 4, "rz", "a"), (5, 5, "rz", "b"), (7, 6, "rz", "a"), (8, 7, "ry", "b"),
    (10, 8, "ry", "b"), (12, 9, "rz", "a"), (13, 10, "rz", "b"),
    (14, 11, "ry", "a"), (15, 12, "ry", "b"), (16, 13, "rz", "a"),
    (17, 14, "rz", "b"),
)

# -i/2 times the rotation generator, embedded on the block pair.
_ZGEN = np.diag([1.0, -1.0]).astype(complex)
_YGEN = np.array([[0, -1j], [1j, 0]], dtype=complex)
_HALF_GEN = {
    ("rz", "a"): -0.5j * np.kron(_ZGEN, _I2),
    ("rz", "b"): -0.5j * np.kron(_I2, _ZGEN),
    ("ry", "a"): -0.5j * np.kron(_YGEN, _I2),
    ("ry", "b"): -0.5j * np.kron(_I2, _YGEN),
}


def _block_step_matrices(theta: np.ndarray) -> list[np.ndarray]:
    """The 18 per-block gate embeddings, each (nb, 4, 4), in application order."""
    t = np.asarray(theta, dtype=float).reshape(-1, PARAMS_PER_BLOCK)
    nb = t.shape[0]
    return [
        _kron_on_a(_rz_batch(t[:, 0])),
        _kron_on_b(_rz_batch(t[:, 1])),
        _kron_on_a(_ry_batch(t[:, 2])),
        _kron_on_b(_ry_batch(t[:, 3])),
        _kron_on_a(_rz_batch(t[:, 4])),
        _kron_on_b(_rz_batch(t[:, 5])),
        np.broadcast_to(_CNOT_AB, (nb, 4, 4)),
        _kron_on_a(_rz_batch(t[:, 6])),
        _kron_on_b(_ry_batch(t[:, 7])),
        np.broadcast_to(_CNOT_BA, (nb, 4, 4)),
        _kron_on_b(_ry_batch(t[:, 8])),
        np.broadcast_to(_CNOT_AB, (nb, 4, 4)),
        _kron_on_a(_rz_batch(t[:, 9])),
        _kron_on_b(_rz_batch(t[:, 10])),
        _kron_on_a(_ry_batch(t[:, 11])),
        _kron_on_b(_ry_batch(t[:, 12])),
        _kron_on_a(_rz_batch(t[:, 13])),
        _kron_on_b(_rz_batch(t[:, 14])),
    ]


def block_matrices(theta: np.ndarray) -> np.ndarray:
    """4x4 unitaries of all blocks at once from a (15*nb,) angle vector."""
    steps = _block_step_matrices(theta)
    u = steps[0]
    for g in steps[1:]:
        u = np.matmul(g, u)
    return u


def block_derivative_tensors(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Block unitaries U and the tensors dU/dtheta_j U+ for all blocks.

    Returns (U (nb,4,4), D (nb,15,4,4)) with D[k, j] = (dU_k/dtheta_j) U_k+.
    Built from cumulative prefix/suffix products of the 18 gate embeddings.
    """
    steps = _block_step_matrices(theta)
    nb = steps[0].shape[0]
    prefix = [steps[0]]  # prefix[g] = G_g ... G_1
    for g in steps[1:]:
        prefix.append(np.matmul(g, prefix[-1]))
    suffix = [None] * 18  # suffix[g] = G_18 ... G_{g+1}
    suffix[17] = np.broadcast_to(np.eye(4, dtype=complex), (nb, 4, 4))
    for g in range(16, -1, -1):
        suffix[g] = np.matmul(suffix[g + 1], steps[g + 1])
    u = prefix[17]
    u_dag = u.conj().transpose(0, 2, 1)
    deriv = np.empty((nb, PARAMS_PER_BLOCK, 4, 4), dtype=complex)
    for g, j, kind, sub in _BLOCK_PARAM_STEPS:
        half = _HALF_GEN[(kind, sub)]
        deriv[:, j] = np.matmul(np.matmul(suffix[g], half @ prefix[g]), u_dag)
    return u, deriv


def su4_block_matrix(params: np.ndarray) -> np.ndarray:
    """Dense 4x4 unitary of a single block (sub-qubit a is the MSB)."""
    params = np.asarray(params, dtype=float)
    if params.shape != (PARAMS_PER_BLOCK,):
        raise ValueError(f"a block takes exactly {PARAMS_PER_BLOCK} angles")
    return block_matrices(params)[0]


# ---------------------------------------------------------------------------
# state engine
# ---------------------------------------------------------------------------


def basis_states(n: int, indices) -> np.ndarray:
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.zeros((indices.size, 1 << n), dtype=complex)
    out[np.arange(indices.size), indices] = 1.0
    return out


def _apply_1q(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    left, right = 1 << q, 1 << (n - q - 1)
    t = psi.reshape(b * left, 2, right)
    return np.matmul(u, t).reshape(b, 1 << n)


def _apply_2q(psi: np.ndarray, u4: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    g = np.asarray(u4).reshape(2, 2, 2, 2)
    t = psi.reshape((b,) + (2,) * n)
    out = np.tensordot(g, t, axes=([2, 3], [1 + qa, 1 + qb]))
    out = np.moveaxis(out, (0, 1), (1 + qa, 1 + qb))
    return np.ascontiguousarray(out).reshape(b, 1 << n)


@lru_cache(maxsize=256)
def _cnot_perm(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    cbit = (idx >> (n - 1 - control)) & 1
    perm = idx ^ (cbit << (n - 1 - target))
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=256)
def _pauli_action_1q(n: int, q: int, axis: str) -> PauliAction:
    return PauliAction(PauliString(n, {q: axis}))


def apply_circuit_batch(ansatz: CircuitAnsatz, indices) -> np.ndarray:
    """Circuit applied to a batch of computational basis states (by integer)."""
    psi = basis_states(ansatz.n, indices)
    if ansatz.depth == 0:
        return psi
    mats = block_matrices(ansatz.theta)
    for (qa, qb), u in zip(circuit_block_pairs(ansatz.n, ansatz.depth), mats):
        psi = _apply_2q(psi, u, qa, qb, ansatz.n)
    return psi


def apply_circuit(ansatz: CircuitAnsatz, bits) -> np.ndarray:
    """Normalized statevector of the circuit applied to the basis state |bits>."""
    bits = parse_bits(bits, ansatz.n)
    return apply_circuit_batch(ansatz, [index_of_bits(bits)])[0]


@lru_cache(maxsize=32)
def _actions_for_terms(terms: tuple[PauliString, ...]) -> tuple[PauliAction, ...]:
    return tuple(PauliAction(t) for t in terms)


def hamiltonian_actions(ham: HamiltonianAnsatz) -> tuple[PauliAction, ...]:
    """Permutation-phase actions of the Hamiltonian terms, cached by term list."""
    return _actions_for_terms(ham.terms)


def apply_hamiltonian(psi: np.ndarray, ham: HamiltonianAnsatz) -> np.ndarray:
    """H @ psi for a batch, as a weighted sum of Pauli actions."""
    out = np.zeros_like(psi)
    for w, act in zip(ham.weights, hamiltonian_actions(ham)):
        if w != 0.0:
            out += w * act.apply(psi)
    return out


def energies_batch(ansatz: CircuitAnsatz, indices, ham: HamiltonianAnsatz) -> np.ndarray:
    """<s|U+ H U|s> for each basis-state index in the batch."""
    psi = apply_circuit_batch(ansatz, indices)
    return ham.weights @ term_expvals(psi, ham)


def expval(ansatz: CircuitAnsatz, bits, ham: HamiltonianAnsatz) -> float:
    bits = parse_bits(bits, ansatz.n)
    return float(energies_batch(ansatz, [index_of_bits(bits)], ham)[0])


def param_shift_grad(ansatz: CircuitAnsatz, bits, ham: HamiltonianAnsatz) -> np.ndarray:
    """Gradient of expval in theta by the +-pi/2 parameter-shift rule."""
    bits = parse_bits(bits, ansatz.n)
    idx = [index_of_bits(bits)]
    grad = np.zeros(ansatz.num_params)
    for k in range(ansatz.num_params):
        plus = ansatz.theta.copy()
        plus[k] += np.pi / 2.0
        minus = ansatz.theta.copy()
        minus[k] -= np.pi / 2.0
        e_plus = energies_batch(ansatz.with_theta(plus), idx, ham)[0]
        e_minus = energies_batch(ansatz.with_theta(minus), idx, ham)[0]
        grad[k] = 0.5 * (e_plus - e_minus)
    return grad


def gate_adjoint_energy_and_grad(
    ansatz: CircuitAnsatz, indices, ham: HamiltonianAnsatz
) -> tuple[np.ndarray, np.ndarray]:
    """Energies and full theta-gradients via a gate-by-gate reverse sweep.

    Algebraically identical to the parameter-shift rule for this rotation
    convention, at O(gates) cost instead of O(gates * parameters). Reference
    implementation for :func:`adjoint_energy_and_grad`.
    """
    n = ansatz.n
    psi = apply_circuit_batch(ansatz, indices)
    lam = apply_hamiltonian(psi, ham)
    energies = np.einsum("bi,bi->b", psi.conj(), lam).real
    nbatch = psi.shape[0]
    grads = np.zeros((ansatz.num_params, nbatch))
    if ansatz.depth == 0:
        return energies, grads

    stacked = np.concatenate([psi, lam], axis=0)  # un-apply both in one call
    for gate in reversed(circuit_gates(n, ansatz.depth)):
        if gate.kind == "cnot":
            stacked = stacked[:, _cnot_perm(n, *gate.qubits)]
            continue
        q = gate.qubits[0]
        axis = "Z" if gate.kind == "rz" else "Y"
        act = _pauli_action_1q(n, q, axis)
        p_psi = act.apply(stacked[:nbatch])
        grads[gate.param_index] = np.einsum(
            "bi,bi->b", stacked[nbatch:].conj(), p_psi
        ).imag
        t = ansatz.theta[gate.param_index]
        inv = rz_matrix(-t) if gate.kind == "rz" else ry_matrix(-t)
        stacked = _apply_1q(stacked, inv, q, n)
    return energies, grads


def adjoint_energy_and_grad(
    ansatz: CircuitAnsatz, indices, ham: HamiltonianAnsatz
) -> tuple[np.ndarray, np.ndarray]:
    """Energies and full theta-gradients for a batch of input basis states.

    Block-level reverse sweep: for each two-qubit block the batch of states
    and the Hamiltonian-applied states are contracted down to 4x4 environment
    matrices, against which all 15 block derivatives are evaluated at once.
    Matches the parameter-shift values to float precision.
    """
    n = ansatz.n
    psi = apply_circuit_batch(ansatz, indices)
    lam = apply_hamiltonian(psi, ham)
    energies = np.einsum("bi,bi->b", psi.conj(), lam).real
    nbatch = psi.shape[0]
    grads = np.empty((ansatz.num_params, nbatch))
    if ansatz.depth == 0:
        return energies, grads

    mats, deriv = block_derivative_tensors(ansatz.theta)
    pairs = circuit_block_pairs(n, ansatz.depth)
    stacked = np.concatenate([psi, lam], axis=0)
    shape = (2 * nbatch,) + (2,) * n
    for k in range(len(pairs) - 1, -1, -1):
        qa, qb = pairs[k]
        view = np.moveaxis(stacked.reshape(shape), (1 + qa, 1 + qb), (1, 2))
        view = np.ascontiguousarray(view).reshape(2 * nbatch, 4, -1)
        env = np.einsum(
            "bpk,bqk->bpq", view[nbatch:].conj(), view[:nbatch]
        )
        block = slice(k * PARAMS_PER_BLOCK, (k + 1) * PARAMS_PER_BLOCK)
        grads[block] = 2.0 * np.einsum("jpq,bpq->jb", deriv[k], env).real
        stacked = _apply_2q(
            stacked, mats[k].conj().T, qa, qb, n
        )
    return energies, grads


# ---------------------------------------------------------------------------
# finite-shot estimation
# ---------------------------------------------------------------------------


def _eigenbasis_rotation_gates(term: PauliString) -> list[tuple[np.ndarray, int]]:
    gates = []
    for q, axis in term.factors:
        if axis == "X":
            gates.append((_HAD, q))
        elif axis == "Y":
            gates.append((_SDG, q))
            gates.append((_HAD, q))
    return gates


@lru_cache(maxsize=512)
def _term_signs(n: int, qubit_mask: int) -> np.ndarray:
    idx = np.arange(1 << n)
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & qubit_mask) & 1)
    signs.setflags(write=False)
    return signs


def _term_qubit_mask(term: PauliString) -> int:
    mask = 0
    for q, _ in term.factors:
        mask |= 1 << (term.n - 1 - q)
    return mask


def sampled_term_expval(
    psi: np.ndarray, term: PauliString, shots: int, rng: np.random.Generator
) -> float:
    """Unbiased <psi|P|psi> estimate: rotate into the term's eigenbasis, draw
    ``shots`` computational-basis outcomes, average the +-1 eigenvalues."""
    if shots < 1:
        raise ValueError("need at least one shot")
    if not term.factors:
        return 1.0
    n = term.n
    rotated = psi[None, :]
    for u, q in _eigenbasis_rotation_gates(term):
        rotated = _apply_1q(rotated, u, q, n)
    probs = np.abs(rotated[0]) ** 2
    probs = probs / probs.sum()
    counts = rng.multinomial(shots, probs)
    signs = _term_signs(n, _term_qubit_mask(term))
    return float(counts @ signs) / shots


def expval_sampled(
    ansatz: CircuitAnsatz, bits, ham: HamiltonianAnsatz, shots: int,
    rng: np.random.Generator,
) -> float:
    """Finite-shot estimate of expval with ``shots`` measurements per term."""
    bits = parse_bits(bits, ansatz.n)
    psi = apply_circuit_batch(ansatz, [index_of_bits(bits)])[0]
    total = 0.0
    for w, term in zip(ham.weights, ham.terms):
        total += w * sampled_term_expval(psi, term, shots, rng)
    return total


def term_expvals(psi: np.ndarray, ham: HamiltonianAnsatz) -> np.ndarray:
    """<psi_b|P_r|psi_b> for every term r and batch row b, shape (terms, B)."""
    conj = psi.conj()
    out = np.empty((ham.num_terms, psi.shape[0]))
    for r, act in enumerate(hamiltonian_actions(ham)):
        out[r] = np.einsum("bi,bi->b", conj, (act.coef * psi)[:, act.perm]).real
    return out


def sampled_energies_from_states(
    psi: np.ndarray, ham: HamiltonianAnsatz, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Batched finite-shot energies for already-prepared states.

    Per term the +-1 outcome counts follow Binomial(shots, (1+t)/2) with t the
    exact expectation, which is exactly the distribution of the rotate-and-
    measure estimator after grouping outcomes by eigenvalue; sampling the
    binomial directly avoids the per-term basis rotations in the hot loop.
    """
    t = np.clip(term_expvals(psi, ham), -1.0, 1.0)
    k = rng.binomial(shots, (1.0 + t) / 2.0)
    return ham.weights @ (2.0 * k / shots - 1.0)


def sampled_energies_batch(
    ansatz: CircuitAnsatz, indices, ham: HamiltonianAnsatz, shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    return sampled_energies_from_states(
        apply_circuit_batch(ansatz, indices), ham, shots, rng
    )


def sampled_param_shift_grads(
    ansatz: CircuitAnsatz, indices, ham: HamiltonianAnsatz, shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Finite-shot parameter-shift gradients for a batch of basis states.

    Returns (num_params, batch). Prefix states are cached per block so each
    shifted circuit only re-applies blocks from the modified one onward.
    """
    n = ansatz.n
    psi0 = basis_states(n, indices)
    nbatch = psi0.shape[0]
    grads = np.zeros((ansatz.num_params, nbatch))
    if ansatz.depth == 0:
        return grads
    mats = block_matrices(ansatz.theta)
    pairs = circuit_block_pairs(n, ansatz.depth)
    prefixes = [psi0]
    for (qa, qb), u in zip(pairs, mats):
        prefixes.append(_apply_2q(prefixes[-1], u, qa, qb, n))
    for kb, (qa, qb) in enumerate(pairs):
        base = ansatz.theta[kb * PARAMS_PER_BLOCK: (kb + 1) * PARAMS_PER_BLOCK]
        for j in range(PARAMS_PER_BLOCK):
            shifted = np.stack([base, base])
            shifted[0, j] += np.pi / 2.0
            shifted[1, j] -= np.pi / 2.0
            u_pm = block_matrices(shifted.ravel())
            pm = np.concatenate(
                [
                    _apply_2q(prefixes[kb], u_pm[0], qa, qb, n),
                    _apply_2q(prefixes[kb], u_pm[1], qa, qb, n),
                ],
                axis=0,
            )
            for (qa2, qb2), u2 in zip(pairs[kb + 1:], mats[kb + 1:]):
                pm = _apply_2q(pm, u2, qa2, qb2, n)
            e_pm = sampled_energies_from_states(pm, ham, shots, rng)
            grads[kb * PARAMS_PER_BLOCK + j] = 0.5 * (e_pm[:nbatch] - e_pm[nbatch:])
    return grads
