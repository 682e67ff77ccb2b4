"""Truncated-rank variational Gibbs ansatz and its inner optimization loop.

The mixed-state ansatz combines a classical distribution over bitstrings with
the parameterized circuit: the R most probable bitstrings, renormalized, are
pushed through the circuit, giving a rank-R density matrix. Training
minimizes the variational free energy F = Tr(rho log rho) + Tr(rho H), whose
minimum over all states is the Gibbs state of H at unit inverse temperature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import (
    CircuitAnsatz,
    adjoint_energy_and_grad,
    apply_circuit_batch,
    energies_batch,
    param_shift_grad,
    sampled_energies_from_states,
    sampled_param_shift_grads,
)
from .distributions import distribution_from_json, top_r_states
from .hamiltonian import HamiltonianAnsatz
from .linalg import index_of_bits


@dataclass
class BetaVqeState:
    """Circuit angles theta, distribution parameters phi, and the rank cap."""

    circuit: CircuitAnsatz
    dist: object
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.rank > (1 << self.circuit.n):
            raise ValueError("rank cannot exceed the Hilbert-space dimension")
        if self.circuit.n != self.dist.n:
            raise ValueError("circuit and distribution disagree on qubit count")

    def copy(self) -> "BetaVqeState":
        return BetaVqeState(
            self.circuit.with_theta(self.circuit.theta.copy()),
            distribution_from_json(self.dist.to_json()),
            self.rank,
        )


@dataclass
class InnerLoopConfig:
    """Optimizer settings for the free-energy minimization."""

    grad_tolerance: float = 1e-3
    max_iters: int = 2000
    learning_rate: float = 0.01
    lr_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    # Damping well above the usual 1e-8 makes steps proportional to the
    # gradient once it is small, which keeps warm-started loops from being
    # kicked away from the tracked optimum by sign-sized Adam steps.
    adam_epsilon: float = 0.03
    algorithm: str = "adam"  # or "sgd"
    shots: int = 0  # 0 = exact statevector evaluation
    seed: int = 0
    record_trace: bool = False


@dataclass
class InnerLoopReport:
    iterations: int
    final_free_energy: float
    final_grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)


def support(state: BetaVqeState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-R bitstrings of the distribution: (basis indices, renormalized
    probabilities, bit rows)."""
    bits, probs = top_r_states(state.dist, state.rank)
    indices = np.array([index_of_bits(row) for row in bits], dtype=np.int64)
    return indices, probs, bits


def density_matrix(state: BetaVqeState) -> np.ndarray:
    """Dense sum_j p_j U|s_j><s_j|U+ over the renormalized top-R support."""
    indices, probs, _ = support(state)
    psi = apply_circuit_batch(state.circuit, indices)
    return (psi.T * probs) @ psi.conj()


def free_energy(state: BetaVqeState, ham: HamiltonianAnsatz) -> float:
    """sum_j p_j (log p_j + <s_j|U+ H U|s_j>).

    Equals Tr(rho log rho) + Tr(rho H) because the circuit maps the support
    states to orthonormal vectors.
    """
    indices, probs, _ = support(state)
    energies = energies_batch(state.circuit, indices, ham)
    return float(np.sum(probs * (np.log(probs) + energies)))


def grad_theta(
    state: BetaVqeState,
    ham: HamiltonianAnsatz,
    shots: int = 0,
    rng: np.random.Generator | None = None,
    method: str | None = None,
) -> np.ndarray:
    """Probability-weighted circuit gradient of the free energy.

    Exact evaluation uses the adjoint sweep, which reproduces the
    parameter-shift values to float precision at a fraction of the cost;
    ``method="shift"`` forces the literal two-point rule. Finite-shot
    evaluation always goes through sampled parameter shifts.
    """
    indices, probs, bits = support(state)
    if shots > 0:
        if rng is None:
            raise ValueError("finite-shot gradients need an rng")
        grads = sampled_param_shift_grads(state.circuit, indices, ham, shots, rng)
        return grads @ probs
    if method == "shift":
        grads = np.stack([param_shift_grad(state.circuit, row, ham) for row in bits])
        return probs @ grads
    _, grads = adjoint_energy_and_grad(state.circuit, indices, ham)
    return grads @ probs


def grad_phi(
    state: BetaVqeState,
    ham: HamiltonianAnsatz,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Score-function gradient of the free energy over the truncated support.

    Uses the control-variate baseline b = sum_j p_j f(s_j) and the
    renormalized score grad log p_j - sum_k p_k grad log p_k, which is the
    exact gradient of the renormalized objective at fixed support.
    """
    indices, probs, bits = support(state)
    if shots > 0:
        if rng is None:
            raise ValueError("finite-shot gradients need an rng")
        psi = apply_circuit_batch(state.circuit, indices)
        energies = sampled_energies_from_states(psi, ham, shots, rng)
    else:
        energies = energies_batch(state.circuit, indices, ham)
    return _phi_gradient(state, bits, probs, energies)


def _phi_gradient(state, bits, probs, energies) -> np.ndarray:
    scores = np.stack([state.dist.grad_log_prob(row) for row in bits])
    centered_scores = scores - probs @ scores
    f = np.log(probs) + energies
    baseline = float(probs @ f)
    return (probs * (f - baseline)) @ centered_scores


def _evaluate(state, ham, shots, rng):
    """One pass: support, energies, free energy, and both gradients."""
    indices, probs, bits = support(state)
    if shots > 0:
        psi = apply_circuit_batch(state.circuit, indices)
        energies = sampled_energies_from_states(psi, ham, shots, rng)
        g_theta = sampled_param_shift_grads(
            state.circuit, indices, ham, shots, rng
        ) @ probs
    else:
        energies, grads = adjoint_energy_and_grad(state.circuit, indices, ham)
        g_theta = grads @ probs
    g_phi = _phi_gradient(state, bits, probs, energies)
    f_value = float(np.sum(probs * (np.log(probs) + energies)))
    return f_value, g_theta, g_phi


@dataclass
class OptimizerMoments:
    """Adam first/second moments plus the step counter.

    Carrying these across warm-started inner loops keeps the optimizer from
    re-estimating curvature after every small Hamiltonian update.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "OptimizerMoments":
        return cls(np.zeros(size), np.zeros(size), 0)


def inner_loop(
    initial: BetaVqeState,
    ham: HamiltonianAnsatz,
    cfg: InnerLoopConfig,
    moments: OptimizerMoments | None = None,
) -> tuple[BetaVqeState, InnerLoopReport]:
    """Joint gradient descent on (theta, phi) until the combined gradient
    max-norm falls under the tolerance or the iteration cap is reached.

    The input state is not mutated; the top-R support is re-selected every
    iteration. A ``moments`` object passed by the caller is updated in place,
    which warm-starts the optimizer itself. Deterministic given cfg.seed.
    """
    state = initial.copy()
    rng = np.random.default_rng(cfg.seed) if cfg.shots > 0 else None
    n_theta = state.circuit.num_params
    params = np.concatenate([state.circuit.theta, state.dist.get_params()])
    opt = moments if moments is not None else OptimizerMoments.zeros(params.size)
    if opt.m.size != params.size:
        raise ValueError("optimizer moments do not match the parameter count")
    trace = []
    updates = 0
    converged = False
    f_value = np.nan
    grad_norm = np.nan
    for _ in range(cfg.max_iters):
        f_value, g_theta, g_phi = _evaluate(state, ham, cfg.shots, rng)
        grad = np.concatenate([g_theta, g_phi])
        grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if cfg.record_trace:
            trace.append((f_value, grad_norm))
        if grad_norm <= cfg.grad_tolerance:
            converged = True
            break
        opt.t += 1
        lr = cfg.learning_rate / (1.0 + cfg.lr_decay * opt.t)
        if cfg.algorithm == "adam":
            opt.m = cfg.beta1 * opt.m + (1.0 - cfg.beta1) * grad
            opt.v = cfg.beta2 * opt.v + (1.0 - cfg.beta2) * grad * grad
            m_hat = opt.m / (1.0 - cfg.beta1**opt.t)
            v_hat = opt.v / (1.0 - cfg.beta2**opt.t)
            params = params - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
        elif cfg.algorithm == "sgd":
            params = params - lr * grad
        else:
            raise ValueError(f"unknown algorithm {cfg.algorithm!r}")
        state.circuit = state.circuit.with_theta(params[:n_theta])
        state.dist.set_params(params[n_theta:])
        updates += 1
    if not converged and updates:
        # final parameters were never scored inside the loop
        indices, probs, _ = support(state)
        if cfg.shots > 0:
            psi = apply_circuit_batch(state.circuit, indices)
            energies = sampled_energies_from_states(psi, ham, cfg.shots, rng)
        else:
            energies = energies_batch(state.circuit, indices, ham)
        f_value = float(np.sum(probs * (np.log(probs) + energies)))
    report = InnerLoopReport(
        iterations=updates,
        final_free_energy=f_value,
        final_grad_norm=grad_norm,
        converged=converged,
        trace=trace,
    )
    return state, report


def model_statistics(
    state: BetaVqeState,
    ham: HamiltonianAnsatz,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Tr(P_r rho) per Hamiltonian term under the variational state.

    With shots > 0 each term gets ``shots`` measurements distributed over the
    support states by their probabilities (mixture sampling).
    """
    from .circuit import term_expvals

    indices, probs, _ = support(state)
    psi = apply_circuit_batch(state.circuit, indices)
    t = np.clip(term_expvals(psi, ham), -1.0, 1.0)
    if shots <= 0:
        return t @ probs
    if rng is None:
        raise ValueError("finite-shot statistics need an rng")
    # mixture sampling: distribute the term budget over the support states,
    # then measure each state's +-1 outcome counts
    out = np.empty(ham.num_terms)
    for r in range(ham.num_terms):
        per_state = rng.multinomial(shots, probs)
        plus = rng.binomial(per_state, (1.0 + t[r]) / 2.0)
        out[r] = (2.0 * plus.sum() - shots) / shots
    return out


def save_state(state: BetaVqeState, path, rng_state: dict | None = None) -> None:
    doc = {
        "theta": state.circuit.theta.tolist(),
        "n": state.circuit.n,
        "depth": state.circuit.depth,
        "dist": json.loads(state.dist.to_json()),
        "rank": state.rank,
        "rng_state": rng_state,
    }
    Path(path).write_text(json.dumps(doc))


def load_state(path) -> tuple[BetaVqeState, dict | None]:
    doc = json.loads(Path(path).read_text())
    circuit = CircuitAnsatz(doc["n"], doc["depth"], np.array(doc["theta"]))
    dist = distribution_from_json(json.dumps(doc["dist"]))
    return BetaVqeState(circuit, dist, doc["rank"]), doc.get("rng_state")
