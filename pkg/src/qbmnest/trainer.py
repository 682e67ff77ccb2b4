"""Outer training loop: relative-entropy descent on the Hamiltonian weights.

Each iteration obtains model statistics Tr(H_r . ) from one of three sources
(exact Gibbs state, the warm-started variational inner loop, or the bare
ground state), forms the gradient as the target/model statistics difference,
and updates the weights with momentum and a multiplicative learning-rate
rule: up 1% while the cost decreases, halved when it increases.

The relative entropy itself is only exactly computable through the dense
oracle; when statistics come from the variational state the cost used for
learning-rate adaptation is the free-energy surrogate
Tr(eta log eta) + Tr(eta H_w) - F*, with F* the converged inner-loop free
energy standing in for -log Z.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .betavqe import (
    BetaVqeState,
    InnerLoopConfig,
    OptimizerMoments,
    inner_loop,
    model_statistics,
)
from .circuit import CircuitAnsatz, hamiltonian_actions
from .distributions import make_distribution
from .gibbs import von_neumann_entropy
from .hamiltonian import HamiltonianAnsatz, dense_matrix
from .linalg import LOG_SUPPORT_CUTOFF, hermitian_eig

SUPPORT_LEAK_TOL = 1e-9

STATS_SOURCES = ("exact-gibbs", "beta-vqe", "rank1-ground-state")


def relative_entropy(eta: np.ndarray, sigma: np.ndarray) -> float:
    """Quantum relative entropy Tr(eta log eta) - Tr(eta log sigma).

    Returns math.inf when eta has support outside the support of sigma
    (sentinel, not an exception).
    """
    if eta.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {eta.shape} vs {sigma.shape}")
    w, v = hermitian_eig(sigma)
    w = np.clip(w, 0.0, None)
    supported = w > LOG_SUPPORT_CUTOFF
    overlaps = np.einsum("ij,jk,ki->i", v.conj().T, eta, v).real
    if not supported.all():
        leak = float(np.sum(overlaps[~supported]))
        if leak > SUPPORT_LEAK_TOL:
            return math.inf
    term_model = float(np.sum(np.log(w[supported]) * overlaps[supported]))
    return -von_neumann_entropy(eta) - term_model


def target_statistics(
    eta: np.ndarray,
    ansatz: HamiltonianAnsatz,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Tr(H_r eta) per term. These never change during training, so callers
    compute them once up front. With shots > 0 each term is estimated from
    ``shots`` two-outcome measurements."""
    stats = np.array([act.trace_with(eta) for act in hamiltonian_actions(ansatz)])
    if shots > 0:
        if rng is None:
            raise ValueError("finite-shot statistics need an rng")
        p_plus = np.clip((1.0 + stats) / 2.0, 0.0, 1.0)
        k = rng.binomial(shots, p_plus)
        stats = 2.0 * k / shots - 1.0
    return stats


def qbm_gradient(target_stats: np.ndarray, model_stats: np.ndarray) -> np.ndarray:
    """Relative-entropy gradient per weight: data statistic minus model statistic."""
    target_stats = np.asarray(target_stats, dtype=float)
    model_stats = np.asarray(model_stats, dtype=float)
    if target_stats.shape != model_stats.shape:
        raise ValueError(
            f"length mismatch: {target_stats.shape} vs {model_stats.shape}"
        )
    return target_stats - model_stats


def gradient_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Mean absolute componentwise difference between two gradient vectors."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if approx.shape != exact.shape:
        raise ValueError(f"length mismatch: {approx.shape} vs {exact.shape}")
    return float(np.mean(np.abs(approx - exact)))


@dataclass
class OuterLoopConfig:
    """Settings of the outer weight-training loop."""

    max_iters: int = 500
    momentum: float = 0.5
    learning_rate: float = 0.05
    lr_increase: float = 1.01
    lr_decrease: float = 0.5
    grad_tolerance: float = 1e-4
    stats_source: str = "beta-vqe"
    shots: int = 0
    seed: int = 0
    rank: int = 2
    depth: int | None = None  # circuit layers; defaults to n
    dist_kind: str = "autoregressive"
    hidden: int = 50
    theta_init_scale: float = 0.01
    inner: InnerLoopConfig = field(default_factory=InnerLoopConfig)
    # Optional separate settings for the very first (cold) inner loop; the
    # damped tracking optimizer is poor at deep cold fits and vice versa.
    inner_cold: Optional[InnerLoopConfig] = None
    # Optional periodic "deepening" loops between cheap tracking loops,
    # re-fitting the variational state with the cold-style optimizer so the
    # statistics bias cannot drift up over a long outer run.
    inner_deep: Optional[InnerLoopConfig] = None
    inner_deep_every: int = 0
    # Compare window means instead of single iterations when adapting the
    # learning rate; sampled statistics make per-iteration costs too noisy
    # for the raise-or-halve rule (every noise flip halves permanently).
    cost_window: int = 1
    eval_every: int = 1  # dense-oracle metrics cadence; 0 disables
    track_gaps: int = 0  # record the first k spectral gaps of H_w
    checkpoint_dir: Optional[str] = None
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.stats_source not in STATS_SOURCES:
            raise ValueError(f"unknown statistics source {self.stats_source!r}")


@dataclass
class TrainTrace:
    """Per-iteration record of the outer loop (column-major)."""

    iteration: list = field(default_factory=list)
    cost: list = field(default_factory=list)  # exact S or its surrogate
    grad_norm: list = field(default_factory=list)
    grad_error: list = field(default_factory=list)
    fidelity: list = field(default_factory=list)
    gs_fidelity: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)  # not part of the CSV contract
    gaps: list = field(default_factory=list)
    relative_entropy_exact: list = field(default_factory=list)
    stat_estimations: int = 0

    def __len__(self) -> int:
        return len(self.iteration)

    def header(self, num_gaps: int = 0) -> list[str]:
        cols = [
            "iteration", "S_or_surrogate", "grad_norm", "grad_error",
            "fidelity", "gs_fidelity", "inner_iters", "lr",
        ]
        cols += [f"gap_{i}" for i in range(num_gaps)]
        return cols

    def rows(self, num_gaps: int = 0):
        for i in range(len(self.iteration)):
            row = [
                self.iteration[i], self.cost[i], self.grad_norm[i],
                self.grad_error[i], self.fidelity[i], self.gs_fidelity[i],
                self.inner_iters[i], self.lr[i],
            ]
            if num_gaps:
                row += list(self.gaps[i][:num_gaps])
            yield row


class _Oracle:
    """Dense-matrix reference quantities shared across one outer iteration."""

    def __init__(self, eta: np.ndarray):
        self.eta = eta
        w, v = hermitian_eig(eta)
        self.eta_entropy = float(-np.sum(w[w > LOG_SUPPORT_CUTOFF]
                                         * np.log(w[w > LOG_SUPPORT_CUTOFF])))
        self.pure = w[-1] > 1.0 - 1e-9
        self.psi = v[:, -1] if self.pure else None
        if not self.pure:
            from .linalg import matrix_sqrt_psd

            self.sqrt_eta = matrix_sqrt_psd(eta)

    def evaluate(self, ham: HamiltonianAnsatz, k_gaps: int = 0):
        """One eigh of H_w feeding Gibbs stats, log Z, fidelities, and gaps."""
        h_dense = dense_matrix(ham)
        w, v = hermitian_eig(h_dense)
        boltz = np.exp(-(w - w[0]))
        z_shifted = boltz.sum()
        probs = boltz / z_shifted
        log_z = float(np.log(z_shifted) - w[0])
        sigma = (v * probs) @ v.conj().T
        stats = np.array(
            [act.trace_with(sigma) for act in hamiltonian_actions(ham)]
        )
        if self.pure:
            fid = float(np.real(self.psi.conj() @ sigma @ self.psi))
        else:
            from .metrics import fidelity as _fid

            fid = _fid(self.eta, sigma)
        gs_fid = float(np.real(v[:, 0].conj() @ self.eta @ v[:, 0]))
        gaps = np.diff(w[: k_gaps + 1]) if k_gaps else np.empty(0)
        return {
            "sigma": sigma,
            "stats": stats,
            "log_z": log_z,
            "fidelity": min(max(fid, 0.0), 1.0),
            "gs_fidelity": min(max(gs_fid, 0.0), 1.0),
            "gaps": gaps,
            "eigs": w,
            "vecs": v,
        }


def _initial_variational_state(n: int, cfg: OuterLoopConfig) -> BetaVqeState:
    depth = cfg.depth if cfg.depth is not None else n
    rng = np.random.default_rng((cfg.seed, 7))
    circuit = CircuitAnsatz.random(n, depth, rng, scale=cfg.theta_init_scale)
    dist = make_distribution(cfg.dist_kind, n, rng, hidden=cfg.hidden)
    return BetaVqeState(circuit, dist, cfg.rank)


def outer_loop(
    target: np.ndarray,
    ansatz: HamiltonianAnsatz,
    cfg: OuterLoopConfig,
    initial_state: BetaVqeState | None = None,
) -> tuple[HamiltonianAnsatz, Optional[BetaVqeState], TrainTrace]:
    """Train the Hamiltonian weights toward the target density matrix.

    Returns the trained ansatz, the final variational state (None unless the
    statistics source is the variational inner loop), and the trace.
    Deterministic given cfg.seed.
    """
    n = ansatz.n
    trace = TrainTrace()
    need_oracle = (
        cfg.eval_every or cfg.track_gaps or cfg.stats_source == "exact-gibbs"
    )
    oracle = _Oracle(target) if need_oracle else None
    data_rng = np.random.default_rng((cfg.seed, 1))
    tstats = target_statistics(target, ansatz, shots=cfg.shots, rng=data_rng)
    tstats_exact = (
        target_statistics(target, ansatz) if cfg.shots > 0 else tstats
    )
    eta_entropy = (
        oracle.eta_entropy if oracle is not None else -von_neumann_entropy(target)
    )

    state: Optional[BetaVqeState] = None
    moments: Optional[OptimizerMoments] = None
    if cfg.stats_source == "beta-vqe":
        state = initial_state if initial_state is not None else (
            _initial_variational_state(n, cfg)
        )
        if state.rank != cfg.rank:
            state = BetaVqeState(state.circuit, state.dist, cfg.rank)
        moments = OptimizerMoments.zeros(
            state.circuit.num_params + state.dist.num_params
        )

    velocity = np.zeros(ansatz.num_terms)
    lr = cfg.learning_rate
    checkpoints = _CheckpointWriter(cfg)

    for it in range(cfg.max_iters):
        t_start = time.perf_counter()
        inner_iters = 0
        log_z_tilde = None
        if cfg.stats_source == "beta-vqe":
            if it == 0 and cfg.inner_cold is not None:
                base = cfg.inner_cold
            elif (
                cfg.inner_deep is not None
                and cfg.inner_deep_every
                and it % cfg.inner_deep_every == 0
            ):
                base = cfg.inner_deep
            else:
                base = cfg.inner
            inner_cfg = replace(base, shots=cfg.shots, seed=(cfg.seed, 2, it))
            state, report = inner_loop(state, ansatz, inner_cfg, moments)
            inner_iters = report.iterations
            trace.stat_estimations += (
                report.iterations * cfg.rank * state.circuit.num_params
            )
            log_z_tilde = -report.final_free_energy

        want_oracle = oracle is not None and (
            cfg.stats_source == "exact-gibbs"
            or cfg.track_gaps
            or (cfg.eval_every and it % cfg.eval_every == 0)
        )
        ora = oracle.evaluate(ansatz, cfg.track_gaps) if want_oracle else None

        if cfg.stats_source == "beta-vqe":
            stats_rng = np.random.default_rng((cfg.seed, 3, it))
            mstats = model_statistics(state, ansatz, shots=cfg.shots, rng=stats_rng)
        elif cfg.stats_source == "rank1-ground-state":
            if ora is not None:
                w_eig, v_eig = ora["eigs"], ora["vecs"]
            else:
                w_eig, v_eig = hermitian_eig(dense_matrix(ansatz))
            ground = v_eig[:, 0][None, :]
            mstats = np.array(
                [act.expval(ground)[0] for act in hamiltonian_actions(ansatz)]
            )
            log_z_tilde = -float(w_eig[0])
        else:  # exact-gibbs
            if ora is None:
                raise ValueError("the exact-gibbs source requires eval_every >= 1")
            mstats = ora["stats"]

        grad = qbm_gradient(tstats, mstats)
        grad_norm = float(np.max(np.abs(grad)))

        s_exact = (
            -eta_entropy + float(ansatz.weights @ tstats_exact) + ora["log_z"]
            if ora is not None
            else math.nan
        )
        if cfg.stats_source == "exact-gibbs":
            cost = s_exact
        else:
            cost = -eta_entropy + float(ansatz.weights @ tstats) + log_z_tilde

        g_err = math.nan
        if ora is not None:
            exact_grad = qbm_gradient(tstats_exact, ora["stats"])
            g_err = gradient_error(grad, exact_grad)

        trace.iteration.append(it)
        trace.cost.append(cost)
        trace.grad_norm.append(grad_norm)
        trace.grad_error.append(g_err)
        trace.fidelity.append(ora["fidelity"] if ora else math.nan)
        trace.gs_fidelity.append(ora["gs_fidelity"] if ora else math.nan)
        trace.inner_iters.append(inner_iters)
        trace.lr.append(lr)
        trace.gaps.append(ora["gaps"] if ora else np.empty(0))
        trace.relative_entropy_exact.append(s_exact)
        trace.wall_ms.append((time.perf_counter() - t_start) * 1e3)

        if grad_norm <= cfg.grad_tolerance:
            break

        w = max(1, cfg.cost_window)
        if len(trace.cost) >= 2 * w and len(trace.cost) % w == 0:
            recent = float(np.mean(trace.cost[-w:]))
            previous = float(np.mean(trace.cost[-2 * w: -w]))
            factor = cfg.lr_increase if recent < previous else cfg.lr_decrease
            # apply the per-iteration rule once per window at matched strength
            lr *= factor**w if factor > 1.0 else factor
        velocity = cfg.momentum * velocity - lr * grad
        ansatz = ansatz.with_weights(ansatz.weights + velocity)
        checkpoints.maybe_write(it, ansatz, velocity, lr, state)

    checkpoints.write_final(ansatz, velocity, lr, state)
    return ansatz, state, trace


class _CheckpointWriter:
    def __init__(self, cfg: OuterLoopConfig):
        self.dir = cfg.checkpoint_dir
        self.every = cfg.checkpoint_every
        self.seed = cfg.seed
        if self.dir is not None:
            from pathlib import Path

            Path(self.dir).mkdir(parents=True, exist_ok=True)

    def _write(self, name, ansatz, velocity, lr, state):
        import json
        from pathlib import Path

        from .hamiltonian import to_json as ham_json

        doc = {
            "seed": self.seed,
            "hamiltonian": json.loads(ham_json(ansatz)),
            "velocity": velocity.tolist(),
            "lr": lr,
            "beta_vqe": None,
        }
        if state is not None:
            import json as _json

            doc["beta_vqe"] = {
                "theta": state.circuit.theta.tolist(),
                "depth": state.circuit.depth,
                "dist": _json.loads(state.dist.to_json()),
                "rank": state.rank,
            }
        Path(self.dir, name).write_text(json.dumps(doc))

    def maybe_write(self, it, ansatz, velocity, lr, state):
        if self.dir is not None and self.every and (it % self.every == 0):
            self._write(f"ckpt_{it:06d}.json", ansatz, velocity, lr, state)

    def write_final(self, ansatz, velocity, lr, state):
        if self.dir is not None:
            self._write("ckpt_final.json", ansatz, velocity, lr, state)
