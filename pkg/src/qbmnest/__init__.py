"""Quantum Boltzmann machine training with a truncated-rank variational
Gibbs inner loop, simulated exactly or with finite-shot noise."""

from .betavqe import (
    BetaVqeState,
    InnerLoopConfig,
    InnerLoopReport,
    density_matrix,
    free_energy,
    grad_phi,
    grad_theta,
    inner_loop,
    model_statistics,
)
from .circuit import (
    CircuitAnsatz,
    GateSpec,
    apply_circuit,
    expval,
    expval_sampled,
    layer_layout,
    param_shift_grad,
    su4_block,
)
from .data import (
    BitstringDataset,
    embed_pure_state,
    kl_divergence,
    load_dataset,
    make_quantum_target,
    synth_spike_data,
)
from .distributions import (
    AutoregressiveNet,
    BernoulliProduct,
    make_distribution,
    top_r_states,
)
from .gibbs import (
    exact_rank_truncation,
    expectation,
    gibbs_state,
    spectral_gaps,
    von_neumann_entropy,
)
from .hamiltonian import (
    HamiltonianAnsatz,
    build_qbm_ansatz,
    build_xxz,
    dense_matrix,
    init_weights,
)
from .linalg import PauliString, hermitian_eig, matrix_fn_hermitian, pauli_matrix
from .metrics import FidelityReport, fidelity, ground_state_fidelity
from .trainer import (
    OuterLoopConfig,
    TrainTrace,
    gradient_error,
    outer_loop,
    qbm_gradient,
    relative_entropy,
    target_statistics,
)

__version__ = "0.1.0"
