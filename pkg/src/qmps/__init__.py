"""Classically trained MPS classifiers, their exact circuit embeddings, and
the weighted-measurement anneal that removes postselection."""

from .adiabatic import (
    DatasetBatchSource,
    EncodingFailure,
    EncodingTrace,
    FixedBatchSource,
    Schedule,
    TriggerBatchSource,
    make_schedule,
    run_adiabatic,
)
from .analysis import (
    DeltaRhoStats,
    FitResult,
    MomentRecursion,
    analytic_entry_variance,
    analytic_variance,
    fit_decay_rate,
    fit_loglinear,
    mc_delta_rho_stats,
    moment_recursion,
    mps_gradnorm_scan,
    postselection_scan,
)
from .checkpoint import load_checkpoint, save_mps, save_qmps
from .circuit import (
    LossConfig,
    NumericalCorruptionError,
    PropagationResult,
    QmpsCircuit,
    WeightConfig,
    all_swap_circuit,
    batch_success_rate,
    classify,
    propagate,
    propagate_batch,
    qmps_batch_eval,
    qmps_gradient,
    qmps_loss,
    qmps_loss_and_gradient,
    success_stats,
    swap_gate,
)
from .data import (
    Dataset,
    gen_trigger_batch,
    gen_trigger_pairs,
    load_dataset,
    load_idx,
    preprocess_mnist,
    save_dataset,
    split_dataset,
)
from .embedding import EmbeddingReport, embed, verify_embedding
from .features import MPS_FEATURES, QMPS_FEATURES, FeatureMapConfig, feature_map, feature_map_batch
from .linalg import exp_skew, haar_unitaries, haar_unitary, qr_positive, unitary_completion
from .mps import (
    AdamHyper,
    AdamState,
    CanonicalMps,
    CanonicalizationError,
    Mps,
    MpsInitConfig,
    adam_step,
    batch_nll,
    canonical_forward,
    init_adam,
    init_stacked_identity,
    mps_forward,
    mps_gradient,
    mps_loss_and_gradient,
    nll_softmax_loss,
    perfect_trigger_mps,
    predicted_labels,
    right_canonicalize,
    train_mps,
)
from .riemannian import RAdamHyper, RAdamState, init_radam, project_tangent, radam_step, riemannian_grad_norm

__version__ = "0.1.0"
