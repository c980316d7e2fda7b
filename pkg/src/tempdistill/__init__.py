"""Temporal-wise logit distillation for spiking neural networks."""
from .bounds import (
    BoundReport,
    check_jensen_split,
    check_lemma1,
    check_prop2,
    check_prop3,
    random_trials,
    verify_on_model,
)
from .data import (
    Checkpoint,
    Dataset,
    gen_spiral,
    load_checkpoint,
    load_csv_dataset,
    load_teacher_logits,
    read_checkpoint,
    save_checkpoint,
    save_csv_dataset,
    save_teacher_logits,
    spiral_splits,
)
from .evaluator import (
    dump_logits,
    early_exit_eval,
    early_exit_grid,
    eval_at,
    firing_rate_stats,
    full_range_sweep,
)
from .losses import LossBreakdown, LossWeights, ce_loss, compute_all, ensemble_logits, kl_soft_loss, softmax
from .mlp import TeacherModel
from .snn import LifConfig, LifState, SnnNetwork, forward_unroll, lif_step, surrogate_heaviside
from .tensor import Tape, Tensor
from .trainer import TeacherConfig, TrainConfig, cosine_lr, sgd_step, train_student, train_teacher

__version__ = "0.1.0"
