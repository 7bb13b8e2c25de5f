"""Two-task AUC-margin training for BIO named-entity tagging."""

from .corpus import Corpus, Sentence, TwoTaskLabels, Vocab, build_vocab, parse_conll, read_conll, to_two_task
from .crf import CrfParams, crf_nll, crf_viterbi
from .evaluation import Metrics, combine_predictions, entity_prf, extract_chunks, threshold_predictions, wmw_auc
from .model import ModelConfig, ModelParams, backward, forward, init_params
from .objectives import (
    AucState,
    auc_margin_loss,
    auc_two_task_loss,
    bce_two_task,
    ce_multiclass,
    dice_loss,
)
from .runner import AggregateCell, ExperimentSpec, emit_report, run_experiment
from .sampling import Partition, bootstrap_se, sample_imbalanced, sample_partition
from .training import RunRecord, TrainConfig, comauc_schedule, primal_dual_step, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "AggregateCell", "AucState", "Corpus", "CrfParams", "ExperimentSpec", "Metrics", "ModelConfig",
    "ModelParams", "Partition", "RunRecord", "Sentence", "TrainConfig", "TwoTaskLabels", "Vocab",
    "auc_margin_loss", "auc_two_task_loss", "backward", "bce_two_task", "bootstrap_se", "build_vocab",
    "ce_multiclass", "combine_predictions", "comauc_schedule", "crf_nll", "crf_viterbi", "dice_loss",
    "emit_report", "entity_prf", "extract_chunks", "forward", "init_params", "parse_conll",
    "primal_dual_step", "read_conll", "run_experiment", "sample_imbalanced", "sample_partition",
    "sgd_step", "threshold_predictions", "to_two_task", "train", "wmw_auc",
]
