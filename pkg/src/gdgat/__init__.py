"""Distance-aware event graph classifier over probability edge features.

Pipeline: per-pair class-probability distributions (from any external
classifier, or synthesized) become edge features of a complete per-document
event graph; a two-layer edge-featured multi-head attention network plus a
pair classification head predicts the relation label of each event pair.
"""

from .data import (BUILTIN_LABEL_SETS, Dataset, Event, EventPairInstance,
                   LabelSet, MATRES, TB_DENSE, class_histogram, pair_distance,
                   parse_corpus)
from .errors import FormatError, GdgatError, NumericError, ShapeError
from .evaluate import (ConfusionMatrix, EvalReport, comparison_table,
                       distance_bucket_f1, evaluate_predictions, macro_f1,
                       micro_f1, predict_dataset, run_ablation)
from .graph import DocumentGraph, NodeFeatureConfig, build_graph, init_node_features
from .model import (GatLayerParams, ModelConfig, ModelParams,
                    attention_coefficients, classify_pair, head_output,
                    init_model, layer_forward, load_checkpoint, pair_loss,
                    predict, save_checkpoint)
from .probs import (ProbTable, harden, load_prob_table, merge_tables,
                    softmax_from_logits, synth_prob_table)
from .tensor import leaky_relu, matmul, stable_softmax, xavier_init
from .train import TrainConfig, optimizer_step, train

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_LABEL_SETS", "ConfusionMatrix", "Dataset", "DocumentGraph",
    "EvalReport", "Event", "EventPairInstance", "FormatError",
    "GatLayerParams", "GdgatError", "LabelSet", "MATRES", "ModelConfig",
    "ModelParams", "NodeFeatureConfig", "NumericError", "ProbTable",
    "ShapeError", "TB_DENSE", "TrainConfig", "attention_coefficients",
    "build_graph", "class_histogram", "classify_pair", "comparison_table",
    "distance_bucket_f1", "evaluate_predictions", "harden", "head_output",
    "init_model", "init_node_features", "layer_forward", "leaky_relu",
    "load_checkpoint", "load_prob_table", "macro_f1", "matmul",
    "merge_tables", "micro_f1", "optimizer_step", "pair_distance",
    "pair_loss", "parse_corpus", "predict", "predict_dataset",
    "run_ablation", "save_checkpoint", "softmax_from_logits",
    "stable_softmax", "synth_prob_table", "train", "xavier_init",
]
