"""Graph-attention analytic essay scoring over dependency-parse token graphs."""

from .data import (TRAIT_COUNT, TRAIT_NAMES, DatasetSplit, EmbeddingBundle, EssayRecord,
                   InputError, TraitScores, ValidationResult, category_to_score,
                   discretize_score, score_to_category, validate_record)
from .graphs import GraphBatch, TokenGraph, batch_graphs, build_graph, unbatch_graphs
from .conllu import ConlluParseError, conllu_to_record
from .metrics import ConfusionMatrix, QwkReport, expected_matrix, interpret_kappa, qwk, weight_matrix
from .model import (EssayHeadParams, GatConfig, GatHeadParams, GatLayerParams, ModelParams,
                    attention_logits, essay_forward, gat_forward, gat_layer, init_model_params,
                    init_params)
from .train import (FusionOutput, LossReport, OptimizerState, TrainConfig, adamw_step,
                    cosine_lr, evaluate_split, fit, fuse, loss)
from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .tgeb import read_tgeb, write_tgeb
from .synth import SynthConfig, gen_synthetic, write_synth_dataset

__version__ = "0.1.0"
