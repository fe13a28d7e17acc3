"""Structured-sparsity MLP training, partial group-lasso masks, pruning."""

from .adam import AdamState, adam_step
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (Dataset, SplitSpec, batches, fetch, gen_toy, load_idx,
                   load_table, split, standardize_features, standardize_targets)
from .errors import (ConfigError, DataError, DegenerateBatchError,
                     DegenerateNetworkError, DivergenceError, FormatError,
                     NumericalError, ParameterError, ParseError, ShapeError,
                     SlimnetError)
from .gradients import (accuracy, finite_diff_check, gradcheck_battery,
                        gradients, loss, loss_grad)
from .model import (LayerParams, LayerSpec, NetworkParams, forward,
                    init_network, mlp_specs, permute_hidden, recalibrate_bn)
from .experiment import (ExperimentConfig, RunReport, SweepResult,
                         config_from_snapshot, continue_training, emit_report,
                         load_dataset, load_report_csv, preset,
                         run_experiment, sweep_beta)
from .pruning import (PruneReport, SparsityReport, active_neurons,
                      compare_outputs, prune_network, sparsity)
from .regularizers import (MaskLayer, NeuronMask, RegularizerSpec, build_mask,
                           build_masks, group_norms, parse_ratio, reg_subgrad,
                           reg_value, regularized_param_count)
from .tensor import RngStream, as_matrix, derive_seed, matmul, row_slice

__version__ = "0.1.0"

__all__ = [
    "AdamState", "adam_step", "Checkpoint", "load_checkpoint", "save_checkpoint",
    "Dataset", "SplitSpec", "batches", "fetch", "gen_toy", "load_idx",
    "load_table", "split", "standardize_features", "standardize_targets",
    "SlimnetError", "ConfigError", "DataError", "ParseError", "FormatError",
    "ParameterError", "ShapeError", "NumericalError", "DivergenceError",
    "DegenerateBatchError", "DegenerateNetworkError",
    "accuracy", "finite_diff_check", "gradcheck_battery", "gradients", "loss",
    "loss_grad",
    "LayerParams", "LayerSpec", "NetworkParams", "forward", "init_network",
    "mlp_specs", "permute_hidden", "recalibrate_bn",
    "ExperimentConfig", "RunReport", "SweepResult", "config_from_snapshot",
    "continue_training", "emit_report", "load_dataset", "load_report_csv",
    "preset", "run_experiment", "sweep_beta",
    "PruneReport", "SparsityReport", "active_neurons", "compare_outputs",
    "prune_network", "sparsity",
    "MaskLayer", "NeuronMask", "RegularizerSpec", "build_mask", "build_masks",
    "group_norms", "parse_ratio", "reg_subgrad", "reg_value",
    "regularized_param_count",
    "RngStream", "as_matrix", "derive_seed", "matmul", "row_slice",
    "__version__",
]
