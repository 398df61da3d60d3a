"""Planted lottery ticket benchmark for ReLU MLPs."""
from .datasets import Dataset, generate, split
from .estimators import PrunedMLPClassifier, PrunedMLPRegressor
from .harness import ExperimentConfig, ResultRow, recovery_metrics, run_experiment, read_tsv, write_tsv
from .net import InitSpec, MaskedMLP, apply_mask, evaluate, forward, loss_and_grad, mlp_new, sparsity, train
from .planting import PlantReport, PlantingError, extract_subnet, plant
from .pruning import detect_layer_collapse, edge_popup, multishot, prune, singleshot
from .theory import eps_layer, existence_lower_bound, relu_path_prob, verify_error_propagation
from .tickets import SparseTicket, build_ticket, eval_ticket

__version__ = "0.1.0"
