"""flowid: IoT device identification from network-flow features.

Assembles packet streams into flows, extracts the 19-feature vector
used for classification, trains tree and neural classifiers, and
reproduces sliding-window drift experiments with edge-style incremental
retraining via layer freezing.
"""

__version__ = "0.1.0"

from .features import (DomainVocab, FeatureVector, LabeledDataset,
                       FEATURE_NAMES, N_FEATURES, moments, featurize)
from .flows import (DnsTable, FlowAssembler, FlowRecord, PacketRecord,
                    assemble, sld)
from .metrics import confusion_matrix, f1_macro
from .neural import NeuralNet, TrainConfig, freeze, init_model, train
from .trees import DecisionTree, Forest, TreeParams, fit_dtc, fit_rfc
from .harness import (EvalGrid, ExperimentSpec, TrainedModel, bench_inference,
                      ensemble_predict, eval_grid, evaluate, fit_model,
                      leave_one_out_category, retrain_eval, run_cell, split_days)
from .store import load_model, read_dataset, save_model, write_dataset
from .synthgen import (DeviceProfile, DriftSpec, EnvironmentSpec, FlowComponent,
                       drift_preset, gen_cross_env_pair, gen_environment)

__all__ = [
    "__version__",
    "DomainVocab", "FeatureVector", "LabeledDataset", "FEATURE_NAMES",
    "N_FEATURES", "moments", "featurize",
    "DnsTable", "FlowAssembler", "FlowRecord", "PacketRecord", "assemble", "sld",
    "confusion_matrix", "f1_macro",
    "NeuralNet", "TrainConfig", "freeze", "init_model", "train",
    "DecisionTree", "Forest", "TreeParams", "fit_dtc", "fit_rfc",
    "EvalGrid", "ExperimentSpec", "TrainedModel", "bench_inference",
    "ensemble_predict", "eval_grid", "evaluate", "fit_model",
    "leave_one_out_category", "retrain_eval", "run_cell", "split_days",
    "load_model", "read_dataset", "save_model", "write_dataset",
    "DeviceProfile", "DriftSpec", "EnvironmentSpec", "FlowComponent",
    "drift_preset", "gen_cross_env_pair", "gen_environment",
]
