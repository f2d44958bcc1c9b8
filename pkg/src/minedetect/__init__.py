"""History-aware poisoning detection and robust aggregation for federated learning."""

from .aggregation import (
    AggregationOutcome,
    apply_server_update,
    fedavg,
    geomed,
    krum,
    minedetect_aggregate,
    multi_krum,
)
from .config import ExperimentConfig, parse_config
from .data import (
    LabeledDataset,
    PartitionPlan,
    corrupt_features,
    dirichlet_partition,
    generate_synthetic,
    load_idx,
)
from .detection import (
    DetectionReport,
    HistoryState,
    MineDetector,
    detect,
    detect_additive_noise,
    detect_sign_flip,
    detect_unreliable,
    global_average,
    update_local_average,
)
from .harness import ExperimentReport, RoundReport, compute_fpr, run_experiment, run_round
from .model import (
    GradientUpdate,
    MLPClassifier,
    ModelLayout,
    TrainingHyperparams,
    evaluate,
    forward,
    init_model,
    local_train,
)

__version__ = "0.1.0"
