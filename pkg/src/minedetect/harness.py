"""Round orchestration and evaluation metrics.

Randomness comes from a single master seed. Every consumer gets its own
``numpy.random.SeedSequence`` whose spawn key is ``(purpose, *indices)``,
e.g. ``(TRAIN, client, round)``. Streams are therefore addressed by
what they are for rather than by draw order, and adding a client or a round
leaves every other stream untouched.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import aggregation as agg
from .adversary import ADDITIVE_NOISE, BENIGN, SIGN_FLIP, UNRELIABLE, additive_noise, sign_flip
from .data import corrupt_features, dirichlet_partition, generate_synthetic, load_idx, stratified_split
from .detection import DetectionReport, HistoryState, detect
from .exceptions import DefenseExhaustedError
from .model import GradientUpdate, ModelLayout, TrainingHyperparams, evaluate, init_model, local_train

log = logging.getLogger(__name__)

# Seed-stream purposes. Values are part of the reproducibility contract.
DATA, SPLIT, PARTITION, INIT, TRAIN, ATTACK, CORRUPT = range(1, 8)

CATEGORIES = (SIGN_FLIP, ADDITIVE_NOISE, UNRELIABLE)


def seed_stream(master, purpose, *indices):
    return np.random.SeedSequence(master, spawn_key=(purpose, *indices))


def compute_fpr(detected, ground_truth_positive, population):
    """FP / (FP + TN) over ``population``; 0 when there are no negatives."""
    detected, positive, population = set(detected), set(ground_truth_positive), set(population)
    fp = len(detected - positive)
    tn = len(population - positive - detected)
    return fp / (fp + tn) if fp + tn else 0.0


@dataclass
class SimulationState:
    round: int
    params: np.ndarray
    layout: ModelLayout
    hyper: TrainingHyperparams
    shards: list
    test_set: object
    history: HistoryState
    attack_sigma: float = None

    @property
    def shard_sizes(self):
        return {i: len(s) for i, s in enumerate(self.shards)}


@dataclass
class RoundReport:
    round: int
    accuracy: float
    confusion: np.ndarray
    fpr: dict
    detection: DetectionReport
    included_clients: set
    downweighted_clients: set
    excluded_clients: set
    agg_wall_ms: float
    defense_exhausted: bool = False

    @property
    def sign_flip_set(self):
        return self.detection.sign_flip_set

    @property
    def additive_noise_set(self):
        return self.detection.additive_noise_set

    @property
    def unreliable_set(self):
        return self.detection.unreliable_set

    def to_dict(self, timing=False):
        det = self.detection
        out = {
            "round": self.round,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "fpr": dict(self.fpr),
            "sign_flip_set": sorted(det.sign_flip_set),
            "additive_noise_set": sorted(det.additive_noise_set),
            "unreliable_set": sorted(det.unreliable_set),
            "thresholds": {k: _json_float(v) for k, v in det.thresholds.items()},
            "included_clients": sorted(self.included_clients),
            "downweighted_clients": sorted(self.downweighted_clients),
            "excluded_clients": sorted(self.excluded_clients),
            "defense_exhausted": self.defense_exhausted,
        }
        if timing:
            out["agg_wall_ms"] = self.agg_wall_ms
        return out


@dataclass
class ExperimentReport:
    config: object
    rounds: list = field(default_factory=list)
    attack_sigma: float = None

    @property
    def accuracies(self):
        return [r.accuracy for r in self.rounds]

    @property
    def min_accuracy(self):
        return min(self.accuracies)

    @property
    def max_accuracy(self):
        return max(self.accuracies)

    @property
    def avg_accuracy(self):
        return float(np.mean(self.accuracies))

    def to_dict(self, timing=False):
        return {
            "seed": self.config.seed,
            "defense": self.config.defense,
            "attack_sigma": self.attack_sigma,
            "min_accuracy": self.min_accuracy,
            "max_accuracy": self.max_accuracy,
            "avg_accuracy": self.avg_accuracy,
            "rounds": [r.to_dict(timing) for r in self.rounds],
        }


def _json_float(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _load_dataset(config):
    if config.dataset == "idx":
        return load_idx(config.images_path, config.labels_path)
    return generate_synthetic(
        config.n_samples,
        config.n_classes,
        config.dim,
        config.class_separation,
        seed_stream(config.seed, DATA),
    )


def init_state(config):
    """Build data, shards and the round-0 model; nothing is trained yet."""
    dataset = _load_dataset(config)
    split_seed = int(seed_stream(config.seed, SPLIT).generate_state(1)[0])
    train, test = stratified_split(dataset, config.test_fraction, split_seed)
    plan = dirichlet_partition(
        train, config.clients, config.partition_lambda, seed_stream(config.seed, PARTITION)
    )
    shards = []
    for i, idx in enumerate(plan.shards):
        shard = train.subset(idx)
        if config.roster[i] == UNRELIABLE:
            shard = corrupt_features(shard, config.unreliable_sigma, seed_stream(config.seed, CORRUPT, i))
        shards.append(shard)
    layout = ModelLayout(dataset.dim, config.hidden_dims, dataset.n_classes, config.dropout_rates)
    hyper = TrainingHyperparams(
        config.learning_rate,
        config.batch_size,
        config.local_epochs,
        config.momentum,
        config.weight_decay,
    )
    return SimulationState(
        round=0,
        params=init_model(layout, seed_stream(config.seed, INIT)),
        layout=layout,
        hyper=hyper,
        shards=shards,
        test_set=test,
        history=HistoryState(config.clients, layout.n_params, config.window),
        attack_sigma=config.attack_sigma,
    )


def default_attack_sigma(honest, roster):
    """Twice the median norm of the benign clients' honest updates."""
    rows = [i for i, k in enumerate(roster) if k == BENIGN] or list(range(len(roster)))
    return 2.0 * float(np.median(np.linalg.norm(honest[rows], axis=1)))


def _train_clients(state, config, t):
    D = np.empty((config.clients, state.layout.n_params))
    for i, shard in enumerate(state.shards):
        upd = local_train(
            state.params,
            state.layout,
            shard,
            state.hyper,
            seed_stream(config.seed, TRAIN, i, t),
            client_id=i,
            round=t,
        )
        D[i] = upd.delta
    return D


def _apply_attacks(D, state, config, t):
    if config.intermittent is not None and t not in config.intermittent:
        return D
    out = D.copy()
    for i, kind in enumerate(config.roster):
        if kind == SIGN_FLIP:
            out[i] = sign_flip(GradientUpdate(i, t, D[i])).delta
        elif kind == ADDITIVE_NOISE:
            noisy = additive_noise(
                GradientUpdate(i, t, D[i]), state.attack_sigma, seed_stream(config.seed, ATTACK, i, t)
            )
            out[i] = noisy.delta
    return out


def defend(history, D, shard_sizes, config):
    """Detection + aggregation for one round.

    Returns ``(DetectionReport, AggregationOutcome)``. The history is updated
    for every defense so diagnostics are always available, but only
    ``minedetect`` acts on the flags.
    """
    history.update(D)
    report = detect(history, recompute_g_after_exclusion=config.recompute_g_after_exclusion)
    ids = list(range(config.clients))
    if config.defense == "minedetect":
        updates = dict(zip(ids, D))
        return report, agg.minedetect_aggregate(updates, shard_sizes, report, config.beta)

    # baselines: keep diagnostics, report no detections
    report = DetectionReport(set(), set(), set(), report.thresholds, report.roster,
                             report.d, report.V, report.Z, report.E)
    if config.defense == "fedavg":
        delta = agg.fedavg(dict(zip(ids, D)), shard_sizes)
        chosen = ids
    elif config.defense == "krum":
        idx, _ = agg.krum(D, config.resolved_krum_f)
        delta, chosen = D[idx].copy(), [idx]
    elif config.defense == "multi_krum":
        sel = agg.multi_krum_selection(D, config.resolved_krum_f, config.resolved_multi_krum_m)
        delta, chosen = D[sel].mean(axis=0), sorted(int(i) for i in sel)
    else:
        delta = agg.geomed(D, config.geomed_tolerance, config.geomed_max_iters)
        chosen = ids
    chosen = set(chosen)
    outcome = agg.AggregationOutcome(
        aggregated_delta=delta,
        included_clients=chosen,
        downweighted_clients=set(),
        excluded_clients=set(ids) - chosen,
        beta=1.0,
        weights={},
    )
    return report, outcome


def run_round(state, config):
    """Train, attack, detect, aggregate, step and evaluate one round."""
    t = state.round + 1
    honest = _train_clients(state, config, t)
    if state.attack_sigma is None:
        state.attack_sigma = default_attack_sigma(honest, config.roster)
    D = _apply_attacks(honest, state, config, t)

    exhausted = False
    start = time.perf_counter()
    try:
        report, outcome = defend(state.history, D, state.shard_sizes, config)
        elapsed = time.perf_counter() - start
        state.params = agg.apply_server_update(state.params, outcome.aggregated_delta, config.eta)
        included, down, excluded = (
            outcome.included_clients,
            outcome.downweighted_clients,
            outcome.excluded_clients,
        )
    except DefenseExhaustedError:
        elapsed = time.perf_counter() - start
        log.warning("round %d: every client excluded, keeping previous model", t)
        report = detect(state.history, recompute_g_after_exclusion=config.recompute_g_after_exclusion)
        exhausted = True
        included, down, excluded = set(), set(), set(range(config.clients))

    accuracy, confusion = evaluate(state.params, state.layout, state.test_set)
    population = range(config.clients)
    fpr = {
        kind: compute_fpr(
            getattr(report, f"{kind}_set"), config.ids_with(kind), population
        )
        for kind in CATEGORIES
    }
    state.round = t
    return state, RoundReport(
        round=t,
        accuracy=accuracy,
        confusion=confusion,
        fpr=fpr,
        detection=report,
        included_clients=included,
        downweighted_clients=down,
        excluded_clients=excluded,
        agg_wall_ms=elapsed * 1e3,
        defense_exhausted=exhausted,
    )


def run_experiment(config):
    state = init_state(config)
    report = ExperimentReport(config)
    for _ in range(config.rounds):
        state, rr = run_round(state, config)
        report.rounds.append(rr)
        log.info("round %d accuracy %.4f", rr.round, rr.accuracy)
    report.attack_sigma = state.attack_sigma
    return report
