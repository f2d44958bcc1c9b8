"""Experiment configuration: the dataclass and its JSON front end.

The JSON schema is flat; every key below is optional except ``clients``,
``rounds``, ``defense`` and ``seed``. Unknown or duplicated keys are
rejected. See the README for the full key reference.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, fields

from .adversary import (
    ADDITIVE_NOISE,
    BENIGN,
    COMPROMISED_KINDS,
    ROLE_KINDS,
    SIGN_FLIP,
    UNRELIABLE,
    check_threat_model,
)
from .exceptions import ConfigError

SCHEMA_VERSION = 1
DEFENSES = ("minedetect", "fedavg", "krum", "multi_krum", "geomed")
REQUIRED_KEYS = ("clients", "rounds", "defense", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    clients: int = 40
    rounds: int = 10
    defense: str = "minedetect"
    seed: int = 0
    # one role kind per client, index = client id
    roster: tuple = ()

    # model
    hidden_dims: tuple = (16, 8)
    dropout_rates: tuple = (0.0, 0.0)
    # local training
    learning_rate: float = 0.01
    batch_size: int = 8
    local_epochs: int = 4
    momentum: float = 0.9
    weight_decay: float = 1e-4

    # data
    dataset: str = "synthetic"
    n_samples: int = 2000
    n_classes: int = 4
    dim: int = 8
    class_separation: float = 5.0
    images_path: str = None
    labels_path: str = None
    test_fraction: float = 0.2
    partition_lambda: float = 0.9

    # defense and server
    beta: float = 0.5
    eta: float = 1.0
    window: int = 5
    recompute_g_after_exclusion: bool = False
    krum_f: int = None
    multi_krum_m: int = None
    geomed_tolerance: float = 1e-6
    geomed_max_iters: int = 100

    # threat model
    attack_sigma: float = None
    unreliable_sigma: float = 0.5
    intermittent: tuple = None
    enforce_threat_model: bool = True

    def __post_init__(self):
        roster = tuple(self.roster) if self.roster else (BENIGN,) * self.clients
        object.__setattr__(self, "roster", roster)
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        object.__setattr__(self, "dropout_rates", tuple(self.dropout_rates))
        if self.intermittent is not None:
            object.__setattr__(self, "intermittent", tuple(sorted(set(self.intermittent))))
        _validate(self)

    @property
    def n_clients(self):
        return self.clients

    @property
    def n_rounds(self):
        return self.rounds

    def ids_with(self, kind):
        return [i for i, k in enumerate(self.roster) if k == kind]

    @property
    def n_compromised(self):
        return sum(k in COMPROMISED_KINDS for k in self.roster)

    @property
    def resolved_krum_f(self):
        return self.n_compromised if self.krum_f is None else self.krum_f

    @property
    def resolved_multi_krum_m(self):
        return self.clients - self.resolved_krum_f if self.multi_krum_m is None else self.multi_krum_m

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        if "clients" in changes and "roster" not in changes:
            data["roster"] = ()
        return ExperimentConfig(**data)

    def to_dict(self):
        """Fully materialised JSON-ready form (the config echo)."""
        out = {"schema_version": SCHEMA_VERSION}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        out["krum_f"] = self.resolved_krum_f
        out["multi_krum_m"] = self.resolved_multi_krum_m
        return out


def _check(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}", key=key)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _validate(c):
    _check(_is_int(c.clients) and c.clients >= 1, "clients", "must be an integer >= 1")
    _check(_is_int(c.rounds) and c.rounds >= 1, "rounds", "must be an integer >= 1")
    _check(c.defense in DEFENSES, "defense", f"must be one of {DEFENSES}")
    _check(_is_int(c.seed) and c.seed >= 0, "seed", "must be a non-negative integer")
    _check(len(c.roster) == c.clients, "roster", f"needs {c.clients} entries, got {len(c.roster)}")
    _check(all(k in ROLE_KINDS for k in c.roster), "roster", f"role kinds must be in {ROLE_KINDS}")
    if c.enforce_threat_model:
        try:
            check_threat_model(c.roster)
        except ValueError as exc:
            raise ConfigError(f"roster: {exc}", key="roster") from None

    _check(all(_is_int(h) and h >= 1 for h in c.hidden_dims), "hidden_dims", "positive integers")
    _check(len(c.dropout_rates) == len(c.hidden_dims), "dropout_rates", "one rate per hidden layer")
    _check(all(_is_real(r) and 0 <= r < 1 for r in c.dropout_rates), "dropout_rates", "in [0, 1)")
    _check(_is_real(c.learning_rate) and c.learning_rate > 0, "learning_rate", "must be > 0")
    _check(_is_int(c.batch_size) and c.batch_size >= 1, "batch_size", "integer >= 1")
    _check(_is_int(c.local_epochs) and c.local_epochs >= 1, "local_epochs", "integer >= 1")
    _check(_is_real(c.momentum) and 0 <= c.momentum < 1, "momentum", "in [0, 1)")
    _check(_is_real(c.weight_decay) and c.weight_decay >= 0, "weight_decay", "must be >= 0")

    _check(c.dataset in ("synthetic", "idx"), "dataset", "'synthetic' or 'idx'")
    if c.dataset == "idx":
        _check(isinstance(c.images_path, str), "images_path", "required for idx datasets")
        _check(isinstance(c.labels_path, str), "labels_path", "required for idx datasets")
    _check(_is_int(c.n_classes) and c.n_classes >= 2, "n_classes", "integer >= 2")
    _check(_is_int(c.dim) and c.dim >= 1, "dim", "integer >= 1")
    _check(c.n_classes <= 2 * c.dim, "n_classes", "at most 2 * dim for synthetic blobs")
    _check(_is_int(c.n_samples) and c.n_samples >= c.n_classes, "n_samples", ">= n_classes")
    _check(_is_real(c.class_separation) and c.class_separation > 0, "class_separation", "> 0")
    _check(_is_real(c.test_fraction) and 0 < c.test_fraction < 1, "test_fraction", "in (0, 1)")
    _check(_is_real(c.partition_lambda) and c.partition_lambda > 0, "partition_lambda", "> 0")

    _check(_is_real(c.beta) and 0 < c.beta <= 1, "beta", "in (0, 1]")
    _check(_is_real(c.eta) and c.eta > 0, "eta", "must be > 0")
    _check(_is_int(c.window) and c.window >= 2, "window", "integer >= 2")
    _check(isinstance(c.recompute_g_after_exclusion, bool), "recompute_g_after_exclusion", "bool")
    _check(isinstance(c.enforce_threat_model, bool), "enforce_threat_model", "bool")
    if c.krum_f is not None:
        _check(_is_int(c.krum_f) and c.krum_f >= 0, "krum_f", "non-negative integer")
    if c.defense in ("krum", "multi_krum"):
        _check(c.clients >= c.resolved_krum_f + 3, "krum_f", "Krum needs clients >= f + 3")
    if c.multi_krum_m is not None:
        _check(_is_int(c.multi_krum_m), "multi_krum_m", "integer")
    if c.defense == "multi_krum":
        m = c.resolved_multi_krum_m
        _check(1 <= m <= c.clients - c.resolved_krum_f, "multi_krum_m", "in [1, clients - f]")
    _check(_is_real(c.geomed_tolerance) and c.geomed_tolerance > 0, "geomed_tolerance", "> 0")
    _check(_is_int(c.geomed_max_iters) and c.geomed_max_iters >= 1, "geomed_max_iters", ">= 1")

    if c.attack_sigma is not None:
        _check(_is_real(c.attack_sigma) and c.attack_sigma >= 0, "attack_sigma", ">= 0 or null")
    _check(_is_real(c.unreliable_sigma) and c.unreliable_sigma >= 0, "unreliable_sigma", ">= 0")
    if c.intermittent is not None:
        _check(
            all(_is_int(r) and 1 <= r <= c.rounds for r in c.intermittent),
            "intermittent",
            "round numbers in [1, rounds]",
        )


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"{k}: duplicate key", key=k)
        seen[k] = v
    return seen


def _roster_from_json(value, clients):
    if isinstance(value, list):
        return tuple(value)
    if isinstance(value, dict):
        roster = [BENIGN] * clients
        for kind, ids in value.items():
            _check(kind in (SIGN_FLIP, ADDITIVE_NOISE, UNRELIABLE), "roster", f"unknown role {kind!r}")
            _check(isinstance(ids, list), "roster", f"{kind} must map to a list of client ids")
            for i in ids:
                _check(_is_int(i) and 0 <= i < clients, "roster", f"client id {i!r} out of range")
                _check(roster[i] == BENIGN, "roster", f"client {i} assigned two roles")
                roster[i] = kind
        return tuple(roster)
    raise ConfigError("roster: must be a list of role kinds or an object of id lists", key="roster")


def config_from_dict(data):
    _check(isinstance(data, dict), "<root>", "config must be a JSON object")
    data = dict(data)
    data.pop("schema_version", None)
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key", key=unknown[0])
    for key in REQUIRED_KEYS:
        _check(key in data, key, "missing required key")
    _check(_is_int(data["clients"]) and data["clients"] >= 1, "clients", "must be an integer >= 1")
    if "roster" in data:
        data["roster"] = _roster_from_json(data["roster"], data["clients"])
    for key in ("hidden_dims", "dropout_rates", "intermittent"):
        if data.get(key) is not None:
            _check(isinstance(data[key], list), key, "must be a list")
    if "hidden_dims" in data and "dropout_rates" not in data:
        data["dropout_rates"] = [0.0] * len(data["hidden_dims"])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(source):
    """Parse a config from a file path or from inline JSON text."""
    text = source
    if not str(source).strip():
        raise ConfigError("empty config", key="<root>")
    if isinstance(source, (str, os.PathLike)) and not str(source).lstrip().startswith("{"):
        if not os.path.exists(source):
            raise ConfigError(f"config file not found: {source}", key="<path>")
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    if not str(text).strip():
        raise ConfigError("empty config", key="<root>")
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", key="<root>") from None
    return config_from_dict(data)


def roster_counts(kinds):
    return {k: sum(1 for x in kinds if x == k) for k in ROLE_KINDS}
