"""Feed-forward ReLU classifier on a flat parameter vector.

The whole network lives in one float64 vector so that client updates,
attacks, detection and aggregation all operate on the same representation.
Layer ``l`` is stored as its weight matrix ``(fan_in, fan_out)`` in row-major
order followed by its bias ``(fan_out,)``.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import as_vector
from .data import LabeledDataset
from .exceptions import DimensionError, EmptyDatasetError, EmptyShardError


@dataclass(frozen=True)
class ModelLayout:
    input_dim: int
    hidden_dims: tuple = (16, 8)
    output_dim: int = 4
    dropout_rates: tuple = None

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden_dims)
        rates = (0.0,) * len(hidden) if self.dropout_rates is None else tuple(
            float(r) for r in self.dropout_rates
        )
        if len(rates) != len(hidden):
            raise ValueError("dropout_rates must align with hidden_dims")
        if any(not 0.0 <= r < 1.0 for r in rates):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.input_dim < 1 or any(h < 1 for h in hidden):
            raise ValueError("layer widths must be positive")
        if self.output_dim < 2:
            raise ValueError("output_dim must be >= 2")
        object.__setattr__(self, "hidden_dims", hidden)
        object.__setattr__(self, "dropout_rates", rates)

    @property
    def widths(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def n_params(self):
        w = self.widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))


@dataclass(frozen=True)
class TrainingHyperparams:
    learning_rate: float = 0.01
    batch_size: int = 8
    local_epochs: int = 4
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.local_epochs < 1:
            raise ValueError("batch_size and local_epochs must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class GradientUpdate:
    """Pseudo-gradient ``delta = w_received - w_trained`` sent by one client."""

    client_id: int
    round: int
    delta: np.ndarray = field(repr=False)


def unpack(params, layout):
    """Views ``[(W, b), ...]`` into ``params``; no copies."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (layout.n_params,):
        raise DimensionError(
            f"parameter vector has length {params.size}, layout needs {layout.n_params}"
        )
    layers, off = [], 0
    w = layout.widths
    for fan_in, fan_out in zip(w[:-1], w[1:]):
        W = params[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off : off + fan_out]
        off += fan_out
        layers.append((W, b))
    return layers


def init_model(layout, seed):
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    params = np.zeros(layout.n_params)
    for W, _ in unpack(params, layout):
        bound = 1.0 / np.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return params


def _logits(layers, X):
    h = X
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
    W, b = layers[-1]
    return h @ W + b


def forward(params, layout, features):
    """Class scores for one row ``(d,)`` or a batch ``(n, d)``; no dropout."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[-1] != layout.input_dim or X.ndim not in (1, 2):
        raise DimensionError(
            f"feature length {X.shape[-1]} does not match input_dim {layout.input_dim}"
        )
    return _logits(unpack(params, layout), X)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(params, layout, X, y, rng=None):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``params``.

    When ``rng`` is given, inverted dropout is applied after each hidden
    layer with the layout's rates; without it the pass is deterministic.
    """
    layers = unpack(params, layout)
    acts, masks = [X], []
    h = X
    for (W, b), rate in zip(layers[:-1], layout.dropout_rates):
        h = np.maximum(h @ W + b, 0.0)
        if rng is not None and rate > 0.0:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * mask
        else:
            mask = None
        masks.append(mask)
        acts.append(h)
    W, b = layers[-1]
    logp = _log_softmax(h @ W + b)
    n = X.shape[0]
    loss = -logp[np.arange(n), y].mean()

    grad = np.zeros_like(params)
    glayers = unpack(grad, layout)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for li in range(len(layers) - 1, -1, -1):
        gW, gb = glayers[li]
        gW[...] = acts[li].T @ delta
        gb[...] = delta.sum(axis=0)
        if li == 0:
            break
        delta = delta @ layers[li][0].T
        if masks[li - 1] is not None:
            delta = delta * masks[li - 1]
        # acts[li] > 0 exactly where the ReLU (and dropout mask) let signal through
        delta = delta * (acts[li] > 0.0)
    return float(loss), grad


def loss(params, layout, dataset):
    X, y = dataset.features, dataset.labels
    logp = _log_softmax(forward(params, layout, X))
    return float(-logp[np.arange(len(y)), y].mean())


def local_train(global_params, layout, shard, hyper, seed, client_id=0, round=0):
    """Run mini-batch SGD (momentum + weight decay) from ``global_params``.

    Returns the pseudo-gradient ``global_params - trained_params`` so that a
    server step ``w - eta * delta`` moves in the descent direction. Batch
    order and dropout masks are drawn from ``seed``.
    """
    if len(shard) == 0:
        raise EmptyShardError("cannot train on an empty shard")
    w0 = as_vector(global_params, "global_params")
    if w0.size != layout.n_params:
        raise DimensionError(
            f"parameter vector has length {w0.size}, layout needs {layout.n_params}"
        )
    rng = np.random.default_rng(seed)
    w = w0.copy()
    velocity = np.zeros_like(w)
    X, y = shard.features, shard.labels
    n = len(y)
    lr, mu, wd = hyper.learning_rate, hyper.momentum, hyper.weight_decay
    for _ in range(hyper.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            _, g = loss_and_grad(w, layout, X[batch], y[batch], rng)
            if wd:
                g += wd * w
            velocity = mu * velocity + g
            w -= lr * velocity
    return GradientUpdate(client_id, round, w0 - w)


def predict(params, layout, X):
    # np.argmax returns the first maximum: lowest class index wins ties
    return np.argmax(forward(params, layout, X), axis=1)


def evaluate(params, layout, dataset):
    """``(accuracy, confusion)``; ``confusion[i, j]`` counts class i predicted as j."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    pred = predict(params, layout, dataset.features)
    k = max(layout.output_dim, dataset.n_classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (dataset.labels, pred), 1)
    return float(np.trace(confusion) / confusion.sum()), confusion


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Centralised estimator wrapper around the functional network above.

    Handy for sanity baselines (what accuracy can one model reach on the
    pooled data?) and for composing with sklearn tooling. ``coef_`` holds
    the flat parameter vector.
    """

    def __init__(
        self,
        hidden_dims=(16, 8),
        dropout_rates=None,
        learning_rate=0.01,
        batch_size=8,
        epochs=20,
        momentum=0.9,
        weight_decay=1e-4,
        random_state=0,
    ):
        self.hidden_dims = hidden_dims
        self.dropout_rates = dropout_rates
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, reset=True)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        self.layout_ = ModelLayout(
            X.shape[1], tuple(self.hidden_dims), max(len(self.classes_), 2), self.dropout_rates
        )
        hyper = TrainingHyperparams(
            self.learning_rate, self.batch_size, self.epochs, self.momentum, self.weight_decay
        )
        ds = LabeledDataset(X, y_enc, self.layout_.output_dim)
        w0 = init_model(self.layout_, self.random_state)
        update = local_train(w0, self.layout_, ds, hyper, self.random_state)
        self.coef_ = w0 - update.delta
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        return forward(self.coef_, self.layout_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
