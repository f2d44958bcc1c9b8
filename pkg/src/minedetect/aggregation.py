"""Server-side aggregation: weighted FedAvg with exclusion/down-weighting,
plus the Krum, Multi-Krum and geometric-median baselines."""

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_pair
from .exceptions import DefenseExhaustedError, EmptyRosterError, InfeasibleError
from .model import GradientUpdate

WEISZFELD_EPS = 1e-12


@dataclass
class AggregationOutcome:
    aggregated_delta: np.ndarray
    included_clients: set
    downweighted_clients: set
    excluded_clients: set
    beta: float
    weights: dict


def _delta(u):
    return u.delta if isinstance(u, GradientUpdate) else u


def _stack(updates, shard_sizes):
    if not updates:
        raise EmptyRosterError("no updates to aggregate")
    ids = list(updates)
    D = as_matrix([_delta(updates[c]) for c in ids], name="updates")
    sizes = np.array([shard_sizes[c] for c in ids], dtype=np.float64)
    if np.any(sizes <= 0):
        raise ValueError("shard sizes must be positive")
    return ids, D, sizes


def fedavg(updates, shard_sizes):
    """Sample-size weighted mean of ``{client: update}``."""
    _, D, sizes = _stack(updates, shard_sizes)
    return (sizes / sizes.sum()) @ D


def minedetect_aggregate(updates, shard_sizes, report, beta=0.5):
    """Weighted mean that drops detected attackers and scales unreliable clients.

    Weights are ``|D_i| / |D|`` for normal clients and ``beta * |D_i| / |D|``
    for clients in ``report.unreliable_set``, with ``|D|`` summed over the
    clients that are kept. Raises :class:`DefenseExhaustedError` when every
    client is excluded.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    ids, D, sizes = _stack(updates, shard_sizes)
    excluded = set(report.sign_flip_set) | set(report.additive_noise_set)
    keep = np.array([c not in excluded for c in ids])
    if not keep.any():
        raise DefenseExhaustedError("all clients were excluded this round")
    down = np.array([c in report.unreliable_set for c in ids]) & keep
    w = np.where(keep, sizes, 0.0) / sizes[keep].sum()
    w = np.where(down, beta * w, w)
    return AggregationOutcome(
        aggregated_delta=w @ D,
        included_clients={c for c, k in zip(ids, keep) if k},
        downweighted_clients={c for c, x in zip(ids, down) if x},
        excluded_clients={c for c, k in zip(ids, keep) if not k},
        beta=float(beta),
        weights=dict(zip(ids, w.tolist())),
    )


def apply_server_update(w_prev, aggregated_delta, eta=1.0):
    w_prev, aggregated_delta = as_pair(w_prev, aggregated_delta)
    return w_prev - eta * aggregated_delta


def _pairwise_sq_dists(X):
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def krum_scores(updates, f):
    X = as_matrix(updates, name="updates")
    n = X.shape[0]
    if n < f + 3:
        raise InfeasibleError(f"Krum needs n >= f + 3, got n={n}, f={f}")
    k = n - f - 2
    dist = _pairwise_sq_dists(X)
    np.fill_diagonal(dist, np.inf)
    return np.sort(dist, axis=1)[:, :k].sum(axis=1)


def krum(updates, f):
    """Index of the update with the smallest sum of squared distances to its
    ``n - f - 2`` nearest neighbours, and every update's score."""
    scores = krum_scores(updates, f)
    return int(np.argmin(scores)), scores.tolist()


def multi_krum_selection(updates, f, m):
    scores = krum_scores(updates, f)
    n = len(scores)
    if not 1 <= m <= n - f:
        raise InfeasibleError(f"Multi-Krum needs 1 <= m <= n - f, got m={m}")
    return np.argsort(scores, kind="stable")[:m]


def multi_krum(updates, f, m):
    X = as_matrix(updates, name="updates")
    return X[multi_krum_selection(X, f, m)].mean(axis=0)


def geomed_objective(y, X):
    return float(np.linalg.norm(X - y, axis=1).sum())


def weiszfeld(updates, tolerance=1e-6, max_iters=100):
    """Weiszfeld iteration started at the coordinate-wise mean.

    Returns the final point and the objective value after every iterate
    (starting point included). The result is never worse than the best
    input point.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    X = as_matrix(updates, name="updates")
    if np.all(X == X[0]):
        return X[0].copy(), [0.0]
    y = X.mean(axis=0)
    trace = [geomed_objective(y, X)]
    for _ in range(max_iters):
        w = 1.0 / (np.linalg.norm(X - y, axis=1) + WEISZFELD_EPS)
        y_next = (w @ X) / w.sum()
        step = np.linalg.norm(y_next - y)
        y = y_next
        trace.append(geomed_objective(y, X))
        if step < tolerance:
            break
    # Weiszfeld crawls toward a median that sits on an input point, so the
    # step test can stop early there; fall back to the best input point.
    point_obj = np.array([geomed_objective(x, X) for x in X])
    best = int(np.argmin(point_obj))
    if point_obj[best] < trace[-1]:
        y = X[best].copy()
        trace.append(float(point_obj[best]))
    return y, trace


def geomed(updates, tolerance=1e-6, max_iters=100):
    """Geometric median of the updates (approximate, via Weiszfeld)."""
    return weiszfeld(updates, tolerance, max_iters)[0]
