"""History-aware detection of sign-flip, additive-noise and unreliable clients.

Each client keeps a running local average of its updates,
``L <- (L + delta) / 2`` (initialised to the first update), and the server
keeps the unweighted mean of all local averages as the global reference
``G``. Three tests run on these statistics every round:

* sign flip: cosine(L_i, G) < 0
* additive noise: mean-coordinate variance of the last ``window`` local
  averages exceeds median + 2 std, or ||L_i|| exceeds median + 2 std
* unreliable: ||L_i - G|| exceeds mean + std

All spreads are population statistics and all comparisons strict. A client
flagged as an attacker is dropped from the unreliable set (exclusion beats
down-weighting).
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_pair, as_vector
from .exceptions import DimensionError, EmptyRosterError
from .vectors import row_cosine, row_norms, window_variance

DEFAULT_WINDOW = 5

# Integer codes used by MineDetector.labels_
LABEL_BENIGN, LABEL_SIGN_FLIP, LABEL_ADDITIVE_NOISE, LABEL_UNRELIABLE = 0, 1, 2, 3


def update_local_average(prev, update):
    """One step of the local-average recursion; ``prev=None`` initialises."""
    if prev is None:
        return as_vector(update, "update").copy()
    prev, update = as_pair(prev, update)
    return (prev + update) / 2.0


def global_average(locals_):
    """Unweighted mean of all clients' local averages.

    ``locals_`` is either a mapping ``client -> vector`` or an ``(n, p)``
    array with one row per client.
    """
    rows = list(locals_.values()) if isinstance(locals_, dict) else locals_
    if len(rows) == 0:
        raise EmptyRosterError("global average of an empty roster")
    return as_matrix(rows, name="locals").mean(axis=0)


def median_std_threshold(values, k=2.0):
    values = np.asarray(values, dtype=np.float64)
    return float(np.median(values) + k * np.std(values))


def mean_std_threshold(values):
    values = np.asarray(values, dtype=np.float64)
    return float(np.mean(values) + np.std(values))


class HistoryState:
    """Per-client local averages, their bounded history, and the global average.

    Row ``i`` of every array belongs to the ``i``-th client of the roster.
    The window is stored as up to ``window`` snapshots of the ``(n, p)``
    local-average matrix, which is the same data as ``n`` per-client windows
    of at most ``window`` vectors.
    """

    def __init__(self, n_clients, n_params, window=DEFAULT_WINDOW):
        if n_clients < 1:
            raise EmptyRosterError("history needs at least one client")
        if window < 2:
            raise ValueError("window must be >= 2")
        self.n_clients = int(n_clients)
        self.n_params = int(n_params)
        self.window_size = int(window)
        self.local_averages = None
        self.global_average = None
        self.window = deque(maxlen=self.window_size)
        self.rounds_seen = 0

    def update(self, deltas):
        """Fold one round of updates (``(n, p)``) into the state."""
        D = as_matrix(deltas, name="deltas")
        if D.shape != (self.n_clients, self.n_params):
            raise DimensionError(
                f"expected updates of shape {(self.n_clients, self.n_params)}, got {D.shape}"
            )
        if self.local_averages is None:
            self.local_averages = D.copy()
        else:
            self.local_averages = (self.local_averages + D) / 2.0
        self.window.append(self.local_averages)
        self.global_average = self.local_averages.mean(axis=0)
        self.rounds_seen += 1
        return self

    def history(self):
        """``(w, n, p)`` stack of local averages, oldest first."""
        return np.stack(self.window)

    def client_window(self, i):
        return [snap[i] for snap in self.window]

    def _require_current(self):
        if self.local_averages is None:
            raise RuntimeError("history state has not received any updates yet")


def _roster(state, roster):
    if roster is None:
        return list(range(state.n_clients))
    roster = list(roster)
    if len(roster) != state.n_clients:
        raise DimensionError(f"roster has {len(roster)} ids for {state.n_clients} clients")
    return roster


def sign_flip_scores(state):
    state._require_current()
    return row_cosine(state.local_averages, state.global_average)


def detect_sign_flip(state, roster=None):
    """Clients whose local average points away from the global average."""
    ids = _roster(state, roster)
    d = sign_flip_scores(state)
    return {ids[i] for i in np.flatnonzero(d < 0.0)}


def additive_noise_scores(state):
    """``(V, Z)``: windowed variance (NaN before two entries exist) and norm."""
    state._require_current()
    Z = row_norms(state.local_averages)
    if len(state.window) >= 2:
        V = window_variance(state.history())
    else:
        V = np.full(state.n_clients, np.nan)
    return V, Z


def flag_additive_noise(V, Z):
    """Flag mask plus ``(T_v, T_z)``; a NaN ``V`` disables the variance test."""
    V = np.asarray(V, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    T_z = median_std_threshold(Z)
    flags = Z > T_z
    if np.all(np.isfinite(V)):
        T_v = median_std_threshold(V)
        flags |= V > T_v
    else:
        T_v = float("nan")
    return flags, T_v, T_z


def detect_additive_noise(state, roster=None):
    """``(flagged ids, T_v, T_z)``; ``T_v`` is NaN during warm-up."""
    ids = _roster(state, roster)
    V, Z = additive_noise_scores(state)
    flags, T_v, T_z = flag_additive_noise(V, Z)
    return {ids[i] for i in np.flatnonzero(flags)}, T_v, T_z


def unreliable_scores(state, reference=None):
    state._require_current()
    g = state.global_average if reference is None else reference
    return row_norms(state.local_averages - g)


def detect_unreliable(state, roster=None, reference=None):
    """``(flagged ids, T_E)`` for distance-to-reference outliers.

    ``reference`` defaults to the global average over every client.
    """
    ids = _roster(state, roster)
    E = unreliable_scores(state, reference)
    T_E = mean_std_threshold(E)
    return {ids[i] for i in np.flatnonzero(E > T_E)}, T_E


@dataclass
class DetectionReport:
    sign_flip_set: set
    additive_noise_set: set
    unreliable_set: set
    thresholds: dict
    # per-client arrays, aligned with ``roster``
    roster: list = field(default_factory=list)
    d: np.ndarray = None
    V: np.ndarray = None
    Z: np.ndarray = None
    E: np.ndarray = None

    @property
    def excluded(self):
        return self.sign_flip_set | self.additive_noise_set

    def category_of(self, client):
        if client in self.sign_flip_set:
            return "sign_flip"
        if client in self.additive_noise_set:
            return "additive_noise"
        if client in self.unreliable_set:
            return "unreliable"
        return ""


def detect(state, roster=None, recompute_g_after_exclusion=False):
    """Run all three detectors on the current state and resolve precedence.

    With ``recompute_g_after_exclusion`` the unreliable test measures
    distances to the mean local average of the clients that survived the
    two attack tests instead of the all-client global average.
    """
    ids = _roster(state, roster)
    d = sign_flip_scores(state)
    V, Z = additive_noise_scores(state)
    add_mask, T_v, T_z = flag_additive_noise(V, Z)
    flip_mask = d < 0.0
    reference = None
    if recompute_g_after_exclusion:
        keep = ~(flip_mask | add_mask)
        if keep.any():
            reference = state.local_averages[keep].mean(axis=0)
    E = unreliable_scores(state, reference)
    T_E = mean_std_threshold(E)
    unrl_mask = (E > T_E) & ~(flip_mask | add_mask)
    pick = lambda mask: {ids[i] for i in np.flatnonzero(mask)}  # noqa: E731
    return DetectionReport(
        sign_flip_set=pick(flip_mask),
        additive_noise_set=pick(add_mask),
        unreliable_set=pick(unrl_mask),
        thresholds={"T_v": T_v, "T_z": T_z, "T_E": T_E},
        roster=ids,
        d=d,
        V=V,
        Z=Z,
        E=E,
    )


class MineDetector(BaseEstimator):
    """Streaming detector with an sklearn-style interface.

    Call :meth:`partial_fit` once per round with the ``(n_clients, p)``
    matrix of that round's updates (row order must stay fixed across
    rounds). After each call ``report_`` holds the round's
    :class:`DetectionReport` and ``labels_`` one integer code per client:
    0 benign, 1 sign flip, 2 additive noise, 3 unreliable.
    """

    def __init__(self, window=DEFAULT_WINDOW, recompute_g_after_exclusion=False):
        self.window = window
        self.recompute_g_after_exclusion = recompute_g_after_exclusion

    def partial_fit(self, X, y=None):
        X = as_matrix(X, name="X")
        if not hasattr(self, "state_"):
            self.state_ = HistoryState(X.shape[0], X.shape[1], self.window)
            self.n_features_in_ = X.shape[1]
        self.state_.update(X)
        self.report_ = detect(
            self.state_, recompute_g_after_exclusion=self.recompute_g_after_exclusion
        )
        labels = np.full(X.shape[0], LABEL_BENIGN)
        for code, members in (
            (LABEL_UNRELIABLE, self.report_.unreliable_set),
            (LABEL_ADDITIVE_NOISE, self.report_.additive_noise_set),
            (LABEL_SIGN_FLIP, self.report_.sign_flip_set),
        ):
            labels[list(members)] = code
        self.labels_ = labels
        return self

    def fit(self, X, y=None):
        """Replay a ``(rounds, n_clients, p)`` sequence from a fresh state."""
        for attr in ("state_", "report_", "labels_"):
            self.__dict__.pop(attr, None)
        for round_updates in X:
            self.partial_fit(round_updates)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
