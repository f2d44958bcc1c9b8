"""Untargeted attacks applied to honestly trained updates."""

from dataclasses import dataclass, replace

import numpy as np

BENIGN = "benign"
SIGN_FLIP = "sign_flip"
ADDITIVE_NOISE = "additive_noise"
UNRELIABLE = "unreliable"
ROLE_KINDS = (BENIGN, SIGN_FLIP, ADDITIVE_NOISE, UNRELIABLE)
COMPROMISED_KINDS = (SIGN_FLIP, ADDITIVE_NOISE)


@dataclass(frozen=True)
class ClientRole:
    kind: str = BENIGN
    attack_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ROLE_KINDS:
            raise ValueError(f"unknown role {self.kind!r}; expected one of {ROLE_KINDS}")
        if self.attack_sigma < 0:
            raise ValueError("attack_sigma must be >= 0")

    @property
    def compromised(self):
        return self.kind in COMPROMISED_KINDS


def check_threat_model(kinds):
    """Raise ``ValueError`` unless compromised clients are a strict minority.

    Compromised (sign-flip + additive-noise) must be fewer than benign plus
    unreliable clients.
    """
    kinds = list(kinds)
    bad = sum(k in COMPROMISED_KINDS for k in kinds)
    good = len(kinds) - bad
    if bad >= good:
        raise ValueError(
            f"threat model violated: {bad} compromised clients vs {good} benign/unreliable"
        )


def sign_flip(update):
    return replace(update, delta=-update.delta)


def additive_noise(update, sigma, seed):
    """Add i.i.d. N(0, sigma^2) to every coordinate of ``update.delta``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return replace(update, delta=update.delta.copy())
    rng = np.random.default_rng(seed)
    return replace(update, delta=update.delta + rng.normal(0.0, sigma, update.delta.shape))


def spread_ids(n_clients, count, offset=0):
    """``count`` client ids spaced evenly over ``range(n_clients)``."""
    if not 0 <= count <= n_clients:
        raise ValueError("count must lie in [0, n_clients]")
    return [(offset + (k * n_clients) // count) % n_clients for k in range(count)]


def build_roster(n_clients, sign_flip_ids=(), additive_noise_ids=(), unreliable_ids=()):
    """Tuple of role kinds, benign unless an id is listed under another role."""
    roster = [BENIGN] * n_clients
    for kind, ids in (
        (SIGN_FLIP, sign_flip_ids),
        (ADDITIVE_NOISE, additive_noise_ids),
        (UNRELIABLE, unreliable_ids),
    ):
        for i in ids:
            if roster[i] != BENIGN:
                raise ValueError(f"client {i} assigned two roles")
            roster[i] = kind
    return tuple(roster)


def mixed_roster(n_clients, n_attackers, unreliable_ids=()):
    """Evenly spread attackers, alternating sign-flip and additive-noise."""
    free = [i for i in range(n_clients) if i not in set(unreliable_ids)]
    picks = [free[j] for j in spread_ids(len(free), n_attackers)]
    return build_roster(n_clients, picks[0::2], picks[1::2], unreliable_ids)
