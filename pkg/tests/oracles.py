"""Independent reference computations used by the unit and acceptance tests.

Each one is deliberately naive (loops, brute force, grid search) and shares
no code with the package beyond the public loss function.
"""

import numpy as np

from minedetect.model import loss


def finite_difference_grad(params, layout, ds, h=1e-6):
    """Central differences of the mean cross-entropy, one coordinate at a time."""
    grad = np.empty_like(params)
    for j in range(params.size):
        e = np.zeros_like(params)
        e[j] = h
        grad[j] = (loss(params + e, layout, ds) - loss(params - e, layout, ds)) / (2 * h)
    return grad


def brute_krum_scores(points, f):
    n = len(points)
    k = n - f - 2
    scores = []
    for i in range(n):
        dists = sorted(
            sum((a - b) ** 2 for a, b in zip(points[i], points[j])) for j in range(n) if j != i
        )
        scores.append(sum(dists[:k]))
    return scores


def brute_krum(points, f):
    scores = brute_krum_scores(points, f)
    return min(range(len(points)), key=lambda i: (scores[i], i)), scores


def brute_multi_krum(points, f, m):
    """``(mean of the m best, their indices)`` with ties broken by index."""
    scores = brute_krum_scores(points, f)
    order = sorted(range(len(points)), key=lambda i: (scores[i], i))[:m]
    return [sum(points[i][c] for i in order) / m for c in range(len(points[0]))], order


def krum_fixtures(seed=2024):
    """Rosters of 3..6 updates in 1..3 dimensions, for every feasible f.

    Each shape comes once with continuous coordinates and once on a small
    integer lattice, which forces exact score ties.
    """
    rng = np.random.default_rng(seed)
    for n in range(3, 7):
        for d in (1, 2, 3):
            for f in range(0, n - 2):
                yield rng.normal(size=(n, d)).round(3), f
                yield rng.integers(-2, 3, size=(n, d)).astype(float), f


def geomed_objective(y, X):
    return float(sum(np.sqrt(((x - y) ** 2).sum()) for x in X))


def grid_geomed(X, levels=8, n=101):
    """Minimum of the 2-D geometric-median objective by zooming grid search.

    The first level is a dense 101 x 101 grid over the bounding box; each
    further level re-grids a box one tenth the size around the best point.
    The objective is convex, so zooming cannot lose the basin.
    """
    X = np.asarray(X, dtype=np.float64)
    lo, hi = X.min(axis=0) - 1.0, X.max(axis=0) + 1.0
    best = None
    for _ in range(levels):
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
        G = np.stack([gx.ravel(), gy.ravel()], axis=1)
        obj = np.linalg.norm(G[:, None, :] - X[None], axis=2).sum(axis=1)
        best = G[np.argmin(obj)]
        span = (hi - lo) / 10
        lo, hi = best - span, best + span
    return geomed_objective(best, X)
