"""Lloyd's k-means with k-means++ seeding and restarts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParameterError


@dataclass
class KmeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    restarts: int
    history: list = field(default_factory=list)  # inertia per iteration of the winning run


def _sqdist(x, c):
    out = np.empty((x.shape[0], c.shape[0]))
    for j in range(c.shape[0]):
        diff = x - c[j]
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def _plusplus(x, k, rng):
    n = x.shape[0]
    centres = [x[rng.integers(n)]]
    closest = ((x - centres[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centres.append(x[idx])
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(1))
    return np.array(centres)


def _assign(x, c, k):
    d = _sqdist(x, c)
    labels = d.argmin(1)
    # repair empty clusters: move the point of the largest cluster farthest
    # from its centroid (lowest index on ties) into the empty one
    counts = np.bincount(labels, minlength=k)
    for e in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(d[members, big]))]
        c[e] = x[far]
        labels[far] = e
        counts[big] -= 1
        counts[e] += 1
        d[:, e] = ((x - c[e]) ** 2).sum(1)
    inertia = float(d[np.arange(x.shape[0]), labels].sum())
    return labels, inertia


def _lloyd(x, k, rng, max_iter, tol):
    c = _plusplus(x, k, rng)
    labels, inertia = _assign(x, c, k)
    history = [inertia]
    it = 0
    for it in range(1, max_iter + 1):
        new = np.array([x[labels == j].mean(0) for j in range(k)])
        shift = float(np.sqrt(((new - c) ** 2).sum()))
        c = new
        labels, inertia = _assign(x, c, k)
        if inertia > history[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means inertia increased: {history[-1]} -> {inertia}")
        history.append(inertia)
        if shift < tol:
            break
    return KmeansResult(labels, c, inertia, it, 1, history)


def kmeans(x, k, seed=0, restarts=10, max_iter=300, tol=1e-6) -> KmeansResult:
    """Best-of-``restarts`` Lloyd's k-means.

    Each restart draws its own k-means++ initialisation from a child of
    ``seed``; the lowest inertia wins, earliest restart on ties.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"expected a matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError("k-means input contains non-finite values")
    if k < 1 or k > x.shape[0]:
        raise ParameterError(f"need 1 <= k <= N, got k={k}, N={x.shape[0]}")
    if restarts < 1:
        raise ParameterError("restarts must be positive")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        res = _lloyd(x, k, np.random.default_rng(child), max_iter, tol)
        if best is None or res.inertia < best.inertia:
            best = res
    best.restarts = restarts
    return best
