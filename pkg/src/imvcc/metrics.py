"""Clustering accuracy, NMI and ARI computed from the contingency table."""
from __future__ import annotations

from fractions import Fraction
from math import comb

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError


def _check(truth, pred, min_len=1):
    t = np.asarray(truth).reshape(-1)
    p = np.asarray(pred).reshape(-1)
    if t.shape != p.shape:
        raise ContractError(f"label vectors differ in length: {t.size} vs {p.size}")
    if t.size < min_len:
        raise ContractError(f"need at least {min_len} labels")
    return t, p


def contingency(truth, pred) -> np.ndarray:
    """Counts ``m[i, j]`` of samples with the i-th true class and j-th predicted cluster.

    Rows and columns follow the sorted unique label values.
    """
    t, p = _check(truth, pred)
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    kt, kp = ti.max() + 1, pi.max() + 1
    return np.bincount(ti * kp + pi, minlength=kt * kp).reshape(kt, kp)


def assignment_map(counts) -> np.ndarray:
    """Column assigned to each row so that the matched total is maximal.

    Rectangular inputs are padded with zeros to square; the returned array has
    one entry per row of the padded matrix.
    """
    c = np.asarray(counts, dtype=np.float64)
    k = max(c.shape)
    sq = np.zeros((k, k))
    sq[: c.shape[0], : c.shape[1]] = c
    rows, cols = linear_sum_assignment(sq, maximize=True)
    perm = np.empty(k, dtype=np.int64)
    perm[rows] = cols
    return perm


def acc(truth, pred) -> float:
    m = contingency(truth, pred)
    perm = assignment_map(m)
    k = max(m.shape)
    sq = np.zeros((k, k), dtype=np.int64)
    sq[: m.shape[0], : m.shape[1]] = m
    return float(sq[np.arange(k), perm].sum()) / m.sum()


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(truth, pred) -> float:
    """Mutual information over the arithmetic mean of the two entropies (natural log).

    When either side is a single cluster the ratio is 0/0; it is taken as 1
    if both sides are a single cluster and 0 otherwise.
    """
    m = contingency(truth, pred)
    n = m.sum()
    q, p = m.sum(axis=1), m.sum(axis=0)
    h_t, h_p = _entropy(q, n), _entropy(p, n)
    if m.shape[0] == 1 and m.shape[1] == 1:
        return 1.0
    if m.shape[0] == 1 or m.shape[1] == 1:
        return 0.0
    nz = m > 0
    outer = np.outer(q, p)
    mi = float(np.sum(m[nz] / n * np.log(m[nz] * n / outer[nz])))
    return float(min(max(2.0 * mi / (h_t + h_p), 0.0), 1.0))


def ari(truth, pred) -> float:
    """Adjusted Rand index with exact integer pair counts; 0 when undefined."""
    t, p = _check(truth, pred, min_len=2)
    m = contingency(t, p)
    n = int(m.sum())
    index = sum(comb(int(x), 2) for x in m.ravel())
    sum_a = sum(comb(int(x), 2) for x in m.sum(axis=1))
    sum_b = sum(comb(int(x), 2) for x in m.sum(axis=0))
    expected = Fraction(sum_a * sum_b, comb(n, 2))
    top = Fraction(sum_a + sum_b, 2) - expected
    if top == 0:
        return 0.0
    return float((index - expected) / top)


def evaluate(truth, pred) -> dict:
    return {"acc": acc(truth, pred), "nmi": nmi(truth, pred), "ari": ari(truth, pred)}
