"""Latent bundles, cross-view imputation of missing latents, and view fusion."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .data import ObservationMask
from .errors import ContractError, DataError, ParameterError
from .nn import mlp_forward


class Provenance(IntEnum):
    OBSERVED = 0
    RECOVERED = 1
    ABSENT = 2


@dataclass
class LatentBundle:
    """Per-view latents ``Z[v]`` (N x D) with a per-entry provenance flag.

    Rows flagged ``ABSENT`` hold NaN.
    """

    Z: list
    d0: int
    provenance: np.ndarray  # N x V of Provenance values

    @property
    def sub(self) -> list:
        return [z[:, : self.d0] for z in self.Z]

    @property
    def n(self) -> int:
        return self.Z[0].shape[0]

    def copy(self) -> "LatentBundle":
        return LatentBundle([z.copy() for z in self.Z], self.d0, self.provenance.copy())


@dataclass
class FusedFeatures:
    matrix: np.ndarray
    fusion: str


def recover_latents(models, bundle: LatentBundle, mask: ObservationMask | None = None) -> LatentBundle:
    """Fill absent latents from observed views through the trained predictors.

    A missing ``z_i^p`` becomes the mean of ``G^(q->p)(z_i^q)`` over the
    views ``q`` that are observed for sample ``i``. Observed entries are
    copied through untouched.
    """
    prov = bundle.provenance
    if mask is not None and mask.mask.shape != prov.shape:
        raise ContractError(f"mask shape {mask.mask.shape} != bundle shape {prov.shape}")
    observed = prov == Provenance.OBSERVED
    if mask is not None:
        observed = observed & mask.mask.astype(bool)
    lost = np.flatnonzero(~observed.any(axis=1))
    if lost.size:
        raise DataError(f"samples {lost[:10].tolist()} have no observed view to recover from")
    out = bundle.copy()
    n_views = len(bundle.Z)
    for p in range(n_views):
        target = np.flatnonzero(~observed[:, p])
        if not target.size:
            continue
        acc = np.zeros((target.size, bundle.Z[p].shape[1]))
        count = np.zeros(target.size)
        for q in range(n_views):
            if q == p:
                continue
            src = observed[target, q]
            if not src.any():
                continue
            pred, _ = mlp_forward(models[q].predictors[p], bundle.Z[q][target[src]])
            acc[src] += pred
            count[src] += 1
        out.Z[p][target] = acc / count[:, None]
        out.provenance[target, p] = Provenance.RECOVERED
    return out


def fuse(bundle: LatentBundle, mode: str = "concat_sub") -> FusedFeatures:
    """Concatenate per-view sub-vectors (``concat_sub``) or full latents (``concat_full``)."""
    if np.any(bundle.provenance == Provenance.ABSENT):
        raise ContractError("bundle still has absent latents; recover them first")
    if mode == "concat_sub":
        parts = bundle.sub
    elif mode == "concat_full":
        parts = bundle.Z
    else:
        raise ParameterError(f"unknown fusion mode {mode!r}")
    return FusedFeatures(np.hstack(parts), mode)


def export_embeddings(bundle: LatentBundle, out_dir, fused: FusedFeatures | None = None) -> list[Path]:
    """Write ``latents.csv`` (one row per sample and view) and ``fused.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dim = bundle.Z[0].shape[1]
    path = out_dir / "latents.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "view"] + [f"dim{j}" for j in range(dim)] + ["provenance"])
        for i in range(bundle.n):
            for v, z in enumerate(bundle.Z):
                w.writerow([i, v] + [repr(float(a)) for a in z[i]] + [Provenance(bundle.provenance[i, v]).name.lower()])
    files = [path]
    if fused is not None:
        fpath = out_dir / "fused.csv"
        with open(fpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id"] + [f"f{j}" for j in range(fused.matrix.shape[1])])
            for i, row in enumerate(fused.matrix):
                w.writerow([i] + [repr(float(a)) for a in row])
        files.append(fpath)
    return files


def read_embeddings(path, d0: int) -> LatentBundle:
    """Inverse of the ``latents.csv`` part of :func:`export_embeddings`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 3
        recs = [(int(r[0]), int(r[1]), [float(a) for a in r[2:-1]], r[-1]) for r in reader]
    if not recs:
        raise DataError(f"{path}: no embedding rows")
    n = max(r[0] for r in recs) + 1
    n_views = max(r[1] for r in recs) + 1
    Z = [np.full((n, dim), np.nan) for _ in range(n_views)]
    prov = np.full((n, n_views), Provenance.ABSENT, dtype=np.int8)
    for i, v, vals, tag in recs:
        Z[v][i] = vals
        prov[i, v] = Provenance[tag.upper()]
    return LatentBundle(Z, d0, prov)
