"""End-to-end run: mask -> train -> recover -> fuse -> k-means -> metrics."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cluster, metrics
from .data import MultiViewDataset, ObservationMask, complete_index, generate_mask, normalize_minmax, save_mask
from .diagnostics import spectrum
from .errors import ConfigError
from .model import ModelConfig
from .recover import export_embeddings, fuse, recover_latents
from .train import embed, pretrain, save_checkpoint, train_joint


@dataclass
class ClusterReport:
    labels: np.ndarray
    acc: float | None
    nmi: float | None
    ari: float | None
    inertia: float
    erank_sub: float  # mean over views of the effective rank of Z*
    erank_full: float
    trace: object = None
    state: object = None
    bundle: object = None
    features: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def scores(self) -> dict:
        return {"acc": self.acc, "nmi": self.nmi, "ari": self.ari}


def dataset_hash(ds: MultiViewDataset) -> str:
    h = hashlib.sha256()
    for x in ds.views:
        h.update(np.ascontiguousarray(x).tobytes())
    if ds.labels is not None:
        h.update(ds.labels.astype("<i8").tobytes())
    return h.hexdigest()


def config_hash(cfg: ModelConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()


def run_pipeline(ds: MultiViewDataset, cfg: ModelConfig, eta: float | None = None,
                 mask: ObservationMask | None = None, mask_seed: int | None = None,
                 run_dir=None, normalize=True, k: int | None = None) -> ClusterReport:
    """Train on ``ds`` under a mask and cluster the fused latents.

    Either pass ``mask`` or ``eta`` (the mask is then drawn with ``mask_seed``,
    defaulting to ``cfg.seed``). With ``run_dir`` the config, mask, trace,
    checkpoint, embeddings and a ``result.json`` are written there.
    """
    if normalize:
        ds = normalize_minmax(ds)
    k = ds.k if k is None else k
    if k is None:
        raise ConfigError("cluster count unknown: dataset has no labels and no k was given")
    if mask is None:
        mask = generate_mask(ds.n, ds.n_views, 0.0 if eta is None else eta,
                             cfg.seed if mask_seed is None else mask_seed)
    run_dir = None if run_dir is None else Path(run_dir)
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(cfg.to_json())
        save_mask(mask, run_dir / "mask.csv")

    state = pretrain(ds, mask, cfg)
    state = train_joint(state, ds, mask, cfg, trace_path=None if run_dir is None else run_dir / "trace.csv")
    bundle = recover_latents(state.final_models, embed(state, ds, mask), mask)
    feats = fuse(bundle, cfg.fusion)
    km = cluster.kmeans(feats.matrix, k, seed=cfg.seed, restarts=cfg.kmeans_restarts)
    scores = metrics.evaluate(ds.labels, km.labels) if ds.labels is not None else {"acc": None, "nmi": None, "ari": None}
    erank_sub = float(np.mean([spectrum(z).effective_rank for z in bundle.sub]))
    erank_full = float(np.mean([spectrum(z).effective_rank for z in bundle.Z]))
    report = ClusterReport(km.labels, scores["acc"], scores["nmi"], scores["ari"], km.inertia,
                           erank_sub, erank_full, state.trace, state, bundle, feats.matrix)

    if run_dir is not None:
        save_checkpoint(state.final_models, run_dir / "checkpoint.bin")
        export_embeddings(bundle, run_dir / "embeddings", feats)
        np.savetxt(run_dir / "embeddings" / "labels.csv", km.labels, fmt="%d")
        result = {
            "eta": mask.eta,
            "mask_seed": mask.seed,
            "seed": cfg.seed,
            "n": ds.n,
            "k": k,
            **scores,
            "inertia": km.inertia,
            "erank_sub": erank_sub,
            "erank_full": erank_full,
            "config_hash": config_hash(cfg),
            "dataset_hash": dataset_hash(ds),
            "dataset": ds.name,
        }
        (run_dir / "result.json").write_text(json.dumps(result, indent=2))
    return report


def hide_observed(mask: ObservationMask, seed: int = 0) -> ObservationMask:
    """Hide one random view of every complete row of ``mask``.

    Used to score recovery on samples whose true latents are all known.
    """
    rng = np.random.default_rng(seed)
    m = mask.mask.copy()
    rows = np.asarray(complete_index(mask), dtype=np.int64)
    m[rows, rng.integers(0, m.shape[1], size=rows.size)] = 0
    return ObservationMask(m, eta=mask.eta, seed=seed)


def recovery_fidelity(models, ds: MultiViewDataset, mask: ObservationMask, radius_factor=0.5) -> dict:
    """Score recovered latents against the latents of the views the mask hid.

    ``ds`` must still hold the hidden views (masking only hides rows). For
    each incomplete sample and missing view ``p`` the recovered latent is
    compared with ``f_ec^p(x^p)``; it counts as a hit when within
    ``radius_factor`` times the median pairwise distance between true view-p
    latents.
    """
    from scipy.spatial.distance import pdist

    from .recover import Provenance
    from .train import embed_models

    full = ObservationMask(np.ones_like(mask.mask), eta=0.0)
    truth = embed_models(models, ds, full, 1).Z
    bundle = recover_latents(models, embed_models(models, ds, mask, 1), mask)
    hits, total, per_view = 0, 0, {}
    for p, zt in enumerate(truth):
        rows = np.flatnonzero(bundle.provenance[:, p] == Provenance.RECOVERED)
        if not rows.size:
            continue
        radius = radius_factor * float(np.median(pdist(zt)))
        dist = np.linalg.norm(bundle.Z[p][rows] - zt[rows], axis=1)
        h = int(np.sum(dist <= radius))
        per_view[p] = {"hits": h, "total": int(rows.size), "radius": radius,
                       "median_error": float(np.median(dist))}
        hits += h
        total += rows.size
    return {"fraction": hits / total if total else 1.0, "hits": hits, "total": total, "views": per_view}
