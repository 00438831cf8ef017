"""Per-view autoencoders, cross-view predictors, and the training objective.

The objective is ``Lz + lambda1 * Lc + lambda2 * Lr`` where

* ``Lz`` is the squared reconstruction error of each observed view,
* ``Lc`` is a spectral contrastive loss on the leading ``d0`` latent
  coordinates (the *sub-vectors*) of samples observed in every view,
* ``Lr`` is the squared error of predicting one view's latent from another's.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import ConfigError, ContractError, ParameterError, TrainingError
from .nn import Mlp, mlp_backward, mlp_forward

CONTRAST_MODES = ("full", "both", "sub")
FUSION_MODES = ("concat_sub", "concat_full")

# (use_Lr, use_Lc, use_Lz) in the row order of the loss ablation table
LOSS_ABLATIONS = (
    (False, False, True),
    (True, False, False),
    (False, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, False),
    (True, True, True),
)


@dataclass(frozen=True)
class ModelConfig:
    D: int = 64
    d0: int = 32
    lambda1: float = 1.0
    lambda2: float = 1.0
    encoder_hidden: tuple = (512, 256)
    predictor_hidden: tuple | None = None  # None -> (D,)
    lr: float = 1e-3
    epochs_pretrain: int = 100
    epochs_joint: int = 100
    batch: int = 0  # 0 -> full batch up to 5000 samples, else 256
    seed: int = 0
    use_recon: bool = True
    contrast_on: str = "sub"
    cross_negatives: bool = False
    symmetric_uniformity: bool = True
    self_pairs: bool = False
    detach_predict: bool = False
    recon_reduction: str = "mean"
    fusion: str = "concat_sub"
    kmeans_restarts: int = 10
    eval_every: int = 10

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(int(h) for h in self.encoder_hidden))
        if self.predictor_hidden is not None:
            object.__setattr__(self, "predictor_hidden", tuple(int(h) for h in self.predictor_hidden))
        if not 1 <= self.d0 <= self.D:
            raise ConfigError(f"need 1 <= d0 <= D, got d0={self.d0}, D={self.D}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.lr <= 0 or self.epochs_pretrain < 0 or self.epochs_joint < 0 or self.batch < 0:
            raise ConfigError("lr must be positive and epoch/batch counts non-negative")
        if any(h < 1 for h in self.encoder_hidden):
            raise ConfigError("hidden widths must be positive")
        if self.contrast_on not in CONTRAST_MODES:
            raise ConfigError(f"contrast_on must be one of {CONTRAST_MODES}")
        if self.recon_reduction not in ("sum", "mean"):
            raise ConfigError("recon_reduction must be 'sum' or 'mean'")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}")
        if self.kmeans_restarts < 1 or self.eval_every < 0:
            raise ConfigError("kmeans_restarts must be >= 1 and eval_every >= 0")

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        if self.predictor_hidden is not None:
            d["predictor_hidden"] = list(self.predictor_hidden)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))

    def effective_batch(self, n: int) -> int:
        if self.batch:
            return min(self.batch, n)
        return n if n <= 5000 else 256


@dataclass
class ViewModel:
    encoder: Mlp
    decoder: Mlp
    predictors: dict = field(default_factory=dict)  # target view -> Mlp

    def __post_init__(self):
        d = self.encoder.out_dim
        if self.decoder.in_dim != d:
            raise ContractError(f"decoder input {self.decoder.in_dim} != latent width {d}")
        for q, g in self.predictors.items():
            if g.in_dim != d or g.out_dim != d:
                raise ContractError(f"predictor to view {q} must map {d} -> {d}")


def build_models(dims, cfg: ModelConfig, rng=None) -> list[ViewModel]:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    hidden = list(cfg.encoder_hidden)
    pred_hidden = list(cfg.predictor_hidden) if cfg.predictor_hidden is not None else [cfg.D]
    models = []
    for m in dims:
        enc = Mlp.build([m, *hidden, cfg.D], rng)
        dec = Mlp.build([cfg.D, *hidden[::-1], m], rng)
        models.append(ViewModel(enc, dec))
    for q, vm in enumerate(models):
        for p in range(len(models)):
            if p != q:
                vm.predictors[p] = Mlp.build([cfg.D, *pred_hidden, cfg.D], rng)
    return models


def iter_nets(models):
    """Yield ``(name, net)`` in the canonical parameter order."""
    for v, vm in enumerate(models):
        yield f"view{v}.encoder", vm.encoder
        yield f"view{v}.decoder", vm.decoder
        for p in sorted(vm.predictors):
            yield f"view{v}.predict{p}", vm.predictors[p]


def model_parameters(models):
    names, params = [], []
    for name, net in iter_nets(models):
        names += net.param_names(name + ".")
        params += net.params()
    return names, params


def copy_models(models) -> list[ViewModel]:
    return [ViewModel(vm.encoder.copy(), vm.decoder.copy(), {p: g.copy() for p, g in vm.predictors.items()})
            for vm in models]


def touch(models):
    """Mark every network as modified (invalidates outstanding forward caches)."""
    for _, net in iter_nets(models):
        net.version += 1


# --------------------------------------------------------------------------
# losses

def loss_recon(vm: ViewModel, x, rows=None, reduction="sum"):
    """Squared reconstruction error of one view over ``rows``.

    Returns ``(loss, encoder_grads, decoder_grads)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if rows is not None:
        x = x[np.asarray(rows, dtype=np.int64)]
    if x.shape[0] == 0:
        zeros = lambda net: [np.zeros_like(p) for p in net.params()]
        return 0.0, zeros(vm.encoder), zeros(vm.decoder)
    z, ec = mlp_forward(vm.encoder, x)
    xh, dc = mlp_forward(vm.decoder, z)
    diff = xh - x
    scale = 1.0 if reduction == "sum" else 1.0 / x.shape[0]
    loss = float(np.sum(diff * diff)) * scale
    gdec, dz = mlp_backward(vm.decoder, dc, 2.0 * scale * diff)
    genc, _ = mlp_backward(vm.encoder, ec, dz)
    return loss, genc, gdec


def _uniformity(a, c, self_pairs=False):
    gram = a @ a.T
    if not self_pairs:
        np.fill_diagonal(gram, 0.0)
    return c * float(np.sum(gram * gram)), 4.0 * c * (gram @ a)


def loss_contrastive(sub, symmetric=True, cross_negatives=False, self_pairs=False):
    """Spectral contrastive loss over all unordered view pairs.

    ``sub`` holds V aligned ``B x d`` matrices. For each pair ``(v, n)`` the
    loss adds ``-(2/B) sum_i <a_i, b_i>`` and
    ``1/(2 C(B,2)) sum_i sum_{j != i} <a_i, a_j>^2``. With ``symmetric`` the
    second term is the average of that quantity over both views of the pair,
    so swapping views leaves the loss unchanged; otherwise only the first view
    of each pair contributes. ``cross_negatives`` adds the same penalty on
    ``<a_i, b_j>``, ``j != i``. ``self_pairs`` keeps the ``j == i`` terms in
    the within-view penalty; without them the loss is unbounded below once
    ``B`` exceeds the sub-vector width (a few mutually orthogonal rows can grow
    without limit).

    Returns ``(loss, grads)`` with one gradient matrix per view.
    """
    sub = [np.asarray(s, dtype=np.float64) for s in sub]
    if len(sub) < 2:
        raise ParameterError("need at least two views")
    b = sub[0].shape[0]
    if any(s.shape != sub[0].shape for s in sub):
        raise ContractError("sub-vector matrices must share one shape")
    if b < 2:
        raise ParameterError(f"need at least 2 aligned samples, got {b}")
    c = 1.0 / (2 * comb(b, 2))
    grads = [np.zeros_like(s) for s in sub]
    uni = [_uniformity(s, c, self_pairs) for s in sub]
    total = 0.0
    for v in range(len(sub)):
        for n in range(v + 1, len(sub)):
            a, bm = sub[v], sub[n]
            total += -2.0 / b * float(np.sum(a * bm))
            grads[v] += -2.0 / b * bm
            grads[n] += -2.0 / b * a
            if symmetric:
                total += 0.5 * (uni[v][0] + uni[n][0])
                grads[v] += 0.5 * uni[v][1]
                grads[n] += 0.5 * uni[n][1]
            else:
                total += uni[v][0]
                grads[v] += uni[v][1]
            if cross_negatives:
                h = a @ bm.T
                np.fill_diagonal(h, 0.0)
                total += c * float(np.sum(h * h))
                grads[v] += 2.0 * c * (h @ bm)
                grads[n] += 2.0 * c * (h.T @ a)
    return total, grads


def contrastive_pairs(n_views: int, batch: int, anchor=(0, 0)):
    """Enumerate the pairs formed with one anchor sub-vector.

    Returns ``(positives, negatives)`` as lists of ``(sample, view)``: the
    anchor's own sample in every other view is positive, everything else
    except the anchor itself is negative.
    """
    i0, v0 = anchor
    pos, neg = [], []
    for i in range(batch):
        for v in range(n_views):
            if (i, v) == (i0, v0):
                continue
            (pos if i == i0 else neg).append((i, v))
    return pos, neg


def loss_predict(models, Z, rows=None, detach=False):
    """Cross-view prediction loss.

    Sums ``||G^(q->p)(z_i^q) - z_i^p||^2`` over ordered view pairs and averages
    over the rows. Returns ``(loss, predictor_grads, dZ)`` where
    ``predictor_grads`` maps ``(q, p)`` to a gradient list and ``dZ`` holds one
    gradient matrix per view (zeros when ``detach``).
    """
    if rows is not None:
        rows = np.asarray(rows, dtype=np.int64)
        Z = [z[rows] for z in Z]
    Z = [np.asarray(z, dtype=np.float64) for z in Z]
    b = Z[0].shape[0]
    dZ = [np.zeros_like(z) for z in Z]
    pgrads = {}
    if b == 0:
        for q, vm in enumerate(models):
            for p, g in vm.predictors.items():
                pgrads[(q, p)] = [np.zeros_like(w) for w in g.params()]
        return 0.0, pgrads, dZ
    total = 0.0
    for q, vm in enumerate(models):
        for p in sorted(vm.predictors):
            g = vm.predictors[p]
            pred, cache = mlp_forward(g, Z[q])
            diff = pred - Z[p]
            total += float(np.sum(diff * diff)) / b
            dpred = 2.0 / b * diff
            gp, dzq = mlp_backward(g, cache, dpred)
            pgrads[(q, p)] = gp
            if not detach:
                dZ[q] += dzq
                dZ[p] -= dpred
    return total, pgrads, dZ


def total_loss(parts: dict, cfg: ModelConfig) -> float:
    for key in ("Lz", "Lc", "Lr"):
        if not np.isfinite(parts[key]):
            raise TrainingError(f"loss component {key} is not finite ({parts[key]})")
    wz = 1.0 if cfg.use_recon else 0.0
    return wz * parts["Lz"] + cfg.lambda1 * parts["Lc"] + cfg.lambda2 * parts["Lr"]


def ablation_config(cfg: ModelConfig, use_Lz=True, use_Lc=True, use_Lr=True, contrast_on=None) -> ModelConfig:
    """Switch loss terms off (and optionally redirect the contrastive loss)."""
    if not (use_Lz or use_Lc or use_Lr):
        raise ParameterError("at least one loss term must stay enabled")
    changes = dict(use_recon=bool(use_Lz))
    if not use_Lc:
        changes["lambda1"] = 0.0
    if not use_Lr:
        changes["lambda2"] = 0.0
    if contrast_on is not None:
        changes["contrast_on"] = contrast_on
    return dataclasses.replace(cfg, **changes)


# --------------------------------------------------------------------------
# full objective

@dataclass
class ObjectiveResult:
    parts: dict
    total: float
    grads: list  # aligned with model_parameters(models)
    input_grads: list | None = None


def objective(models, views, mask, cfg: ModelConfig, input_grads=False) -> ObjectiveResult:
    """Evaluate the weighted objective and its gradient on one batch.

    ``views`` are the batch's per-view matrices (all rows, masked ones
    included); ``mask`` is the matching ``B x V`` 0/1 array. Reconstruction
    uses every observed entry; the contrastive and prediction terms use the
    rows observed in every view.
    """
    mask = np.asarray(mask).astype(bool)
    n_views = len(models)
    wz = 1.0 if cfg.use_recon else 0.0
    complete = np.flatnonzero(mask.all(axis=1))
    obs = [np.flatnonzero(mask[:, v]) for v in range(n_views)]

    Z, enc_caches, dZ = [], [], []
    dec_grads = []
    lz = 0.0
    for v, vm in enumerate(models):
        x = np.asarray(views[v], dtype=np.float64)[obs[v]]
        z, ec = mlp_forward(vm.encoder, x)
        Z.append(z)
        enc_caches.append(ec)
        dz = np.zeros_like(z)
        if x.shape[0]:
            xh, dc = mlp_forward(vm.decoder, z)
            diff = xh - x
            scale = 1.0 if cfg.recon_reduction == "sum" else 1.0 / x.shape[0]
            lz += float(np.sum(diff * diff)) * scale
            gdec, dz_rec = mlp_backward(vm.decoder, dc, 2.0 * scale * wz * diff)
            dz += dz_rec
        else:
            gdec = [np.zeros_like(p) for p in vm.decoder.params()]
        dec_grads.append(gdec)
        dZ.append(dz)

    pos = [np.searchsorted(obs[v], complete) for v in range(n_views)]
    zc = [Z[v][pos[v]] for v in range(n_views)]

    lc = 0.0
    if complete.size >= 2:
        targets = {"sub": [cfg.d0], "full": [cfg.D], "both": [cfg.D, cfg.d0]}[cfg.contrast_on]
        for width in targets:
            val, g = loss_contrastive([z[:, :width] for z in zc], cfg.symmetric_uniformity,
                                      cfg.cross_negatives, cfg.self_pairs)
            lc += val
            for v in range(n_views):
                dZ[v][pos[v], :width] += cfg.lambda1 * g[v]

    lr, pgrads, dzr = loss_predict(models, zc, detach=cfg.detach_predict)
    for v in range(n_views):
        dZ[v][pos[v]] += cfg.lambda2 * dzr[v]

    grads, in_grads = [], []
    for v, vm in enumerate(models):
        genc, dx = mlp_backward(vm.encoder, enc_caches[v], dZ[v])
        grads += genc
        grads += dec_grads[v]
        for p in sorted(vm.predictors):
            grads += [cfg.lambda2 * g for g in pgrads[(v, p)]]
        if input_grads:
            full = np.zeros_like(np.asarray(views[v], dtype=np.float64))
            full[obs[v]] = dx
            in_grads.append(full)

    parts = {"Lz": lz, "Lc": lc, "Lr": lr}
    return ObjectiveResult(parts, total_loss(parts, cfg), grads, in_grads if input_grads else None)
