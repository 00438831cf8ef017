"""Two-stage training (reconstruction pretraining, then the joint objective)."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cluster, metrics
from .data import MultiViewDataset, ObservationMask
from .diagnostics import ConvergenceTrace
from .errors import ConfigError, ContractError, DataError, TrainingError
from .model import ModelConfig, build_models, copy_models, iter_nets, model_parameters, objective, touch
from .nn import AdamState, adam_step, mlp_forward, mlp_from_bytes, mlp_to_bytes
from .recover import LatentBundle, Provenance, fuse, recover_latents

log = logging.getLogger(__name__)


@dataclass
class RunState:
    models: list
    optimizer: AdamState
    names: list
    cfg: ModelConfig
    rng: np.random.Generator
    pretrain_epochs: int = 0
    joint_epochs: int = 0
    pretrain_losses: list = field(default_factory=list)
    best_models: list | None = None
    best_loss: float = np.inf
    best_history: list = field(default_factory=list)
    trace: ConvergenceTrace | None = None

    @property
    def final_models(self) -> list:
        return self.best_models if self.best_models is not None else self.models


def init_state(ds: MultiViewDataset, cfg: ModelConfig) -> RunState:
    rng = np.random.default_rng(cfg.seed)
    models = build_models(ds.dims, cfg, rng)
    names, params = model_parameters(models)
    opt = AdamState.for_params(params, lr=cfg.lr)
    return RunState(models, opt, names, cfg, rng)


def _check_inputs(ds: MultiViewDataset, mask: ObservationMask):
    if mask.mask.shape != (ds.n, ds.n_views):
        raise ContractError(f"mask shape {mask.mask.shape} does not match dataset ({ds.n}, {ds.n_views})")


def _batches(state: RunState, n: int):
    bs = state.cfg.effective_batch(n)
    if bs >= n:
        return [np.arange(n)]
    order = state.rng.permutation(n)
    return [np.sort(order[i:i + bs]) for i in range(0, n, bs)]


def _epoch(state: RunState, ds, mask, cfg, epoch_label):
    """One pass over the data. Returns (mean parts, mean total, pre-step snapshot or None)."""
    _, params = model_parameters(state.models)
    batches = _batches(state, ds.n)
    sums = {"Lz": 0.0, "Lc": 0.0, "Lr": 0.0}
    total = 0.0
    snapshot = None
    for idx in batches:
        try:
            res = objective(state.models, [x[idx] for x in ds.views], mask.mask[idx], cfg)
        except TrainingError as exc:
            raise TrainingError(f"{epoch_label}: {exc}") from None
        for k in sums:
            sums[k] += res.parts[k] / len(batches)
        total += res.total / len(batches)
        if len(batches) == 1 and res.total < state.best_loss:
            snapshot = copy_models(state.models)
        try:
            adam_step(params, res.grads, state.optimizer, state.names)
        except TrainingError as exc:
            raise TrainingError(f"{epoch_label}: {exc}") from None
        touch(state.models)
    if len(batches) > 1 and total < state.best_loss:
        snapshot = copy_models(state.models)
    return sums, total, snapshot


def pretrain(ds: MultiViewDataset, mask: ObservationMask, cfg: ModelConfig, state: RunState | None = None) -> RunState:
    """Fit encoders and decoders on the reconstruction loss of observed entries.

    Skipped when ``cfg.use_recon`` is off, so ablations without the
    reconstruction term never see it.
    """
    _check_inputs(ds, mask)
    state = init_state(ds, cfg) if state is None else state
    if not cfg.use_recon:
        return state
    recon_only = dataclasses.replace(cfg, lambda1=0.0, lambda2=0.0, use_recon=True)
    for e in range(cfg.epochs_pretrain):
        parts, _, _ = _epoch(state, ds, mask, recon_only, f"pretrain epoch {e}")
        state.pretrain_losses.append(parts["Lz"])
        state.pretrain_epochs += 1
    return state


def _snapshot_metrics(models, ds, mask, cfg, k):
    bundle = recover_latents(models, embed_models(models, ds, mask, cfg.d0), mask)
    feats = fuse(bundle, cfg.fusion).matrix
    res = cluster.kmeans(feats, k, seed=cfg.seed, restarts=min(3, cfg.kmeans_restarts))
    return metrics.evaluate(ds.labels, res.labels)


def train_joint(state: RunState, ds: MultiViewDataset, mask: ObservationMask, cfg: ModelConfig | None = None,
                trace_path=None) -> RunState:
    """Optimise the weighted objective for ``cfg.epochs_joint`` epochs, logging a trace."""
    cfg = state.cfg if cfg is None else cfg
    _check_inputs(ds, mask)
    n_complete = int(mask.mask.all(axis=1).sum())
    if cfg.lambda1 > 0 and n_complete < 2 or cfg.lambda2 > 0 and n_complete < 1:
        raise ConfigError(f"only {n_complete} complete samples; contrastive/prediction losses are undefined")
    labelled = ds.labels is not None
    if state.trace is None:
        state.trace = ConvergenceTrace(trace_path, with_metrics=labelled)
    for e in range(cfg.epochs_joint):
        parts, total, snapshot = _epoch(state, ds, mask, cfg, f"joint epoch {e}")
        if snapshot is not None:
            state.best_models, state.best_loss = snapshot, total
        state.best_history.append(state.best_loss)
        scores = None
        last = e == cfg.epochs_joint - 1
        if labelled and cfg.eval_every and (e % cfg.eval_every == 0 or last):
            scores = _snapshot_metrics(state.models, ds, mask, cfg, ds.k)
        state.trace.log(state.joint_epochs, {**parts, "total": total}, scores)
        state.joint_epochs += 1
    if cfg.epochs_joint == 0 and state.best_models is None:
        state.best_models = copy_models(state.models)
    return state


def embed_models(models, ds: MultiViewDataset, mask: ObservationMask, d0: int) -> LatentBundle:
    Z, prov = [], np.full(mask.mask.shape, Provenance.ABSENT, dtype=np.int8)
    for v, vm in enumerate(models):
        rows = mask.observed(v)
        z = np.full((ds.n, vm.encoder.out_dim), np.nan)
        if rows.size:
            z[rows] = mlp_forward(vm.encoder, ds.views[v][rows])[0]
        prov[rows, v] = Provenance.OBSERVED
        Z.append(z)
    return LatentBundle(Z, d0, prov)


def embed(state: RunState, ds: MultiViewDataset, mask: ObservationMask) -> LatentBundle:
    """Latents of the observed entries under the selected checkpoint; the rest flagged absent."""
    _check_inputs(ds, mask)
    return embed_models(state.final_models, ds, mask, state.cfg.d0)


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(models, path) -> tuple[Path, Path]:
    """Concatenated ``MLP1`` blobs in ``path`` plus a JSON manifest of byte ranges."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest, blobs, off = [], [], 0
    for name, net in iter_nets(models):
        blob = mlp_to_bytes(net)
        manifest.append({"name": name, "offset": off, "length": len(blob)})
        blobs.append(blob)
        off += len(blob)
    path.write_bytes(b"".join(blobs))
    side = path.with_suffix(".json")
    side.write_text(json.dumps({"n_views": len(models), "nets": manifest}, indent=2))
    return path, side


def load_checkpoint(path) -> list:
    from .model import ViewModel

    path = Path(path)
    blob = path.read_bytes()
    meta = json.loads(path.with_suffix(".json").read_text())
    nets = {}
    for rec in meta["nets"]:
        nets[rec["name"]] = mlp_from_bytes(blob[rec["offset"]: rec["offset"] + rec["length"]])
    models = []
    for v in range(meta["n_views"]):
        preds = {}
        for name, net in nets.items():
            if name.startswith(f"view{v}.predict"):
                preds[int(name[len(f"view{v}.predict"):])] = net
        try:
            models.append(ViewModel(nets[f"view{v}.encoder"], nets[f"view{v}.decoder"], preds))
        except KeyError as exc:
            raise DataError(f"{path}: checkpoint lacks {exc}") from None
    return models
