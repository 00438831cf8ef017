"""
Checking hand-written backpropagation
=====================================

Every network and loss in the package is differentiated by hand. Here the
full weighted objective of a two-view model is compared against central
finite differences on a random tiny instance.
"""

import dataclasses

import numpy as np

from imvcc.model import ModelConfig, build_models, model_parameters, objective
from imvcc.nn import grad_check

rng = np.random.default_rng(0)
cfg = ModelConfig(D=8, d0=4, encoder_hidden=(12,), predictor_hidden=(8,))
models = build_models([6, 9], cfg, rng)

# six samples; the last one lacks its second view
views = [rng.normal(size=(6, 6)), rng.normal(size=(6, 9))]
mask = np.ones((6, 2), dtype=np.int8)
mask[5, 1] = 0

names, params = model_parameters(models)
print(f"{len(params)} parameter arrays, {sum(p.size for p in params)} scalars")

for label, over in [("reconstruction", dict(lambda1=0.0, lambda2=0.0)),
                    ("contrastive", dict(use_recon=False, lambda2=0.0)),
                    ("prediction", dict(use_recon=False, lambda1=0.0)),
                    ("all three", {})]:
    c = dataclasses.replace(cfg, **over)

    def loss():
        res = objective(models, views, mask, c)
        return res.total, res.grads

    rep = grad_check(loss, params, n_coords=300, loss_floor=1e-5)
    worst = names[rep.worst[0]]
    print(f"{label:15s} max relative error {rep.max_rel_error:.2e} (worst in {worst})")
