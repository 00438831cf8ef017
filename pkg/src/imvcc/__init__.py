"""Incomplete multi-view clustering with sub-vector spectral contrastive learning."""
from .data import (MultiViewDataset, ObservationMask, complete_index, generate_mask, load_dataset,
                   make_synthetic, normalize_minmax, save_dataset)
from .model import ModelConfig, ablation_config, build_models, loss_contrastive, loss_predict, loss_recon, total_loss
from .pipeline import ClusterReport, run_pipeline

__all__ = ["MultiViewDataset", "ObservationMask", "complete_index", "generate_mask", "load_dataset", "make_synthetic",
           "normalize_minmax", "save_dataset", "ModelConfig", "ablation_config", "build_models", "loss_contrastive",
           "loss_predict", "loss_recon", "total_loss", "ClusterReport", "run_pipeline"]
__version__ = "0.1.0"
