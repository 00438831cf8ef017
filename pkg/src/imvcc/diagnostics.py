"""Singular-spectrum collapse diagnostics and per-epoch convergence traces."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParameterError

LOSS_COLUMNS = ("Lz", "Lc", "Lr", "total")
METRIC_COLUMNS = ("acc", "nmi", "ari")


@dataclass
class SpectrumReport:
    singular_values: np.ndarray  # descending
    effective_rank: float
    participation: float  # fraction of dimensions needed for 99% of the energy


def spectrum(emb, energy=0.99) -> SpectrumReport:
    """Spectrum of the column-centred embedding matrix.

    The effective rank is ``exp(-sum p_i log p_i)`` with ``p_i = s_i / sum(s)``.
    Singular values below the usual numerical-rank tolerance count as zero.
    """
    x = np.asarray(emb, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ParameterError(f"need an N x d matrix with N >= 2, got shape {x.shape}")
    x = x - x.mean(axis=0)
    s = np.linalg.svd(x, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return SpectrumReport(s, 1.0, 0.0)
    s = np.where(s > s[0] * max(x.shape) * np.finfo(float).eps, s, 0.0)
    p = s[s > 0] / s.sum()
    erank = float(np.exp(-np.sum(p * np.log(p))))
    e = np.cumsum(s**2) / np.sum(s**2)
    needed = int(np.searchsorted(e, energy - 1e-12) + 1)
    return SpectrumReport(s, erank, needed / x.shape[1])


def write_spectrum(report: SpectrumReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, report.singular_values, fmt="%.17g", header="singular_value", comments="")
    return path


class ConvergenceTrace:
    """Append-only per-epoch record of losses and, for labelled data, metrics.

    When ``path`` is given every row is flushed to a CSV as it is logged.
    """

    def __init__(self, path=None, with_metrics=True):
        self.columns = ("epoch",) + LOSS_COLUMNS + (METRIC_COLUMNS if with_metrics else ())
        self.rows: list[dict] = []
        self.path = None if path is None else Path(path)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)

    @property
    def with_metrics(self) -> bool:
        return "acc" in self.columns

    def log(self, epoch: int, losses: dict, metrics: dict | None = None) -> dict:
        if self.rows and epoch <= self.rows[-1]["epoch"]:
            raise ContractError(f"epoch {epoch} logged after epoch {self.rows[-1]['epoch']}")
        row = {"epoch": int(epoch)}
        for c in LOSS_COLUMNS:
            row[c] = float(losses[c])
        if self.with_metrics:
            for c in METRIC_COLUMNS:
                row[c] = None if not metrics else float(metrics[c])
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow(["" if row[c] is None else repr(row[c]) for c in self.columns])
        return row

    def column(self, name) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows])

    def summary(self) -> dict:
        out = {}
        for c in LOSS_COLUMNS:
            col = self.column(c)
            if col.size:
                out[c] = {"min": float(col.min()), "max": float(col.max()), "final": float(col[-1])}
        return out

    @classmethod
    def read(cls, path) -> "ConvergenceTrace":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            trace = cls(with_metrics="acc" in (reader.fieldnames or ()))
            for rec in reader:
                losses = {c: float(rec[c]) for c in LOSS_COLUMNS}
                metrics = None
                if trace.with_metrics and rec["acc"] != "":
                    metrics = {c: float(rec[c]) for c in METRIC_COLUMNS}
                trace.log(int(rec["epoch"]), losses, metrics)
        return trace
