"""Multi-view datasets, observation masks and their on-disk formats."""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError

PACKED_MAGIC = b"MVC1"


@dataclass(frozen=True)
class MultiViewDataset:
    """V aligned feature matrices over the same N samples.

    ``labels`` is optional; when present ``k`` is the number of classes and
    every class id in ``[0, k)`` occurs at least once.
    """

    views: tuple
    labels: np.ndarray | None = None
    k: int | None = None
    name: str = "dataset"

    def __post_init__(self):
        views = tuple(np.array(v, dtype=np.float64, copy=True) for v in self.views)
        if len(views) < 2:
            raise DataError(f"need at least 2 views, got {len(views)}")
        for i, v in enumerate(views):
            if v.ndim != 2 or v.shape[1] < 1:
                raise DataError(f"view {i} must be a 2-D matrix with >=1 column, got shape {v.shape}")
        rows = [v.shape[0] for v in views]
        if len(set(rows)) != 1:
            detail = ", ".join(f"view {i}: {r} rows" for i, r in enumerate(rows))
            raise DataError(f"row-count mismatch between views ({detail})")
        if rows[0] < 2:
            raise DataError(f"need at least 2 samples, got {rows[0]}")
        for i, v in enumerate(views):
            if not np.all(np.isfinite(v)):
                r, c = np.argwhere(~np.isfinite(v))[0]
                raise DataError(f"view {i} has a non-finite value at row {r}, column {c}")
            v.setflags(write=False)
        object.__setattr__(self, "views", views)

        labels, k = self.labels, self.k
        if labels is not None:
            labels = np.asarray(labels)
            if labels.ndim != 1 or labels.shape[0] != rows[0]:
                raise DataError(f"expected {rows[0]} labels, got shape {labels.shape}")
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.isfinite(labels)) or np.any(labels != np.round(labels)):
                    raise DataError("labels must be integers")
            labels = labels.astype(np.int64)
            if labels.min() < 0:
                raise DataError("labels must be non-negative")
            if k is None:
                k = int(labels.max()) + 1
            if labels.max() >= k:
                raise DataError(f"label {labels.max()} outside [0, {k})")
            missing = np.setdiff1d(np.arange(k), labels)
            if missing.size:
                raise DataError(f"classes {missing.tolist()} have no samples")
            labels.setflags(write=False)
        if k is not None and int(k) < 1:
            raise DataError(f"cluster count must be positive, got {k}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "k", None if k is None else int(k))

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]


@dataclass(frozen=True)
class ObservationMask:
    """N x V 0/1 matrix of observed views, with the missing rate that produced it."""

    mask: np.ndarray
    eta: float = 0.0
    seed: int = 0
    _complete: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.shape[1] < 2:
            raise DataError(f"mask must be N x V with V >= 2, got shape {m.shape}")
        if not np.all((m == 0) | (m == 1)):
            raise DataError("mask entries must be 0 or 1")
        m = m.astype(np.int8)
        empty = np.flatnonzero(m.sum(axis=1) == 0)
        if empty.size:
            raise DataError(f"rows {empty[:10].tolist()} have no observed view")
        if not 0.0 <= self.eta < 1.0:
            raise ParameterError(f"eta must lie in [0, 1), got {self.eta}")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "_complete", np.flatnonzero(m.all(axis=1)))

    @property
    def n(self) -> int:
        return self.mask.shape[0]

    @property
    def n_views(self) -> int:
        return self.mask.shape[1]

    def observed(self, v: int) -> np.ndarray:
        """Sorted row indices where view ``v`` is observed."""
        return np.flatnonzero(self.mask[:, v])


def complete_count(n: int, eta: float) -> int:
    """round(n * (1 - eta)) with half-up rounding, computed in decimal."""
    exact = Decimal(int(n)) * (Decimal(1) - Decimal(repr(float(eta))))
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def generate_mask(n: int, v: int, eta: float, seed: int = 0) -> ObservationMask:
    """Randomly remove views from a fraction ``eta`` of the samples.

    Exactly ``complete_count(n, eta)`` rows stay complete. With two views every
    other row keeps one view chosen uniformly; with more views it keeps a
    uniformly chosen nonempty proper subset.
    """
    if not 0.0 <= eta < 1.0:
        raise ParameterError(f"eta must lie in [0, 1), got {eta}")
    if v < 2:
        raise ParameterError(f"need at least 2 views, got {v}")
    if n < 1 or Decimal(int(n)) * (Decimal(1) - Decimal(repr(float(eta)))) < 1:
        raise ParameterError(f"n*(1-eta) must be >= 1 (n={n}, eta={eta})")
    rng = np.random.default_rng(seed)
    m = complete_count(n, eta)
    order = rng.permutation(n)
    incomplete = np.sort(order[m:])
    mask = np.ones((n, v), dtype=np.int8)
    if incomplete.size:
        if v == 2:
            keep = rng.integers(0, 2, size=incomplete.size)
            mask[incomplete] = 0
            mask[incomplete, keep] = 1
        else:
            # subsets encoded as bitmasks 1 .. 2^v - 2 (excludes empty and full)
            codes = rng.integers(1, 2**v - 1, size=incomplete.size)
            bits = (codes[:, None] >> np.arange(v)[None, :]) & 1
            mask[incomplete] = bits.astype(np.int8)
    return ObservationMask(mask, eta=float(eta), seed=int(seed))


def complete_index(mask: ObservationMask) -> list[int]:
    return mask._complete.tolist()


def normalize_minmax(ds: MultiViewDataset) -> MultiViewDataset:
    """Rescale every column of every view to [0, 1]; constant columns become 0."""
    views = []
    for x in ds.views:
        lo = x.min(axis=0)
        span = x.max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        y = np.where(span > 0, (x - lo) / safe, 0.0)
        # exact endpoints keep the map idempotent
        y = np.clip(y, 0.0, 1.0)
        views.append(y)
    return MultiViewDataset(views, labels=ds.labels, k=ds.k, name=ds.name)


# --------------------------------------------------------------------------
# file formats

def _read_csv_matrix(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for r, record in enumerate(csv.reader(fh)):
            if not record or all(not c.strip() for c in record):
                continue
            vals = []
            for c, cell in enumerate(record):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: unparseable cell {cell!r} at row {r}, column {c}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{path}: row {r} has {len(vals)} columns, expected {width}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float64)
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"{path}: non-finite value at row {r}, column {c}")
    return x


def _read_labels(path: Path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for r, line in enumerate(fh):
            s = line.strip()
            if not s:
                raise DataError(f"{path}: missing label value at row {r}")
            try:
                out.append(int(s))
            except ValueError:
                raise DataError(f"{path}: unparseable label {s!r} at row {r}") from None
    return np.array(out, dtype=np.int64)


def _csv_prefix(path: Path) -> Path:
    if path.is_dir():
        hits = sorted(path.glob("*.view0.csv"))
        if len(hits) != 1:
            raise DataError(f"{path}: expected exactly one '*.view0.csv', found {len(hits)}")
        return hits[0].with_name(hits[0].name[: -len(".view0.csv")])
    return path


def load_dataset(path, fmt: str = "csv", k: int | None = None) -> MultiViewDataset:
    """Load a dataset stored as ``csv`` (one file per view) or ``packed`` binary.

    For ``csv`` the path is the common prefix ``<dir>/<name>`` (or a directory
    holding exactly one such dataset); files are ``<name>.view<k>.csv`` and an
    optional ``<name>.labels.csv``.
    """
    path = Path(path)
    if fmt in ("csv", "csv-per-view"):
        prefix = _csv_prefix(path)
        files = []
        while True:
            f = prefix.with_name(f"{prefix.name}.view{len(files)}.csv")
            if not f.exists():
                break
            files.append(f)
        if not files:
            raise DataError(f"no view files found for prefix {prefix}")
        views = [_read_csv_matrix(f) for f in files]
        rows = [v.shape[0] for v in views]
        if len(set(rows)) != 1:
            detail = ", ".join(f"{f.name}: {r} rows" for f, r in zip(files, rows))
            raise DataError(f"row-count mismatch between views ({detail})")
        lab_file = prefix.with_name(f"{prefix.name}.labels.csv")
        labels = _read_labels(lab_file) if lab_file.exists() else None
        if labels is not None and labels.shape[0] != rows[0]:
            raise DataError(f"{lab_file}: {labels.shape[0]} labels for {rows[0]} samples")
        return MultiViewDataset(views, labels=labels, k=k, name=prefix.name)
    if fmt in ("packed", "packed-binary"):
        return _load_packed(path, k)
    raise ParameterError(f"unknown dataset format {fmt!r}")


def save_dataset(ds: MultiViewDataset, path, fmt: str = "csv") -> list[Path]:
    """Write ``ds``; returns the files created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt in ("csv", "csv-per-view"):
        out = []
        for i, x in enumerate(ds.views):
            f = path.with_name(f"{path.name}.view{i}.csv")
            np.savetxt(f, x, delimiter=",", fmt="%.17g")
            out.append(f)
        if ds.labels is not None:
            f = path.with_name(f"{path.name}.labels.csv")
            np.savetxt(f, ds.labels, fmt="%d")
            out.append(f)
        return out
    if fmt in ("packed", "packed-binary"):
        with open(path, "wb") as fh:
            fh.write(PACKED_MAGIC)
            fh.write(struct.pack("<II", ds.n_views, ds.n))
            fh.write(struct.pack(f"<{ds.n_views}I", *ds.dims))
            for x in ds.views:
                fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
            if ds.labels is not None:
                fh.write(ds.labels.astype("<u4").tobytes())
        return [path]
    raise ParameterError(f"unknown dataset format {fmt!r}")


def _load_packed(path: Path, k: int | None) -> MultiViewDataset:
    blob = path.read_bytes()
    if blob[:4] != PACKED_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}")
    try:
        n_views, n = struct.unpack_from("<II", blob, 4)
        dims = struct.unpack_from(f"<{n_views}I", blob, 12)
    except struct.error:
        raise DataError(f"{path}: truncated header") from None
    off = 12 + 4 * n_views
    views = []
    for m in dims:
        size = 8 * n * m
        if off + size > len(blob):
            raise DataError(f"{path}: truncated matrix data")
        views.append(np.frombuffer(blob, dtype="<f8", count=n * m, offset=off).reshape(n, m))
        off += size
    rest = len(blob) - off
    labels = None
    if rest == 4 * n:
        labels = np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int64)
    elif rest != 0:
        raise DataError(f"{path}: {rest} trailing bytes do not form a label block")
    return MultiViewDataset(views, labels=labels, k=k, name=path.stem)


def save_mask(mask: ObservationMask, path) -> tuple[Path, Path]:
    """Write ``<path>`` as 0/1 CSV and ``<path stem>.json`` with {eta, seed, n, v}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, mask.mask, delimiter=",", fmt="%d")
    side = path.with_suffix(".json")
    side.write_text(json.dumps({"eta": mask.eta, "seed": mask.seed, "n": mask.n, "v": mask.n_views}, indent=2))
    return path, side


def load_mask(path) -> ObservationMask:
    path = Path(path)
    m = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    meta = json.loads(path.with_suffix(".json").read_text())
    if m.shape != (meta["n"], meta["v"]):
        raise DataError(f"{path}: shape {m.shape} disagrees with sidecar ({meta['n']}, {meta['v']})")
    return ObservationMask(m, eta=meta["eta"], seed=meta["seed"])


# --------------------------------------------------------------------------
# synthetic data

def make_synthetic(n: int = 300, k: int = 3, v: int = 2, sep: float = 5.0, seed: int = 0,
                   latent_dim: int = 8, dims=None, noise: float = 0.05) -> MultiViewDataset:
    """Gaussian clusters in a shared latent space, observed through V random
    nonlinear maps.

    Cluster centres sit at ``sep`` times orthogonal unit vectors, with unit
    within-cluster spread. Each view applies its own random linear map, a tanh,
    a second random linear map, and small private Gaussian noise.
    """
    if k < 1 or n < 2 * k:
        raise ParameterError(f"need n >= 2k (n={n}, k={k})")
    if sep <= 0:
        raise ParameterError(f"sep must be positive, got {sep}")
    if v < 2:
        raise ParameterError(f"need at least 2 views, got {v}")
    if dims is None:
        dims = [20 + 10 * i for i in range(v)]
    if len(dims) != v:
        raise ParameterError(f"{len(dims)} view widths given for {v} views")
    rng = np.random.default_rng(seed)
    latent_dim = max(latent_dim, k)
    q, _ = np.linalg.qr(rng.standard_normal((latent_dim, latent_dim)))
    centres = sep * q[:k]
    labels = rng.permutation(np.arange(n) % k)
    latent = centres[labels] + rng.standard_normal((n, latent_dim))
    scale = 1.0 / (sep + 1.0)
    views = []
    for m in dims:
        hidden = 2 * m
        a = rng.standard_normal((latent_dim, hidden)) * scale
        b = rng.standard_normal(hidden) * 0.5
        c = rng.standard_normal((hidden, m)) / np.sqrt(hidden)
        x = np.tanh(latent @ a + b) @ c
        x = x + noise * x.std() * rng.standard_normal(x.shape)
        views.append(x)
    return MultiViewDataset(views, labels=labels, k=k, name=f"synth_n{n}_k{k}_v{v}_s{seed}")
