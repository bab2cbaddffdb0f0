"""Voxel-grid storage, trilinear sampling, voxel importance, and the
quantile-based prune/critical masks.

Scan order everywhere is raster order with x fastest, then y, then z; a grid
array is stored (Nz, Ny, Nx, C) so that flattening yields scan order with
channels innermost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend
from .errors import GridError, GridFormatError, SpcgridError


@dataclass
class VoxelGrid:
    """Dense C-channel voxel grid over an axis-aligned world box.

    ``values`` has shape (Nz, Ny, Nx, C); ``dims`` is (Nx, Ny, Nz);
    ``world_bounds`` is a (2, 3) array of the box min/max corners.
    """

    dims: tuple
    channels: int
    values: np.ndarray
    world_bounds: np.ndarray

    def __post_init__(self):
        nx, ny, nz = self.dims
        self.values = np.asarray(self.values, dtype=np.float64)
        self.world_bounds = np.asarray(self.world_bounds, dtype=np.float64)
        if self.values.shape != (nz, ny, nx, self.channels):
            raise GridError(
                f"value array shape {self.values.shape} does not match "
                f"dims {self.dims} with {self.channels} channels"
            )
        if self.world_bounds.shape != (2, 3):
            raise GridError("world_bounds must be a (2, 3) min/max corner pair")
        if not np.all(self.world_bounds[0] < self.world_bounds[1]):
            raise GridError("world_bounds min must be strictly below max per axis")
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise GridError(f"non-finite grid value at flat index {bad}")

    @property
    def n_voxels(self):
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_size(self):
        nx, ny, nz = self.dims
        return (self.world_bounds[1] - self.world_bounds[0]) / np.array(
            [nx, ny, nz], dtype=np.float64
        )

    def copy(self):
        return VoxelGrid(self.dims, self.channels, self.values.copy(), self.world_bounds.copy())

    def flat(self):
        """Scan-order view (N, C)."""
        return self.values.reshape(-1, self.channels)


def import_grid(header, payload):
    """Build a VoxelGrid from a descriptor dict and a raw little-endian
    float32 payload (x fastest, then y, then z, channel innermost)."""
    try:
        nx, ny, nz = (int(v) for v in header["dims"])
        channels = int(header["channels"])
        bounds = np.asarray(header["world_bounds"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise GridFormatError(f"bad grid header: {exc}") from exc
    dtype = header.get("dtype", "f32le")
    if dtype != "f32le":
        raise GridFormatError(f"unsupported payload dtype {dtype!r}")
    expected = nx * ny * nz * channels * 4
    if len(payload) != expected:
        raise GridFormatError(f"expected {expected} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    finite = np.isfinite(flat)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise GridFormatError(f"non-finite value at flat index {bad}")
    values = flat.reshape(nz, ny, nx, channels)
    return VoxelGrid((nx, ny, nz), channels, values, bounds)


def export_grid(grid):
    """Inverse of :func:`import_grid`: (header dict, f32le payload bytes)."""
    header = {
        "dims": list(grid.dims),
        "channels": grid.channels,
        "world_bounds": grid.world_bounds.tolist(),
        "dtype": "f32le",
    }
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    return header, payload


def load_grid(json_path):
    """Load a grid from its JSON sidecar; the raw payload lives next to it."""
    path = Path(json_path)
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GridFormatError(f"cannot read grid descriptor {path}: {exc}") from exc
    data_name = header.get("data", path.stem + ".f32")
    data_path = path.parent / data_name
    try:
        payload = data_path.read_bytes()
    except OSError as exc:
        raise GridFormatError(f"cannot read grid payload {data_path}: {exc}") from exc
    return import_grid(header, payload)


def save_grid(grid, json_path):
    """Write the JSON sidecar plus raw payload next to it."""
    path = Path(json_path)
    header, payload = export_grid(grid)
    header["data"] = path.stem + ".f32"
    (path.parent / header["data"]).write_bytes(payload)
    path.write_text(json.dumps(header, indent=1))


def world_to_grid(bounds, dims, pts):
    """Map world points to continuous grid coordinates (gx,gy,gz).

    Voxel centers sit at integer coordinates; the volume spans
    [-0.5, N-0.5] per axis.
    """
    nx, ny, nz = dims
    size = (bounds[1] - bounds[0]) / np.array([nx, ny, nz], dtype=np.float64)
    return (np.asarray(pts, dtype=np.float64) - bounds[0]) / size - 0.5


def trilinear_sample(grid, point):
    """Trilinear blend of the 8 voxels surrounding a world-space point."""
    p = np.asarray(point, dtype=np.float64)
    if not (np.all(p >= grid.world_bounds[0]) and np.all(p <= grid.world_bounds[1])):
        raise GridError(f"sample point {p.tolist()} outside world bounds")
    g = world_to_grid(grid.world_bounds, grid.dims, p[None, :])
    return backend.trilinear_gather(grid.values, g)[0]


@dataclass
class ImportanceField:
    """Per-voxel accumulated rendering importance (nonnegative)."""

    dims: tuple
    score: np.ndarray  # (Nz, Ny, Nx)

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=np.float64)
        if np.any(self.score < 0) or not np.all(np.isfinite(self.score)):
            raise GridError("importance scores must be finite and nonnegative")


def compute_importance(model, rays, chunk=16384):
    """Accumulate (rendering weight x trilinear weight) per feature voxel.

    Deterministic for a fixed RaySet; chunking only batches the scatter and
    does not change results beyond float addition order.
    """
    from . import render  # local import; render depends on grid types

    if rays.origins.shape[0] == 0:
        raise SpcgridError("importance requires a nonempty ray set")
    grid_shape = model.features.values.shape[:3] + (1,)
    score = np.zeros(grid_shape, dtype=np.float64)
    for start in range(0, rays.origins.shape[0], chunk):
        sub = rays.slice(start, start + chunk)
        pts, w = render.density_weights(model, sub)
        if pts.shape[0]:
            score += backend.trilinear_scatter(pts, w[:, None], grid_shape)
    return ImportanceField(model.features.dims, score[..., 0])


def prune(imp, prune_quantile):
    """Prune the maximal ascending-score prefix holding at most
    ``prune_quantile`` of the total score; zero-score voxels always prune."""
    if not 0.0 <= prune_quantile < 1.0:
        raise SpcgridError(f"prune quantile {prune_quantile} outside [0, 1)")
    scores = imp.score.ravel()
    order = np.argsort(scores, kind="stable")
    cum = np.cumsum(scores[order])
    total = cum[-1] if cum.size else 0.0
    if total <= 0.0:
        raise SpcgridError("scene renders to nothing: total importance is zero")
    k = int(np.searchsorted(cum, prune_quantile * total, side="right"))
    mask = np.zeros(scores.shape[0], dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(imp.score.shape)


def mark_critical(imp, pruned, keep_quantile):
    """Mark the minimal descending-score prefix of unpruned voxels holding at
    least ``keep_quantile`` of the unpruned score."""
    if not 0.0 < keep_quantile <= 1.0:
        raise SpcgridError(f"keep quantile {keep_quantile} outside (0, 1]")
    scores = imp.score.ravel()
    alive = np.flatnonzero(~pruned.ravel())
    if alive.size == 0:
        raise SpcgridError("no unpruned voxels to mark critical")
    sub = scores[alive]
    order = np.argsort(-sub, kind="stable")
    cum = np.cumsum(sub[order])
    m = int(np.searchsorted(cum, keep_quantile * cum[-1], side="left")) + 1
    mask = np.zeros(scores.shape[0], dtype=bool)
    mask[alive[order[:m]]] = True
    return mask.reshape(imp.score.shape)


@dataclass
class Masks:
    """Prune + critical bit fields (True = pruned / critical)."""

    pruned: np.ndarray
    critical: np.ndarray

    def __post_init__(self):
        self.pruned = np.asarray(self.pruned, dtype=bool)
        self.critical = np.asarray(self.critical, dtype=bool)
        if self.pruned.shape != self.critical.shape:
            raise GridError("mask shapes differ")
        if np.any(self.pruned & self.critical):
            raise GridError("critical voxels must not be pruned")

    @property
    def unpruned_ids(self):
        return np.flatnonzero(~self.pruned.ravel())

    @property
    def n_unpruned(self):
        return int((~self.pruned).sum())

    @property
    def n_critical(self):
        return int(self.critical.sum())

    @property
    def crit_rows(self):
        """Positions of critical voxels within the unpruned scan sequence."""
        return np.flatnonzero(self.critical.ravel()[self.unpruned_ids])
