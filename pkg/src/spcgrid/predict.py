"""Residual generation and scan-order reconstruction.

Quantize-then-predict: residuals are differences of already-quantized
integers, so the encoder computes them in parallel and the decoder's
sequential scan reproduces the quantized grid exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import GridError, InternalError
from .grid import VoxelGrid
from .quant import dequantize


@dataclass
class ResidualPlanes:
    """Integer residuals: coarse for every unpruned voxel, fine only for
    critical voxels (both scan order, one row per voxel)."""

    coarse: np.ndarray
    fine: np.ndarray

    def __post_init__(self):
        self.coarse = np.asarray(self.coarse, dtype=np.int64)
        self.fine = np.asarray(self.fine, dtype=np.int64)


def compute_residuals(qvals, graph):
    """Per unpruned voxel, residual = own quantized vector minus the
    reference's (the vector itself when there is no reference)."""
    q = np.asarray(qvals, dtype=np.int64)
    if q.shape[0] != graph.unpruned_ids.shape[0]:
        raise GridError(
            f"quantized rows {q.shape[0]} != unpruned voxels {graph.unpruned_ids.shape[0]}"
        )
    res = q.copy()
    src, dst = graph.edges()
    res[src] -= q[dst]
    return res


def reconstruct(coarse, fine, graph, masks, params, world_bounds):
    """Scan-order inverse of quantize+predict.

    Coarse layer: integer prediction loop then dequantize at q_step.  Fine
    layer: critical voxels add their refinement at q_fine.  Pruned voxels
    decode to the zero vector.
    """
    n = graph.unpruned_ids.shape[0]
    if np.any(graph.ref_pos >= np.arange(n)):
        raise InternalError("reference graph is not causal in scan order")
    qhat = backend.reconstruct_scan(np.asarray(coarse, dtype=np.int64), graph.ref_pos)
    vals = dequantize(qhat, params.q_step)
    fine = np.asarray(fine, dtype=np.int64)
    if fine.size:
        rows = masks.crit_rows
        if fine.shape[0] != rows.shape[0]:
            raise GridError(f"fine rows {fine.shape[0]} != critical voxels {rows.shape[0]}")
        vals[rows] += dequantize(fine, params.q_fine)
    nz, ny, nx = masks.pruned.shape
    channels = vals.shape[1]
    full = np.zeros((nz * ny * nx, channels), dtype=np.float64)
    full[graph.unpruned_ids] = vals
    return VoxelGrid((nx, ny, nz), channels, full.reshape(nz, ny, nx, channels), world_bounds)
