"""Differentiable bitrate surrogates and the Lagrangian rate-distortion loss.

The coded-bits proxy is the mean L1 difference across reference edges
(exponential residual model; constants and the 1/q_step factor are absorbed
into the trade-off factor lambda).  Gradients are exact L1 subgradients with
the tie value pinned at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpcgridError

STAGE_MAIN = "main"
STAGE_POST = "post"


@dataclass(frozen=True)
class RateConfig:
    """Trade-off factor and finetuning stage."""

    lambda_: float = 1e-4
    stage: str = STAGE_MAIN

    def __post_init__(self):
        if self.lambda_ < 0:
            raise SpcgridError("lambda must be nonnegative")
        if self.stage not in (STAGE_MAIN, STAGE_POST):
            raise SpcgridError(f"unknown stage {self.stage!r}")


def _edge_grad(n_rows, channels, src, dst, sgn):
    grad = np.zeros((n_rows, channels), dtype=np.float64)
    for c in range(channels):
        grad[:, c] += np.bincount(src, weights=sgn[:, c], minlength=n_rows)
        grad[:, c] -= np.bincount(dst, weights=sgn[:, c], minlength=n_rows)
    return grad


def rate_main(values, graph):
    """Mean L1 edge difference over the reference graph, with its gradient
    as a full-grid array."""
    channels = values.shape[-1]
    flat = values.reshape(-1, channels)
    v = flat[graph.unpruned_ids]
    src, dst = graph.edges()
    if src.size == 0:
        raise SpcgridError("reference graph has no edges")
    diff = v[src] - v[dst]
    rate = float(np.abs(diff).sum() / src.size)
    sgn = np.sign(diff) / src.size
    grad = np.zeros_like(flat)
    grad[graph.unpruned_ids] = _edge_grad(v.shape[0], channels, src, dst, sgn)
    return rate, grad.reshape(values.shape)


def rate_values(values, unpruned_ids):
    """Prediction-off rate proxy: mean L1 magnitude of unpruned feature
    vectors (the residual is the value itself when nothing is predicted)."""
    channels = values.shape[-1]
    flat = values.reshape(-1, channels)
    v = flat[unpruned_ids]
    if v.shape[0] == 0:
        raise SpcgridError("no unpruned voxels")
    rate = float(np.abs(v).sum() / v.shape[0])
    grad = np.zeros_like(flat)
    grad[unpruned_ids] = np.sign(v) / v.shape[0]
    return rate, grad.reshape(values.shape)


def rate_post(values, coarse_recon, critical):
    """Mean L1 distance of critical voxels to their coarse reconstruction;
    the gradient is nonzero only on critical voxels."""
    channels = values.shape[-1]
    crit_ids = np.flatnonzero(critical.ravel())
    if crit_ids.size == 0:
        raise SpcgridError("critical set is empty")
    d = (values.reshape(-1, channels) - coarse_recon.reshape(-1, channels))[crit_ids]
    rate = float(np.abs(d).sum() / crit_ids.size)
    grad = np.zeros((values.reshape(-1, channels).shape[0], channels), dtype=np.float64)
    grad[crit_ids] = np.sign(d) / crit_ids.size
    return rate, grad.reshape(values.shape)


def rd_loss(rate, distortion, cfg):
    """lambda * rate + distortion."""
    return cfg.lambda_ * rate + distortion
