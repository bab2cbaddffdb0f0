"""Uniform scalar quantization and its uniform-noise training surrogate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpcgridError


@dataclass(frozen=True)
class QuantParams:
    """Coarse step, fine refinement step, and the index clamp magnitude."""

    q_step: float = 0.5
    q_fine: float = 0.125
    clamp_mag: int = 255

    def __post_init__(self):
        if not self.q_step > 0:
            raise SpcgridError("q_step must be positive")
        if not 0 < self.q_fine <= self.q_step:
            raise SpcgridError("q_fine must be in (0, q_step]")
        if self.clamp_mag < 1:
            raise SpcgridError("clamp_mag must be at least 1")


def quantize(x, q, clamp_mag=255):
    """Round-half-away-from-zero of x/q, clamped to [-clamp_mag, clamp_mag]."""
    arr = np.asarray(x, dtype=np.float64)
    k = np.copysign(np.floor(np.abs(arr) / q + 0.5), arr)
    k = np.clip(k, -clamp_mag, clamp_mag).astype(np.int64)
    return k if k.ndim else int(k)


def quantize_with_stats(x, q, clamp_mag=255):
    """Like :func:`quantize` but also reports how many values clamped."""
    arr = np.asarray(x, dtype=np.float64)
    raw = np.copysign(np.floor(np.abs(arr) / q + 0.5), arr)
    clamped = int(np.count_nonzero(np.abs(raw) > clamp_mag))
    return np.clip(raw, -clamp_mag, clamp_mag).astype(np.int64), clamped


def dequantize(k, q):
    """k * q."""
    arr = np.asarray(k, dtype=np.float64) * q
    return arr if arr.ndim else float(arr)


def noise_quantize(x, q, rng):
    """Training surrogate: x/q plus uniform(-1/2, 1/2) noise.

    The output lives in quantization-step units (multiply by q for feature
    units); its gradient with respect to x is exactly 1/q.
    """
    arr = np.asarray(x, dtype=np.float64)
    return arr / q + rng.uniform(-0.5, 0.5, size=arr.shape)
