"""Kernel backend selection.

The hot kernels (trilinear gather/scatter, scan-order reconstruction, the
arithmetic coder, LZ77) exist twice: a Cython extension ``spcgrid._kernels``
and a pure-Python mirror ``spcgrid._kernels_py``.  The compiled one is used
when importable; ``SPCGRID_BACKEND=python`` (or :func:`set_backend`) forces
the fallback.  ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; pure-Python fallback only
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_env = os.environ.get("SPCGRID_BACKEND", "").strip().lower()
if _env and _env not in _BACKENDS:
    raise ImportError(
        f"SPCGRID_BACKEND={_env!r} is not available; choices: {sorted(_BACKENDS)}"
    )
_active = _BACKENDS[_env] if _env else _BACKENDS.get("compiled", _kernels_py)


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return _active.NAME


def set_backend(name):
    """Switch the kernel backend globally (mainly for tests/benchmarks)."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


def get_module(name=None):
    return _active if name is None else _BACKENDS[name]


def trilinear_gather(values, pts):
    return _active.trilinear_gather(values, pts)


def trilinear_scatter(pts, grad_out, shape):
    return _active.trilinear_scatter(pts, grad_out, shape)


def reconstruct_scan(residuals, ref_pos):
    return _active.reconstruct_scan(residuals, ref_pos)


def ac_encode(symbols, alphabet, increment=_kernels_py.MODEL_INCREMENT,
              limit=_kernels_py.MODEL_LIMIT):
    return _active.ac_encode(symbols, alphabet, increment, limit)


def ac_decode(data, n, alphabet, increment=_kernels_py.MODEL_INCREMENT,
              limit=_kernels_py.MODEL_LIMIT):
    return _active.ac_decode(data, n, alphabet, increment, limit)


def encode_residual_plane(values):
    return _active.encode_residual_plane(values)


def decode_residual_plane(data, n, channels):
    return _active.decode_residual_plane(data, n, channels)


def encode_ref_indexes(slots, avail):
    return _active.encode_ref_indexes(slots, avail)


def decode_ref_indexes(data, avail):
    return _active.decode_ref_indexes(data, avail)


def lz77_encode(data):
    return _active.lz77_encode(data)


def lz77_decode(data):
    return _active.lz77_decode(data)
