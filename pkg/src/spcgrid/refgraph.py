"""Reference-graph construction: each unpruned voxel picks the SAD-optimal
one of its seven preceding neighbors (or none when isolated).

Candidate slots are fixed: the causal face/edge/corner neighbors of the unit
cube, in the order below.  Availability depends only on the volume bounds and
the prune mask, so the decoder reproduces it without side information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecodeError, GridError, InternalError

OFFSETS = (
    (-1, 0, 0),
    (0, -1, 0),
    (0, 0, -1),
    (-1, -1, 0),
    (-1, 0, -1),
    (0, -1, -1),
    (-1, -1, -1),
)
N_SLOTS = len(OFFSETS)
NONE_SLOT = -1


@dataclass
class ReferenceGraph:
    """Per-unpruned-voxel reference choice, in scan order.

    ``ref_slot[k]`` is the chosen candidate slot of the k-th unpruned voxel
    (-1 when no candidate exists); ``ref_pos[k]`` is the referenced voxel's
    own position in the unpruned sequence; ``avail[k]`` is the availability
    bitmask over slots.
    """

    dims: tuple
    unpruned_ids: np.ndarray
    ref_slot: np.ndarray
    ref_pos: np.ndarray
    avail: np.ndarray

    @property
    def n_edges(self):
        return int((self.ref_slot >= 0).sum())

    def edges(self):
        """(src, dst) position pairs into the unpruned sequence."""
        src = np.flatnonzero(self.ref_slot >= 0)
        return src, self.ref_pos[src]


def candidates(coord, dims, pruned=None):
    """The 7 candidate coordinates for ``coord`` in slot order; None marks a
    slot outside the volume or on a pruned voxel."""
    x, y, z = coord
    nx, ny, nz = dims
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise GridError(f"coordinate {coord} outside dims {dims}")
    out = []
    for ox, oy, oz in OFFSETS:
        cx, cy, cz = x + ox, y + oy, z + oz
        if cx < 0 or cy < 0 or cz < 0:
            out.append(None)
        elif pruned is not None and pruned[cz, cy, cx]:
            out.append(None)
        else:
            out.append((cx, cy, cz))
    return out


def _region(offset):
    """(current, neighbor) slicing tuples for a nonpositive (ox,oy,oz) shift,
    in (z, y, x) axis order."""
    ox, oy, oz = offset
    cur = (
        slice(-oz, None) if oz else slice(None),
        slice(-oy, None) if oy else slice(None),
        slice(-ox, None) if ox else slice(None),
    )
    nb = (
        slice(None, oz) if oz else slice(None),
        slice(None, oy) if oy else slice(None),
        slice(None, ox) if ox else slice(None),
    )
    return cur, nb


def availability(pruned):
    """Per-voxel availability bitmask over the 7 slots, (Nz,Ny,Nx) int64."""
    mask = np.zeros(pruned.shape, dtype=np.int64)
    for s, off in enumerate(OFFSETS):
        cur, nb = _region(off)
        ok = np.zeros(pruned.shape, dtype=bool)
        ok[cur] = ~pruned[nb]
        mask |= ok.astype(np.int64) << s
    return mask


def _slot_id_offsets(dims):
    nx, ny, _ = dims
    return np.array([ox + oy * nx + oz * nx * ny for ox, oy, oz in OFFSETS], dtype=np.int64)


def build_reference_graph(qvals, pruned):
    """SAD-argmin reference selection over quantized features.

    ``qvals`` is the quantized feature grid (Nz,Ny,Nx,C), integer-valued;
    ties break toward the lowest slot number.
    """
    q = np.asarray(qvals)
    if not np.issubdtype(q.dtype, np.integer):
        if not np.all(q == np.round(q)):
            raise GridError("reference graph requires an integer (quantized) grid")
        q = q.astype(np.int64)
    else:
        q = q.astype(np.int64)
    nz, ny, nx, _ = q.shape
    dims = (nx, ny, nz)
    sad = np.full((N_SLOTS, nz, ny, nx), np.inf)
    for s, off in enumerate(OFFSETS):
        cur, nb = _region(off)
        d = np.abs(q[cur] - q[nb]).sum(axis=-1).astype(np.float64)
        plane = np.full((nz, ny, nx), np.inf)
        plane[cur] = np.where(pruned[nb], np.inf, d)
        sad[s] = plane
    any_avail = np.isfinite(sad).any(axis=0)
    best = np.where(any_avail, np.argmin(sad, axis=0), NONE_SLOT)

    unpruned_ids = np.flatnonzero(~pruned.ravel())
    ref_slot = best.ravel()[unpruned_ids].astype(np.int64)
    avail = availability(pruned).ravel()[unpruned_ids]
    return _finish_graph(dims, unpruned_ids, ref_slot, avail)


def graph_from_slots(pruned, dims, coded_slots):
    """Rebuild the graph decoder-side from the coded slot sequence.

    ``coded_slots`` covers exactly the unpruned voxels with at least one
    available candidate, in scan order.
    """
    unpruned_ids = np.flatnonzero(~pruned.ravel())
    avail = availability(pruned).ravel()[unpruned_ids]
    has = avail != 0
    if int(has.sum()) != len(coded_slots):
        raise DecodeError(
            f"index stream length {len(coded_slots)} does not match "
            f"{int(has.sum())} voxels with candidates"
        )
    ref_slot = np.full(unpruned_ids.shape[0], NONE_SLOT, dtype=np.int64)
    ref_slot[has] = np.asarray(coded_slots, dtype=np.int64)
    bad = has & (((avail >> np.clip(ref_slot, 0, N_SLOTS - 1)) & 1) == 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise DecodeError(f"decoded slot {ref_slot[k]} unavailable at voxel {k}")
    return _finish_graph(dims, unpruned_ids, ref_slot, avail)


def _finish_graph(dims, unpruned_ids, ref_slot, avail):
    n_total = int(np.prod(dims))
    pos_of = np.full(n_total, -1, dtype=np.int64)
    pos_of[unpruned_ids] = np.arange(unpruned_ids.shape[0], dtype=np.int64)
    off = _slot_id_offsets(dims)
    ref_pos = np.full(unpruned_ids.shape[0], -1, dtype=np.int64)
    has = ref_slot >= 0
    nb_ids = unpruned_ids[has] + off[ref_slot[has]]
    ref_pos[has] = pos_of[nb_ids]
    if np.any(ref_pos[has] < 0):
        raise InternalError("reference points at a pruned voxel")
    return ReferenceGraph(dims, unpruned_ids, ref_slot, ref_pos, avail)
