"""Pure-Python/numpy implementations of the hot kernels.

This module is the reference for ``spcgrid._kernels`` (the Cython extension):
the integer codecs must agree byte-for-byte, the interpolation kernels to
floating-point reordering noise.  Backend selection lives in
``spcgrid.backend``.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodeError, EncodeError, InternalError

NAME = "python"

# ---------------------------------------------------------------------------
# trilinear interpolation


def trilinear_gather(values, pts):
    """Sample ``values`` (Nz,Ny,Nx,C) at ``pts`` (n,3) grid coordinates.

    Coordinates are (gx,gy,gz) in voxel-center units: integer gx lands on a
    voxel center.  Corners falling outside the grid clamp to the boundary
    voxel (edge extension).  Returns (n,C).
    """
    nz, ny, nx, _ = values.shape
    g = np.asarray(pts, dtype=np.float64)
    f0 = np.floor(g)
    fr = g - f0
    i0 = f0.astype(np.int64)
    out = np.zeros((g.shape[0], values.shape[3]), dtype=np.float64)
    w = (1.0 - fr, fr)
    for dz in (0, 1):
        iz = np.clip(i0[:, 2] + dz, 0, nz - 1)
        for dy in (0, 1):
            iy = np.clip(i0[:, 1] + dy, 0, ny - 1)
            for dx in (0, 1):
                ix = np.clip(i0[:, 0] + dx, 0, nx - 1)
                ww = w[dz][:, 2] * w[dy][:, 1] * w[dx][:, 0]
                out += ww[:, None] * values[iz, iy, ix]
    return out


def trilinear_scatter(pts, grad_out, shape):
    """Adjoint of :func:`trilinear_gather`.

    Accumulates ``grad_out`` (n,C) into a fresh zero grid of ``shape``
    (Nz,Ny,Nx,C) using the same corner weights and clamping as the gather.
    """
    nz, ny, nx, nc = shape
    g = np.asarray(pts, dtype=np.float64)
    go = np.asarray(grad_out, dtype=np.float64)
    f0 = np.floor(g)
    fr = g - f0
    i0 = f0.astype(np.int64)
    flat = np.zeros((nz * ny * nx, nc), dtype=np.float64)
    w = (1.0 - fr, fr)
    for dz in (0, 1):
        iz = np.clip(i0[:, 2] + dz, 0, nz - 1)
        for dy in (0, 1):
            iy = np.clip(i0[:, 1] + dy, 0, ny - 1)
            for dx in (0, 1):
                ix = np.clip(i0[:, 0] + dx, 0, nx - 1)
                ww = w[dz][:, 2] * w[dy][:, 1] * w[dx][:, 0]
                idx = (iz * ny + iy) * nx + ix
                for c in range(nc):
                    flat[:, c] += np.bincount(
                        idx, weights=ww * go[:, c], minlength=flat.shape[0]
                    )
    return flat.reshape(shape)


# ---------------------------------------------------------------------------
# scan-order prediction inverse


def reconstruct_scan(residuals, ref_pos):
    """Undo in-scan-order prediction: x[k] = residuals[k] + x[ref_pos[k]].

    ``ref_pos[k] < 0`` means the zero vector is the reference.  References
    must point strictly backwards; anything else is a corrupted graph.
    """
    res = np.asarray(residuals, dtype=np.int64)
    pos = np.asarray(ref_pos, dtype=np.int64)
    n = res.shape[0]
    out = np.zeros_like(res)
    for k in range(n):
        r = pos[k]
        if r < 0:
            out[k] = res[k]
        else:
            if r >= k:
                raise InternalError(
                    f"reference to voxel {r} not yet reconstructed at scan index {k}"
                )
            out[k] = res[k] + out[r]
    return out


# ---------------------------------------------------------------------------
# 32-bit integer arithmetic coder (Witten-Neal-Cleary renormalization)

_STATE_BITS = 32
_TOP = (1 << _STATE_BITS) - 1
_HALF = 1 << (_STATE_BITS - 1)
_QUARTER = 1 << (_STATE_BITS - 2)

MODEL_INCREMENT = 32
MODEL_LIMIT = 1 << 16


class _BitWriter:
    __slots__ = ("buf", "acc", "nbits")

    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, bit):
        self.acc = (self.acc << 1) | bit
        self.nbits += 1
        if self.nbits == 8:
            self.buf.append(self.acc)
            self.acc = 0
            self.nbits = 0

    def finish(self):
        while self.nbits:
            self.write(0)
        return bytes(self.buf)


class _BitReader:
    # The decoder may legitimately read a little past the written stream
    # (state fill plus final renormalizations); beyond that it is truncation.
    __slots__ = ("data", "pos", "limit")

    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.limit = 8 * len(data) + _STATE_BITS + 8

    def read(self):
        if self.pos >= self.limit:
            raise DecodeError(f"arithmetic stream exhausted at byte {len(self.data)}")
        i = self.pos
        self.pos += 1
        b = i >> 3
        if b >= len(self.data):
            return 0
        return (self.data[b] >> (7 - (i & 7))) & 1


class _Encoder:
    __slots__ = ("low", "high", "pending", "out")

    def __init__(self):
        self.low = 0
        self.high = _TOP
        self.pending = 0
        self.out = _BitWriter()

    def _emit(self, bit):
        self.out.write(bit)
        inv = bit ^ 1
        while self.pending:
            self.out.write(inv)
            self.pending -= 1

    def encode(self, cum_lo, cum_hi, total):
        span = self.high - self.low + 1
        self.high = self.low + (span * cum_hi) // total - 1
        self.low = self.low + (span * cum_lo) // total
        while True:
            if self.high < _HALF:
                self._emit(0)
            elif self.low >= _HALF:
                self._emit(1)
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < _HALF + _QUARTER:
                self.pending += 1
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
        return self

    def finish(self):
        self.pending += 1
        self._emit(0 if self.low < _QUARTER else 1)
        return self.out.finish()


class _Decoder:
    __slots__ = ("inp", "low", "high", "code")

    def __init__(self, data):
        self.inp = _BitReader(data)
        self.low = 0
        self.high = _TOP
        self.code = 0
        for _ in range(_STATE_BITS):
            self.code = (self.code << 1) | self.inp.read()

    def target(self, total):
        span = self.high - self.low + 1
        return ((self.code - self.low + 1) * total - 1) // span

    def consume(self, cum_lo, cum_hi, total):
        span = self.high - self.low + 1
        self.high = self.low + (span * cum_hi) // total - 1
        self.low = self.low + (span * cum_lo) // total
        while True:
            if self.high < _HALF:
                pass
            elif self.low >= _HALF:
                self.low -= _HALF
                self.high -= _HALF
                self.code -= _HALF
            elif self.low >= _QUARTER and self.high < _HALF + _QUARTER:
                self.low -= _QUARTER
                self.high -= _QUARTER
                self.code -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
            self.code = (self.code << 1) | self.inp.read()


class _Freqs:
    """Adaptive frequency table: all-ones init, +increment per use,
    halve-with-floor-one when the total reaches the rescale limit."""

    __slots__ = ("freq", "total", "increment", "limit", "adapt")

    def __init__(self, alphabet, increment=MODEL_INCREMENT, limit=MODEL_LIMIT, adapt=True):
        self.freq = [1] * alphabet
        self.total = alphabet
        self.increment = increment
        self.limit = limit
        self.adapt = adapt

    def bounds(self, s):
        lo = 0
        freq = self.freq
        for k in range(s):
            lo += freq[k]
        return lo, lo + freq[s], self.total

    def find(self, target):
        acc = 0
        for s, f in enumerate(self.freq):
            if acc + f > target:
                return s, acc, acc + f
            acc += f
        raise InternalError("arithmetic decode target out of range")

    def update(self, s):
        if not self.adapt:
            return
        self.freq[s] += self.increment
        self.total += self.increment
        if self.total >= self.limit:
            total = 0
            freq = self.freq
            for k in range(len(freq)):
                f = freq[k] >> 1
                if f == 0:
                    f = 1
                freq[k] = f
                total += f
            self.total = total


def _enc_symbol(enc, model, s):
    lo, hi, total = model.bounds(s)
    enc.encode(lo, hi, total)
    model.update(s)


def _dec_symbol(dec, model):
    s, lo, hi = model.find(dec.target(model.total))
    dec.consume(lo, hi, model.total)
    model.update(s)
    return s


def ac_encode(symbols, alphabet, increment=MODEL_INCREMENT, limit=MODEL_LIMIT):
    """Adaptive arithmetic coding of a symbol stream over [0, alphabet)."""
    enc = _Encoder()
    model = _Freqs(alphabet, increment, limit)
    for s in np.asarray(symbols, dtype=np.int64):
        s = int(s)
        if not 0 <= s < alphabet:
            raise EncodeError(f"symbol {s} outside alphabet [0, {alphabet})")
        _enc_symbol(enc, model, s)
    return enc.finish()


def ac_decode(data, n, alphabet, increment=MODEL_INCREMENT, limit=MODEL_LIMIT):
    """Inverse of :func:`ac_encode`; decodes exactly ``n`` symbols."""
    dec = _Decoder(bytes(data))
    model = _Freqs(alphabet, increment, limit)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = _dec_symbol(dec, model)
    return out


# ---------------------------------------------------------------------------
# residual-plane coder: per-channel zero flag, sign, magnitude with escape

_ESCAPE = 255
_MAX_MAG = 0xFFFF


def encode_residual_plane(values):
    """Entropy-code an integer residual plane (n, C), scan order.

    Per value: zero flag, then sign and magnitude-1 in a 256-symbol adaptive
    model whose last symbol escapes to 16 raw bits.  Contexts are per channel.
    """
    vals = np.asarray(values, dtype=np.int64)
    n, nc = vals.shape
    enc = _Encoder()
    zero = [_Freqs(2) for _ in range(nc)]
    sign = [_Freqs(2) for _ in range(nc)]
    mag = [_Freqs(256) for _ in range(nc)]
    bit = _Freqs(2, adapt=False)
    for i in range(n):
        row = vals[i]
        for c in range(nc):
            y = int(row[c])
            if y == 0:
                _enc_symbol(enc, zero[c], 1)
                continue
            _enc_symbol(enc, zero[c], 0)
            _enc_symbol(enc, sign[c], 1 if y < 0 else 0)
            m = -y if y < 0 else y
            if m <= _ESCAPE:
                _enc_symbol(enc, mag[c], m - 1)
            else:
                if m > _MAX_MAG:
                    raise EncodeError(f"residual magnitude {m} exceeds 16-bit escape")
                _enc_symbol(enc, mag[c], _ESCAPE)
                for b in range(15, -1, -1):
                    _enc_symbol(enc, bit, (m >> b) & 1)
    return enc.finish()


def decode_residual_plane(data, n, channels):
    """Inverse of :func:`encode_residual_plane`."""
    dec = _Decoder(bytes(data))
    zero = [_Freqs(2) for _ in range(channels)]
    sign = [_Freqs(2) for _ in range(channels)]
    mag = [_Freqs(256) for _ in range(channels)]
    bit = _Freqs(2, adapt=False)
    out = np.zeros((n, channels), dtype=np.int64)
    for i in range(n):
        for c in range(channels):
            if _dec_symbol(dec, zero[c]):
                continue
            neg = _dec_symbol(dec, sign[c])
            s = _dec_symbol(dec, mag[c])
            if s == _ESCAPE:
                m = 0
                for _ in range(16):
                    m = (m << 1) | _dec_symbol(dec, bit)
            else:
                m = s + 1
            out[i, c] = -m if neg else m
    return out


# ---------------------------------------------------------------------------
# reference-index coder with most-recent-first candidate reordering

_N_SLOTS = 7


def encode_ref_indexes(slots, avail):
    """Code chosen candidate slots given per-voxel availability bitmasks.

    A global most-recent-first list of the 7 slot ids is maintained; the
    coded symbol is the chosen slot's position within (list order ∩ available
    set), in an adaptive model conditioned on the available count.  Voxels
    with an empty mask must not be passed in.
    """
    sl = np.asarray(slots, dtype=np.int64)
    av = np.asarray(avail, dtype=np.int64)
    enc = _Encoder()
    ctx = [_Freqs(k) for k in range(1, _N_SLOTS + 1)]
    mtf = list(range(_N_SLOTS))
    for i in range(sl.shape[0]):
        mask = int(av[i])
        if mask == 0:
            raise InternalError(f"voxel {i} has no available candidates")
        chosen = int(sl[i])
        ordered = [s for s in mtf if (mask >> s) & 1]
        try:
            pos = ordered.index(chosen)
        except ValueError:
            raise InternalError(
                f"chosen slot {chosen} not in available set of voxel {i}"
            ) from None
        _enc_symbol(enc, ctx[len(ordered) - 1], pos)
        mtf.remove(chosen)
        mtf.insert(0, chosen)
    return enc.finish()


def decode_ref_indexes(data, avail):
    """Inverse of :func:`encode_ref_indexes`."""
    av = np.asarray(avail, dtype=np.int64)
    dec = _Decoder(bytes(data))
    ctx = [_Freqs(k) for k in range(1, _N_SLOTS + 1)]
    mtf = list(range(_N_SLOTS))
    out = np.empty(av.shape[0], dtype=np.int64)
    for i in range(av.shape[0]):
        mask = int(av[i])
        if mask == 0:
            raise DecodeError(f"index stream voxel {i} has empty availability")
        ordered = [s for s in mtf if (mask >> s) & 1]
        pos = _dec_symbol(dec, ctx[len(ordered) - 1])
        chosen = ordered[pos]
        out[i] = chosen
        mtf.remove(chosen)
        mtf.insert(0, chosen)
    return out


# ---------------------------------------------------------------------------
# LZ77: 64 KiB window, min match 4, greedy parse, (literal-run, match) tokens

_LZ_WINDOW = 1 << 16
_LZ_MIN_MATCH = 4
_LZ_MAX_CHAIN = 64
_HASH_MUL = 2654435761


def _put_varint(buf, v):
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            buf.append(b | 0x80)
        else:
            buf.append(b)
            return


def _get_varint(data, pos):
    out = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise DecodeError(f"truncated varint at byte {pos}")
        b = data[pos]
        pos += 1
        out |= (b & 0x7F) << shift
        if not b & 0x80:
            return out, pos
        shift += 7
        if shift > 35:
            raise DecodeError(f"overlong varint at byte {pos}")


def _hash4(data, p):
    v = data[p] | (data[p + 1] << 8) | (data[p + 2] << 16) | (data[p + 3] << 24)
    return ((v * _HASH_MUL) & 0xFFFFFFFF) >> 16


def lz77_encode(data):
    """Greedy LZ77: varint raw length, then (literal run, match) tokens."""
    data = bytes(data)
    n = len(data)
    out = bytearray()
    _put_varint(out, n)
    head = [-1] * (1 << 16)
    prev = [-1] * (1 << 16)
    i = 0
    lit = 0
    while i < n:
        best = 0
        dist = 0
        if i + _LZ_MIN_MATCH <= n:
            h = _hash4(data, i)
            cand = head[h]
            tries = 0
            while cand >= 0 and cand < i and i - cand <= _LZ_WINDOW and tries < _LZ_MAX_CHAIN:
                # A longer match than `best` must agree at offset `best`.
                if i + best < n and data[cand + best] == data[i + best]:
                    length = 0
                    limit = n - i
                    while length < limit and data[cand + length] == data[i + length]:
                        length += 1
                    if length > best:
                        best = length
                        dist = i - cand
                cand = prev[cand & 0xFFFF]
                tries += 1
        if best >= _LZ_MIN_MATCH:
            _put_varint(out, i - lit)
            out += data[lit:i]
            _put_varint(out, best)
            _put_varint(out, dist)
            end = i + best
            while i < end:
                if i + _LZ_MIN_MATCH <= n:
                    h = _hash4(data, i)
                    prev[i & 0xFFFF] = head[h]
                    head[h] = i
                i += 1
            lit = i
        else:
            if i + _LZ_MIN_MATCH <= n:
                h = _hash4(data, i)
                prev[i & 0xFFFF] = head[h]
                head[h] = i
            i += 1
    if lit < n:
        _put_varint(out, n - lit)
        out += data[lit:]
        _put_varint(out, 0)
    return bytes(out)


def lz77_decode(data):
    """Inverse of :func:`lz77_encode`."""
    data = bytes(data)
    raw_len, pos = _get_varint(data, 0)
    out = bytearray()
    while len(out) < raw_len:
        lit, pos = _get_varint(data, pos)
        if pos + lit > len(data):
            raise DecodeError(f"literal run past end of stream at byte {pos}")
        if len(out) + lit > raw_len:
            raise DecodeError(f"literal run overruns declared length at byte {pos}")
        out += data[pos : pos + lit]
        pos += lit
        m, pos = _get_varint(data, pos)
        if m == 0:
            if lit == 0:
                raise DecodeError(f"zero-progress token at byte {pos}")
            continue
        d, pos = _get_varint(data, pos)
        if d == 0 or d > len(out) or d > _LZ_WINDOW:
            raise DecodeError(f"bad match distance {d} at byte {pos}")
        if len(out) + m > raw_len:
            raise DecodeError(f"match overruns declared length at byte {pos}")
        for _ in range(m):
            out.append(out[-d])
    if pos != len(data):
        raise DecodeError(f"{len(data) - pos} trailing bytes after token stream")
    return bytes(out)
