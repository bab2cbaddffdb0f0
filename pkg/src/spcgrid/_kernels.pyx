# cython: language_level=3
"""Compiled hot kernels.

Mirrors spcgrid._kernels_py exactly: the integer codecs are byte-identical,
the interpolation kernels agree up to floating-point reassociation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor
from libc.stdlib cimport free, malloc

from .errors import DecodeError, EncodeError, InternalError

cnp.import_array()

NAME = "compiled"

# ---------------------------------------------------------------------------
# trilinear interpolation


def trilinear_gather(values, pts):
    """Sample ``values`` (Nz,Ny,Nx,C) at ``pts`` (n,3) grid coordinates."""
    cdef double[:, :, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t nz = v.shape[0], ny = v.shape[1], nx = v.shape[2], nc = v.shape[3]
    cdef Py_ssize_t n = p.shape[0]
    out_arr = np.zeros((n, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef long long x0, y0, z0, ix, iy, iz
    cdef int dx, dy, dz
    cdef double gx, gy, gz, fx, fy, fz, wz, wy, w
    for i in range(n):
        gx = p[i, 0]
        gy = p[i, 1]
        gz = p[i, 2]
        x0 = <long long>floor(gx)
        y0 = <long long>floor(gy)
        z0 = <long long>floor(gz)
        fx = gx - floor(gx)
        fy = gy - floor(gy)
        fz = gz - floor(gz)
        for dz in range(2):
            iz = z0 + dz
            if iz < 0:
                iz = 0
            elif iz > nz - 1:
                iz = nz - 1
            wz = fz if dz else 1.0 - fz
            for dy in range(2):
                iy = y0 + dy
                if iy < 0:
                    iy = 0
                elif iy > ny - 1:
                    iy = ny - 1
                wy = fy if dy else 1.0 - fy
                for dx in range(2):
                    ix = x0 + dx
                    if ix < 0:
                        ix = 0
                    elif ix > nx - 1:
                        ix = nx - 1
                    w = wz * wy * (fx if dx else 1.0 - fx)
                    for c in range(nc):
                        out[i, c] += w * v[iz, iy, ix, c]
    return out_arr


def trilinear_scatter(pts, grad_out, shape):
    """Adjoint of trilinear_gather: accumulate (n,C) rows into a zero grid."""
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef double[:, ::1] go = np.ascontiguousarray(grad_out, dtype=np.float64)
    cdef Py_ssize_t nz = shape[0], ny = shape[1], nx = shape[2], nc = shape[3]
    grad_arr = np.zeros((nz, ny, nx, nc), dtype=np.float64)
    cdef double[:, :, :, ::1] grad = grad_arr
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, c
    cdef long long x0, y0, z0, ix, iy, iz
    cdef int dx, dy, dz
    cdef double gx, gy, gz, fx, fy, fz, wz, wy, w
    for i in range(n):
        gx = p[i, 0]
        gy = p[i, 1]
        gz = p[i, 2]
        x0 = <long long>floor(gx)
        y0 = <long long>floor(gy)
        z0 = <long long>floor(gz)
        fx = gx - floor(gx)
        fy = gy - floor(gy)
        fz = gz - floor(gz)
        for dz in range(2):
            iz = z0 + dz
            if iz < 0:
                iz = 0
            elif iz > nz - 1:
                iz = nz - 1
            wz = fz if dz else 1.0 - fz
            for dy in range(2):
                iy = y0 + dy
                if iy < 0:
                    iy = 0
                elif iy > ny - 1:
                    iy = ny - 1
                wy = fy if dy else 1.0 - fy
                for dx in range(2):
                    ix = x0 + dx
                    if ix < 0:
                        ix = 0
                    elif ix > nx - 1:
                        ix = nx - 1
                    w = wz * wy * (fx if dx else 1.0 - fx)
                    for c in range(nc):
                        grad[iz, iy, ix, c] += w * go[i, c]
    return grad_arr


# ---------------------------------------------------------------------------
# scan-order prediction inverse


def reconstruct_scan(residuals, ref_pos):
    """Undo in-scan-order prediction: x[k] = residuals[k] + x[ref_pos[k]]."""
    cdef long long[:, ::1] res = np.ascontiguousarray(residuals, dtype=np.int64)
    cdef long long[::1] pos = np.ascontiguousarray(ref_pos, dtype=np.int64)
    cdef Py_ssize_t n = res.shape[0], nc = res.shape[1]
    out_arr = np.zeros((n, nc), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef Py_ssize_t k, c
    cdef long long r
    for k in range(n):
        r = pos[k]
        if r < 0:
            for c in range(nc):
                out[k, c] = res[k, c]
        else:
            if r >= k:
                raise InternalError(
                    f"reference to voxel {r} not yet reconstructed at scan index {k}"
                )
            for c in range(nc):
                out[k, c] = res[k, c] + out[r, c]
    return out_arr


# ---------------------------------------------------------------------------
# 32-bit integer arithmetic coder (Witten-Neal-Cleary renormalization)

cdef unsigned long long _TOP = (<unsigned long long>1 << 32) - 1
cdef unsigned long long _HALF = <unsigned long long>1 << 31
cdef unsigned long long _QUARTER = <unsigned long long>1 << 30

MODEL_INCREMENT = 32
MODEL_LIMIT = 1 << 16

_ESCAPE = 255
_MAX_MAG = 0xFFFF


cdef class _BitWriter:
    cdef bytearray buf
    cdef unsigned int acc
    cdef int nbits

    def __cinit__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    cdef void write(self, unsigned int bit):
        self.acc = (self.acc << 1) | bit
        self.nbits += 1
        if self.nbits == 8:
            self.buf.append(self.acc & 0xFF)
            self.acc = 0
            self.nbits = 0

    cdef bytes finish(self):
        while self.nbits:
            self.write(0)
        return bytes(self.buf)


cdef class _BitReader:
    cdef bytes keep
    cdef const unsigned char* data
    cdef Py_ssize_t nbytes, pos, limit

    def __cinit__(self, bytes data):
        self.keep = data
        self.data = data
        self.nbytes = len(data)
        self.pos = 0
        self.limit = 8 * self.nbytes + 32 + 8

    cdef int read(self) except -1:
        cdef Py_ssize_t i, b
        if self.pos >= self.limit:
            raise DecodeError(f"arithmetic stream exhausted at byte {self.nbytes}")
        i = self.pos
        self.pos += 1
        b = i >> 3
        if b >= self.nbytes:
            return 0
        return (self.data[b] >> (7 - (i & 7))) & 1


cdef class _Encoder:
    cdef unsigned long long low, high
    cdef long long pending
    cdef _BitWriter out

    def __cinit__(self):
        self.low = 0
        self.high = _TOP
        self.pending = 0
        self.out = _BitWriter()

    cdef void _emit(self, unsigned int bit):
        cdef unsigned int inv = bit ^ 1
        self.out.write(bit)
        while self.pending:
            self.out.write(inv)
            self.pending -= 1

    cdef void encode(self, unsigned long long cum_lo, unsigned long long cum_hi,
                     unsigned long long total):
        cdef unsigned long long span = self.high - self.low + 1
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

    cdef bytes finish(self):
        self.pending += 1
        self._emit(0 if self.low < _QUARTER else 1)
        return self.out.finish()


cdef class _Decoder:
    cdef _BitReader inp
    cdef unsigned long long low, high, code

    def __cinit__(self, bytes data):
        cdef int k
        self.inp = _BitReader(data)
        self.low = 0
        self.high = _TOP
        self.code = 0
        for k in range(32):
            self.code = (self.code << 1) | <unsigned long long>self.inp.read()

    cdef unsigned long long target(self, unsigned long long total) except? 0xFFFFFFFFFFFFFFFF:
        cdef unsigned long long span = self.high - self.low + 1
        return ((self.code - self.low + 1) * total - 1) // span

    cdef int consume(self, unsigned long long cum_lo, unsigned long long cum_hi,
                     unsigned long long total) except -1:
        cdef unsigned long long span = self.high - self.low + 1
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
            self.code = (self.code << 1) | <unsigned long long>self.inp.read()
        return 0


cdef class _Freqs:
    cdef long long* freq
    cdef long long total, increment, limit
    cdef int alphabet
    cdef bint adapt

    def __cinit__(self, int alphabet, long long increment=32, long long limit=65536,
                  bint adapt=True):
        cdef int k
        self.freq = <long long*>malloc(alphabet * sizeof(long long))
        if self.freq == NULL:
            raise MemoryError()
        for k in range(alphabet):
            self.freq[k] = 1
        self.total = alphabet
        self.alphabet = alphabet
        self.increment = increment
        self.limit = limit
        self.adapt = adapt

    def __dealloc__(self):
        if self.freq != NULL:
            free(self.freq)

    cdef void bounds(self, int s, unsigned long long* lo, unsigned long long* hi):
        cdef long long acc = 0
        cdef int k
        for k in range(s):
            acc += self.freq[k]
        lo[0] = <unsigned long long>acc
        hi[0] = <unsigned long long>(acc + self.freq[s])

    cdef int find(self, unsigned long long tgt, unsigned long long* lo,
                  unsigned long long* hi) except -1:
        cdef long long acc = 0
        cdef long long t = <long long>tgt
        cdef int s
        for s in range(self.alphabet):
            if acc + self.freq[s] > t:
                lo[0] = <unsigned long long>acc
                hi[0] = <unsigned long long>(acc + self.freq[s])
                return s
            acc += self.freq[s]
        raise InternalError("arithmetic decode target out of range")

    cdef void update(self, int s):
        cdef long long total
        cdef long long f
        cdef int k
        if not self.adapt:
            return
        self.freq[s] += self.increment
        self.total += self.increment
        if self.total >= self.limit:
            total = 0
            for k in range(self.alphabet):
                f = self.freq[k] >> 1
                if f == 0:
                    f = 1
                self.freq[k] = f
                total += f
            self.total = total


cdef inline void _enc_symbol(_Encoder enc, _Freqs model, int s):
    cdef unsigned long long lo, hi
    model.bounds(s, &lo, &hi)
    enc.encode(lo, hi, <unsigned long long>model.total)
    model.update(s)


cdef inline int _dec_symbol(_Decoder dec, _Freqs model) except -1:
    cdef unsigned long long lo, hi
    cdef int s = model.find(dec.target(<unsigned long long>model.total), &lo, &hi)
    dec.consume(lo, hi, <unsigned long long>model.total)
    model.update(s)
    return s


def ac_encode(symbols, int alphabet, long long increment=32, long long limit=65536):
    """Adaptive arithmetic coding of a symbol stream over [0, alphabet)."""
    cdef long long[::1] syms = np.ascontiguousarray(symbols, dtype=np.int64)
    cdef _Encoder enc = _Encoder()
    cdef _Freqs model = _Freqs(alphabet, increment, limit)
    cdef Py_ssize_t i
    cdef long long s
    for i in range(syms.shape[0]):
        s = syms[i]
        if s < 0 or s >= alphabet:
            raise EncodeError(f"symbol {s} outside alphabet [0, {alphabet})")
        _enc_symbol(enc, model, <int>s)
    return enc.finish()


def ac_decode(data, Py_ssize_t n, int alphabet, long long increment=32,
              long long limit=65536):
    """Inverse of ac_encode; decodes exactly n symbols."""
    cdef _Decoder dec = _Decoder(bytes(data))
    cdef _Freqs model = _Freqs(alphabet, increment, limit)
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _dec_symbol(dec, model)
    return out_arr


# ---------------------------------------------------------------------------
# residual-plane coder


def encode_residual_plane(values):
    """Entropy-code an integer residual plane (n, C) in scan order."""
    cdef long long[:, ::1] vals = np.ascontiguousarray(values, dtype=np.int64)
    cdef Py_ssize_t n = vals.shape[0], nc = vals.shape[1]
    cdef _Encoder enc = _Encoder()
    zero = [_Freqs(2) for _ in range(nc)]
    sign = [_Freqs(2) for _ in range(nc)]
    mag = [_Freqs(256) for _ in range(nc)]
    cdef _Freqs bit = _Freqs(2, adapt=False)
    cdef Py_ssize_t i, c
    cdef long long y, m
    cdef int b
    for i in range(n):
        for c in range(nc):
            y = vals[i, c]
            if y == 0:
                _enc_symbol(enc, <_Freqs>zero[c], 1)
                continue
            _enc_symbol(enc, <_Freqs>zero[c], 0)
            _enc_symbol(enc, <_Freqs>sign[c], 1 if y < 0 else 0)
            m = -y if y < 0 else y
            if m <= 255:
                _enc_symbol(enc, <_Freqs>mag[c], <int>(m - 1))
            else:
                if m > 0xFFFF:
                    raise EncodeError(f"residual magnitude {m} exceeds 16-bit escape")
                _enc_symbol(enc, <_Freqs>mag[c], 255)
                for b in range(15, -1, -1):
                    _enc_symbol(enc, bit, <int>((m >> b) & 1))
    return enc.finish()


def decode_residual_plane(data, Py_ssize_t n, Py_ssize_t channels):
    """Inverse of encode_residual_plane."""
    cdef _Decoder dec = _Decoder(bytes(data))
    zero = [_Freqs(2) for _ in range(channels)]
    sign = [_Freqs(2) for _ in range(channels)]
    mag = [_Freqs(256) for _ in range(channels)]
    cdef _Freqs bit = _Freqs(2, adapt=False)
    out_arr = np.zeros((n, channels), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef long long m
    cdef int s, neg, k
    for i in range(n):
        for c in range(channels):
            if _dec_symbol(dec, <_Freqs>zero[c]):
                continue
            neg = _dec_symbol(dec, <_Freqs>sign[c])
            s = _dec_symbol(dec, <_Freqs>mag[c])
            if s == 255:
                m = 0
                for k in range(16):
                    m = (m << 1) | _dec_symbol(dec, bit)
            else:
                m = s + 1
            out[i, c] = -m if neg else m
    return out_arr


# ---------------------------------------------------------------------------
# reference-index coder with most-recent-first candidate reordering


def encode_ref_indexes(slots, avail):
    """Code chosen candidate slots given per-voxel availability bitmasks."""
    cdef long long[::1] sl = np.ascontiguousarray(slots, dtype=np.int64)
    cdef long long[::1] av = np.ascontiguousarray(avail, dtype=np.int64)
    cdef _Encoder enc = _Encoder()
    ctx = [_Freqs(k) for k in range(1, 8)]
    cdef int mtf[7]
    cdef int ordered[7]
    cdef int k, cnt, pos, chosen
    cdef long long mask
    cdef Py_ssize_t i
    for k in range(7):
        mtf[k] = k
    for i in range(sl.shape[0]):
        mask = av[i]
        if mask == 0:
            raise InternalError(f"voxel {i} has no available candidates")
        chosen = <int>sl[i]
        cnt = 0
        for k in range(7):
            if (mask >> mtf[k]) & 1:
                ordered[cnt] = mtf[k]
                cnt += 1
        pos = -1
        for k in range(cnt):
            if ordered[k] == chosen:
                pos = k
                break
        if pos < 0:
            raise InternalError(f"chosen slot {chosen} not in available set of voxel {i}")
        _enc_symbol(enc, <_Freqs>ctx[cnt - 1], pos)
        k = 0
        while mtf[k] != chosen:
            k += 1
        while k > 0:
            mtf[k] = mtf[k - 1]
            k -= 1
        mtf[0] = chosen
    return enc.finish()


def decode_ref_indexes(data, avail):
    """Inverse of encode_ref_indexes."""
    cdef long long[::1] av = np.ascontiguousarray(avail, dtype=np.int64)
    cdef _Decoder dec = _Decoder(bytes(data))
    ctx = [_Freqs(k) for k in range(1, 8)]
    cdef int mtf[7]
    cdef int ordered[7]
    cdef int k, cnt, pos, chosen
    cdef long long mask
    cdef Py_ssize_t i
    out_arr = np.empty(av.shape[0], dtype=np.int64)
    cdef long long[::1] out = out_arr
    for k in range(7):
        mtf[k] = k
    for i in range(av.shape[0]):
        mask = av[i]
        if mask == 0:
            raise DecodeError(f"index stream voxel {i} has empty availability")
        cnt = 0
        for k in range(7):
            if (mask >> mtf[k]) & 1:
                ordered[cnt] = mtf[k]
                cnt += 1
        pos = _dec_symbol(dec, <_Freqs>ctx[cnt - 1])
        chosen = ordered[pos]
        out[i] = chosen
        k = 0
        while mtf[k] != chosen:
            k += 1
        while k > 0:
            mtf[k] = mtf[k - 1]
            k -= 1
        mtf[0] = chosen
    return out_arr


# ---------------------------------------------------------------------------
# LZ77: 64 KiB window, min match 4, greedy parse, (literal-run, match) tokens

cdef long long _LZ_WINDOW = 1 << 16
cdef int _LZ_MIN_MATCH = 4
cdef int _LZ_MAX_CHAIN = 64


cdef inline void _put_varint(bytearray buf, unsigned long long v):
    while True:
        if v >> 7:
            buf.append(<unsigned char>((v & 0x7F) | 0x80))
            v >>= 7
        else:
            buf.append(<unsigned char>(v & 0x7F))
            return


cdef inline unsigned int _hash4(const unsigned char* d, Py_ssize_t p):
    cdef unsigned int v = d[p] | (d[p + 1] << 8) | (d[p + 2] << 16) | (d[p + 3] << 24)
    return (v * <unsigned int>2654435761) >> 16


def lz77_encode(data):
    """Greedy LZ77: varint raw length, then (literal run, match) tokens."""
    cdef bytes src = bytes(data)
    cdef const unsigned char* d = src
    cdef Py_ssize_t n = len(src)
    out = bytearray()
    _put_varint(out, <unsigned long long>n)
    cdef long long* head = <long long*>malloc((1 << 16) * sizeof(long long))
    cdef long long* prev = <long long*>malloc((1 << 16) * sizeof(long long))
    if head == NULL or prev == NULL:
        if head != NULL:
            free(head)
        if prev != NULL:
            free(prev)
        raise MemoryError()
    cdef Py_ssize_t k
    for k in range(1 << 16):
        head[k] = -1
        prev[k] = -1
    cdef Py_ssize_t i = 0, lit = 0, end
    cdef long long best, dist, cand, length, limit
    cdef int tries
    cdef unsigned int h
    try:
        while i < n:
            best = 0
            dist = 0
            if i + _LZ_MIN_MATCH <= n:
                h = _hash4(d, i)
                cand = head[h]
                tries = 0
                while cand >= 0 and cand < i and i - cand <= _LZ_WINDOW and tries < _LZ_MAX_CHAIN:
                    if i + best < n and d[cand + best] == d[i + best]:
                        length = 0
                        limit = n - i
                        while length < limit and d[cand + length] == d[i + length]:
                            length += 1
                        if length > best:
                            best = length
                            dist = i - cand
                    cand = prev[cand & 0xFFFF]
                    tries += 1
            if best >= _LZ_MIN_MATCH:
                _put_varint(out, <unsigned long long>(i - lit))
                out += src[lit:i]
                _put_varint(out, <unsigned long long>best)
                _put_varint(out, <unsigned long long>dist)
                end = i + best
                while i < end:
                    if i + _LZ_MIN_MATCH <= n:
                        h = _hash4(d, i)
                        prev[i & 0xFFFF] = head[h]
                        head[h] = i
                    i += 1
                lit = i
            else:
                if i + _LZ_MIN_MATCH <= n:
                    h = _hash4(d, i)
                    prev[i & 0xFFFF] = head[h]
                    head[h] = i
                i += 1
        if lit < n:
            _put_varint(out, <unsigned long long>(n - lit))
            out += src[lit:]
            _put_varint(out, 0)
    finally:
        free(head)
        free(prev)
    return bytes(out)


cdef unsigned long long _get_varint(const unsigned char* d, Py_ssize_t n,
                                    Py_ssize_t* pos) except? 0xFFFFFFFFFFFFFFFF:
    cdef unsigned long long out = 0
    cdef int sh = 0
    cdef unsigned char b
    while True:
        if pos[0] >= n:
            raise DecodeError(f"truncated varint at byte {pos[0]}")
        b = d[pos[0]]
        pos[0] += 1
        out |= (<unsigned long long>(b & 0x7F)) << sh
        if not b & 0x80:
            return out
        sh += 7
        if sh > 35:
            raise DecodeError(f"overlong varint at byte {pos[0]}")


def lz77_decode(data):
    """Inverse of lz77_encode."""
    cdef bytes src = bytes(data)
    cdef const unsigned char* d = src
    cdef Py_ssize_t n = len(src)
    cdef Py_ssize_t pos = 0
    cdef unsigned long long raw_len, lit, m, dist, j
    raw_len = _get_varint(d, n, &pos)
    out = bytearray()
    cdef Py_ssize_t olen = 0
    while olen < <Py_ssize_t>raw_len:
        lit = _get_varint(d, n, &pos)
        if pos + <Py_ssize_t>lit > n:
            raise DecodeError(f"literal run past end of stream at byte {pos}")
        if olen + <Py_ssize_t>lit > <Py_ssize_t>raw_len:
            raise DecodeError(f"literal run overruns declared length at byte {pos}")
        out += src[pos : pos + <Py_ssize_t>lit]
        pos += <Py_ssize_t>lit
        olen += <Py_ssize_t>lit
        m = _get_varint(d, n, &pos)
        if m == 0:
            if lit == 0:
                raise DecodeError(f"zero-progress token at byte {pos}")
            continue
        dist = _get_varint(d, n, &pos)
        if dist == 0 or <Py_ssize_t>dist > olen or dist > <unsigned long long>_LZ_WINDOW:
            raise DecodeError(f"bad match distance {dist} at byte {pos}")
        if olen + <Py_ssize_t>m > <Py_ssize_t>raw_len:
            raise DecodeError(f"match overruns declared length at byte {pos}")
        for j in range(m):
            out.append(out[olen - <Py_ssize_t>dist])
            olen += 1
    if pos != n:
        raise DecodeError(f"{n - pos} trailing bytes after token stream")
    return bytes(out)
