# cython: boundscheck=False, wraparound=False, cdivision=True
"""Hot statevector kernels: in-place gate application, Z-basis probabilities,
and unnormalized projection on a dense complex128 amplitude array.

Qubit 0 is the most significant bit of the basis-state index, so qubit q of an
n-qubit register has stride 2**(n-1-q).
"""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc


def apply_1q(double complex[::1] amps, double complex[:, ::1] u, int qubit, int n):
    """Apply a 2x2 matrix to `qubit`, in place."""
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - qubit)
    cdef Py_ssize_t block = stride << 1
    cdef Py_ssize_t base, off, i0, i1
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    cdef double complex a0, a1
    for base in range(0, dim, block):
        for off in range(stride):
            i0 = base + off
            i1 = i0 + stride
            a0 = amps[i0]
            a1 = amps[i1]
            amps[i0] = u00 * a0 + u01 * a1
            amps[i1] = u10 * a0 + u11 * a1


def apply_2q(double complex[::1] amps, double complex[:, ::1] u, int qubit, int n):
    """Apply a 4x4 matrix to the adjacent pair (qubit, qubit+1), in place."""
    _apply_2q(amps, u, qubit, n)


cdef void _apply_2q(double complex[::1] amps, double complex[:, ::1] u, int qubit, int n):
    # One flat loop over the 4-dimensional gate subspaces: group index g is
    # expanded to the base index by inserting two zero bits at the pair's
    # position, which keeps the loop auto-vectorizable for every stride.
    cdef Py_ssize_t groups = 1 << (n - 2)
    cdef Py_ssize_t s = 1 << (n - 2 - qubit)  # stride of qubit+1; qubit has stride 2s
    cdef Py_ssize_t low_mask = s - 1
    cdef Py_ssize_t g, i0, i1, i2, i3
    cdef double complex a0, a1, a2, a3
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u02 = u[0, 2], u03 = u[0, 3]
    cdef double complex u10 = u[1, 0], u11 = u[1, 1], u12 = u[1, 2], u13 = u[1, 3]
    cdef double complex u20 = u[2, 0], u21 = u[2, 1], u22 = u[2, 2], u23 = u[2, 3]
    cdef double complex u30 = u[3, 0], u31 = u[3, 1], u32 = u[3, 2], u33 = u[3, 3]
    for g in range(groups):
        i0 = ((g & ~low_mask) << 2) | (g & low_mask)
        i1 = i0 + s
        i2 = i0 + 2 * s
        i3 = i0 + 3 * s
        a0 = amps[i0]
        a1 = amps[i1]
        a2 = amps[i2]
        a3 = amps[i3]
        amps[i0] = u00 * a0 + u01 * a1 + u02 * a2 + u03 * a3
        amps[i1] = u10 * a0 + u11 * a1 + u12 * a2 + u13 * a3
        amps[i2] = u20 * a0 + u21 * a1 + u22 * a2 + u23 * a3
        amps[i3] = u30 * a0 + u31 * a1 + u32 * a2 + u33 * a3


def apply_layer(double complex[::1] amps, double complex[:, :, ::1] us, int start, int n):
    """Apply one brick layer: us[k] acts on the pair (start+2k, start+2k+1)."""
    cdef Py_ssize_t k
    for k in range(us.shape[0]):
        _apply_2q(amps, us[k], start + 2 * k, n)


def prob_zero(double complex[::1] amps, int qubit, int n):
    """Probability weight of outcome 0 on `qubit` (sum of |a|^2 over that slice)."""
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - qubit)
    cdef Py_ssize_t block = stride << 1
    cdef Py_ssize_t base, off, i
    cdef double p = 0.0
    cdef double complex a
    for base in range(0, dim, block):
        for off in range(stride):
            a = amps[base + off]
            p += a.real * a.real + a.imag * a.imag
    return p


def project(double complex[::1] amps, int qubit, int outcome, bint renormalize, int n):
    """Zero the amplitudes inconsistent with `outcome` on `qubit`, in place.

    Returns the squared norm of the projected state before renormalization.
    With `renormalize` and nonzero weight, rescales to unit norm.
    """
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - qubit)
    cdef Py_ssize_t block = stride << 1
    cdef Py_ssize_t base, off, keep_off, kill_off, i
    cdef double w = 0.0
    cdef double scale
    cdef double complex a
    kill_off = stride if outcome == 0 else 0
    keep_off = stride - kill_off
    for base in range(0, dim, block):
        for off in range(stride):
            i = base + keep_off + off
            a = amps[i]
            w += a.real * a.real + a.imag * a.imag
            amps[base + kill_off + off] = 0.0
    if renormalize and w > 0.0:
        scale = 1.0 / sqrt(w)
        for i in range(dim):
            amps[i] = amps[i] * scale
    return w

def bapply_2q(double complex[:, ::1] amps, double complex[:, ::1] u, int qubit, int n):
    """Batched apply_2q: amps has shape (2**n, B), one trajectory per column."""
    _bapply_2q(amps, u, qubit, n)


cdef void _bapply_2q(double complex[:, ::1] amps, double complex[:, ::1] u, int qubit, int n):
    cdef Py_ssize_t nb = amps.shape[1]
    cdef Py_ssize_t groups = 1 << (n - 2)
    cdef Py_ssize_t s = 1 << (n - 2 - qubit)
    cdef Py_ssize_t low_mask = s - 1
    cdef Py_ssize_t g, b, i0, i1, i2, i3
    cdef double complex a0, a1, a2, a3
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u02 = u[0, 2], u03 = u[0, 3]
    cdef double complex u10 = u[1, 0], u11 = u[1, 1], u12 = u[1, 2], u13 = u[1, 3]
    cdef double complex u20 = u[2, 0], u21 = u[2, 1], u22 = u[2, 2], u23 = u[2, 3]
    cdef double complex u30 = u[3, 0], u31 = u[3, 1], u32 = u[3, 2], u33 = u[3, 3]
    for g in range(groups):
        i0 = ((g & ~low_mask) << 2) | (g & low_mask)
        i1 = i0 + s
        i2 = i0 + 2 * s
        i3 = i0 + 3 * s
        for b in range(nb):
            a0 = amps[i0, b]
            a1 = amps[i1, b]
            a2 = amps[i2, b]
            a3 = amps[i3, b]
            amps[i0, b] = u00 * a0 + u01 * a1 + u02 * a2 + u03 * a3
            amps[i1, b] = u10 * a0 + u11 * a1 + u12 * a2 + u13 * a3
            amps[i2, b] = u20 * a0 + u21 * a1 + u22 * a2 + u23 * a3
            amps[i3, b] = u30 * a0 + u31 * a1 + u32 * a2 + u33 * a3


def bapply_layer(double complex[:, ::1] amps, double complex[:, :, ::1] us, int start, int n):
    """Batched apply_layer on a (2**n, B) amplitude matrix."""
    cdef Py_ssize_t k
    for k in range(us.shape[0]):
        _bapply_2q(amps, us[k], start + 2 * k, n)


def bprob_zero(double complex[:, ::1] amps, int qubit, int n, double[::1] out):
    """Batched prob_zero: per-column outcome-0 weight, written into `out`."""
    cdef Py_ssize_t nb = amps.shape[1]
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - qubit)
    cdef Py_ssize_t block = stride << 1
    cdef Py_ssize_t base, off, i, b
    cdef double complex a
    for b in range(nb):
        out[b] = 0.0
    for base in range(0, dim, block):
        for off in range(stride):
            i = base + off
            for b in range(nb):
                a = amps[i, b]
                out[b] += a.real * a.real + a.imag * a.imag


def bproject(
    double complex[:, ::1] amps,
    int qubit,
    long[::1] outcomes,
    bint renormalize,
    int n,
    double[::1] weights,
):
    """Batched project with a per-column outcome; weights written into `weights`."""
    cdef Py_ssize_t nb = amps.shape[1]
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t stride = 1 << (n - 1 - qubit)
    cdef Py_ssize_t block = stride << 1
    cdef Py_ssize_t base, off, i0, i1, b
    cdef double complex a
    cdef double w, scale
    for b in range(nb):
        weights[b] = 0.0
    for base in range(0, dim, block):
        for off in range(stride):
            i0 = base + off
            i1 = i0 + stride
            for b in range(nb):
                if outcomes[b] == 0:
                    a = amps[i0, b]
                    amps[i1, b] = 0.0
                else:
                    a = amps[i1, b]
                    amps[i0, b] = 0.0
                weights[b] += a.real * a.real + a.imag * a.imag
    cdef double* scales
    if renormalize:
        scales = <double*> malloc(nb * sizeof(double))
        if scales == NULL:
            raise MemoryError()
        for b in range(nb):
            w = weights[b]
            scales[b] = 1.0 / sqrt(w) if w > 0.0 else 1.0
        for i0 in range(dim):
            for b in range(nb):
                amps[i0, b] = amps[i0, b] * scales[b]
        free(scales)


def bnorm_squared(double complex[:, ::1] amps, double[::1] out):
    """Per-column squared norm of a (dim, B) amplitude matrix."""
    cdef Py_ssize_t nb = amps.shape[1]
    cdef Py_ssize_t dim = amps.shape[0]
    cdef Py_ssize_t i, b
    cdef double complex a
    for b in range(nb):
        out[b] = 0.0
    for i in range(dim):
        for b in range(nb):
            a = amps[i, b]
            out[b] += a.real * a.real + a.imag * a.imag
