# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the matrix-free mesh operators.

Each kernel walks the voxels once and fuses corner gather, per-tetrahedron
gradient/curl, coefficient multiply and adjoint scatter, avoiding the large
temporaries of the NumPy fallback.  Layouts match the fallback exactly:
lattice arrays are (n3, n2, n1), element arrays (3, 6, n3, n2, n1),
coefficient components (6, 6, n3, n2, n1).

The coefficient table ``c4`` holds, per tet type and derivative direction,
the four shape-function gradient coefficients aligned with the corner list
``corners`` (both derived from the reference tables of the grid module).
"""

cimport cython


cdef inline void _corner_nodes(Py_ssize_t z, Py_ssize_t y, Py_ssize_t x,
                               Py_ssize_t n3, Py_ssize_t n2, Py_ssize_t n1,
                               Py_ssize_t *zz, Py_ssize_t *yy, Py_ssize_t *xx) noexcept nogil:
    cdef Py_ssize_t zp = z + 1
    cdef Py_ssize_t yp = y + 1
    cdef Py_ssize_t xp = x + 1
    if zp == n3: zp = 0
    if yp == n2: yp = 0
    if xp == n1: xp = 0
    cdef Py_ssize_t c, dx, dy, dz
    for c in range(8):
        dx = c & 1
        dy = (c >> 1) & 1
        dz = (c >> 2) & 1
        xx[c] = xp if dx else x
        yy[c] = yp if dy else y
        zz[c] = zp if dz else z


def primal_apply(double[:, :, ::1] c4, Py_ssize_t[:, ::1] corners,
                 double[:, :, :, :, ::1] comps, double[:, :, ::1] u,
                 double[:, :, ::1] out, double wq):
    """out += wq * grad^T (A grad u); out must be zeroed by the caller."""
    cdef Py_ssize_t n3 = u.shape[0], n2 = u.shape[1], n1 = u.shape[2]
    cdef Py_ssize_t z, y, x, c, t, m, k
    cdef Py_ssize_t zz[8]
    cdef Py_ssize_t yy[8]
    cdef Py_ssize_t xx[8]
    cdef double u8[8]
    cdef double acc[8]
    cdef double g0, g1, g2, f0, f1, f2
    cdef double a11, a22, a33, a12, a13, a23
    with nogil:
        for z in range(n3):
            for y in range(n2):
                for x in range(n1):
                    _corner_nodes(z, y, x, n3, n2, n1, zz, yy, xx)
                    for c in range(8):
                        u8[c] = u[zz[c], yy[c], xx[c]]
                        acc[c] = 0.0
                    for t in range(6):
                        g0 = 0.0; g1 = 0.0; g2 = 0.0
                        for m in range(4):
                            k = corners[t, m]
                            g0 += c4[t, 0, m] * u8[k]
                            g1 += c4[t, 1, m] * u8[k]
                            g2 += c4[t, 2, m] * u8[k]
                        a11 = comps[0, t, z, y, x]; a22 = comps[1, t, z, y, x]
                        a33 = comps[2, t, z, y, x]; a12 = comps[3, t, z, y, x]
                        a13 = comps[4, t, z, y, x]; a23 = comps[5, t, z, y, x]
                        f0 = a11 * g0 + a12 * g1 + a13 * g2
                        f1 = a12 * g0 + a22 * g1 + a23 * g2
                        f2 = a13 * g0 + a23 * g1 + a33 * g2
                        for m in range(4):
                            k = corners[t, m]
                            acc[k] += c4[t, 0, m] * f0 + c4[t, 1, m] * f1 + c4[t, 2, m] * f2
                    for c in range(8):
                        out[zz[c], yy[c], xx[c]] += wq * acc[c]


def dual_apply(double[:, :, ::1] c4, Py_ssize_t[:, ::1] corners,
               double[:, :, :, :, ::1] inv_comps, double[:, :, :, ::1] psi,
               double[:, :, :, ::1] out, double wq):
    """out += wq * curl^T (A^{-1} curl psi); out must be zeroed by the caller."""
    cdef Py_ssize_t n3 = psi.shape[1], n2 = psi.shape[2], n1 = psi.shape[3]
    cdef Py_ssize_t z, y, x, c, t, m, k, p
    cdef Py_ssize_t zz[8]
    cdef Py_ssize_t yy[8]
    cdef Py_ssize_t xx[8]
    cdef double u8[3][8]
    cdef double acc[3][8]
    cdef double g[3][3]
    cdef double w0, w1, w2, y0, y1, y2
    cdef double a11, a22, a33, a12, a13, a23
    cdef double v[3][3]
    with nogil:
        for z in range(n3):
            for y in range(n2):
                for x in range(n1):
                    _corner_nodes(z, y, x, n3, n2, n1, zz, yy, xx)
                    for p in range(3):
                        for c in range(8):
                            u8[p][c] = psi[p, zz[c], yy[c], xx[c]]
                            acc[p][c] = 0.0
                    for t in range(6):
                        for p in range(3):
                            g[p][0] = 0.0; g[p][1] = 0.0; g[p][2] = 0.0
                            for m in range(4):
                                k = corners[t, m]
                                g[p][0] += c4[t, 0, m] * u8[p][k]
                                g[p][1] += c4[t, 1, m] * u8[p][k]
                                g[p][2] += c4[t, 2, m] * u8[p][k]
                        w0 = g[1][2] - g[2][1]
                        w1 = g[2][0] - g[0][2]
                        w2 = g[0][1] - g[1][0]
                        a11 = inv_comps[0, t, z, y, x]; a22 = inv_comps[1, t, z, y, x]
                        a33 = inv_comps[2, t, z, y, x]; a12 = inv_comps[3, t, z, y, x]
                        a13 = inv_comps[4, t, z, y, x]; a23 = inv_comps[5, t, z, y, x]
                        y0 = wq * (a11 * w0 + a12 * w1 + a13 * w2)
                        y1 = wq * (a12 * w0 + a22 * w1 + a23 * w2)
                        y2 = wq * (a13 * w0 + a23 * w1 + a33 * w2)
                        v[0][0] = 0.0;  v[0][1] = y2;   v[0][2] = -y1
                        v[1][0] = -y2;  v[1][1] = 0.0;  v[1][2] = y0
                        v[2][0] = y1;   v[2][1] = -y0;  v[2][2] = 0.0
                        for p in range(3):
                            for m in range(4):
                                k = corners[t, m]
                                acc[p][k] += (c4[t, 0, m] * v[p][0]
                                              + c4[t, 1, m] * v[p][1]
                                              + c4[t, 2, m] * v[p][2])
                    for p in range(3):
                        for c in range(8):
                            out[p, zz[c], yy[c], xx[c]] += acc[p][c]


def curl_apply(double[:, :, ::1] c4, Py_ssize_t[:, ::1] corners,
               double[:, :, :, ::1] psi, double[:, :, :, :, ::1] out):
    """Element curls of a 3-channel nodal field into (3, 6, n3, n2, n1)."""
    cdef Py_ssize_t n3 = psi.shape[1], n2 = psi.shape[2], n1 = psi.shape[3]
    cdef Py_ssize_t z, y, x, c, t, m, k, p
    cdef Py_ssize_t zz[8]
    cdef Py_ssize_t yy[8]
    cdef Py_ssize_t xx[8]
    cdef double u8[3][8]
    cdef double g[3][3]
    with nogil:
        for z in range(n3):
            for y in range(n2):
                for x in range(n1):
                    _corner_nodes(z, y, x, n3, n2, n1, zz, yy, xx)
                    for p in range(3):
                        for c in range(8):
                            u8[p][c] = psi[p, zz[c], yy[c], xx[c]]
                    for t in range(6):
                        for p in range(3):
                            g[p][0] = 0.0; g[p][1] = 0.0; g[p][2] = 0.0
                            for m in range(4):
                                k = corners[t, m]
                                g[p][0] += c4[t, 0, m] * u8[p][k]
                                g[p][1] += c4[t, 1, m] * u8[p][k]
                                g[p][2] += c4[t, 2, m] * u8[p][k]
                        out[0, t, z, y, x] = g[1][2] - g[2][1]
                        out[1, t, z, y, x] = g[2][0] - g[0][2]
                        out[2, t, z, y, x] = g[0][1] - g[1][0]


def curl_t_apply(double[:, :, ::1] c4, Py_ssize_t[:, ::1] corners,
                 double[:, :, :, :, ::1] field, double[:, :, :, ::1] out):
    """Adjoint of curl_apply; out must be zeroed by the caller."""
    cdef Py_ssize_t n3 = field.shape[2], n2 = field.shape[3], n1 = field.shape[4]
    cdef Py_ssize_t z, y, x, c, t, m, k, p
    cdef Py_ssize_t zz[8]
    cdef Py_ssize_t yy[8]
    cdef Py_ssize_t xx[8]
    cdef double acc[3][8]
    cdef double y0, y1, y2
    cdef double v[3][3]
    with nogil:
        for z in range(n3):
            for y in range(n2):
                for x in range(n1):
                    _corner_nodes(z, y, x, n3, n2, n1, zz, yy, xx)
                    for p in range(3):
                        for c in range(8):
                            acc[p][c] = 0.0
                    for t in range(6):
                        y0 = field[0, t, z, y, x]
                        y1 = field[1, t, z, y, x]
                        y2 = field[2, t, z, y, x]
                        v[0][0] = 0.0;  v[0][1] = y2;   v[0][2] = -y1
                        v[1][0] = -y2;  v[1][1] = 0.0;  v[1][2] = y0
                        v[2][0] = y1;   v[2][1] = -y0;  v[2][2] = 0.0
                        for p in range(3):
                            for m in range(4):
                                k = corners[t, m]
                                acc[p][k] += (c4[t, 0, m] * v[p][0]
                                              + c4[t, 1, m] * v[p][1]
                                              + c4[t, 2, m] * v[p][2])
                    for p in range(3):
                        for c in range(8):
                            out[p, zz[c], yy[c], xx[c]] += acc[p][c]
