# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cell marching for scalar linear Goursat pairs.

Solves, at every node, the 2x2 system that is the exact fixed point of the
trapezoid updates

    X[i,j] = X[i,j-1] + (de/2) * (S1[i,j] + S1[i,j-1])
    Y[i,j] = Y[i-1,j] + (dv/2) * (S2[i,j] + S2[i-1,j])

with S1 = F - p1 X - q1 Y and S2 = G - p2 X - q2 Y.
"""

from libc.math cimport isfinite, NAN


def march_linear(const double[::1] vn, const double[::1] en,
                 const double[:, :] p1, const double[:, :] q1,
                 const double[:, :] p2, const double[:, :] q2,
                 const double[:, :] F, const double[:, :] G,
                 const double[::1] X0, const double[::1] Y0,
                 const long[::1] jstop,
                 double[:, :] X, double[:, :] Y):
    """Fill X, Y in place. Returns -1, or i*ne + j of the first non-finite node."""
    cdef Py_ssize_t nv = vn.shape[0]
    cdef Py_ssize_t ne = en.shape[0]
    cdef Py_ssize_t i, j, js
    cdef double he, hv, rx, ry, a11, a12, a21, a22, det, x, y
    cdef long bad = -1

    with nogil:
        for i in range(nv):
            js = jstop[i]
            if i > 0:
                hv = 0.5 * (vn[i] - vn[i - 1])
            for j in range(js):
                if j > 0:
                    he = 0.5 * (en[j] - en[j - 1])
                if i == 0 and j == 0:
                    x = X0[0]
                    y = Y0[0]
                elif i == 0:
                    y = Y0[j]
                    rx = X[0, j - 1] + he * (F[0, j] + F[0, j - 1]
                                             - p1[0, j - 1] * X[0, j - 1]
                                             - q1[0, j - 1] * Y[0, j - 1]
                                             - q1[0, j] * y)
                    x = rx / (1.0 + he * p1[0, j])
                elif j == 0:
                    x = X0[i]
                    ry = Y[i - 1, 0] + hv * (G[i, 0] + G[i - 1, 0]
                                             - p2[i - 1, 0] * X[i - 1, 0]
                                             - q2[i - 1, 0] * Y[i - 1, 0]
                                             - p2[i, 0] * x)
                    y = ry / (1.0 + hv * q2[i, 0])
                else:
                    rx = X[i, j - 1] + he * (F[i, j] + F[i, j - 1]
                                             - p1[i, j - 1] * X[i, j - 1]
                                             - q1[i, j - 1] * Y[i, j - 1])
                    ry = Y[i - 1, j] + hv * (G[i, j] + G[i - 1, j]
                                             - p2[i - 1, j] * X[i - 1, j]
                                             - q2[i - 1, j] * Y[i - 1, j])
                    a11 = 1.0 + he * p1[i, j]
                    a12 = he * q1[i, j]
                    a21 = hv * p2[i, j]
                    a22 = 1.0 + hv * q2[i, j]
                    det = a11 * a22 - a12 * a21
                    x = (a22 * rx - a12 * ry) / det
                    y = (a11 * ry - a21 * rx) / det
                if bad < 0 and not (isfinite(x) and isfinite(y)):
                    bad = i * ne + j
                X[i, j] = x
                Y[i, j] = y
            for j in range(js, ne):
                X[i, j] = NAN
                Y[i, j] = NAN
    return bad
