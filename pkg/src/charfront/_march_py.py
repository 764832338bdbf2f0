"""Pure-numpy fallback for the linear cell marching.

Nodes on one anti-diagonal i + j = d depend only on the previous diagonal, so
each diagonal is updated as a vector. The arithmetic matches the compiled
kernel term by term.
"""

import numpy as np


def march_linear(vn, en, p1, q1, p2, q2, F, G, X0, Y0, jstop, X, Y):
    nv, ne = len(vn), len(en)
    X[...] = np.nan
    Y[...] = np.nan
    jstop = np.asarray(jstop)
    if nv == 0 or ne == 0 or jstop[0] == 0:
        return -1
    X[0, 0] = X0[0]
    Y[0, 0] = Y0[0]
    he_all = 0.5 * np.diff(en)
    hv_all = 0.5 * np.diff(vn)
    for d in range(1, nv + ne - 1):
        i = np.arange(max(0, d - ne + 1), min(d, nv - 1) + 1)
        j = d - i
        keep = j < jstop[i]
        i, j = i[keep], j[keep]
        if i.size == 0:
            continue
        x = np.empty(i.size)
        y = np.empty(i.size)

        top = i == 0
        if top.any():
            jj = j[top]
            he = he_all[jj - 1]
            yy = Y0[jj]
            rx = X[0, jj - 1] + he * (F[0, jj] + F[0, jj - 1]
                                      - p1[0, jj - 1] * X[0, jj - 1]
                                      - q1[0, jj - 1] * Y[0, jj - 1]
                                      - q1[0, jj] * yy)
            x[top] = rx / (1.0 + he * p1[0, jj])
            y[top] = yy

        left = j == 0
        if left.any():
            ii = i[left]
            hv = hv_all[ii - 1]
            xx = X0[ii]
            ry = Y[ii - 1, 0] + hv * (G[ii, 0] + G[ii - 1, 0]
                                      - p2[ii - 1, 0] * X[ii - 1, 0]
                                      - q2[ii - 1, 0] * Y[ii - 1, 0]
                                      - p2[ii, 0] * xx)
            x[left] = xx
            y[left] = ry / (1.0 + hv * q2[ii, 0])

        inner = ~(top | left)
        if inner.any():
            ii, jj = i[inner], j[inner]
            he = he_all[jj - 1]
            hv = hv_all[ii - 1]
            rx = X[ii, jj - 1] + he * (F[ii, jj] + F[ii, jj - 1]
                                       - p1[ii, jj - 1] * X[ii, jj - 1]
                                       - q1[ii, jj - 1] * Y[ii, jj - 1])
            ry = Y[ii - 1, jj] + hv * (G[ii, jj] + G[ii - 1, jj]
                                       - p2[ii - 1, jj] * X[ii - 1, jj]
                                       - q2[ii - 1, jj] * Y[ii - 1, jj])
            a11 = 1.0 + he * p1[ii, jj]
            a12 = he * q1[ii, jj]
            a21 = hv * p2[ii, jj]
            a22 = 1.0 + hv * q2[ii, jj]
            det = a11 * a22 - a12 * a21
            x[inner] = (a22 * rx - a12 * ry) / det
            y[inner] = (a11 * ry - a21 * rx) / det

        X[i, j] = x
        Y[i, j] = y
    valid = np.arange(ne)[None, :] < jstop[:, None]
    nf = valid & ~(np.isfinite(X) & np.isfinite(Y))
    if nf.any():
        # sequential marching is row-major, so the first hit is the smallest flat index
        return int(np.flatnonzero(nf.ravel())[0])
    return -1
