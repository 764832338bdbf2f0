"""Forward fundamental solution (I, J, E) of a scalar linear Goursat operator.

For L(X, Y) = (d_eta X + p1 X + q1 Y, d_v Y + p2 X + q2 Y):

  I(eta; s, t) = exp(-int_t^eta p1(s, .)),   J(v; s, t) = exp(-int_s^v q2(., t)),

and, for each source (s, t), the columns (E11, E21) and (E12, E22) solve the
homogeneous system in the target (v, eta) with

  E11(v, t; s, t) = 0,                      E21(s, eta; s, t) = -p2(s, eta) I(eta; s, t),
  E12(v, t; s, t) = -q1(v, t) J(v; s, t),   E22(s, eta; s, t) = 0.

The kernels are solved numerically on the source's sub-rectangle with the
same cell marching as the direct solver, and the representation integrals
use trapezoid weights on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator

from . import kernels
from .errors import NonFinite, OutOfDomain
from .goursat import CharGrid, LinearGoursatOp, _edge, _sample, check_jstop, valid_mask
from .iface import digamma_jstop, fh_closed, shear_coefficients
from .pulse import PulseData

Array = np.ndarray

__all__ = ["LinearGoursatOp", "RiemannKernel", "build_kernel", "represent", "represent_grid",
           "SpecializedKernel", "build_specialized", "represent_pulse", "kernel_monitor"]


def _weights_from(nodes: Array, k: int) -> Array:
    """Trapezoid weight of node k in int_{nodes[0]}^{nodes[i]} for every i >= k."""
    d = np.diff(nodes)
    n = nodes.size - k
    w = np.full(n, 0.5 * d[k - 1] if k > 0 else 0.0)
    if n > 1:
        w[1:] += 0.5 * d[k]
    return w


def _sub_jstop(js: Array, k: int, l: int) -> Array:
    return np.clip(js[k:] - l, 0, None).astype(np.int64)


def _solve_sub(vn, en, coeffs, X0, Y0, js, X, Y, backend):
    zeros = np.zeros(X.shape)
    bad = kernels.march_linear(vn, en, *coeffs, zeros, zeros, X0, Y0, js, X, Y, backend=backend)
    if bad >= 0:
        raise NonFinite(divmod(bad, en.size))


@dataclass(eq=False)
class RiemannKernel:
    """Node-sampled fundamental solution on a grid.

    E columns are computed per source on demand and kept in a small LRU cache.
    """

    grid: CharGrid
    coeffs: tuple[Array, Array, Array, Array]
    jstop: Array
    backend: str | None = None
    cache_size: int = 64
    P1c: Array = field(init=False, repr=False)
    Q2c: Array = field(init=False, repr=False)

    def __post_init__(self):
        p1, q1, p2, q2 = self.coeffs
        self.P1c = cumulative_trapezoid(p1, self.grid.eta, axis=1, initial=0.0)
        self.Q2c = cumulative_trapezoid(q2, self.grid.v, axis=0, initial=0.0)
        self._column = lru_cache(maxsize=self.cache_size)(self._solve_column)

    def I_nodes(self, i: int, l: int) -> Array:
        """I(eta_j; v_i, eta_l) for j >= l."""
        return np.exp(self.P1c[i, l] - self.P1c[i, l:])

    def J_nodes(self, k: int, j: int) -> Array:
        """J(v_i; v_k, eta_j) for i >= k."""
        return np.exp(self.Q2c[k, j] - self.Q2c[k:, j])

    def I(self, eta, v, t):
        f = RegularGridInterpolator((self.grid.v, self.grid.eta), self.P1c)
        return np.exp(f(np.column_stack(np.broadcast_arrays(v, t))) - f(np.column_stack(np.broadcast_arrays(v, eta))))

    def J(self, v, s, t):
        f = RegularGridInterpolator((self.grid.v, self.grid.eta), self.Q2c)
        return np.exp(f(np.column_stack(np.broadcast_arrays(s, t))) - f(np.column_stack(np.broadcast_arrays(v, t))))

    def _solve_column(self, k: int, l: int, col: int) -> tuple[Array, Array]:
        p1, q1, p2, q2 = self.coeffs
        vn, en = self.grid.v[k:], self.grid.eta[l:]
        sub = tuple(c[k:, l:] for c in self.coeffs)
        js = _sub_jstop(self.jstop, k, l)
        shape = (vn.size, en.size)
        X = np.empty(shape)
        Y = np.empty(shape)
        if col == 0:
            X0 = np.zeros(vn.size)
            Y0 = -p2[k, l:] * self.I_nodes(k, l)
        else:
            X0 = -q1[k:, l] * self.J_nodes(k, l)
            Y0 = np.zeros(en.size)
        _solve_sub(vn, en, sub, X0, Y0, js, X, Y, self.backend)
        return X, Y

    def column(self, k: int, l: int, col: int) -> tuple[Array, Array]:
        """(E1c, E2c)(v_i, eta_j; v_k, eta_l) on the sub-grid i >= k, j >= l."""
        if not (0 <= k < self.grid.nv and 0 <= l < self.jstop[k]):
            raise OutOfDomain(f"source node ({k}, {l}) outside the admissible region")
        return self._column(k, l, col)

    def E(self, v: float, eta: float, s: float, t: float) -> Array:
        """2x2 kernel at a point, bilinear in the source lattice and in the target.

        Zero when the target does not lie to the future of the source.
        """
        g = self.grid
        out = np.zeros((2, 2))
        if v < s or eta < t:
            return out
        k = min(max(int(np.searchsorted(g.v, s, side="right")) - 1, 0), g.nv - 2)
        l = min(max(int(np.searchsorted(g.eta, t, side="right")) - 1, 0), g.neta - 2)
        a = (s - g.v[k]) / (g.v[k + 1] - g.v[k])
        b = (t - g.eta[l]) / (g.eta[l + 1] - g.eta[l])
        for dk, dl, w in ((0, 0, (1 - a) * (1 - b)), (1, 0, a * (1 - b)), (0, 1, (1 - a) * b), (1, 1, a * b)):
            if w == 0.0:
                continue
            kk, ll = k + dk, l + dl
            for col in (0, 1):
                for row, arr in enumerate(self.column(kk, ll, col)):
                    out[row, col] += w * _bilinear(g.v[kk:], g.eta[ll:], arr, v, eta)
        return out


def _bilinear(vn: Array, en: Array, arr: Array, v: float, eta: float) -> float:
    """Bilinear value at (v, eta), clamped to the node range of the table."""
    v = min(max(v, vn[0]), vn[-1])
    eta = min(max(eta, en[0]), en[-1])
    if vn.size == 1 and en.size == 1:
        return float(arr[0, 0])
    if vn.size == 1:
        return float(np.interp(eta, en, arr[0]))
    if en.size == 1:
        return float(np.interp(v, vn, arr[:, 0]))
    return float(RegularGridInterpolator((vn, en), arr)([[v, eta]])[0])


def build_kernel(op: LinearGoursatOp, grid: CharGrid, source_grid: CharGrid | None = None,
                 jstop: Array | None = None, backend: str | None = None, cache_size: int = 64) -> RiemannKernel:
    """Kernel whose source lattice is the grid itself.

    Targets and sources share nodes so the trapezoid weights of the
    representation integrals line up with the kernel tables; a coarser source
    lattice is obtained by coarsening the whole grid.
    """
    if source_grid is not None and not (np.array_equal(source_grid.v, grid.v)
                                        and np.array_equal(source_grid.eta, grid.eta)):
        raise ValueError("source_grid must coincide with grid; coarsen both instead")
    return RiemannKernel(grid, op.sample(grid), check_jstop(grid, jstop), backend, cache_size)


def represent_grid(kernel: RiemannKernel, F=None, G=None, X0=0.0, Y0=0.0,
                   literal: bool = False) -> tuple[Array, Array]:
    """Evaluate the representation formula at every admissible node.

      X = int I F dt + sum E1. (F, G) + I X0(v) + int E11(., s, c) X0 ds + int E12(., a, t) Y0 dt
      Y = int J G ds + sum E2. (F, G) + J Y0(eta) + int E22(., a, t) Y0 dt + int E21(., s, c) X0 ds

    literal=True adds the two extra boundary terms
      -int E12(v, eta; v, t) Y0(t) dt  and  -int E21(v, eta; s, eta) X0(s) ds,
    which do not vanish in general; it is kept for comparison.
    """
    g = kernel.grid
    V, Et = g.mesh()
    Fs, Gs = _sample(F, V, Et), _sample(G, V, Et)
    x0 = _edge(X0, g.v, 1)[:, 0]
    y0 = _edge(Y0, g.eta, 1)[:, 0]
    js = kernel.jstop
    valid = valid_mask(g, js)
    p1, q1, p2, q2 = kernel.coeffs
    eP, eQ = np.exp(kernel.P1c), np.exp(kernel.Q2c)

    with np.errstate(invalid="ignore"):
        X = cumulative_trapezoid(np.where(valid, eP * Fs, 0.0), g.eta, axis=1, initial=0.0) / eP
        Y = cumulative_trapezoid(np.where(valid, eQ * Gs, 0.0), g.v, axis=0, initial=0.0) / eQ
        X += x0[:, None] / eP
        Y += y0[None, :] / eQ
        if literal:
            X += cumulative_trapezoid(np.where(valid, eP * q1 * y0[None, :], 0.0), g.eta, axis=1, initial=0.0) / eP
            Y += cumulative_trapezoid(np.where(valid, eQ * p2 * x0[:, None], 0.0), g.v, axis=0, initial=0.0) / eQ

    for k in range(g.nv):
        wv = _weights_from(g.v, k)
        for l in range(int(js[k])):
            we = _weights_from(g.eta, l)
            need1 = Fs[k, l] != 0.0 or (l == 0 and x0[k] != 0.0)
            need2 = Gs[k, l] != 0.0 or (k == 0 and y0[l] != 0.0)
            if not (need1 or need2):
                continue
            W = wv[:, None] * we[None, :]
            if need1:
                E11, E21 = kernel._solve_column(k, l, 0)
                if Fs[k, l] != 0.0:
                    X[k:, l:] += W * E11 * Fs[k, l]
                    Y[k:, l:] += W * E21 * Fs[k, l]
                if l == 0 and x0[k] != 0.0:
                    X[k:, :] += wv[:, None] * E11 * x0[k]
                    Y[k:, :] += wv[:, None] * E21 * x0[k]
            if need2:
                E12, E22 = kernel._solve_column(k, l, 1)
                if Gs[k, l] != 0.0:
                    X[k:, l:] += W * E12 * Gs[k, l]
                    Y[k:, l:] += W * E22 * Gs[k, l]
                if k == 0 and y0[l] != 0.0:
                    X[:, l:] += we[None, :] * E12 * y0[l]
                    Y[:, l:] += we[None, :] * E22 * y0[l]
    X[~valid] = np.nan
    Y[~valid] = np.nan
    return X, Y


def represent(kernel: RiemannKernel, F=None, G=None, X0=0.0, Y0=0.0, at: tuple[float, float] = None,
              literal: bool = False) -> tuple[float, float]:
    """Representation formula at one point, bilinear between the surrounding nodes.

    Only sources up to the enclosing cell are used, so the cost scales with
    the point's distance from the data edges.
    """
    g = kernel.grid
    v, eta = at
    if not (g.v[0] <= v <= g.v[-1] and g.eta[0] <= eta <= g.eta[-1]):
        raise OutOfDomain("point outside the kernel grid")
    i = max(min(int(np.searchsorted(g.v, v, side="left")), g.nv - 1), 1)
    j = max(min(int(np.searchsorted(g.eta, eta, side="left")), g.neta - 1), 1)
    sub = g.sub(0, 0, i + 1, j + 1)
    js = np.minimum(kernel.jstop[: i + 1], j + 1)
    small = RiemannKernel(sub, tuple(c[: i + 1, : j + 1] for c in kernel.coeffs), js, kernel.backend, 1)
    V, Et = g.mesh()
    Fs = _sample(F, V, Et)[: i + 1, : j + 1]
    Gs = _sample(G, V, Et)[: i + 1, : j + 1]
    x0 = _edge(X0, g.v, 1)[: i + 1, 0]
    y0 = _edge(Y0, g.eta, 1)[: j + 1, 0]
    X, Y = represent_grid(small, Fs, Gs, x0, y0, literal)
    return _bilinear(sub.v, sub.eta, X, v, eta), _bilinear(sub.v, sub.eta, Y, v, eta)


@dataclass(eq=False)
class SpecializedKernel:
    """Kernel (A, B) = (E11, E21) of the shear system for sources on eta = 0.

    A[k], B[k] hold the source v_k column on the sub-grid i >= k.
    """

    grid: CharGrid
    angle: int
    jstop: Array
    digamma: Array
    h: Array
    sources: Array
    A: list = field(repr=False)
    B: list = field(repr=False)
    sup_monitor: float = float("nan")

    def I(self, eta, s_index: int) -> Array:
        """I(eta; s, 0) = 2 / sqrt(digamma(s, eta)) at the eta-nodes given by index or value."""
        eta = np.asarray(eta, dtype=float)
        return np.interp(eta, self.grid.eta, 2.0 / np.sqrt(self.digamma[s_index]))


def build_specialized(data: PulseData, angle: int, grid: CharGrid, source_v_nodes=None,
                      digamma_min: float = 1e-3, backend: str | None = None) -> SpecializedKernel:
    """Solve for (A, B)(v, eta; s, 0) with A(v, 0; s, 0) = 0 and
    B(s, eta; s, 0) = (1 - eta h(s, eta)/4) * 2 / sqrt(digamma(s, eta))."""
    if grid.eta[0] != 0.0:
        raise ValueError("the kernel grid must start at eta = 0")
    geom = data.geometry(angle)
    js = digamma_jstop(geom, grid, digamma_min)
    f, h, _ = fh_closed(geom, grid, js, digamma_min)
    coeffs = shear_coefficients(f, h, grid)
    V, Et = grid.mesh()
    dg = np.where(valid_mask(grid, js), geom.digamma(V, Et), np.nan)
    src = np.arange(grid.nv) if source_v_nodes is None else np.asarray(source_v_nodes, dtype=int)
    A, B = [], []
    for k in src:
        vn = grid.v[k:]
        sub = tuple(c[k:, :] for c in coeffs)
        sjs = js[k:]
        X = np.empty((vn.size, grid.neta))
        Y = np.empty_like(X)
        y0 = np.where(np.arange(grid.neta) < js[k], (1.0 - grid.eta * h[k] / 4.0) * 2.0 / np.sqrt(dg[k]), 0.0)
        _solve_sub(vn, grid.eta, sub, np.zeros(vn.size), y0, sjs, X, Y, backend)
        A.append(X)
        B.append(Y)
    K = SpecializedKernel(grid, angle, js, dg, h, src, A, B)
    if geom.v_star < 1.0 and np.any(grid.v > geom.v_star):
        K.sup_monitor = _sup_sigma_AB(K, geom, grid.v > geom.v_star, np.ones(src.size, bool), 0.0)[0]
    return K


def represent_pulse(kernel: SpecializedKernel, dpsi, at: tuple[float, float] | None = None,
                    literal: bool = False):
    """(Ft', H') from the kernel and edge data Ft'(v, 0) = psi'(v).

    Returns grid arrays, or the bilinear value at the point `at`.

      Ft' = 2 psi'(v) / sqrt(digamma(v, eta)) + int_0^v A(v, eta; s, 0) psi'(s) ds
      H'  = int_0^v B(v, eta; s, 0) psi'(s) ds

    literal=True adds -int B(v, eta; s, eta) psi'(s) ds to H', with
    B(v, eta; s, eta) = (1 - eta h(s, eta)/4) sqrt(digamma(s, eta)/digamma(v, eta)).
    """
    g = kernel.grid
    if kernel.sources.size != g.nv or np.any(kernel.sources != np.arange(g.nv)):
        raise ValueError("representation needs the kernel for every source node")
    d0 = np.asarray(dpsi(g.v) if callable(dpsi) else dpsi, dtype=float)
    dg = kernel.digamma
    Ft = 2.0 * d0[:, None] / np.sqrt(dg)
    Hp = np.zeros(g.shape)
    for k in range(g.nv):
        if d0[k] == 0.0:
            continue
        wv = _weights_from(g.v, k)[:, None]
        Ft[k:] += wv * kernel.A[k] * d0[k]
        Hp[k:] += wv * kernel.B[k] * d0[k]
    if literal:
        # trapezoid in s of (1 - eta h(s, eta)/4) sqrt(digamma(s, eta)) psi'(s), over sqrt(digamma(v, eta))
        integrand = (1.0 - g.eta[None, :] * kernel.h / 4.0) * np.sqrt(dg) * d0[:, None]
        Hp -= cumulative_trapezoid(np.nan_to_num(integrand), g.v, axis=0, initial=0.0) / np.sqrt(dg)
    valid = valid_mask(g, kernel.jstop)
    Ft[~valid] = np.nan
    Hp[~valid] = np.nan
    if at is not None:
        v, eta = at
        if not (g.v[0] <= v <= g.v[-1] and g.eta[0] <= eta <= g.eta[-1]):
            raise OutOfDomain("point outside the kernel grid")
        return _bilinear(g.v, g.eta, Ft, v, eta), _bilinear(g.v, g.eta, Hp, v, eta)
    return Ft, Hp


@dataclass(frozen=True)
class KernelMonitor:
    sup: float
    argmax: tuple[float, float, float]
    v0: float
    v1: float
    sigma_min: float


def _sup_sigma_AB(kernel: SpecializedKernel, geom, target_rows: Array, source_ok: Array, sigma_min: float):
    g = kernel.grid
    sig = np.full(g.shape, np.nan)
    sig[target_rows] = geom.sigma(g.v[target_rows][:, None], g.eta[None, :])
    sig[~valid_mask(g, kernel.jstop)] = np.nan
    best, where = 0.0, (np.nan, np.nan, np.nan)
    for n, k in enumerate(kernel.sources):
        if not source_ok[n]:
            continue
        s = sig[k:]
        m = np.abs(kernel.A[n]) + np.abs(kernel.B[n])
        with np.errstate(invalid="ignore"):
            val = np.where(np.isfinite(s) & (s >= sigma_min), s * m, -np.inf)
        idx = np.unravel_index(np.argmax(val), val.shape)
        if val[idx] > best:
            best = float(val[idx])
            where = (float(g.v[k + idx[0]]), float(g.eta[idx[1]]), float(g.v[k]))
    return best, where


def kernel_monitor(kernel: SpecializedKernel, data: PulseData, v0: float, v1: float,
                   sigma_min: float = 1e-3) -> KernelMonitor:
    """sup of sigma (|A| + |B|)(v, eta; s, 0) over v >= v0, s <= v1, sigma >= sigma_min."""
    geom = data.geometry(kernel.angle)
    if not geom.v_star < v1 < v0:
        raise ValueError("need v_star < v1 < v0")
    g = kernel.grid
    best, where = _sup_sigma_AB(kernel, geom, g.v >= v0, g.v[kernel.sources] <= v1, sigma_min)
    return KernelMonitor(best, where, v0, v1, sigma_min)
