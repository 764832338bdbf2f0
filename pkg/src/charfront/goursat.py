"""Characteristic (Goursat) problems on a rectangle in the (v, eta) plane.

A first-order Goursat system is

    d_eta X = P(v, eta, X, Y),   X(v, c) = X0(v)
    d_v   Y = Q(v, eta, X, Y),   Y(a, eta) = Y0(eta)

and is discretized through its integral form with the trapezoid rule on each
cell. Every node couples the two trapezoid updates, which are solved by
fixed-point (Picard) iteration. Nodes on one anti-diagonal are independent of
each other, so the iteration is vectorized along diagonals. Every node still
iterates to its own convergence, so the result matches a node-by-node march
with the same per-node rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import IncompatibleCorner, NonConvergence, NonFinite, SourceNotVanishing

Array = np.ndarray


@dataclass(frozen=True)
class Rectangle:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a < self.b and self.c < self.d):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def sides(self) -> tuple[float, float]:
        return self.b - self.a, self.d - self.c


@dataclass(frozen=True, eq=False)
class CharGrid:
    """Tensor-product node set. Nodes may be non-uniform but must increase."""

    v: Array
    eta: Array

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        e = np.asarray(self.eta, dtype=float)
        if v.ndim != 1 or e.ndim != 1 or v.size < 2 or e.size < 2:
            raise ValueError("need at least two nodes in each direction")
        if np.any(np.diff(v) <= 0) or np.any(np.diff(e) <= 0):
            raise ValueError("node coordinates must be strictly increasing")
        v.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "eta", e)

    @classmethod
    def uniform(cls, rect: Rectangle, nv: int, neta: int) -> "CharGrid":
        if nv < 2 or neta < 2:
            raise ValueError("nv and neta must be at least 2")
        return cls(np.linspace(rect.a, rect.b, nv), np.linspace(rect.c, rect.d, neta))

    @property
    def rect(self) -> Rectangle:
        return Rectangle(self.v[0], self.v[-1], self.eta[0], self.eta[-1])

    @property
    def nv(self) -> int:
        return self.v.size

    @property
    def neta(self) -> int:
        return self.eta.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.nv, self.neta

    def mesh(self) -> tuple[Array, Array]:
        return np.meshgrid(self.v, self.eta, indexing="ij")

    def sub(self, i0: int, j0: int, i1: int | None = None, j1: int | None = None) -> "CharGrid":
        return CharGrid(self.v[i0:i1], self.eta[j0:j1])

    def coarsen(self, stride: int) -> "CharGrid":
        if (self.nv - 1) % stride or (self.neta - 1) % stride:
            raise ValueError("stride must divide the cell counts")
        return CharGrid(self.v[::stride], self.eta[::stride])


def graded_nodes(lo: float, hi: float, n: int, density: Callable[[Array], Array], samples: int = 20001) -> Array:
    """n nodes on [lo, hi] with local spacing proportional to 1/density.

    The cumulative integral of the density is inverted by interpolation, so
    the map is smooth when the density is.
    """
    x = np.linspace(lo, hi, samples)
    rho = np.asarray(density(x), dtype=float)
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise ValueError("density must be positive and finite")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(x))])
    nodes = np.interp(np.linspace(0.0, cum[-1], n), cum, x)
    nodes[0], nodes[-1] = lo, hi
    return nodes


def corner_density(lo: float, hi: float, scale: float, ratio: float) -> Callable[[Array], Array]:
    """Density whose spacing near hi is ratio * max(hi - x, scale) (geometric clustering)."""
    base = 1.0 / (ratio * (hi - lo))

    def rho(x):
        return np.maximum(1.0 / (ratio * np.maximum(hi - x, scale)), base)

    return rho


@dataclass(frozen=True)
class GoursatProblem:
    """Vectorized right-hand sides.

    P and Q receive v, eta of shape (m, 1) and X, Y of shape (m, dim) and
    return shape (m, dim). X0 and Y0 are callables on node arrays or
    node-sampled arrays of shape (n,) or (n, dim).
    """

    dim: int
    P: Callable
    Q: Callable
    X0: Callable | Array
    Y0: Callable | Array


@dataclass(frozen=True, eq=False)
class GoursatSolution:
    grid: CharGrid
    X: Array
    Y: Array
    residual: float
    jstop: Array = field(default=None)

    @property
    def valid(self) -> Array:
        return valid_mask(self.grid, self.jstop)


def valid_mask(grid: CharGrid, jstop: Array | None) -> Array:
    if jstop is None:
        return np.ones(grid.shape, dtype=bool)
    return np.arange(grid.neta)[None, :] < np.asarray(jstop)[:, None]


def full_jstop(grid: CharGrid) -> Array:
    return np.full(grid.nv, grid.neta, dtype=np.int64)


def check_jstop(grid: CharGrid, jstop: Array | None) -> Array:
    if jstop is None:
        return full_jstop(grid)
    js = np.asarray(jstop, dtype=np.int64)
    if js.shape != (grid.nv,) or np.any(js < 0) or np.any(js > grid.neta):
        raise ValueError("jstop must hold one stop index per v-node")
    if np.any(np.diff(js) > 0):
        raise ValueError("valid region must shrink in v (lower-left closed)")
    return js


def _edge(data, nodes: Array, dim: int) -> Array:
    vals = data(nodes) if callable(data) else data
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(nodes.size, float(vals))
    return np.broadcast_to(vals.reshape(nodes.size, -1), (nodes.size, dim)).copy()


def solve_first_order(prob: GoursatProblem, grid: CharGrid, tol: float = 1e-12, max_iter: int = 64,
                      seed: str = "previous", jstop: Array | None = None) -> GoursatSolution:
    """Trapezoid / Picard solve of a (possibly nonlinear) first-order Goursat system.

    seed selects the per-node initial guess: "previous" copies the neighbour
    already computed in the marching direction, "zero" starts from zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if seed not in ("previous", "zero"):
        raise ValueError("seed must be 'previous' or 'zero'")
    N = prob.dim
    nv, ne = grid.shape
    js = check_jstop(grid, jstop)
    vn, en = grid.v, grid.eta
    X0 = _edge(prob.X0, vn, N)
    Y0 = _edge(prob.Y0, en, N)
    if not (np.all(np.isfinite(X0)) and np.all(np.isfinite(Y0))):
        raise NonFinite((0, 0))

    X = np.full((nv, ne, N), np.nan)
    Y = np.full((nv, ne, N), np.nan)
    Pn = np.full((nv, ne, N), np.nan)
    Qn = np.full((nv, ne, N), np.nan)
    he_all = 0.5 * np.diff(en)
    hv_all = 0.5 * np.diff(vn)
    worst = 0.0

    def rhs(i, j, x, y):
        v = vn[i][:, None]
        e = en[j][:, None]
        p = np.asarray(prob.P(v, e, x, y), dtype=float).reshape(i.size, N)
        q = np.asarray(prob.Q(v, e, x, y), dtype=float).reshape(i.size, N)
        bad = ~(np.all(np.isfinite(p), axis=1) & np.all(np.isfinite(q), axis=1))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise NonFinite((int(i[k]), int(j[k])))
        return p, q

    for d in range(nv + ne - 1):
        i = np.arange(max(0, d - ne + 1), min(d, nv - 1) + 1)
        j = d - i
        keep = j < js[i]
        i, j = i[keep], j[keep]
        if i.size == 0:
            continue
        has_e = (j > 0)[:, None]
        has_v = (i > 0)[:, None]
        jm = np.maximum(j - 1, 0)
        im = np.maximum(i - 1, 0)
        he = np.where(j > 0, he_all[jm], 0.0)[:, None]
        hv = np.where(i > 0, hv_all[im], 0.0)[:, None]
        # explicit halves of the trapezoid sums
        bx = np.where(has_e, X[i, jm] + he * Pn[i, jm], X0[i])
        by = np.where(has_v, Y[im, j] + hv * Qn[im, j], Y0[j])
        if seed == "previous":
            x = np.where(has_e, X[i, jm], X0[i])
            y = np.where(has_v, Y[im, j], Y0[j])
        else:
            x = np.where(has_e, 0.0, X0[i])
            y = np.where(has_v, 0.0, Y0[j])

        active = np.ones(i.size, dtype=bool)
        res = np.zeros(i.size)
        for _ in range(max_iter):
            a = np.flatnonzero(active)
            p, q = rhs(i[a], j[a], x[a], y[a])
            xn = np.where(has_e[a], bx[a] + he[a] * p, x[a])
            yn = np.where(has_v[a], by[a] + hv[a] * q, y[a])
            r = np.maximum(np.max(np.abs(xn - x[a]), axis=1), np.max(np.abs(yn - y[a]), axis=1))
            x[a], y[a], res[a] = xn, yn, r
            done = r <= tol
            active[a[done]] = False
            if not active.any():
                break
        if active.any():
            k = min(np.flatnonzero(active), key=lambda m: (i[m], j[m]))
            raise NonConvergence((int(i[k]), int(j[k])), float(res[k]))
        X[i, j], Y[i, j] = x, y
        Pn[i, j], Qn[i, j] = rhs(i, j, x, y)
        worst = max(worst, float(res.max()))

    return GoursatSolution(grid, X, Y, worst, js)


def _sample(c, V: Array, E: Array) -> Array:
    if c is None:
        return np.zeros(V.shape)
    if callable(c):
        out = np.asarray(c(V, E), dtype=float)
    else:
        out = np.asarray(c, dtype=float)
    return np.ascontiguousarray(np.broadcast_to(out, V.shape), dtype=float)


@dataclass(frozen=True)
class LinearGoursatOp:
    """Scalar linear operator L = (d_eta X + p1 X + q1 Y, d_v Y + p2 X + q2 Y).

    Coefficients are callables (v, eta) -> array, constants, or arrays
    sampled on the grid the operator is used with.
    """

    p1: Callable | float | Array = 0.0
    q1: Callable | float | Array = 0.0
    p2: Callable | float | Array = 0.0
    q2: Callable | float | Array = 0.0

    def sample(self, grid: CharGrid) -> tuple[Array, Array, Array, Array]:
        V, E = grid.mesh()
        return tuple(_sample(c, V, E) for c in (self.p1, self.q1, self.p2, self.q2))

    def as_problem(self, F=None, G=None, X0=0.0, Y0=0.0) -> GoursatProblem:
        """The same system as callables for the general (Picard) solver."""
        def coef(c, v, e):
            return c(v, e) if callable(c) else c

        def src(s, v, e):
            return 0.0 if s is None else (s(v, e) if callable(s) else s)

        P = lambda v, e, x, y: src(F, v, e) - coef(self.p1, v, e) * x - coef(self.q1, v, e) * y
        Q = lambda v, e, x, y: src(G, v, e) - coef(self.p2, v, e) * x - coef(self.q2, v, e) * y
        return GoursatProblem(1, P, Q, X0, Y0)


def march(coeffs, F: Array, G: Array, X0: Array, Y0: Array, grid: CharGrid,
          jstop: Array | None = None, backend: str | None = None) -> tuple[Array, Array]:
    """Exact trapezoid fixed point for node-sampled scalar linear data."""
    p1, q1, p2, q2 = coeffs
    js = check_jstop(grid, jstop)
    X = np.empty(grid.shape)
    Y = np.empty(grid.shape)
    bad = kernels.march_linear(grid.v, grid.eta, p1, q1, p2, q2, F, G, X0, Y0, js, X, Y, backend=backend)
    if bad >= 0:
        raise NonFinite(divmod(bad, grid.neta))
    return X, Y


def solve_linear(op: LinearGoursatOp, grid: CharGrid, F=None, G=None, X0=0.0, Y0=0.0,
                 jstop: Array | None = None, backend: str | None = None) -> GoursatSolution:
    """Linear scalar Goursat solve.

    For a linear system the per-node Picard iteration converges to the
    solution of a 2x2 linear system, which is solved directly here.
    """
    V, E = grid.mesh()
    coeffs = op.sample(grid)
    Fs, Gs = _sample(F, V, E), _sample(G, V, E)
    x0 = _edge(X0, grid.v, 1)[:, 0]
    y0 = _edge(Y0, grid.eta, 1)[:, 0]
    X, Y = march(coeffs, Fs, Gs, x0, y0, grid, jstop, backend)
    return GoursatSolution(grid, X[..., None], Y[..., None], 0.0, check_jstop(grid, jstop))


def _node_derivative(vals: Array, nodes: Array) -> Array:
    return np.gradient(vals, nodes, axis=0, edge_order=2)


def solve_second_order(rhs: Callable, Z0, Z1, grid: CharGrid, tol: float = 1e-12, max_iter: int = 64,
                       dim: int = 1, dZ0=None, dZ1=None) -> Array:
    """Solve d_v d_eta Z = rhs(v, eta, d_v Z, d_eta Z, Z) with Z(., c) = Z0, Z(a, .) = Z1.

    The potential Z and its two first derivatives become the unknowns of a
    first-order system of size 2*dim. If the edge derivatives are not given
    they are taken by second-order differences at the nodes.
    """
    vn, en = grid.v, grid.eta
    z0 = _edge(Z0, vn, dim)
    z1 = _edge(Z1, en, dim)
    if np.max(np.abs(z0[0] - z1[0])) > tol:
        raise IncompatibleCorner(f"Z0(a) = {z0[0]} but Z1(c) = {z1[0]}")
    dz0 = _edge(dZ0, vn, dim) if dZ0 is not None else _node_derivative(z0, vn)
    dz1 = _edge(dZ1, en, dim) if dZ1 is not None else _node_derivative(z1, en)

    def P(v, e, X, Y):
        x1, x2, y1 = X[:, :dim], X[:, dim:], Y[:, :dim]
        return np.concatenate([np.asarray(rhs(v, e, x1, y1, x2), dtype=float).reshape(x1.shape), y1], axis=1)

    def Q(v, e, X, Y):
        x1, x2, y1 = X[:, :dim], X[:, dim:], Y[:, :dim]
        return np.concatenate([np.asarray(rhs(v, e, x1, y1, x2), dtype=float).reshape(x1.shape), x1], axis=1)

    prob = GoursatProblem(2 * dim, P, Q, np.concatenate([dz0, z0], axis=1), np.concatenate([dz1, z1], axis=1))
    sol = solve_first_order(prob, grid, tol=tol, max_iter=max_iter)
    Z = sol.X[:, :, dim:].copy()
    Z[0, :, :] = sol.Y[0, :, dim:]
    return Z[..., 0] if dim == 1 else Z


def solve_singular(p1, q1, p2, q2, F, G, Y0, grid: CharGrid, tol: float = 1e-12,
                   kappa: float = 1.0, jstop: Array | None = None, backend: str | None = None) -> GoursatSolution:
    """Solve eta d_eta X + p1 X + q1 Y = F, d_v Y + p2 X + q2 Y = G with X(., 0) = 0.

    The eta-integrand (F - p1 X - q1 Y)/t of the integral form is sampled at
    the nodes and set to zero at t = 0, which is where rapidly vanishing
    sources put it. tol is accepted for interface parity; the linear node
    systems are solved exactly.
    """
    if grid.eta[0] != 0.0:
        raise ValueError("singular problems need the grid to start at eta = 0")
    V, E = grid.mesh()
    Fs = _sample(F, V, E)
    e1 = grid.eta[1]
    if np.any(np.abs(Fs[:, 1]) > kappa * e1 ** 2):
        worst = float(np.max(np.abs(Fs[:, 1])))
        raise SourceNotVanishing(f"|F(v, eta_1)| = {worst:.3e} exceeds {kappa} * eta_1^2 = {kappa * e1 ** 2:.3e}")
    inv = np.zeros_like(E)
    inv[:, 1:] = 1.0 / E[:, 1:]
    P1 = _sample(p1, V, E) * inv
    Q1 = _sample(q1, V, E) * inv
    Fr = Fs * inv
    coeffs = (P1, Q1, _sample(p2, V, E), _sample(q2, V, E))
    X, Y = march(coeffs, Fr, _sample(G, V, E), np.zeros(grid.nv), _edge(Y0, grid.eta, 1)[:, 0],
                 grid, jstop, backend)
    return GoursatSolution(grid, X[..., None], Y[..., None], 0.0, check_jstop(grid, jstop))


def gronwall_constant(M: float, rect: Rectangle) -> float:
    """Constant C(M, rect) with X, Y <= C * B for the two-sided integral inequality.

    Chain used: one substitution and 1D Gronwall give X, Y <= e^{ML}((1+ML) B + M^2 Z),
    Z the double integral of X + Y; iterating the resulting inequality for Z
    gives Z <= (B alpha / beta)(e^{beta v eta} - 1) with alpha = 2 e^{ML}(1+ML),
    beta = 2 e^{ML} M^2, and L the longer side.
    """
    if M < 0:
        raise ValueError("M must be nonnegative")
    lv, le = rect.sides
    L = max(lv, le)
    try:
        c1 = math.exp(M * L)
        return c1 * (1.0 + M * L) * math.exp(2.0 * c1 * M * M * lv * le)
    except OverflowError:
        return math.inf


def gronwall_bound(M: float, B: float, rect: Rectangle) -> float:
    if B < 0:
        raise ValueError("B must be nonnegative")
    # zero data gives zero solution even when the constant overflows
    return 0.0 if B == 0 else gronwall_constant(M, rect) * B
