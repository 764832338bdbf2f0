"""Field system on the intermediate face for commutative short-pulse data.

Unknowns (per angle, on a (v, eta) grid):
  f, h        trace parts, known in closed form through digamma,
  ft = f/eta^2 the rescaled trace part, regular at eta = 0,
  F', H'      scalar shears with F = F' T0, H = H' T0, F' = eta Ft',
  k           fibre metric, d_v k = k (f/2 + F), k(0, eta) = identity,
  omega       log of the lapse, d_eta d_v omega = fh/16 - Tr(FH)/8 - f/(4 eta).

Nodes with digamma below a floor are masked. The unmasked set is closed
under moving down or left, so every march simply stops early on each line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InsufficientWindow, NonPositive, SingularRegion, ZeroEnergy
from .goursat import CharGrid, GoursatProblem, check_jstop, march, solve_first_order, valid_mask
from .pulse import PulseData, SingularityGeometry, TracefreeSym2

Array = np.ndarray

DIGAMMA_MIN = 1e-3


def digamma_jstop(geom: SingularityGeometry, grid: CharGrid, digamma_min: float = DIGAMMA_MIN) -> Array:
    """Per v-node count of leading eta-nodes with digamma >= digamma_min."""
    V, E = grid.mesh()
    ok = geom.digamma(V, E) >= digamma_min
    # digamma decreases in eta, so take the first failure on each line
    first_bad = np.where(ok.all(axis=1), grid.neta, np.argmin(ok, axis=1))
    return np.minimum.accumulate(first_bad).astype(np.int64)


def _masked(arr: Array, valid: Array) -> Array:
    return np.where(valid, arr, np.nan)


def fh_closed(geom: SingularityGeometry, grid: CharGrid, jstop: Array | None = None,
              digamma_min: float = DIGAMMA_MIN) -> tuple[Array, Array, Array]:
    """Closed forms f = 2 d_v log digamma, h = 2 d_eta log digamma and ft = f / eta^2."""
    V, E = grid.mesh()
    valid = valid_mask(grid, check_jstop(grid, jstop))
    dg = geom.digamma(V, E)
    if np.any(dg[valid] < digamma_min):
        raise SingularRegion(f"digamma < {digamma_min} on the grid; clip with a stop index")
    dg = np.where(valid, dg, np.nan)
    en = geom.E(V)
    ft = -4.0 * en / dg
    f = E * E * ft
    h = -8.0 * E * geom.IE(V) / dg
    return f, h, ft


def fh_goursat(geom: SingularityGeometry, grid: CharGrid, tol: float = 1e-12, max_iter: int = 64,
               jstop: Array | None = None) -> tuple[Array, Array]:
    """Solve d_eta ft = -ft h / 2, d_v h = -(eta^2/2) ft h + 2 eta ft with ft(v,0) = -E, h(0,eta) = 0."""
    def P(v, e, x, y):
        return -0.5 * x * y

    def Q(v, e, x, y):
        return -0.5 * e * e * x * y + 2.0 * e * x

    prob = GoursatProblem(1, P, Q, lambda v: -geom.E(v), 0.0)
    sol = solve_first_order(prob, grid, tol=tol, max_iter=max_iter, jstop=jstop)
    return sol.X[..., 0], sol.Y[..., 0]


def shear_coefficients(f: Array, h: Array, grid: CharGrid) -> tuple[Array, Array, Array, Array]:
    """(p1, q1, p2, q2) of the rescaled shear system for (Ft', H')."""
    eta = grid.eta[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        q1 = np.where(eta > 0, f / (4.0 * eta), 0.0)
    return (np.ascontiguousarray(h / 4.0), np.ascontiguousarray(q1),
            np.ascontiguousarray(eta * h / 4.0 - 1.0), np.ascontiguousarray(f / 4.0))


def solve_FH(f: Array, h: Array, dpsi, grid: CharGrid, jstop: Array | None = None,
             backend: str | None = None) -> tuple[Array, Array, Array]:
    """Linear shear system in the rescaled unknown Ft' = F'/eta.

        d_eta Ft' + (h/4) Ft' + (f/(4 eta)) H' = 0,   Ft'(v, 0) = psi'(v)
        d_v H' + (eta h/4 - 1) Ft' + (f/4) H' = 0,    H'(0, eta) = 0

    Returns (F', H', Ft').
    """
    coeffs = shear_coefficients(f, h, grid)
    x0 = np.asarray(dpsi(grid.v) if callable(dpsi) else dpsi, dtype=float)
    zeros = np.zeros(grid.shape)
    Ft, Hp = march(coeffs, zeros, zeros, x0, np.zeros(grid.neta), grid, jstop, backend)
    return grid.eta[None, :] * Ft, Hp, Ft


def _lagrange_weights(nodes: Array, x: Array) -> Array:
    """Weights of the interpolant through nodes (shape (k, m)) evaluated at x (shape (m,))."""
    k = nodes.shape[0]
    w = np.ones_like(nodes)
    for a in range(k):
        for b in range(k):
            if a != b:
                w[a] *= (x - nodes[b]) / (nodes[a] - nodes[b])
    return w


def reconstruct_metric(f: Array, Fprime: Array, T0: TracefreeSym2, grid: CharGrid,
                       jstop: Array | None = None) -> Array:
    """Integrate d_v k = k (f/2 + F' T0) from k(0, eta) = identity with classical RK4.

    Midpoint values come from cubic Lagrange interpolation along v, shifted
    inward near the ends of each valid line.
    """
    js = check_jstop(grid, jstop)
    nv, ne = grid.shape
    valid = valid_mask(grid, js)
    istop = valid.sum(axis=0)
    v = grid.v
    m = T0.matrix
    eye = np.eye(2)
    k = np.full((nv, ne, 2, 2), np.nan)
    k[0, valid[0]] = eye

    def gen(alpha, beta):
        return 0.5 * alpha[:, None, None] * eye + beta[:, None, None] * m

    cols_all = np.arange(ne)
    for i in range(nv - 1):
        cols = cols_all[valid[i + 1]]
        if cols.size == 0:
            break
        hstep = v[i + 1] - v[i]
        xm = np.full(cols.size, 0.5 * (v[i] + v[i + 1]))
        n_line = istop[cols]
        cubic = n_line >= 4
        start = np.where(cubic, np.clip(i - 1, 0, n_line - 4), i)
        npts = np.where(cubic, 4, 2)
        fm = np.empty(cols.size)
        Fm = np.empty(cols.size)
        for kind in (True, False):
            sel = cubic == kind
            if not sel.any():
                continue
            p = 4 if kind else 2
            idx = start[sel][None, :] + np.arange(p)[:, None]
            c = cols[sel][None, :]
            w = _lagrange_weights(v[idx], xm[sel])
            fm[sel] = np.sum(w * f[idx, c], axis=0)
            Fm[sel] = np.sum(w * Fprime[idx, c], axis=0)
        A0 = gen(f[i, cols], Fprime[i, cols])
        Am = gen(fm, Fm)
        A1 = gen(f[i + 1, cols], Fprime[i + 1, cols])
        kk = k[i, cols]
        k1 = kk @ A0
        k2 = (kk + 0.5 * hstep * k1) @ Am
        k3 = (kk + 0.5 * hstep * k2) @ Am
        k4 = (kk + hstep * k3) @ A1
        k[i + 1, cols] = kk + (hstep / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    kv = k[valid]
    sym = 0.5 * (kv + np.swapaxes(kv, -1, -2))
    if kv.size and np.min(np.linalg.eigvalsh(sym)) <= 0:
        raise NonPositive("fibre metric lost positive definiteness")
    return k


def solve_omega(ft: Array, f: Array, h: Array, Fprime: Array, Hprime: Array, T0: TracefreeSym2,
                grid: CharGrid) -> Array:
    """omega = double integral of fh/16 - F'H' Tr(T0^2)/8 - eta ft/4 from zero edges."""
    eta = grid.eta[None, :]
    rhs = f * h / 16.0 - Fprime * Hprime * T0.tr_sq / 8.0 - eta * ft / 4.0
    inner = cumulative_trapezoid(rhs, grid.v, axis=0, initial=0.0)
    return cumulative_trapezoid(inner, grid.eta, axis=1, initial=0.0)


@dataclass(frozen=True, eq=False)
class SigmaField:
    angle: int
    v: Array
    sigma_prime: Array
    T0: TracefreeSym2
    residual: Array
    n_layers: Array

    @property
    def Sigma(self) -> list[TracefreeSym2]:
        return [s * self.T0 for s in self.sigma_prime]

    @property
    def tr_sq(self) -> Array:
        """Tr(Sigma^2) per v-node."""
        return self.sigma_prime ** 2 * self.T0.tr_sq


def sigma_window(sigma_line: Array, lo: float, hi: float) -> Array:
    s = np.asarray(sigma_line)
    return np.flatnonzero(np.isfinite(s) & (s > lo) & (s <= hi))


def extract_sigma(Hprime: Array, geom: SingularityGeometry, grid: CharGrid, sigma_min: float = 1e-3,
                  sigma_fit_max: float = 1e-2, window: int = 8, v_indices=None) -> SigmaField:
    """Leading pole coefficient of H' ~ -Sigma'/sigma along v-lines.

    Fits sigma H' against {1, sigma log sigma, sigma} on the layers with
    sigma in (sigma_min, sigma_fit_max]; the constant term is -Sigma'.
    """
    if v_indices is None:
        v_indices = np.flatnonzero(grid.v > geom.v_star)
    v_indices = np.atleast_1d(np.asarray(v_indices, dtype=int))
    if v_indices.size == 0 or np.any(grid.v[v_indices] <= geom.v_star):
        raise ZeroEnergy("no v-line beyond v_star")
    sp = np.empty(v_indices.size)
    res = np.empty(v_indices.size)
    nl = np.empty(v_indices.size, dtype=int)
    for n, i in enumerate(v_indices):
        s = geom.sigma(grid.v[i], grid.eta)
        sel = sigma_window(np.where(np.isfinite(Hprime[i]), s, np.nan), sigma_min, sigma_fit_max)
        if sel.size < window:
            raise InsufficientWindow(f"v = {grid.v[i]:.6g}: {sel.size} layers in ({sigma_min}, {sigma_fit_max}], "
                                     f"need {window}")
        ss = s[sel]
        y = ss * Hprime[i, sel]
        basis = np.column_stack([np.ones_like(ss), ss * np.log(ss), ss])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        sp[n] = -coef[0]
        res[n] = float(np.sqrt(np.mean((basis @ coef - y) ** 2)))
        nl[n] = sel.size
    return SigmaField(geom.angle, grid.v[v_indices], sp, geom.T0, res, nl)


@dataclass(frozen=True)
class TraceEnergyReport:
    sup: float
    eta_residual: float
    v_residual: float


def trace_energy_monitor(ft: Array, h: Array, Ftprime: Array, Hprime: Array, T0: TracefreeSym2,
                         grid: CharGrid, digamma: Array, floor: float = 0.5) -> TraceEnergyReport:
    """sup of Tr(Ft^2) + Tr(H^2) on digamma >= floor, plus residuals of its two evolution laws.

    With Ft = Ft' T0, H = H' T0 and t2 = Tr(T0^2) the laws read
      d_eta Tr(Ft^2) = -(h/2) Tr(Ft^2) - (eta ft/2) Tr(Ft H)
      d_v Tr(H^2)    = -(eta^2 ft/2) Tr(H^2) - (eta h/2) Tr(Ft H) + 2 Tr(Ft H)
    and are checked with central differences at interior nodes.
    """
    t2 = T0.tr_sq
    region = np.isfinite(digamma) & (digamma >= floor)
    a = Ftprime ** 2 * t2
    b = Hprime ** 2 * t2
    ab = Ftprime * Hprime * t2
    total = np.where(region, a + b, np.nan)
    sup = float(np.nanmax(total)) if region.any() else 0.0
    eta = grid.eta[None, :]
    da = np.gradient(a, grid.eta, axis=1)
    db = np.gradient(b, grid.v, axis=0)
    r1 = da + 0.5 * h * a + 0.5 * eta * ft * ab
    r2 = db + 0.5 * eta * eta * ft * b + 0.5 * eta * h * ab - 2.0 * ab
    inner = region.copy()
    inner[[0, -1], :] = False
    inner[:, [0, -1]] = False
    # central stencils need both neighbours inside the region
    inner[1:-1, 1:-1] &= region[:-2, 1:-1] & region[2:, 1:-1] & region[1:-1, :-2] & region[1:-1, 2:]
    e1 = float(np.max(np.abs(r1[inner]))) if inner.any() else 0.0
    e2 = float(np.max(np.abs(r2[inner]))) if inner.any() else 0.0
    return TraceEnergyReport(sup, e1, e2)


@dataclass(frozen=True, eq=False)
class FieldState:
    angle: int
    grid: CharGrid
    jstop: Array
    f: Array
    h: Array
    ft: Array
    Fprime: Array
    Hprime: Array
    Ftprime: Array
    k: Array
    omega: Array
    digamma: Array
    sigma: Array

    @property
    def valid(self) -> Array:
        return valid_mask(self.grid, self.jstop)

    @property
    def detk_err(self) -> Array:
        """Relative error of det k against digamma^2 / 16."""
        det = np.linalg.det(np.where(self.valid[..., None, None], self.k, np.eye(2)))
        ref = self.digamma ** 2 / 16.0
        return np.where(self.valid, np.abs(det - ref) / ref, np.nan)


def solve_fields(data: PulseData, angle: int, grid: CharGrid, digamma_min: float = DIGAMMA_MIN,
                 fh: str = "closed", tol: float = 1e-12, max_iter: int = 64,
                 backend: str | None = None) -> FieldState:
    """Full per-angle pipeline: mask, (f, h), shears, metric and omega."""
    geom = data.geometry(angle)
    js = digamma_jstop(geom, grid, digamma_min)
    if js[0] < 2:
        raise SingularRegion("first v-line has fewer than two admissible nodes")
    valid = valid_mask(grid, js)
    f, h, ft = fh_closed(geom, grid, js, digamma_min)
    if fh == "goursat":
        ft, h = fh_goursat(geom, grid, tol, max_iter, js)
        f = grid.eta[None, :] ** 2 * ft
    elif fh != "closed":
        raise ValueError("fh must be 'closed' or 'goursat'")
    Fp, Hp, Ftp = solve_FH(f, h, data.profile.dpsi, grid, js, backend)
    k = reconstruct_metric(f, Fp, geom.T0, grid, js)
    omega = _masked(solve_omega(ft, f, h, Fp, Hp, geom.T0, grid), valid)
    V, E = grid.mesh()
    dg = _masked(geom.digamma(V, E), valid)
    if geom.v_star < 1.0:
        beyond = grid.v > geom.v_star
        sig = np.full(grid.shape, np.nan)
        sig[beyond] = geom.sigma(grid.v[beyond][:, None], grid.eta[None, :])
        sig = _masked(sig, valid)
    else:
        sig = np.full(grid.shape, np.nan)
    return FieldState(angle, grid, js, f, h, ft, Fp, Hp, Ftp, k, omega, dg, sig)
