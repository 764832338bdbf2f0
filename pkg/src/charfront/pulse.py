"""Short-pulse data T(v, theta) = psi(v) T0(theta) and the scalars derived from it.

The energy E(v) = 1/2 int_0^v Tr((d_s T)^2) ds, the focusing function
digamma = 4 - 2 eta^2 int_0^v E, the locus gamma(v) = sqrt(2 / int_0^v E) and
sigma = gamma - eta are all built from two cumulative tables of psi' that do not
depend on the angle; an angle only rescales them by Tr(T0^2) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import cumulative_simpson, quad, simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import BlowupDetected, OutOfDomain, ZeroEnergy

Array = np.ndarray

SIMPLE_ZERO_THRESHOLD = 1e-8


@dataclass(frozen=True)
class TracefreeSym2:
    """The symmetric tracefree matrix [[a, b], [b, -a]]."""

    a: float
    b: float

    @classmethod
    def from_matrix(cls, m) -> "TracefreeSym2":
        m = np.asarray(m, dtype=float)
        if abs(m[0, 1] - m[1, 0]) > 1e-12 or abs(m[0, 0] + m[1, 1]) > 1e-12:
            raise ValueError("matrix is not symmetric and tracefree")
        return cls(float(m[0, 0]), float(m[0, 1]))

    @property
    def matrix(self) -> Array:
        return np.array([[self.a, self.b], [self.b, -self.a]])

    @property
    def tr_sq(self) -> float:
        """Tr(M^2) = 2 (a^2 + b^2)."""
        return 2.0 * (self.a * self.a + self.b * self.b)

    @property
    def norm(self) -> float:
        return math.sqrt(self.tr_sq)

    @property
    def eigenvalues(self) -> tuple[float, float]:
        r = math.hypot(self.a, self.b)
        return -r, r

    def __mul__(self, s: float) -> "TracefreeSym2":
        return TracefreeSym2(s * self.a, s * self.b)

    __rmul__ = __mul__

    def __add__(self, other: "TracefreeSym2") -> "TracefreeSym2":
        return TracefreeSym2(self.a + other.a, self.b + other.b)

    def __sub__(self, other: "TracefreeSym2") -> "TracefreeSym2":
        return TracefreeSym2(self.a - other.a, self.b - other.b)


def _bump(x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    return np.where(inside, np.exp(-1.0 / (xs * (1.0 - xs))), 0.0)


def _bump_prime(x: Array) -> Array:
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    w = xs * (1.0 - xs)
    return np.where(inside, np.exp(-1.0 / w) * (1.0 - 2.0 * xs) / (w * w), 0.0)


def _fd4(values: Array, h: float) -> Array:
    """Fourth-order first differences on a uniform table, one-sided at the ends."""
    f = np.asarray(values, dtype=float)
    n = f.size
    if n < 5:
        raise ValueError("need at least 5 table entries")
    d = np.empty(n)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


@dataclass(frozen=True)
class PulseProfile:
    psi: Callable[[Array], Array]
    dpsi: Callable[[Array], Array]
    support_hint: tuple[float, float] | None = None
    label: str = "custom"

    def __post_init__(self):
        if abs(float(self.psi(np.array([0.0]))[0])) > 1e-12:
            raise ValueError("pulse profile must vanish at v = 0")
        if self.support_hint is not None:
            v = np.linspace(0.0, 1.0, 4097)
            out = (v < self.support_hint[0]) | (v > self.support_hint[1])
            if np.any(np.abs(self.dpsi(v[out])) > 1e-12):
                raise ValueError("derivative does not vanish outside the support hint")

    @classmethod
    def zero(cls) -> "PulseProfile":
        z = lambda v: np.zeros_like(np.asarray(v, dtype=float))
        return cls(z, z, None, "zero")

    @classmethod
    def linear(cls, slope: float = 1.0) -> "PulseProfile":
        return cls(lambda v: slope * np.asarray(v, dtype=float),
                   lambda v: np.full_like(np.asarray(v, dtype=float), slope), None, "linear")

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "PulseProfile":
        p = Polynomial(np.asarray(coefficients, dtype=float))
        dp = p.deriv()
        return cls(lambda v: p(np.asarray(v, dtype=float)), lambda v: dp(np.asarray(v, dtype=float)),
                   None, "polynomial")

    @classmethod
    def bump(cls, delta1: float, norm_sq: float = 1.0) -> "PulseProfile":
        """Smooth bump supported in [0, delta1] scaled so that int_0^1 psi'^2 = norm_sq."""
        if not 0 < delta1 <= 1:
            raise ValueError("delta1 must lie in (0, 1]")
        base, _ = quad(lambda x: float(_bump_prime(x)) ** 2, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
        amp = math.sqrt(norm_sq * delta1 / base)
        return cls(lambda v: amp * _bump(np.asarray(v, dtype=float) / delta1),
                   lambda v: (amp / delta1) * _bump_prime(np.asarray(v, dtype=float) / delta1),
                   (0.0, delta1), f"bump({delta1})")

    @classmethod
    def table(cls, v: Sequence[float], values: Sequence[float]) -> "PulseProfile":
        """Tabulated profile on a uniform v table; psi' by fourth-order differences."""
        v = np.asarray(v, dtype=float)
        f = np.asarray(values, dtype=float)
        h = np.diff(v)
        if v.shape != f.shape or np.any(h <= 0) or np.ptp(h) > 1e-9 * h.mean():
            raise ValueError("table needs matching, uniform, increasing v samples")
        spline = CubicSpline(v, f)
        dspline = CubicSpline(v, _fd4(f, h.mean()))
        return cls(lambda x: spline(np.asarray(x, dtype=float)), lambda x: dspline(np.asarray(x, dtype=float)),
                   None, "table")


@dataclass(frozen=True, eq=False)
class PulseData:
    """Commutative data psi(v) T0(theta_k) with cached cumulative energy tables."""

    profile: PulseProfile
    angles: tuple[TracefreeSym2, ...]
    labels: tuple[float, ...] = ()
    n_quad: int = 4097
    _v: Array = field(init=False, repr=False)
    _w: Array = field(init=False, repr=False)
    _W: Array = field(init=False, repr=False)
    _w_interp: CubicHermiteSpline = field(init=False, repr=False)
    _W_interp: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        angles = tuple(self.angles)
        if not angles:
            raise ValueError("need at least one angle sample")
        labels = tuple(self.labels) or tuple(float(k) for k in range(len(angles)))
        if len(labels) != len(angles):
            raise ValueError("one label per angle")
        n = self.n_quad if self.n_quad % 2 else self.n_quad + 1
        v = np.linspace(0.0, 1.0, n)
        dp = np.asarray(self.profile.dpsi(v), dtype=float)
        w = cumulative_simpson(dp * dp, x=v, initial=0.0)
        w = np.maximum.accumulate(np.maximum(w, 0.0))
        W = cumulative_simpson(w, x=v, initial=0.0)
        W = np.maximum.accumulate(np.maximum(W, 0.0))
        # both tables have known derivatives, so Hermite interpolation is cheap and accurate
        wi = CubicHermiteSpline(v, w, dp * dp)
        Wi = CubicHermiteSpline(v, W, w)
        for name, val in (("angles", angles), ("labels", labels), ("n_quad", n), ("_v", v), ("_w", w), ("_W", W),
                          ("_w_interp", wi), ("_W_interp", Wi)):
            object.__setattr__(self, name, val)

    def _scale(self, angle: int) -> float:
        return 0.5 * self.angles[angle].tr_sq

    def _check_v(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(v < 0) or np.any(v > 1):
            raise OutOfDomain("v must lie in [0, 1]")
        return v

    def energy(self, angle: int, v) -> Array:
        """E(v) = 1/2 Tr(T0^2) int_0^v psi'^2."""
        return self._scale(angle) * self._w_interp(self._check_v(v))

    def energy_integral(self, angle: int, v) -> Array:
        """int_0^v E(s) ds."""
        return self._scale(angle) * self._W_interp(self._check_v(v))

    def dpsi_norm_sq(self) -> float:
        return float(self._w[-1])

    def geometry(self, angle: int) -> "SingularityGeometry":
        return SingularityGeometry(self, angle)


def energy(data: PulseData, angle: int, v):
    return data.energy(angle, v)


@dataclass(frozen=True, eq=False)
class SingularityGeometry:
    data: PulseData
    angle: int

    @property
    def T0(self) -> TracefreeSym2:
        return self.data.angles[self.angle]

    @property
    def v_star(self) -> float:
        W = self.data._scale(self.angle) * self.data._W
        pos = np.flatnonzero(W > 0)
        if pos.size == 0:
            return 1.0
        return float(self.data._v[max(pos[0] - 1, 0)])

    def E(self, v) -> Array:
        return self.data.energy(self.angle, v)

    def IE(self, v) -> Array:
        return self.data.energy_integral(self.angle, v)

    def digamma(self, v, eta) -> Array:
        eta = np.asarray(eta, dtype=float)
        return 4.0 - 2.0 * eta * eta * self.IE(v)

    def gamma(self, v) -> Array:
        v = np.asarray(v, dtype=float)
        if np.any(v <= self.v_star):
            raise ZeroEnergy(f"gamma undefined for v <= v_star = {self.v_star}")
        return np.sqrt(2.0 / self.IE(v))

    def dgamma(self, v) -> Array:
        """d_v gamma = -E gamma^3 / 4."""
        g = self.gamma(v)
        return -0.25 * self.E(v) * g ** 3

    def sigma(self, v, eta) -> Array:
        return self.gamma(v) - np.asarray(eta, dtype=float)


@dataclass(frozen=True)
class ClassReport:
    support_ok: bool
    support_excess: float
    distance: float
    distance_ok: bool
    norm_sq: float
    norm_ok: bool

    @property
    def passed(self) -> bool:
        return self.support_ok and self.distance_ok and self.norm_ok


def check_class(data: PulseData, reference, delta1: float, delta2: float) -> ClassReport:
    """Membership in the very-short-pulse class.

    reference is one TracefreeSym2 (constant field) or one per angle.
    """
    if not (0 < delta1 < 1 and delta2 > 0):
        raise ValueError("need 0 < delta1 < 1 and delta2 > 0")
    refs = [reference] * len(data.angles) if isinstance(reference, TracefreeSym2) else list(reference)
    v = data._v
    tail = v > delta1
    excess = float(np.max(np.abs(data.profile.psi(v[tail])))) if tail.any() else 0.0
    dist = max((t - r).norm for t, r in zip(data.angles, refs))
    nsq = data.dpsi_norm_sq()
    return ClassReport(excess <= 1e-12, excess, dist, dist < delta2, nsq, abs(nsq - 1.0) < delta2 ** 2)


@dataclass(frozen=True)
class GenericityReport:
    dpsi0: float
    simple_zero: bool
    t0_norms: tuple[float, ...]
    near_zeros: tuple[int, ...]


def genericity(data: PulseData, near_zero: float = 0.1) -> GenericityReport:
    d0 = abs(float(np.asarray(data.profile.dpsi(np.array([0.0])))[0]))
    norms = tuple(t.norm for t in data.angles)
    return GenericityReport(d0, d0 > SIMPLE_ZERO_THRESHOLD, norms,
                            tuple(k for k, n in enumerate(norms) if n < near_zero))


def _expm_tracefree(m: Array, s: Array) -> Array:
    """exp(s M) for M = [[a, b], [b, -a]], vectorized over s."""
    a, b = m[0, 0], m[0, 1]
    r = math.hypot(a, b)
    s = np.asarray(s, dtype=float)
    ch = np.cosh(s * r)
    sh = np.where(r > 0, np.sinh(s * r) / (r if r > 0 else 1.0), s)
    return ch[..., None, None] * np.eye(2) + sh[..., None, None] * m


@dataclass(frozen=True)
class ConstraintResult:
    v: Array
    phi: Array
    residual: Array
    sup_phi: float
    bound_ok: bool


def constraint_residual(data: PulseData, angle: int, x: float, v_grid, kappa: float = 1.0) -> ConstraintResult:
    """Conformal factor Phi of the initial-surface constraint for g = exp(x T(v)).

    Solves 2 Phi'' + Phi'^2 + Tr(g^-1 g') Phi' + |g'|_g^2 / 2 + (Tr(g^-1 g'))' = 0
    with Phi(0) = 0 and Phi'(0) = -Tr(g^-1 g')(0) / 2. Trace terms vanish for
    tracefree T, leaving |g'|_g^2 = x^2 psi'^2 Tr(T0^2).
    """
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    v_grid = np.asarray(v_grid, dtype=float)
    T0 = data.angles[angle]
    c = x * x * T0.tr_sq
    dpsi = data.profile.dpsi

    def rhs(v, y):
        d = float(dpsi(np.array([v]))[0])
        return [y[1], -0.5 * y[1] ** 2 - 0.25 * c * d * d]

    def blown(v, y):
        return y[0] + 60.0

    blown.terminal = True
    hmax = float(np.min(np.diff(v_grid))) if v_grid.size > 1 else np.inf
    sol = solve_ivp(rhs, (0.0, float(v_grid[-1])), [0.0, 0.0], method="DOP853", t_eval=v_grid,
                    rtol=1e-12, atol=1e-14, max_step=hmax, events=blown)
    if sol.status == 1 or sol.t.size < v_grid.size:
        raise BlowupDetected(f"conformal factor diverges near v = {sol.t[-1]:.4f}")
    phi = sol.y[0]

    # assemble the constraint from the samples and explicit matrices
    m = T0.matrix
    psi = np.asarray(data.profile.psi(v_grid), dtype=float)
    dp = np.asarray(dpsi(v_grid), dtype=float)
    g = _expm_tracefree(m, x * psi)
    dg = x * dp[:, None, None] * (m @ g)
    ginv = np.linalg.inv(g)
    A = ginv @ dg
    tr1 = np.trace(A, axis1=1, axis2=2)
    tr2 = np.trace(A @ A, axis1=1, axis2=2)
    d1 = np.gradient(phi, v_grid, edge_order=2)
    d2 = np.gradient(d1, v_grid, edge_order=2)
    dtr1 = np.gradient(tr1, v_grid, edge_order=2)
    h = np.diff(v_grid)
    if h.size >= 4 and np.ptp(h) <= 1e-9 * h.mean():
        d1 = _fd4(phi, h.mean())
        d2 = np.empty_like(phi)
        d2[2:-2] = (-phi[:-4] + 16 * phi[1:-3] - 30 * phi[2:-2] + 16 * phi[3:-1] - phi[4:]) / (12 * h.mean() ** 2)
        d2[:2] = d2[-2:] = np.nan
    res = 2 * d2 + d1 ** 2 + tr1 * d1 + 0.5 * tr2 + dtr1
    interior = np.zeros(v_grid.size, dtype=bool)
    interior[2:-2] = True
    res = np.where(interior, res, np.nan)
    sup = float(np.max(np.abs(phi)))
    return ConstraintResult(v_grid, phi, res, sup, sup <= kappa * x * x)
