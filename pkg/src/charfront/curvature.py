"""Leading curvature on the intermediate face and the Kretschmann blowup rate.

Near sigma = 0, in a fibre frame orthonormal for k, with Ups = 1 + Sigma and
M = 1 - Sigma^2 (sigma^-2 leading parts, unit blow-up weight):

  R_abcd = -dgamma / (8 eta sigma^2 Omega^2) (Ups kn Ups)_abcd
  R_aLbL = eta^-4 dgamma^2 / (4 sigma^2) M_ab
  R_aNbN = eta^2 / (4 sigma^2) M_ab
  R_LaNb = -dgamma / (4 eta sigma^2) M_ab
  R_NLNL = Omega^2 dgamma / (4 eta sigma^2) (2 - Tr Sigma^2)

and R_abcL, R_abcN, R_abNL, R_LNLa, R_NLNc have zero leading part. Here kn is
the Kulkarni-Nomizu product. The contraction of these gives

  Ktilde = dgamma^2 / (2 eta^2 Omega^4 sigma^4) Tr((1 - Sigma^2)^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientWindow, ZeroEnergy
from .iface import FieldState, SigmaField
from .pulse import SingularityGeometry

Array = np.ndarray

SIGMA_WINDOW = (1e-3, 1e-2)


def kulkarni_nomizu(h: Array, k: Array) -> Array:
    """(h kn k)_abcd = h_ac k_bd + h_bd k_ac - h_ad k_bc - h_bc k_ad over trailing 2x2 axes."""
    e = np.einsum
    return (e("...ac,...bd->...abcd", h, k) + e("...bd,...ac->...abcd", h, k)
            - e("...ad,...bc->...abcd", h, k) - e("...bc,...ad->...abcd", h, k))


def kn_norm_sq(Sigma: Array) -> Array:
    """|Ups kn Ups|^2 in an orthonormal frame, Ups = 1 + Sigma."""
    ups = np.eye(2) + Sigma
    kn = kulkarni_nomizu(ups, ups)
    return np.sum(kn * kn, axis=(-4, -3, -2, -1))


def _sigma_matrix(sigma_prime, T0) -> Array:
    sp = np.asarray(sigma_prime, dtype=float)
    return sp[..., None, None] * T0.matrix


@dataclass(frozen=True, eq=False)
class CurvatureLeading:
    """Leading (sigma^-2) curvature components at a set of points.

    Arrays share a leading shape; tensors carry trailing fibre axes. The zero
    components are stored explicitly so the assembly can include them.
    """

    R_abcd: Array
    R_aLbL: Array
    R_aNbN: Array
    R_LaNb: Array
    R_NLNL: Array
    R_abcL: Array
    R_abcN: Array
    R_abNL: Array
    R_LNLa: Array
    R_NLNc: Array
    Omega2: Array

    @property
    def zero_components(self) -> dict[str, Array]:
        return {"R_abcL": self.R_abcL, "R_abcN": self.R_abcN, "R_abNL": self.R_abNL,
                "R_LNLa": self.R_LNLa, "R_NLNc": self.R_NLNc}


def leading_components(dgamma, eta, Omega2, sigma, Sigma: Array) -> CurvatureLeading:
    """Evaluate the leading components; Sigma has shape (..., 2, 2) in an orthonormal frame."""
    dg, eta, om2, s = (np.asarray(x, dtype=float) for x in (dgamma, eta, Omega2, sigma))
    dg, eta, om2, s = np.broadcast_arrays(dg, eta, om2, s)
    Sigma = np.broadcast_to(Sigma, dg.shape + (2, 2))
    eye = np.eye(2)
    ups = eye + Sigma
    M = eye - Sigma @ Sigma
    tr2 = np.einsum("...ab,...ba->...", Sigma, Sigma)
    s2 = s * s
    x = lambda c: c[..., None, None]
    shape = dg.shape
    return CurvatureLeading(
        R_abcd=(-dg / (8.0 * eta * s2 * om2))[..., None, None, None, None] * kulkarni_nomizu(ups, ups),
        R_aLbL=x(0.25 * dg * dg / (eta ** 4 * s2)) * M,
        R_aNbN=x(0.25 * eta * eta / s2) * M,
        R_LaNb=x(-0.25 * dg / (eta * s2)) * M,
        R_NLNL=om2 * 0.25 * dg / (eta * s2) * (2.0 - tr2),
        R_abcL=np.zeros(shape + (2, 2, 2)),
        R_abcN=np.zeros(shape + (2, 2, 2)),
        R_abNL=np.zeros(shape + (2, 2)),
        R_LNLa=np.zeros(shape + (2,)),
        R_NLNc=np.zeros(shape + (2,)),
        Omega2=om2,
    )


def kretschmann_assembled(c: CurvatureLeading) -> Array:
    """Full contraction of the leading components in double-null form.

    R_NbLd is obtained from R_LdNb by pair symmetry. The last two weights are
    the ones that make the contraction a scalar of the right homogeneity in
    Omega (the squared NLNL term carries Omega^-8).
    """
    e = np.einsum
    om2 = c.Omega2
    R_NbLd = np.swapaxes(c.R_LaNb, -1, -2)
    t1 = e("...abcd,...abcd->...", c.R_abcd, c.R_abcd)
    t2 = -4.0 / om2 * e("...bcd,...bcd->...", c.R_abcN, c.R_abcL)
    t3 = -1.0 / om2 ** 2 * e("...cd,...cd->...", c.R_abNL, c.R_abNL)
    t4 = 2.0 / om2 ** 2 * e("...bd,...bd->...", c.R_aNbN, c.R_aLbL)
    t5 = 2.0 / om2 ** 2 * e("...bd,...db->...", R_NbLd, R_NbLd)
    t6 = -1.0 / om2 ** 3 * e("...d,...d->...", c.R_NLNc, c.R_LNLa)
    t7 = c.R_NLNL ** 2 / om2 ** 4
    return t1 + t2 + t3 + t4 + t5 + t6 + t7


def ktilde_formula(dgamma, eta, Omega2, sigma, tr_sigma_sq) -> Array:
    """dgamma^2 / (2 eta^2 Omega^4 sigma^4) * 2 (1 - lambda^2)^2 with lambda^2 = Tr(Sigma^2)/2."""
    dg, eta, om2, s, t = (np.asarray(x, dtype=float) for x in (dgamma, eta, Omega2, sigma, tr_sigma_sq))
    lam2 = 0.5 * t
    return dg * dg / (2.0 * eta * eta * om2 * om2 * s ** 4) * 2.0 * (1.0 - lam2) ** 2


def _line_inputs(state: FieldState, sfield: SigmaField, geom: SingularityGeometry, Omega2):
    g = state.grid
    rows = np.searchsorted(g.v, sfield.v)
    if np.any(sfield.v <= geom.v_star):
        raise ZeroEnergy("Kretschmann leading form needs v > v_star")
    if Omega2 is None:
        Omega2 = np.exp(2.0 * state.omega)
    om2 = np.asarray(Omega2)[rows]
    dg = geom.dgamma(sfield.v)[:, None]
    sig = state.sigma[rows]
    return rows, dg, g.eta[None, :], om2, sig


def kretschmann_leading(state: FieldState, sfield: SigmaField, geom: SingularityGeometry,
                        Omega2: Array | None = None) -> Array:
    """Ktilde on the v-lines of sfield (rows) and every eta-node; NaN where masked."""
    rows, dg, eta, om2, sig = _line_inputs(state, sfield, geom, Omega2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return ktilde_formula(dg, eta, om2, sig, sfield.tr_sq[:, None])


def kretschmann_components(state: FieldState, sfield: SigmaField, geom: SingularityGeometry,
                           Omega2: Array | None = None) -> Array:
    """Ktilde on the same lines by explicit component contraction."""
    rows, dg, eta, om2, sig = _line_inputs(state, sfield, geom, Omega2)
    Sig = _sigma_matrix(sfield.sigma_prime, sfield.T0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        return kretschmann_assembled(leading_components(dg, eta, om2, sig, Sig))


def lapse_power(sigma_prime, tr_T0_sq: float) -> Array:
    """Exponent of sigma in Omega^2: (Sigma'^2 Tr T0^2 - 2) / 4."""
    return 0.25 * (np.asarray(sigma_prime, dtype=float) ** 2 * tr_T0_sq - 2.0)


def predicted_exponent(tr_sigma_sq) -> Array:
    return 3.0 + 0.5 * np.asarray(tr_sigma_sq, dtype=float)


def _window_rows(sigma_line: Array, window, min_nodes: int) -> Array:
    s = np.asarray(sigma_line)
    sel = np.flatnonzero(np.isfinite(s) & (s >= window[0]) & (s <= window[1]))
    if sel.size < min_nodes:
        raise InsufficientWindow(f"{sel.size} nodes with sigma in [{window[0]}, {window[1]}], need {min_nodes}")
    return sel


def omega_log_coefficient(omega: Array, sigma: Array, window=SIGMA_WINDOW, min_nodes: int = 8) -> Array:
    """Per v-line least-squares fit of omega on {log sigma, 1, sigma}; returns the log coefficient."""
    omega = np.atleast_2d(omega)
    sigma = np.atleast_2d(sigma)
    if not np.any(np.isfinite(sigma)):
        raise ZeroEnergy("no sigma: the singular locus is not approached")
    out = np.full(omega.shape[0], np.nan)
    for r in range(omega.shape[0]):
        if not np.any(np.isfinite(sigma[r])):
            continue
        sel = _window_rows(np.where(np.isfinite(omega[r]), sigma[r], np.nan), window, min_nodes)
        s = sigma[r, sel]
        basis = np.column_stack([np.log(s), np.ones_like(s), s])
        coef, *_ = np.linalg.lstsq(basis, omega[r, sel], rcond=None)
        out[r] = coef[0]
    return out


def pole_rate(values: Array, sigma: Array, window=SIGMA_WINDOW, min_nodes: int = 8) -> float:
    """Slope of log|values| against log sigma along one line."""
    sel = _window_rows(np.where(np.isfinite(values), sigma, np.nan), window, min_nodes)
    slope, _ = np.polyfit(np.log(sigma[sel]), np.log(np.abs(values[sel])), 1)
    return float(slope)


def fit_blowup(ktilde: Array, digamma: Array, sigma: Array | None = None, window=SIGMA_WINDOW,
               min_nodes: int = 8) -> tuple[float, float]:
    """Slope p of log Ktilde against -log digamma, and r^2.

    The window selects nodes by sigma when sigma is given, by digamma otherwise.
    """
    k = np.asarray(ktilde, dtype=float)
    d = np.asarray(digamma, dtype=float)
    key = np.asarray(sigma, dtype=float) if sigma is not None else d
    key = np.where(np.isfinite(k) & (k > 0) & np.isfinite(d) & (d > 0), key, np.nan)
    sel = _window_rows(key, window, min_nodes)
    x = -np.log(d[sel])
    y = np.log(k[sel])
    p, c = np.polyfit(x, y, 1)
    resid = y - (p * x + c)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(p), r2


@dataclass(frozen=True)
class EigenReport:
    margin: float
    lam: Array
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.margin > self.threshold)


def eigenvalue_criterion(sfield: SigmaField, margin: float = 0.05) -> EigenReport:
    """min over v of |1 - lambda|, lambda = sqrt(Sigma'^2 Tr T0^2 / 2) the positive eigenvalue of Sigma."""
    lam = np.sqrt(0.5 * sfield.tr_sq)
    return EigenReport(float(np.min(np.abs(1.0 - lam))), lam, margin)


@dataclass(frozen=True)
class BlowupReport:
    angle: int
    v: float
    p_fit: float
    p_pred: float
    window: tuple[float, float]
    r2: float
    margin: float
    criterion: bool
    sigma_prime: float
    omega_coef: float
    omega_pred: float
    H_rate: float
    n_window: int

    @property
    def rel_err(self) -> float:
        return abs(self.p_fit - self.p_pred) / abs(self.p_pred)

    def as_dict(self) -> dict:
        return {"angle": self.angle, "v": self.v, "p_fit": self.p_fit, "p_pred": self.p_pred,
                "rel_err": self.rel_err, "window": list(self.window), "r2": self.r2,
                "eigen_margin": self.margin, "criterion_pass": self.criterion,
                "sigma_prime": self.sigma_prime, "omega_log_coef": self.omega_coef,
                "omega_log_pred": self.omega_pred, "H_rate": self.H_rate, "n_window": self.n_window}


def blowup_report(state: FieldState, sfield: SigmaField, geom: SingularityGeometry, window=SIGMA_WINDOW,
                  eigen_margin: float = 0.05, min_nodes: int = 8) -> BlowupReport:
    """Fit and predictions on the last v-line of sfield."""
    kt = kretschmann_leading(state, sfield, geom)[-1]
    row = int(np.searchsorted(state.grid.v, sfield.v[-1]))
    sig = state.sigma[row]
    if np.all(np.nan_to_num(kt) == 0.0):
        # leading part vanishes identically (lambda = 1): no rate to fit
        p, r2 = float("nan"), float("nan")
    else:
        p, r2 = fit_blowup(kt, state.digamma[row], sig, window, min_nodes)
    tr = float(sfield.tr_sq[-1])
    om = float(omega_log_coefficient(state.omega[row], sig, window, min_nodes)[0])
    rate = pole_rate(state.Hprime[row], sig, window, min_nodes)
    eig = eigenvalue_criterion(sfield, eigen_margin)
    n = _window_rows(np.where(np.isfinite(state.omega[row]), sig, np.nan), window, min_nodes).size
    return BlowupReport(state.angle, float(sfield.v[-1]), p, float(predicted_exponent(tr)), tuple(window), r2,
                        eig.margin, eig.passed, float(sfield.sigma_prime[-1]), om, (tr - 2.0) / 8.0, rate, n)
