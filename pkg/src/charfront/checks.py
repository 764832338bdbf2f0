"""Validation suite: the twelve acceptance checks run from one config.

Each check returns a CheckResult; a solver error inside a check is recorded
as a failure with its message rather than aborting the suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import PsiSpec, PulseSpec, RunConfig, Tolerances
from .curvature import (
    blowup_report,
    kn_norm_sq,
    kretschmann_assembled,
    kretschmann_components,
    kretschmann_leading,
    ktilde_formula,
    leading_components,
)
from .errors import CharfrontError
from .goursat import (
    CharGrid,
    GoursatProblem,
    LinearGoursatOp,
    Rectangle,
    gronwall_bound,
    solve_first_order,
    solve_linear,
    solve_singular,
)
from .iface import extract_sigma, fh_closed, fh_goursat, shear_coefficients, solve_FH, solve_fields
from .pulse import PulseData, PulseProfile, TracefreeSym2, check_class, constraint_residual
from .pipeline import singular_grid
from .riemann import build_kernel, build_specialized, kernel_monitor, represent_grid, represent_pulse

Array = np.ndarray

UNIT = Rectangle(0.0, 1.0, 0.0, 1.0)
BLOWUP_SHAPE = (512, 1024)
DEFAULT_BLOWUP = PulseSpec(PsiSpec("bump", {"delta1": 0.05, "norm_sq": 1.0}), (TracefreeSym2(1.0, 0.0),))
CLASS_DELTA2 = 0.05

# generic affine-linear test operator on the unit square
TEST_OP = LinearGoursatOp(lambda v, e: 0.3 + 0.2 * np.sin(v + e), lambda v, e: 0.5 * v * e - 0.2,
                          lambda v, e: -0.4 + 0.1 * v, lambda v, e: 0.25 * np.cos(2 * v - e))


def _F(v, e):
    return np.exp(v) * np.sin(e) + 0.3


def _G(v, e):
    return v * e - np.cos(v)


def _X0(v):
    return 1 + np.sin(2 * v)


def _Y0(e):
    return np.cos(e) + e


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    error: str | None = None

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.error})" if self.error else ""
        return f"[{tag}] {self.number:2d} {self.name}{extra}"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "measured": self.measured, "error": self.error}


@dataclass
class RunReport:
    checks: list[CheckResult]
    per_angle: list[dict]
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "elapsed_s": self.elapsed,
                "checks": [c.as_dict() for c in self.checks], "per_angle": self.per_angle}


def _rel(a: Array, ref: Array, mask: Array) -> float:
    """Largest pointwise relative difference over mask; exact zeros of ref must match exactly."""
    a, ref = a[mask], ref[mask]
    nz = ref != 0
    if np.any(a[~nz] != 0):
        return float("inf")
    return float(np.max(np.abs(a[nz] - ref[nz]) / np.abs(ref[nz]))) if nz.any() else 0.0


def _linear_pulse() -> PulseData:
    return PulseData(PulseProfile.linear(1.0), (TracefreeSym2(1.0, 0.0),))


def check_closed_form(tol: Tolerances, n: int = 256) -> CheckResult:
    """Nonlinear (ft, h) Goursat solve against the closed forms."""
    geom = _linear_pulse().geometry(0)
    grid = CharGrid.uniform(UNIT, n + 1, n + 1)
    t0 = time.perf_counter()
    ft, h = fh_goursat(geom, grid, tol.goursat_tol, tol.max_iter)
    dt = time.perf_counter() - t0
    f_ref, h_ref, ft_ref = fh_closed(geom, grid)
    V, E = grid.mesh()
    reg = geom.digamma(V, E) >= 0.5
    f = E ** 2 * ft
    ef, eh = _rel(f, f_ref, reg), _rel(h, h_ref, reg)
    m = {"rel_err_f": ef, "rel_err_h": eh, "runtime_s": dt, "h_at_1_1": float(h[-1, -1]),
         "f_at_1_1": float(f[-1, -1]), "grid": n}
    return CheckResult(1, "closed-form oracle for (f, h)", max(ef, eh) <= 1e-4 and dt < 5.0, m)


def check_determinant(tol: Tolerances, n: int = 256) -> CheckResult:
    data = _linear_pulse()
    grid = CharGrid.uniform(UNIT, n + 1, n + 1)
    st = solve_fields(data, 0, grid, tol.F_min, tol=tol.goursat_tol, max_iter=tol.max_iter)
    reg = st.valid & (st.digamma >= 0.5)
    err = float(np.max(st.detk_err[reg]))
    det11 = float(np.linalg.det(st.k[-1, -1]))
    e11 = abs(det11 - 9.0 / 16.0) / (9.0 / 16.0)
    m = {"max_rel_err": err, "det_at_1_1": det11, "rel_err_at_1_1": e11}
    return CheckResult(2, "determinant identity", err <= 1e-4 and e11 <= 1e-4, m)


def check_minkowski(tol: Tolerances, n: int = 64) -> CheckResult:
    data = PulseData(PulseProfile.zero(), (TracefreeSym2(1.0, 0.0),))
    grid = CharGrid.uniform(UNIT, n + 1, n + 1)
    st = solve_fields(data, 0, grid, tol.F_min, tol=tol.goursat_tol, max_iter=tol.max_iter)
    fields = {"f": st.f, "h": st.h, "Fprime": st.Fprime, "Hprime": st.Hprime, "omega": st.omega}
    sup = max(float(np.max(np.abs(a))) for a in fields.values())
    dg_ok = bool(np.all(st.digamma == 4.0))
    k_ok = bool(np.all(st.k == np.eye(2)))
    m = {"sup_fields": sup, "digamma_is_4": dg_ok, "k_is_identity": k_ok}
    return CheckResult(3, "Minkowski triviality", sup <= 1e-14 and dg_ok and k_ok, m)


def check_riemann(sizes=(64, 128)) -> CheckResult:
    """Representation formula against the direct solve, with refinement."""
    t0 = time.perf_counter()
    errs = []
    for n in sizes:
        grid = CharGrid.uniform(UNIT, n + 1, n + 1)
        ref = solve_linear(TEST_OP, grid, _F, _G, _X0, _Y0)
        X, Y = represent_grid(build_kernel(TEST_OP, grid), _F, _G, _X0, _Y0)
        rx = np.max(np.abs(X - ref.X[..., 0])) / np.max(np.abs(ref.X))
        ry = np.max(np.abs(Y - ref.Y[..., 0])) / np.max(np.abs(ref.Y))
        errs.append(float(max(rx, ry)))
    dt = time.perf_counter() - t0
    ratio = errs[-2] / errs[-1] if errs[-1] > 0 else float("inf")
    m = {"sizes": list(sizes), "rel_err": errs, "ratio": ratio, "runtime_s": dt}
    return CheckResult(4, "Riemann representation vs direct solve",
                       errs[-1] <= 1e-4 and ratio >= 3.5 and dt < 60.0, m)


def check_specialized(tol: Tolerances, n: int = 128, deep_eta: float = 1.9, v0: float = 0.8,
                      v1: float = 0.5) -> CheckResult:
    """Specialized kernel vs direct shear solve; monitor stability under refinement.

    Equivalence is measured on the unit square, the monitor on a deeper
    rectangle reaching sigma = gamma(1) - deep_eta.
    """
    data = _linear_pulse()
    geom = data.geometry(0)
    grid = CharGrid.uniform(UNIT, n + 1, n + 1)
    K = build_specialized(data, 0, grid, digamma_min=tol.F_min)
    Ft, Hp = represent_pulse(K, data.profile.dpsi)
    f, h, _ = fh_closed(geom, grid, K.jstop, tol.F_min)
    _, Hd, Ftd = solve_FH(f, h, data.profile.dpsi, grid, K.jstop)
    V, E = grid.mesh()
    reg = K.jstop[:, None] > np.arange(grid.neta)[None, :]
    reg &= geom.digamma(V, E) >= 0.5
    scale = lambda a: float(np.max(np.abs(a[reg])))
    e_ft = scale(Ft - Ftd) / scale(Ftd)
    e_h = scale(Hp - Hd) / scale(Hd)
    sups = []
    for m_ in (n, 2 * n):
        g = CharGrid.uniform(Rectangle(0.0, 1.0, 0.0, deep_eta), m_ + 1, m_ + 1)
        Kd = build_specialized(data, 0, g, digamma_min=tol.F_min)
        sups.append(kernel_monitor(Kd, data, v0, v1, tol.sigma_min).sup)
    change = abs(sups[1] - sups[0]) / abs(sups[1])
    m = {"rel_err_Ftprime": e_ft, "rel_err_Hprime": e_h, "monitor": sups, "monitor_change": change,
         "v0": v0, "v1": v1, "eta_max_monitor": deep_eta}
    ok = max(e_ft, e_h) <= 1e-4 and all(np.isfinite(sups)) and change < 0.05
    return CheckResult(5, "specialized kernel and monitor", ok, m)


def blowup_pulse(cfg: RunConfig) -> PulseSpec:
    return cfg.validate_pulse or DEFAULT_BLOWUP


def run_blowup(cfg: RunConfig) -> tuple[list, list[float], PulseData, object]:
    """Per-angle state, Sigma field and report for the blowup pulse on a graded grid."""
    spec = blowup_pulse(cfg)
    data = spec.data()
    t = cfg.tolerances
    window = (t.sigma_min, t.sigma_fit_max)
    delta1 = spec.cls.delta1 if spec.cls else (spec.psi.params.get("delta1", 0.05))
    delta2 = spec.cls.delta2 if spec.cls else CLASS_DELTA2
    ref = spec.cls.reference if spec.cls else spec.T0[0]
    cls = check_class(data, ref, delta1, delta2)
    out, times = [], []
    for k in range(len(data.angles)):
        t0 = time.perf_counter()
        geom = data.geometry(k)
        grid = singular_grid(geom, 1.0, *BLOWUP_SHAPE, t.sigma_min, support=data.profile.support_hint)
        st = solve_fields(data, k, grid, t.F_min, tol=t.goursat_tol, max_iter=t.max_iter)
        sf = extract_sigma(st.Hprime, geom, grid, t.sigma_min, t.sigma_fit_max, t.window, [grid.nv - 1])
        rep = blowup_report(st, sf, geom, window, t.eigen_margin, t.window)
        times.append(time.perf_counter() - t0)
        out.append((st, sf, geom, rep))
    return out, times, data, cls


def check_blowup_rate(results, times, cls) -> CheckResult:
    rows = []
    ok = cls.passed
    for (st, _, _, rep), dt in zip(results, times):
        good = (rep.p_fit >= 2.85 and rep.rel_err <= 0.05 and dt < 60.0 and st.grid.neta - 1 >= 512)
        ok = ok and bool(good)
        rows.append({"angle": rep.angle, "p_fit": rep.p_fit, "p_pred": rep.p_pred, "rel_err": rep.rel_err,
                     "r2": rep.r2, "runtime_s": dt, "eta_depth": st.grid.neta - 1})
    m = {"class_passed": cls.passed, "norm_sq": cls.norm_sq, "support_excess": cls.support_excess, "angles": rows}
    return CheckResult(6, "Kretschmann blowup rate", ok, m)


def check_omega(results) -> CheckResult:
    rows, ok = [], True
    for _, _, _, rep in results:
        err = abs(rep.omega_coef - rep.omega_pred) / abs(rep.omega_pred)
        ok = ok and err <= 0.05
        rows.append({"angle": rep.angle, "coef": rep.omega_coef, "pred": rep.omega_pred, "rel_err": err})
    return CheckResult(7, "omega log coefficient", bool(ok), {"angles": rows})


def check_H_rate(results) -> CheckResult:
    rows = [{"angle": rep.angle, "slope": rep.H_rate} for _, _, _, rep in results]
    ok = all(-1.1 <= r["slope"] <= -0.9 for r in rows)
    return CheckResult(8, "sigma-rate of H'", ok, {"angles": rows})


def check_dual_path(results, seed: int = 7) -> CheckResult:
    """Component contraction vs closed formula, on the pipeline and on random inputs."""
    rng = np.random.default_rng(seed)
    n = 2000
    a, b = rng.normal(size=(2, n))
    Sig = np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2)
    tr = 2 * (a * a + b * b)
    dg, eta, om2, s = rng.uniform(0.1, 2.0, size=(4, n))
    ka = kretschmann_assembled(leading_components(dg, eta, om2, s, Sig))
    kf = ktilde_formula(dg, eta, om2, s, tr)
    rand_err = float(np.max(np.abs(ka - kf) / np.abs(kf)))
    kn = kn_norm_sq(Sig)
    kn_err = float(np.max(np.abs(kn - 4 * (2 - tr) ** 2) / np.maximum(4 * (2 - tr) ** 2, 1.0)))
    pipe_err = 0.0
    for st, sf, geom, _ in results:
        k1 = kretschmann_leading(st, sf, geom)
        k2 = kretschmann_components(st, sf, geom)
        fin = np.isfinite(k1) & (k1 != 0)
        if fin.any():
            pipe_err = max(pipe_err, float(np.max(np.abs(k1[fin] - k2[fin]) / np.abs(k1[fin]))))
    m = {"random_rel_err": rand_err, "kn_identity_err": kn_err, "pipeline_rel_err": pipe_err}
    return CheckResult(9, "dual-path Kretschmann", max(rand_err, kn_err, pipe_err) <= 1e-12, m)


def _manufactured(n: int):
    grid = CharGrid.uniform(UNIT, n + 1, n + 1)
    Xs = lambda v, e: e ** 5 * np.sin(v)
    Ys = lambda v, e: e ** 4 * v
    F = lambda v, e: 6 * e ** 5 * np.sin(v) + e ** 4 * v
    G = lambda v, e: e ** 4 + e ** 5 * np.sin(v) + e ** 4 * v
    sol = solve_singular(1.0, 1.0, 1.0, 1.0, F, G, lambda e: 0.0 * e, grid)
    V, E = grid.mesh()
    err = max(np.max(np.abs(sol.X[..., 0] - Xs(V, E))), np.max(np.abs(sol.Y[..., 0] - Ys(V, E))))
    return float(err), float(np.max(np.abs(sol.X[:, 0, 0])))


def check_singular(sizes=(64, 128)) -> CheckResult:
    errs, edge = [], 0.0
    for n in sizes:
        e, x0 = _manufactured(n)
        errs.append(e)
        edge = max(edge, x0)
    ratio = errs[0] / errs[1]
    m = {"sizes": list(sizes), "max_err": errs, "ratio": ratio, "X_on_eta_0": edge}
    return CheckResult(10, "singular Goursat manufactured solution", ratio >= 3.5 and edge == 0.0, m)


def check_constraint(xs=(0.2, 0.1, 0.05), nodes: int = 1025) -> CheckResult:
    data = _linear_pulse()
    v = np.linspace(0.0, 1.0, nodes)
    sups = [constraint_residual(data, 0, x, v).sup_phi for x in xs]
    slope, _ = np.polyfit(np.log(xs), np.log(sups), 1)
    m = {"x": list(xs), "sup_phi": sups, "exponent": float(slope)}
    return CheckResult(11, "constraint regularity scaling", 1.9 <= slope <= 2.1, m)


def check_gronwall(tol: Tolerances) -> CheckResult:
    """Every affine-linear solve of the suite's problems stays under the ceiling."""
    rows = []

    def record(name, X, Y, M, B, rect):
        peak = float(max(np.nanmax(np.abs(X)), np.nanmax(np.abs(Y))))
        rows.append({"solve": name, "max_abs": peak, "bound": gronwall_bound(M, B, rect), "M": M, "B": B})

    prob = GoursatProblem(1, lambda v, e, x, y: y, lambda v, e, x, y: x, 1.0, 1.0)
    for n in (16, 32, 64, 128):
        sol = solve_first_order(prob, CharGrid.uniform(UNIT, n + 1, n + 1), tol.goursat_tol, tol.max_iter)
        record(f"P=Y,Q=X n={n}", sol.X, sol.Y, 1.0, 1.0, UNIT)

    for n in (32, 64, 128):
        grid = CharGrid.uniform(UNIT, n + 1, n + 1)
        V, E = grid.mesh()
        M = float(max(np.max(np.abs(c)) for c in TEST_OP.sample(grid)))
        src = float(max(np.max(np.abs(_F(V, E))), np.max(np.abs(_G(V, E)))))
        B = float(max(np.max(np.abs(_X0(grid.v))), np.max(np.abs(_Y0(grid.eta))))) + src * max(UNIT.sides)
        sol = solve_linear(TEST_OP, grid, _F, _G, _X0, _Y0)
        record(f"affine test operator n={n}", sol.X, sol.Y, M, B, UNIT)
        pic = solve_first_order(TEST_OP.as_problem(_F, _G, _X0, _Y0), grid, tol.goursat_tol, tol.max_iter)
        record(f"affine test operator (Picard) n={n}", pic.X, pic.Y, M, B, UNIT)

    data = _linear_pulse()
    geom = data.geometry(0)
    for n in (64, 128):
        grid = CharGrid.uniform(UNIT, n + 1, n + 1)
        f, h, _ = fh_closed(geom, grid)
        M = float(max(np.max(np.abs(c)) for c in shear_coefficients(f, h, grid)))
        B = float(np.max(np.abs(data.profile.dpsi(grid.v))))
        _, Hp, Ft = solve_FH(f, h, data.profile.dpsi, grid)
        record(f"shear system n={n}", Ft, Hp, M, B, UNIT)

    ok = all(r["max_abs"] <= r["bound"] for r in rows)
    return CheckResult(12, "Gronwall ceiling", ok, {"solves": rows})


def _guard(number: int, name: str, fn, *args) -> CheckResult:
    try:
        return fn(*args)
    except CharfrontError as exc:
        return CheckResult(number, name, False, {}, f"{type(exc).__name__}: {exc}")


def run_suite(cfg: RunConfig, log=None) -> RunReport:
    """Run all checks; log(line) is called after each one."""
    t0 = time.perf_counter()
    tol = cfg.tolerances
    checks: list[CheckResult] = []

    def add(c: CheckResult):
        checks.append(c)
        if log is not None:
            log(c.line())

    add(_guard(1, "closed-form oracle for (f, h)", check_closed_form, tol))
    add(_guard(2, "determinant identity", check_determinant, tol))
    add(_guard(3, "Minkowski triviality", check_minkowski, tol))
    add(_guard(4, "Riemann representation vs direct solve", check_riemann))
    add(_guard(5, "specialized kernel and monitor", check_specialized, tol))

    per_angle: list[dict] = []
    try:
        results, times, data, cls = run_blowup(cfg)
    except CharfrontError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        for n, name in ((6, "Kretschmann blowup rate"), (7, "omega log coefficient"), (8, "sigma-rate of H'")):
            add(CheckResult(n, name, False, {}, msg))
        add(_guard(9, "dual-path Kretschmann", check_dual_path, []))
    else:
        add(check_blowup_rate(results, times, cls))
        add(check_omega(results))
        add(check_H_rate(results))
        add(_guard(9, "dual-path Kretschmann", check_dual_path, results))
        for (st, sf, geom, rep), dt in zip(results, times):
            reg = st.valid & (st.digamma >= 0.5)
            d = rep.as_dict()
            d.update({"label": data.labels[st.angle], "detk_max_rel_err": float(np.max(st.detk_err[reg])),
                      "sigma_table": {"v": sf.v.tolist(), "sigma_prime": sf.sigma_prime.tolist(),
                                      "tr_sigma_sq": sf.tr_sq.tolist()},
                      "runtime_s": dt})
            per_angle.append(d)

    add(_guard(10, "singular Goursat manufactured solution", check_singular))
    add(_guard(11, "constraint regularity scaling", check_constraint))
    add(_guard(12, "Gronwall ceiling", check_gronwall, tol))
    checks.sort(key=lambda c: c.number)
    return RunReport(checks, per_angle, time.perf_counter() - t0)
