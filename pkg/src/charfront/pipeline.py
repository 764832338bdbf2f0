"""Per-angle orchestration shared by the CLI and the validation suite."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .curvature import BlowupReport, blowup_report, kretschmann_components, kretschmann_leading
from .errors import ConfigError, ZeroEnergy
from .goursat import CharGrid, Rectangle, corner_density, graded_nodes
from .iface import FieldState, SigmaField, extract_sigma, solve_fields, trace_energy_monitor
from .pulse import PulseData, SingularityGeometry
from .riemann import build_specialized, kernel_monitor, represent_pulse

Array = np.ndarray

GRADING_RATIO = 0.02


def singular_grid(geom: SingularityGeometry, v_max: float, nv: int, neta: int, sigma_min: float,
                  eta_max: float | None = None, ratio: float = GRADING_RATIO,
                  support: tuple[float, float] | None = None) -> CharGrid:
    """Grid graded towards the corner (v_max, eta_max) where sigma is smallest.

    eta_max defaults to gamma(v_max) - sigma_min / 2, so the whole rectangle
    has sigma >= sigma_min / 2. Spacing near the corner shrinks geometrically
    down to sigma_min / 8; a known pulse support gets about max(64, nv/8)
    cells.
    """
    if eta_max is None:
        eta_max = float(geom.gamma(v_max)) - 0.5 * sigma_min
    if eta_max <= 0:
        raise ZeroEnergy("singular locus too close to eta = 0 for a graded grid")
    floor = sigma_min / 8.0
    rv = corner_density(0.0, v_max, floor, ratio)
    if support is not None:
        hi = min(1.2 * support[1], v_max)
        base = rv
        x = np.linspace(0.0, v_max, 20001)
        total = float(np.sum(0.5 * (base(x[1:]) + base(x[:-1])) * np.diff(x)))
        m = max(64, nv // 8)
        level = m / max(nv - m, 1) * total / hi

        def rv(x):
            return np.maximum(base(x), np.where(x <= hi, level, 0.0))

    vn = graded_nodes(0.0, v_max, nv, rv)
    en = graded_nodes(0.0, eta_max, neta, corner_density(0.0, eta_max, floor, ratio))
    return CharGrid(vn, en)


def angle_grid(cfg: RunConfig, data: PulseData, angle: int) -> CharGrid:
    g = cfg.grid
    geom = data.geometry(angle)
    auto = g.eta_max == "auto"
    if g.spacing == "graded":
        if not geom.v_star < g.v_max:
            raise ZeroEnergy(f"angle {angle}: no energy before v_max, graded grid undefined")
        return singular_grid(geom, g.v_max, g.nv, g.neta, cfg.tolerances.sigma_min,
                             None if auto else float(g.eta_max), support=data.profile.support_hint)
    if auto:
        if not geom.v_star < g.v_max:
            raise ZeroEnergy(f"angle {angle}: eta_max auto needs energy before v_max")
        eta_max = float(geom.gamma(g.v_max)) - 0.5 * cfg.tolerances.sigma_min
    else:
        eta_max = float(g.eta_max)
    return CharGrid.uniform(Rectangle(0.0, g.v_max, 0.0, eta_max), g.nv, g.neta)


def _map_angles(fn, n: int) -> list:
    if n == 1:
        return [fn(0)]
    with ThreadPoolExecutor(max_workers=min(n, 8)) as pool:
        return list(pool.map(fn, range(n)))


def solve_all(cfg: RunConfig, data: PulseData | None = None) -> list[FieldState]:
    data = data or cfg.pulse.data()
    t = cfg.tolerances

    def one(k):
        return solve_fields(data, k, angle_grid(cfg, data, k), t.F_min, tol=t.goursat_tol, max_iter=t.max_iter)

    return _map_angles(one, len(data.angles))


FIELD_COLUMNS = ("v", "eta", "theta_index", "f", "h", "Fprime", "Hprime", "omega", "digamma", "sigma", "detk_err")


def to_jsonable(obj):
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def _fmt(x) -> str:
    # adding 0.0 folds -0.0 into 0.0
    return repr(float(x) + 0.0)


def write_fields_csv(path, states: list[FieldState]) -> None:
    """Admissible nodes only, angle-major then v then eta; floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_COLUMNS)
        for st in states:
            g = st.grid
            derr = st.detk_err
            valid = st.valid
            for i in range(g.nv):
                for j in np.flatnonzero(valid[i]):
                    w.writerow([_fmt(g.v[i]), _fmt(g.eta[j]), str(st.angle), _fmt(st.f[i, j]), _fmt(st.h[i, j]),
                                _fmt(st.Fprime[i, j]), _fmt(st.Hprime[i, j]), _fmt(st.omega[i, j]),
                                _fmt(st.digamma[i, j]), _fmt(st.sigma[i, j]), _fmt(derr[i, j])])


def state_summary(st: FieldState, data: PulseData) -> dict:
    geom = data.geometry(st.angle)
    reg = st.valid & (st.digamma >= 0.5)
    derr = st.detk_err
    mon = trace_energy_monitor(st.ft, st.h, st.Ftprime, st.Hprime, geom.T0, st.grid, st.digamma)
    k = st.k[st.valid]
    return {
        "angle": st.angle,
        "label": data.labels[st.angle],
        "v_star": geom.v_star,
        "grid": {"nv": st.grid.nv, "neta": st.grid.neta, "v_max": float(st.grid.v[-1]),
                 "eta_max": float(st.grid.eta[-1])},
        "masked_nodes": int(st.valid.size - st.valid.sum()),
        "detk_max_rel_err": float(np.max(derr[reg])) if reg.any() else None,
        "k_symmetry_max": float(np.max(np.abs(k[:, 0, 1] - k[:, 1, 0]))) if k.size else 0.0,
        "k_min_eigenvalue": float(np.min(np.linalg.eigvalsh(k))) if k.size else None,
        "trace_energy_sup": mon.sup,
        "trace_energy_residuals": [mon.eta_residual, mon.v_residual],
        "digamma_min": float(np.nanmin(st.digamma)),
    }


@dataclass(frozen=True)
class KretschmannResult:
    state: FieldState
    sfield: SigmaField
    ktilde: Array
    ktilde_components: Array
    report: BlowupReport


def read_sigma_override(path: str) -> dict[int, float]:
    """CSV with columns theta_index, sigma_prime."""
    out = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(fh)
        if rows.fieldnames is None or not {"theta_index", "sigma_prime"} <= set(rows.fieldnames):
            raise ConfigError(f"{path}: need columns theta_index, sigma_prime")
        for r in rows:
            out[int(r["theta_index"])] = float(r["sigma_prime"])
    return out


def kretschmann_all(cfg: RunConfig, data: PulseData | None = None) -> list[KretschmannResult | ZeroEnergy]:
    """Blowup analysis on the last v-line per angle; angles without energy yield their ZeroEnergy error."""
    data = data or cfg.pulse.data()
    t = cfg.tolerances
    window = cfg.kretschmann.fit_window or (t.sigma_min, t.sigma_fit_max)
    override = read_sigma_override(cfg.kretschmann.sigma_prime_file) if cfg.kretschmann.sigma_prime_file else {}

    def one(k):
        geom = data.geometry(k)
        if not geom.v_star < cfg.grid.v_max:
            return ZeroEnergy(f"angle {k}: zero energy up to v_max")
        grid = angle_grid(cfg, data, k)
        st = solve_fields(data, k, grid, t.F_min, tol=t.goursat_tol, max_iter=t.max_iter)
        sf = extract_sigma(st.Hprime, geom, grid, t.sigma_min, t.sigma_fit_max, t.window, [grid.nv - 1])
        if k in override:
            sf = SigmaField(sf.angle, sf.v, np.array([override[k]]), sf.T0, sf.residual, sf.n_layers)
        kt = kretschmann_leading(st, sf, geom)
        kc = kretschmann_components(st, sf, geom)
        rep = blowup_report(st, sf, geom, window, t.eigen_margin, t.window)
        return KretschmannResult(st, sf, kt, kc, rep)

    return _map_angles(one, len(data.angles))


def write_ktilde_csv(path, results: list[KretschmannResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("theta_index", "v", "eta", "sigma", "digamma", "omega", "ktilde", "ktilde_components"))
        for r in results:
            st = r.state
            row = int(np.searchsorted(st.grid.v, r.sfield.v[-1]))
            # the leading form carries eta^-2, so eta = 0 is left out
            keep = st.valid[row] & np.isfinite(st.sigma[row]) & (st.grid.eta > 0)
            for j in np.flatnonzero(keep):
                w.writerow([str(st.angle), _fmt(st.grid.v[row]), _fmt(st.grid.eta[j]), _fmt(st.sigma[row, j]),
                            _fmt(st.digamma[row, j]), _fmt(st.omega[row, j]), _fmt(r.ktilde[-1, j]),
                            _fmt(r.ktilde_components[-1, j])])


def kernel_all(cfg: RunConfig, data: PulseData | None = None) -> list[dict]:
    """Specialized kernel per angle: monitor and equivalence with the direct shear solve."""
    data = data or cfg.pulse.data()
    t = cfg.tolerances
    v0 = cfg.kernel.v0 if cfg.kernel.v0 is not None else 0.8 * cfg.grid.v_max
    v1 = cfg.kernel.v1 if cfg.kernel.v1 is not None else 0.5 * cfg.grid.v_max

    def one(k):
        grid = angle_grid(cfg, data, k)
        st = solve_fields(data, k, grid, t.F_min, tol=t.goursat_tol, max_iter=t.max_iter)
        K = build_specialized(data, k, grid, digamma_min=t.F_min)
        Ft, Hp = represent_pulse(K, data.profile.dpsi)
        reg = st.valid & (st.digamma >= 0.5)
        scale = lambda a: float(np.max(np.abs(a[reg]))) if reg.any() else 0.0
        errs = []
        for rep, ref in ((Ft, st.Ftprime), (Hp, st.Hprime)):
            s = scale(ref)
            errs.append(scale(rep - ref) / s if s > 0 else scale(rep - ref))
        geom = data.geometry(k)
        mon = None
        if geom.v_star < v1 < v0:
            m = kernel_monitor(K, data, v0, v1, t.sigma_min)
            mon = {"sup": m.sup, "argmax_v_eta_s": list(m.argmax), "v0": v0, "v1": v1, "sigma_min": t.sigma_min}
        return {"angle": k, "rel_err_Ftprime": errs[0], "rel_err_Hprime": errs[1],
                "monitor": mon, "sup_monitor_all": None if np.isnan(K.sup_monitor) else K.sup_monitor}

    return _map_angles(one, len(data.angles))
