"""Run configuration: a YAML file with pulse, grid, tolerances and output blocks.

Unknown keys are errors. Every value is validated before any work starts so
a bad file never leaves partial output behind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .pulse import PulseData, PulseProfile, TracefreeSym2

PSI_KINDS = {"zero": set(), "linear": {"slope"}, "bump": {"delta1", "norm_sq"},
             "polynomial": {"coefficients"}, "table": {"v", "values"}}


def _block(raw: Any, name: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(raw)
    if missing:
        raise ConfigError(f"{name}: missing keys {sorted(missing)}")
    return raw


def _num(x, name: str, positive: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {x!r}")
    x = float(x)
    if positive and not x > 0:
        raise ConfigError(f"{name}: must be positive")
    return x


def _count(x, name: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"{name}: expected an integer")
    if x < 2:
        raise ConfigError(f"{name}: must be at least 2")
    return x


def _sym(x, name: str) -> TracefreeSym2:
    if not (isinstance(x, (list, tuple)) and len(x) == 2):
        raise ConfigError(f"{name}: expected [a, b]")
    return TracefreeSym2(_num(x[0], name), _num(x[1], name))


@dataclass(frozen=True)
class PsiSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def profile(self) -> PulseProfile:
        p = self.params
        try:
            if self.kind == "zero":
                return PulseProfile.zero()
            if self.kind == "linear":
                return PulseProfile.linear(p.get("slope", 1.0))
            if self.kind == "bump":
                return PulseProfile.bump(p["delta1"], p.get("norm_sq", 1.0))
            if self.kind == "polynomial":
                return PulseProfile.polynomial(p["coefficients"])
            return PulseProfile.table(p["v"], p["values"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"pulse.psi: {exc}") from exc


@dataclass(frozen=True)
class ClassSpec:
    delta1: float
    delta2: float
    reference: TracefreeSym2


@dataclass(frozen=True)
class PulseSpec:
    psi: PsiSpec
    T0: tuple[TracefreeSym2, ...]
    labels: tuple[float, ...] = ()
    cls: ClassSpec | None = None

    def data(self) -> PulseData:
        try:
            return PulseData(self.psi.profile(), self.T0, self.labels)
        except ValueError as exc:
            raise ConfigError(f"pulse: {exc}") from exc


@dataclass(frozen=True)
class GridSpec:
    v_max: float = 1.0
    eta_max: float | str = 1.0
    nv: int = 257
    neta: int = 257
    spacing: str = "uniform"


@dataclass(frozen=True)
class Tolerances:
    goursat_tol: float = 1e-12
    max_iter: int = 64
    F_min: float = 1e-3
    sigma_min: float = 1e-3
    sigma_fit_max: float = 1e-2
    window: int = 8
    eigen_margin: float = 0.05


@dataclass(frozen=True)
class KernelSpec:
    v0: float | None = None
    v1: float | None = None


@dataclass(frozen=True)
class KretschmannSpec:
    fit_window: tuple[float, float] | None = None
    sigma_prime_file: str | None = None


@dataclass(frozen=True)
class OutputSpec:
    directory: str | None = None
    formats: tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    pulse: PulseSpec
    grid: GridSpec = GridSpec()
    tolerances: Tolerances = Tolerances()
    kernel: KernelSpec = KernelSpec()
    kretschmann: KretschmannSpec = KretschmannSpec()
    output: OutputSpec = OutputSpec()
    validate_pulse: PulseSpec | None = None
    source: Path | None = None


def _parse_psi(raw) -> PsiSpec:
    if isinstance(raw, str):
        raw = {"kind": raw}
    raw = _block(raw, "pulse.psi", {"kind"} | set().union(*PSI_KINDS.values()), {"kind"})
    kind = raw["kind"]
    if kind not in PSI_KINDS:
        raise ConfigError(f"pulse.psi.kind: one of {sorted(PSI_KINDS)}")
    params = {k: v for k, v in raw.items() if k != "kind"}
    extra = set(params) - PSI_KINDS[kind]
    if extra:
        raise ConfigError(f"pulse.psi: keys {sorted(extra)} do not apply to kind {kind!r}")
    if kind == "bump" and "delta1" not in params:
        raise ConfigError("pulse.psi: bump needs delta1")
    if kind == "polynomial" and "coefficients" not in params:
        raise ConfigError("pulse.psi: polynomial needs coefficients")
    if kind == "table" and not {"v", "values"} <= set(params):
        raise ConfigError("pulse.psi: table needs v and values")
    for k in ("slope", "delta1", "norm_sq"):
        if k in params:
            params[k] = _num(params[k], f"pulse.psi.{k}", positive=k != "slope")
    for k in ("coefficients", "v", "values"):
        if k in params:
            if not isinstance(params[k], list) or not params[k]:
                raise ConfigError(f"pulse.psi.{k}: expected a non-empty list")
            params[k] = [_num(x, f"pulse.psi.{k}") for x in params[k]]
    return PsiSpec(kind, params)


def _parse_pulse(raw, name: str = "pulse") -> PulseSpec:
    raw = _block(raw, name, {"psi", "T0", "labels", "class"}, {"psi", "T0"})
    psi = _parse_psi(raw["psi"])
    t0 = raw["T0"]
    if isinstance(t0, list) and t0 and all(isinstance(x, list) for x in t0):
        T0 = tuple(_sym(x, f"{name}.T0") for x in t0)
    else:
        T0 = (_sym(t0, f"{name}.T0"),)
    labels = tuple(_num(x, f"{name}.labels") for x in raw.get("labels", []) or [])
    if labels and len(labels) != len(T0):
        raise ConfigError(f"{name}.labels: one label per T0 sample")
    cls = None
    if "class" in raw:
        c = _block(raw["class"], f"{name}.class", {"delta1", "delta2", "reference"}, {"delta1", "delta2"})
        ref = _sym(c.get("reference", [T0[0].a, T0[0].b]), f"{name}.class.reference")
        cls = ClassSpec(_num(c["delta1"], f"{name}.class.delta1", True),
                        _num(c["delta2"], f"{name}.class.delta2", True), ref)
    return PulseSpec(psi, T0, labels, cls)


def _parse_grid(raw) -> GridSpec:
    raw = _block(raw, "grid", {"v_max", "eta_max", "nv", "neta", "spacing"})
    d = GridSpec()
    v_max = _num(raw.get("v_max", d.v_max), "grid.v_max", True)
    if v_max > 1:
        raise ConfigError("grid.v_max: must not exceed 1")
    eta_max = raw.get("eta_max", d.eta_max)
    if eta_max != "auto":
        eta_max = _num(eta_max, "grid.eta_max", True)
    spacing = raw.get("spacing", d.spacing)
    if spacing not in ("uniform", "graded"):
        raise ConfigError("grid.spacing: 'uniform' or 'graded'")
    return GridSpec(v_max, eta_max, _count(raw.get("nv", d.nv), "grid.nv"),
                    _count(raw.get("neta", d.neta), "grid.neta"), spacing)


def _parse_tol(raw) -> Tolerances:
    d = Tolerances()
    raw = _block(raw, "tolerances", set(d.__dataclass_fields__))
    out = {}
    for k in d.__dataclass_fields__:
        val = raw.get(k, getattr(d, k))
        if k in ("max_iter", "window"):
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"tolerances.{k}: positive integer")
            out[k] = val
        else:
            out[k] = _num(val, f"tolerances.{k}", True)
    return Tolerances(**out)


def _parse_kernel(raw) -> KernelSpec:
    raw = _block(raw, "kernel", {"v0", "v1"})
    v0 = _num(raw["v0"], "kernel.v0", True) if "v0" in raw else None
    v1 = _num(raw["v1"], "kernel.v1", True) if "v1" in raw else None
    return KernelSpec(v0, v1)


def _parse_kretschmann(raw, base: Path | None) -> KretschmannSpec:
    raw = _block(raw, "kretschmann", {"fit_window", "sigma_prime_file"})
    win = None
    if "fit_window" in raw:
        w = raw["fit_window"]
        if not (isinstance(w, list) and len(w) == 2):
            raise ConfigError("kretschmann.fit_window: [lo, hi]")
        win = (_num(w[0], "fit_window", True), _num(w[1], "fit_window", True))
        if win[0] >= win[1]:
            raise ConfigError("kretschmann.fit_window: lo < hi")
    path = raw.get("sigma_prime_file")
    if path is not None:
        p = Path(path)
        if base is not None and not p.is_absolute():
            p = base / p
        if not p.is_file():
            raise ConfigError(f"kretschmann.sigma_prime_file: {p} not found")
        path = str(p)
    return KretschmannSpec(win, path)


def _parse_output(raw) -> OutputSpec:
    raw = _block(raw, "output", {"directory", "formats"})
    fmts = tuple(raw.get("formats", ["csv", "json"]))
    if not set(fmts) <= {"csv", "json"}:
        raise ConfigError("output.formats: subset of [csv, json]")
    return OutputSpec(raw.get("directory"), fmts)


def parse_config(raw: Any, source: Path | None = None) -> RunConfig:
    raw = _block(raw, "config", {"pulse", "grid", "tolerances", "kernel", "kretschmann", "output", "validate"},
                 {"pulse"})
    base = source.parent if source is not None else None
    vp = None
    if "validate" in raw:
        v = _block(raw["validate"], "validate", {"blowup_pulse"})
        if "blowup_pulse" in v:
            vp = _parse_pulse(v["blowup_pulse"], "validate.blowup_pulse")
    pulse = _parse_pulse(raw["pulse"])
    for spec in (pulse, vp):
        if spec is not None:
            spec.data()
    return RunConfig(pulse, _parse_grid(raw.get("grid")), _parse_tol(raw.get("tolerances")),
                     _parse_kernel(raw.get("kernel")), _parse_kretschmann(raw.get("kretschmann"), base),
                     _parse_output(raw.get("output")), vp, source)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, path)
