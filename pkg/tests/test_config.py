import pytest

from charfront.config import load_config, parse_config
from charfront.errors import ConfigError
from charfront.pulse import TracefreeSym2

BASE = {"pulse": {"psi": "linear", "T0": [1.0, 0.0]}}


def with_(**blocks):
    return {**BASE, **blocks}


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.grid.nv == 257 and cfg.grid.v_max == 1.0
    assert cfg.tolerances.goursat_tol == 1e-12 and cfg.tolerances.max_iter == 64
    assert cfg.tolerances.eigen_margin == 0.05
    assert cfg.pulse.T0 == (TracefreeSym2(1.0, 0.0),)


def test_per_angle_t0_and_labels():
    cfg = parse_config({"pulse": {"psi": {"kind": "bump", "delta1": 0.1}, "T0": [[1, 0], [0, 1]],
                                  "labels": [0.0, 1.0]}})
    data = cfg.pulse.data()
    assert len(data.angles) == 2 and data.labels == (0.0, 1.0)


@pytest.mark.parametrize("raw", [
    with_(grid={"nv": 1}),
    with_(grid={"v_max": 1.5}),
    with_(grid={"spacing": "random"}),
    with_(tolerances={"goursat_tol": -1.0}),
    with_(tolerances={"window": 0}),
    with_(tolerances={"F_min": "small"}),
    with_(output={"formats": ["xml"]}),
    with_(extra=1),
    {"pulse": {"psi": "linear"}},
    {"pulse": {"psi": {"kind": "bump"}, "T0": [1, 0]}},
    {"pulse": {"psi": {"kind": "linear", "delta1": 0.1}, "T0": [1, 0]}},
    {"pulse": {"psi": {"kind": "spline"}, "T0": [1, 0]}},
    {"pulse": {"psi": {"kind": "polynomial", "coefficients": [1.0]}, "T0": [1, 0]}},
    {"pulse": {"psi": "linear", "T0": [1, 0], "labels": [0, 1]}},
    with_(kretschmann={"fit_window": [0.1, 0.01]}),
    with_(kretschmann={"sigma_prime_file": "does/not/exist.csv"}),
    [1, 2, 3],
])
def test_rejects_bad_config(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_load_reports_yaml_errors(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("pulse: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_sigma_file_resolved_next_to_config(tmp_path):
    (tmp_path / "s.csv").write_text("theta_index,sigma_prime\n0,1.0\n")
    p = tmp_path / "c.yaml"
    p.write_text("pulse: {psi: linear, T0: [1, 0]}\nkretschmann: {sigma_prime_file: s.csv}\n")
    cfg = load_config(p)
    assert cfg.kretschmann.sigma_prime_file == str(tmp_path / "s.csv")


def test_table_profile(tmp_path):
    v = [i / 100 for i in range(101)]
    cfg = parse_config({"pulse": {"psi": {"kind": "table", "v": v, "values": [x * x for x in v]}, "T0": [1, 0]}})
    data = cfg.pulse.data()
    assert abs(float(data.profile.dpsi(0.5)) - 1.0) < 1e-8
