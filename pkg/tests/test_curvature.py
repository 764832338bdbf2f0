import numpy as np
import pytest

from charfront.curvature import (
    blowup_report,
    eigenvalue_criterion,
    fit_blowup,
    kn_norm_sq,
    kretschmann_assembled,
    kretschmann_components,
    kretschmann_leading,
    ktilde_formula,
    lapse_power,
    leading_components,
    omega_log_coefficient,
    predicted_exponent,
)
from charfront.errors import InsufficientWindow, ZeroEnergy
from charfront.iface import SigmaField
from charfront.pulse import TracefreeSym2

T0 = TracefreeSym2(1.0, 0.0)


def sigma_matrices(n, seed=3):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, n))
    return np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2), 2 * (a * a + b * b)


def test_kulkarni_nomizu_norm_identity():
    S, tr = sigma_matrices(500)
    assert np.max(np.abs(kn_norm_sq(S) - 4 * (2 - tr) ** 2) / np.maximum(4 * (2 - tr) ** 2, 1)) < 1e-13


def test_dual_path_agrees():
    S, tr = sigma_matrices(500)
    rng = np.random.default_rng(5)
    dg, eta, om2, s = rng.uniform(0.05, 3.0, size=(4, 500))
    a = kretschmann_assembled(leading_components(dg, eta, om2, s, S))
    b = ktilde_formula(dg, eta, om2, s, tr)
    assert np.max(np.abs(a - b) / b) < 1e-12


def test_zero_leading_components():
    S, _ = sigma_matrices(10)
    c = leading_components(np.ones(10), np.ones(10), np.ones(10), np.ones(10), S)
    for arr in c.zero_components.values():
        assert np.all(arr == 0)


def test_flat_sigma_formula():
    dg, eta, om2, s = -0.7, 0.9, 1.3, 0.01
    expect = dg ** 2 / (eta ** 2 * om2 ** 2 * s ** 4)
    assert np.isclose(ktilde_formula(dg, eta, om2, s, 0.0), expect, rtol=1e-14)
    c = leading_components(np.array([dg]), np.array([eta]), np.array([om2]), np.array([s]), np.zeros((1, 2, 2)))
    assert np.isclose(kretschmann_assembled(c)[0], expect, rtol=1e-13)


def test_unit_eigenvalue_kills_leading_term():
    assert ktilde_formula(1.0, 1.0, 1.0, 0.1, 2.0) == 0.0


def test_lapse_power_examples():
    assert lapse_power(0.0, 2.0) == -0.5
    assert lapse_power(1.0, 2.0) == 0.0
    assert predicted_exponent(1.0 ** 2 * 2.0) == 4.0


def test_omega_coefficient_manufactured():
    s = np.geomspace(1e-4, 1e-1, 200)
    assert abs(omega_log_coefficient(0.5 * np.log(s) + 2, s)[0] - 0.5) < 1e-6


def test_omega_coefficient_needs_sigma():
    with pytest.raises(ZeroEnergy):
        omega_log_coefficient(np.zeros(10), np.full(10, np.nan))


def test_omega_coefficient_window_check():
    s = np.geomspace(0.05, 1, 50)
    with pytest.raises(InsufficientWindow):
        omega_log_coefficient(np.log(s), s)


def test_fit_pure_power():
    s = np.geomspace(1e-3, 1e-2, 40)
    p, r2 = fit_blowup(s ** -3.0, s, s)
    assert abs(p - 3) < 1e-12 and abs(r2 - 1) < 1e-12


def test_fit_power_against_digamma(linear_singular):
    st, sf, geom = linear_singular
    row = st.grid.nv - 1
    p, _ = fit_blowup(st.sigma[row] ** -3.0, st.digamma[row], st.sigma[row])
    assert abs(p - 3) < 0.03


def test_eigenvalue_criterion_cases():
    v = np.array([0.5, 1.0])
    flat = SigmaField(0, v, np.zeros(2), T0, np.zeros(2), np.zeros(2, int))
    rep = eigenvalue_criterion(flat)
    assert rep.margin == 1.0 and rep.passed
    unit = SigmaField(0, v, np.array([0.2, 1.0]), T0, np.zeros(2), np.zeros(2, int))
    rep = eigenvalue_criterion(unit)
    assert rep.margin == 0.0 and not rep.passed


def test_dual_path_on_pipeline(bump_singular):
    st, sf, geom = bump_singular
    a = kretschmann_leading(st, sf, geom)
    b = kretschmann_components(st, sf, geom)
    ok = np.isfinite(a) & (a > 0)
    assert np.max(np.abs(a[ok] - b[ok]) / a[ok]) < 1e-12


def test_short_pulse_blowup_rate(bump_singular):
    st, sf, geom = bump_singular
    rep = blowup_report(st, sf, geom)
    assert rep.p_fit >= 2.85
    assert rep.rel_err <= 0.05
    assert rep.margin > 0.5 and rep.criterion
    assert abs(rep.omega_coef - rep.omega_pred) / abs(rep.omega_pred) <= 0.05
    assert -1.1 <= rep.H_rate <= -0.9


def test_linear_pulse_omega_coefficient(linear_singular):
    # borderline pole: the predicted coefficient sits near zero, so compare on the 1/4 scale
    st, sf, geom = linear_singular
    rep = blowup_report(st, sf, geom)
    assert abs(rep.omega_coef - rep.omega_pred) <= 0.05 * 0.25
    assert abs(rep.p_fit - rep.p_pred) / rep.p_pred <= 0.05


def inject(sf, sigma_prime):
    return SigmaField(sf.angle, sf.v, np.array([sigma_prime]), sf.T0, sf.residual, sf.n_layers)


def consistent_lapse(st, sf):
    row = st.grid.nv - 1
    om2 = np.ones(st.grid.shape)
    om2[row] = st.sigma[row] ** float(lapse_power(sf.sigma_prime, sf.T0.tr_sq)[0])
    return om2


def test_half_eigenvalue_rate(bump_singular):
    st, sf, geom = bump_singular
    sfi = inject(sf, 1 / np.sqrt(2))
    row = st.grid.nv - 1
    kt = kretschmann_leading(st, sfi, geom, Omega2=consistent_lapse(st, sfi))[-1]
    p, _ = fit_blowup(kt, st.digamma[row], st.sigma[row])
    assert predicted_exponent(sfi.tr_sq)[0] == pytest.approx(3.5)
    assert abs(p - 3.5) / 3.5 <= 0.05


def test_lapse_constant_does_not_change_rate(bump_singular):
    st, sf, geom = bump_singular
    row = st.grid.nv - 1
    om2 = consistent_lapse(st, sf)
    p1, _ = fit_blowup(kretschmann_leading(st, sf, geom, Omega2=om2)[-1], st.digamma[row], st.sigma[row])
    p2, _ = fit_blowup(kretschmann_leading(st, sf, geom, Omega2=9.5 * om2)[-1], st.digamma[row], st.sigma[row])
    assert abs(p1 - p2) < 1e-10


def test_injected_unit_eigenvalue_reports_failure(bump_singular):
    st, sf, geom = bump_singular
    rep = blowup_report(st, inject(sf, 1.0), geom)
    assert not rep.criterion
    assert rep.margin == 0.0
    assert np.isnan(rep.p_fit)
    assert rep.p_pred == 4.0


def test_leading_form_needs_energy(bump_singular):
    st, sf, geom = bump_singular
    early = SigmaField(0, np.array([0.0]), np.zeros(1), T0, np.zeros(1), np.zeros(1, int))
    with pytest.raises(ZeroEnergy):
        kretschmann_leading(st, early, geom)
