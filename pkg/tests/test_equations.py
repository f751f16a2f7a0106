import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from levyspde.equations import (
    PRESETS,
    PowerProfile,
    ShellCoupling,
    SpectralGrid,
    allen_cahn,
    build_preset,
    burgers,
    dealiased_points,
    gradient_matrix,
    kuramoto_sivashinsky,
    reaction_diffusion,
    run_checks,
    shell_model,
    with_singular_drift,
    zero_model,
)
from levyspde.gelfand import build_dirichlet_triple
from levyspde.model import ModelValidationError
from levyspde.solver import SolveConfig, solve_with_noise
from levyspde.noise import RngStream, sample_noise


def _fine_projection(L, K, values_fn, n=200001):
    # independent oracle: dense trapezoidal quadrature of f(x) e_k(x)
    x = np.linspace(0.0, L, n)
    e = math.sqrt(2.0 / L) * np.sin(np.outer(x, np.arange(1, K + 1)) * math.pi / L)
    f = values_fn(x, e)
    return np.trapezoid(f[:, None] * e, x, axis=0)


def test_dealiased_point_count():
    assert dealiased_points(16, 3) == 33
    assert dealiased_points(5, 2) == 8


@pytest.mark.parametrize("L", [1.0, 2.5])
def test_cubic_projection_matches_fine_quadrature(L):
    tr = build_dirichlet_triple(1, L, 6)
    g = SpectralGrid(tr, 3)
    u = np.array([0.7, -0.2, 0.1, 0.05, -0.3, 0.02])
    got = g.project(g.to_grid(u) ** 3)
    ref = _fine_projection(L, 6, lambda x, e: (e @ u) ** 3)
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_projection_inverts_synthesis():
    for d, K in ((1, 8), (2, 10)):
        tr = build_dirichlet_triple(d, 1.3, K)
        g = SpectralGrid(tr, 3)
        u = np.linspace(-1, 1, K)
        np.testing.assert_allclose(g.project(g.to_grid(u)), u, atol=1e-13)


def test_gradient_matrix_skew_and_consistent_with_grid():
    tr = build_dirichlet_triple(1, 2.0, 7)
    D = gradient_matrix(tr)
    np.testing.assert_allclose(D, -D.T, atol=1e-14)
    u = np.cos(np.arange(7.0))
    k = np.arange(1, 8) * math.pi / 2.0
    ref = _fine_projection(2.0, 7, lambda x, e: math.sqrt(2.0 / 2.0) * np.cos(np.outer(x, k)) @ (k * u))
    np.testing.assert_allclose(D @ u, ref, atol=1e-8)
    # entry (1, 2): 2 * 1 * 2 / L * 2 / (1 - 4)
    assert D[0, 1] == pytest.approx(2 * 2 / 2.0 * 2 / (1 - 4))


def test_quartic_term_closed_form():
    # <u - u^3, u> for u = a e_1 on (0, L): a^2 - (3/2) a^4 / L
    for L, a in ((1.0, 0.8), (2.0, 1.7)):
        pre = allen_cahn(1, L=L, K=4, sigma=0.0, jump_amps=())
        u = np.zeros(4)
        u[0] = a
        assert float(np.dot(pre.model.reaction(0.0, u), u)) == pytest.approx(a * a - 1.5 * a**4 / L, rel=1e-12)


def test_ks_symbol_first_mode():
    pre = kuramoto_sivashinsky(L=1.0, K=4)
    assert pre.model.leading(0.0, np.zeros(4))[0] == pytest.approx(math.pi**4 - math.pi**2, rel=1e-14)


def test_burgers_flux_is_conservative():
    m = burgers(K=12).model
    u = np.random.default_rng(0).standard_normal(12)
    assert abs(float(np.dot(m.reaction(0.0, u), u))) < 1e-12 * np.linalg.norm(u) ** 3


def test_2d_flux_cancellation():
    m = reaction_diffusion(2, 1.0, 10, reaction=None, flux=(0, 0, 1.0), sigma=0.0).model
    u = np.random.default_rng(1).standard_normal(10)
    assert abs(float(np.dot(m.reaction(0.0, u), u))) < 1e-12 * np.linalg.norm(u) ** 3


@settings(max_examples=200, deadline=None)
@given(arrays(float, 8, elements=st.floats(-1e3, 1e3)), st.floats(1.1, 4.0), st.floats(0.0, 1.0))
def test_shell_energy_cancellation(u, lam, eps):
    c = ShellCoupling(8, lam=lam, eps=eps)
    scale = max(np.linalg.norm(u), 1.0) ** 3 * float(c.k[-1])
    assert abs(float(np.dot(c.phi(u, u), u))) <= 1e-12 * scale


def test_shell_coupling_validation():
    with pytest.raises(ValueError):
        ShellCoupling(2)
    with pytest.raises(ValueError):
        shell_model(6, ShellCoupling(8))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_carry_expected_certificates(name):
    pre = build_preset(name)
    res = run_checks(pre, n_samples=16)
    for check, (verdict, line) in res.items():
        assert verdict == pre.expected_checks[check], line


def test_flipped_allen_cahn_not_dissipative():
    pre = allen_cahn(1, flip=True)
    assert run_checks(pre, n_samples=8)["dissipativity"][0] is False


def test_unknown_preset():
    with pytest.raises(KeyError, match="unknown preset"):
        build_preset("navier-stokes")


def test_validators_reject_bad_models():
    with pytest.raises(ModelValidationError, match="parabolicity"):
        allen_cahn(2, b=[[1.0, 1.0]])
    with pytest.raises(ModelValidationError):
        reaction_diffusion(2, 1.0, 8, reaction=(0, 0, 0, 0, 0, 0, -1.0))  # rho = 5 > 2 in 2D
    with pytest.raises(ValueError):
        allen_cahn(1, rho=3)


def test_power_profile_integrals():
    p = PowerProfile(1.0, -0.5)
    assert p.lr_norm(1.0, 1.0) == pytest.approx(2.0)
    assert p.lr_norm(2.0, 1.0) == math.inf
    assert p.average(0.0, 0.25) == pytest.approx(2.0 * 0.5 / 0.25)
    assert PowerProfile(3.0, 0.0).average(0.4, 0.1) == pytest.approx(3.0)
    assert PowerProfile(2.0, -1.0).average(1.0, 1.0) == pytest.approx(2.0 * math.log(2.0))


def test_singular_drift_rejects_nonintegrable_weights():
    base = allen_cahn(1, K=4, sigma=0.0, jump_amps=())
    with pytest.raises(ModelValidationError):
        with_singular_drift(base, PowerProfile(1.0, -1.0))
    with pytest.raises(ModelValidationError):
        with_singular_drift(base, zetas=((0, PowerProfile(1.0, -0.5)),))


def test_singular_drift_ode():
    # du = -c t^p u dt on a drift-free model; each step multiplies by
    # 1 - int_cell c t^p, and the product tends to exp(-c T^(p+1) / (p+1))
    prof = PowerProfile(1.0, -0.5)
    pre = with_singular_drift(zero_model(K=2), prof)
    u0 = np.array([1.0, -2.0])
    errs = []
    for n in (256, 1024, 4096):
        cfg = SolveConfig(T=1.0, n_steps=n)
        rec = solve_with_noise(pre.model, u0, cfg, sample_noise(None, 0, 1.0, n, RngStream(0)))
        t = np.arange(n + 1) / n
        factor = np.prod(1.0 - 2.0 * (np.sqrt(t[1:]) - np.sqrt(t[:-1])))
        np.testing.assert_allclose(rec.final, factor * u0, rtol=1e-12)
        errs.append(abs(rec.final[0] - math.exp(-2.0)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-3
    assert pre.model.phi_profiles[-1] == PowerProfile(1.0, -0.5)


def test_cancellation_check_uses_flux_part_only():
    pre = reaction_diffusion(1, 1.0, 12, reaction=(0, 1, 0, -1), flux=(0, 0, 1), sigma=0.0)
    verdict, line = run_checks(pre, n_samples=8)["conservative_cancellation"]
    assert verdict, line
