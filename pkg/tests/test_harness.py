import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyspde.equations import allen_cahn, heat, zero_model
from levyspde.harness import (
    ExperimentReport,
    apriori_linearity,
    continuous_dependence,
    emit_report,
    mc_moments,
    mean_se,
    run_paths,
    self_convergence,
)
from levyspde.solver import SolveConfig


def test_mean_se_values():
    m, se = mean_se([1.0, 2.0, 3.0])
    assert m == 2.0
    assert se == pytest.approx(1 / math.sqrt(3))
    assert math.isnan(mean_se([])[0])
    assert math.isnan(mean_se([4.0])[1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30), st.randoms())
def test_mean_se_order_independent(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert mean_se(values) == mean_se(shuffled)


def _square(i):
    return i * i


def test_run_paths_preserves_order_across_jobs():
    assert run_paths(_square, 6, jobs=1) == run_paths(_square, 6, jobs=2) == [0, 1, 4, 9, 16, 25]


def test_mc_moments_zero_dynamics_exact():
    pre = zero_model(K=3)
    u0 = np.array([1.0, 2.0, 2.0])
    rep = mc_moments(pre.model, u0, SolveConfig(T=2.0, n_steps=8), 4, 0)
    lam = pre.model.triple.eigvals
    assert rep.estimates["E_sup_H2"] == (pytest.approx(9.0), 0.0)
    assert rep.estimates["E_int_V2"][0] == pytest.approx(2.0 * float(np.sum(lam * u0 * u0)))
    assert rep.estimates["blowup_frequency"] == (0.0, 0.0)
    assert rep.passed


def test_mc_moments_needs_two_paths():
    with pytest.raises(ValueError):
        mc_moments(zero_model().model, np.zeros(4), SolveConfig(n_steps=4), 1, 0)


def test_mc_moments_counts_blowups():
    pre = allen_cahn(1, K=8, flip=True, sigma=0.0, jump_amps=())
    rep = mc_moments(pre.model, pre.u0(10.0), SolveConfig(n_steps=200), 3, 0)
    assert rep.estimates["blowup_frequency"][0] == 1.0
    assert not rep.passed


def test_apriori_scale_checks():
    m = heat(K=3, sigma=1.0).model
    cfg = SolveConfig(n_steps=16)
    with pytest.raises(ValueError, match="degenerate"):
        apriori_linearity(m, [1.0, 2.0], cfg, 4, 0)
    rep = apriori_linearity(m, [1.0, 1.0], cfg, 4, 0)
    assert rep.fits["slope"] == 0.0
    assert rep.passed


def test_apriori_heat_is_linear():
    m = heat(K=4, sigma=1.0).model
    rep = apriori_linearity(m, [0.5, 1.0, 2.0, 4.0], SolveConfig(n_steps=64), 50, 1, r2_min=0.999)
    assert rep.passed, rep.verdict_lines()


def test_continuous_dependence_zero_delta_and_ordering():
    pre = allen_cahn(1, K=8)
    with pytest.raises(ValueError):
        continuous_dependence(pre.model, pre.u0(1.0), [0.1, 0.5], SolveConfig(n_steps=8), 2, 0)
    rep = continuous_dependence(pre.model, pre.u0(1.0), [0.5, 0.0], SolveConfig(n_steps=32), 6, 0)
    assert rep.verdicts["zero_delta"][0]


def test_self_convergence_deterministic_heat():
    pre = heat(K=4)
    mu = pre.model.triple.eigvals
    rep = self_convergence(pre.model, pre.u0(1.0), [8, 16, 32, 64], SolveConfig(T=0.1), 2, 0,
                           exact=lambda u0, T: np.exp(-mu * T) * u0, expected_order=1.0, order_tol=0.15)
    assert rep.passed, rep.verdict_lines()
    assert rep.footer[0] == "fitted_order"


def test_self_convergence_rejects_non_nested():
    with pytest.raises(ValueError, match="non-nested"):
        self_convergence(heat(K=2).model, np.ones(2), [16, 24], SolveConfig(), 2, 0, ref_factor=1)


def test_emit_report_formats(tmp_path):
    rep = ExperimentReport(name="demo[x]", n_paths=2, seed=1)
    rep.estimates["a"] = (0.1, 0.01)
    rep.verdicts["ok"] = (True, "fine")
    rep.series = {"s": (np.array([1.0, 2.0]), np.array([3.0, 4.0]), None)}
    f = emit_report(rep, "csv", tmp_path)
    assert f.read_text() == "quantity,mean,se\na,0.1,0.01\n"
    t = emit_report(rep, "text", tmp_path)
    assert "PASS demo[x].ok: fine" in t.read_text()
    s1 = emit_report(rep, "svg", tmp_path / "a").read_bytes()
    s2 = emit_report(rep, "svg", tmp_path / "b").read_bytes()
    assert s1 == s2


def test_emit_report_empty_rows_header_only(tmp_path):
    rep = ExperimentReport(name="empty", n_paths=0, seed=0)
    rep.columns = ("x", "y")
    rep.footer = ["fit", 1.0]
    assert emit_report(rep, "csv", tmp_path).read_text() == "x,y\n"
    with pytest.raises(ValueError):
        emit_report(rep, "xml", tmp_path)
